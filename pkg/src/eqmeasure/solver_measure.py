"""Frank-Wolfe minimisation of I[mu] over the product of two scaled simplices.

The feasible set is {curve weights summing to a} x {cell weights summing to
1 - a}.  Its vertices put all of each block's mass on one atom, so the linear
minimisation oracle is two argmins.  Because I is quadratic, the line search
along any feasible direction d is closed form:

    I(w + g d) = I(w) + g <2Kw + q, d> + g^2 d'Kd.

Two step rules are available.  ``vanilla`` is the textbook step toward the
oracle vertex.  ``pairwise`` (default) moves mass inside one block from the
worst supported atom to the oracle atom; it drops atoms exactly and converges
linearly here, where the vanilla rule needs O(1/gap) iterations.  Both report
the same Frank-Wolfe duality gap <grad, w - vertex> as the stopping rule.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box, Curve
from .kernel import ExternalField
from .energy import KernelOperator
from .measure import ConstrainedMeasure, init_feasible, prune, restore_block_masses

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Gradient and energy disagree (negative duality gap beyond round-off)."""


@dataclass(frozen=True)
class SolverConfig:
    a: float
    box: Box = field(default_factory=lambda: Box.centered(2.0))
    h: float = 0.05
    m: int = 200
    r0: float | None = None
    max_iterations: int = 50_000
    gap_rtol: float = 1e-6
    step_rule: str = "pairwise"
    line_search: str = "exact-quadratic"
    tie_break: str = "lowest-index"
    support_eps: float = 1e-3
    dense_threshold: int = 4096
    unbounded_curve: bool = False
    curve_end_margin: float = 0.5
    curve_grading: str = "uniform"

    def __post_init__(self):
        if not self.gap_rtol > 0:
            raise ValueError("gap tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_rule not in ("pairwise", "vanilla"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.line_search != "exact-quadratic" or self.tie_break != "lowest-index":
            raise ValueError("only exact-quadratic line search with lowest-index tie-break is supported")


@dataclass(frozen=True)
class EquilibriumConstants:
    A_gamma: float | None
    A_0: float | None


@dataclass(frozen=True)
class Vertex:
    """Vertex of the feasible set: mass ``a`` on one curve atom, ``1 - a`` on one cell."""

    curve_index: int | None
    plane_index: int | None   # index into the stacked (curve-first) atom array
    a: float

    def weights(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        if self.curve_index is not None:
            out[self.curve_index] += self.a
        if self.plane_index is not None:
            out[self.plane_index] += 1.0 - self.a
        return out


def linear_minimization_oracle(grad, n_curve: int, a: float) -> Vertex:
    grad = np.asarray(grad, float)
    ci = pi = None
    if a > 0:
        if n_curve == 0:
            raise ValueError("curve block is empty but must carry mass a > 0")
        ci = int(np.argmin(grad[:n_curve]))
    if a < 1:
        if len(grad) == n_curve:
            raise ValueError("plane block is empty but must carry mass 1 - a > 0")
        pi = n_curve + int(np.argmin(grad[n_curve:]))
    return Vertex(ci, pi, a)


@dataclass
class FWState:
    """Current iterate with its cached K w, so gradients and energies cost O(N)."""

    w: np.ndarray
    Kw: np.ndarray
    q: np.ndarray
    op: KernelOperator
    n_curve: int
    a: float

    @classmethod
    def start(cls, mu: ConstrainedMeasure, fld: ExternalField, op: KernelOperator | None = None,
              dense_threshold: int = 4096) -> "FWState":
        op = op or KernelOperator.for_measure(mu, dense_threshold=dense_threshold)
        w = mu.weights.copy()
        return cls(w, op.matvec(w), fld(mu.points) if len(w) else np.empty(0), op, mu.n_curve, mu.a)

    @property
    def energy(self) -> float:
        return quadratic_value(self.w, self.Kw, self.q)

    @property
    def grad(self) -> np.ndarray:
        return 2.0 * self.Kw + self.q

    def copy(self) -> "FWState":
        return FWState(self.w.copy(), self.Kw.copy(), self.q, self.op, self.n_curve, self.a)


def quadratic_value(w, Kw, q) -> float:
    """I = w'Kw + q'w, the single energy formula used by every step rule."""
    return float(w @ Kw + q @ w)


def duality_gap(grad, w, vertex: Vertex) -> float:
    return float(grad @ w - grad @ vertex.weights(len(w)))


def _clamp_step(slope: float, curv: float, gmax: float) -> float:
    if slope >= 0:
        return 0.0
    if curv <= 0:
        return gmax
    return min(gmax, -slope / (2.0 * curv))


def frank_wolfe_step(state: FWState, grad, vertex: Vertex, round_off: float = 1e-12):
    """One vanilla step toward ``vertex`` with exact line search.

    Returns ``(gamma, new_state, gap)``; ``state`` is not modified.
    """
    gap = duality_gap(grad, state.w, vertex)
    scale = max(1.0, abs(float(np.abs(grad) @ state.w)))
    if gap < -round_off * scale:
        raise SolverError(f"negative duality gap {float(gap)!r}")
    idx = [i for i in (vertex.curve_index, vertex.plane_index) if i is not None]
    mass = [vertex.a if i == vertex.curve_index else 1.0 - vertex.a for i in idx]
    cols = [state.op.column(i) for i in idx]
    Kv = sum(mk * c for mk, c in zip(mass, cols))
    vKv = sum(mk * Kv[i] for mk, i in zip(mass, idx))
    vKw = sum(mk * state.Kw[i] for mk, i in zip(mass, idx))
    wKw = float(state.w @ state.Kw)
    curv = vKv - 2.0 * vKw + wKw
    gamma = _clamp_step(-gap, curv, 1.0)
    new = state.copy()
    if gamma > 0:
        new.w *= 1.0 - gamma
        new.Kw *= 1.0 - gamma
        for mk, i in zip(mass, idx):
            new.w[i] += gamma * mk
        new.Kw += gamma * Kv
    return gamma, new, gap


def _block_slices(state: FWState):
    out = []
    if state.n_curve:
        out.append(slice(0, state.n_curve))
    if len(state.w) > state.n_curve:
        out.append(slice(state.n_curve, len(state.w)))
    return out


def pairwise_step(state: FWState, grad, block: slice):
    """Move mass inside ``block`` from its worst supported atom to its best atom.

    Returns ``(gamma, new_state)``; ``gamma`` is the transferred mass.
    """
    g = grad[block]
    wb = state.w[block]
    off = block.start
    s = off + int(np.argmin(g))
    supported = np.flatnonzero(wb > 0)
    v = off + int(supported[np.argmax(g[supported])])
    slope = grad[s] - grad[v]
    new = state.copy()
    if s == v or slope >= 0:
        return 0.0, new
    cs, cv = state.op.column(s), state.op.column(v)
    curv = cs[s] - 2.0 * cs[v] + cv[v]
    gmax = state.w[v]
    gamma = _clamp_step(slope, curv, gmax)
    new.w[s] += gamma
    if gamma == gmax:
        new.w[v] = 0.0
    else:
        new.w[v] -= gamma
    new.Kw += gamma * (cs - cv)
    return gamma, new


@dataclass
class SolveResult:
    measure: ConstrainedMeasure
    constants: EquilibriumConstants
    trace: np.ndarray           # columns: iteration, I, gap, gamma
    converged: bool
    status: str
    gap: float
    energy: float
    gradient: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def trace_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("iteration,I,gap,gamma\n")
        for it, I, gap, gamma in self.trace:
            buf.write(f"{int(it)},{float(I)!r},{float(gap)!r},{float(gamma)!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def run_frank_wolfe(mu0: ConstrainedMeasure, fld: ExternalField, config: SolverConfig,
                    op: KernelOperator | None = None):
    """Iterate from ``mu0`` until the duality gap is below ``gap_rtol * |I|``.

    Returns ``(measure, trace, status, final_state)``; ``status`` is one of
    ``converged``, ``max-iterations`` or ``stalled`` (a step whose recomputed
    energy went up by round-off; the step is discarded).
    """
    state = FWState.start(mu0, fld, op, config.dense_threshold)
    I = state.energy
    rows = []
    status = "max-iterations"
    blocks = _block_slices(state)
    for k in range(config.max_iterations + 1):
        grad = state.grad
        vertex = linear_minimization_oracle(grad, state.n_curve, state.a)
        gap = duality_gap(grad, state.w, vertex)
        if gap <= config.gap_rtol * abs(I):
            rows.append((k, I, gap, 0.0))
            status = "converged"
            break
        if k == config.max_iterations:
            rows.append((k, I, gap, 0.0))
            break
        if config.step_rule == "vanilla":
            gamma, new, _ = frank_wolfe_step(state, grad, vertex)
        else:
            if len(blocks) == 1:
                b = blocks[0]
            else:
                gaps = [float(grad[b] @ state.w[b]) - float(np.sum(state.w[b])) * float(grad[b].min())
                        for b in blocks]
                b = blocks[int(np.argmax(gaps))]
            gamma, new = pairwise_step(state, grad, b)
        I_new = new.energy
        if I_new > I:
            rows.append((k, I, gap, 0.0))
            status = "stalled"
            break
        rows.append((k, I, gap, gamma))
        state, I = new, I_new
    mu = restore_block_masses(mu0.with_weights(state.w))
    return mu, np.array(rows, dtype=float), status, state


def kkt_constants(mu: ConstrainedMeasure, fld: ExternalField, eps: float = 1e-3,
                  grad=None) -> EquilibriumConstants:
    """Weighted averages of 2U + Q over the numerical support of each block."""
    from .energy import frechet_gradient

    g = frechet_gradient(mu, fld) if grad is None else np.asarray(grad)
    _, supp = prune(mu, eps)
    wts = mu.weights

    def avg(mask, offset, block_mass):
        if block_mass <= 0:
            return None
        idx = offset + np.flatnonzero(mask)
        if len(idx) == 0:
            raise ValueError("block carries mass but has empty numerical support")
        return float(wts[idx] @ g[idx] / wts[idx].sum())

    return EquilibriumConstants(avg(supp.curve_mask, 0, mu.a),
                                avg(supp.plane_mask, mu.n_curve, 1.0 - mu.a))


def solve(config: SolverConfig, curve: Curve | None, fld: ExternalField,
          mu0: ConstrainedMeasure | None = None) -> SolveResult:
    if mu0 is None:
        mu0 = init_feasible(curve, config.a, config.box, config.h, config.m, grading=config.curve_grading)
    mu, trace, status, state = run_frank_wolfe(mu0, fld, config)
    grad = state.grad
    consts = kkt_constants(mu, fld, config.support_eps, grad)
    warnings = support_warnings(mu, config, curve)
    for msg in warnings:
        log.warning(msg)
    if status != "converged":
        log.warning("Frank-Wolfe stopped without convergence (%s) at gap %.3e", status, trace[-1, 2])
    return SolveResult(mu, consts, trace, status == "converged", status, float(trace[-1, 2]),
                       float(trace[-1, 1]), grad, warnings)


def support_warnings(mu: ConstrainedMeasure, config: SolverConfig, curve: Curve | None) -> list[str]:
    out = []
    _, supp = prune(mu, config.support_eps)
    if supp.plane_mask.any():
        c = mu.plane_centers[supp.plane_mask]
        b = config.box
        edge = 0.5 * mu.h + 1e-9 * b.side
        if (np.any(c[:, 0] - b.x0 <= edge + mu.h) or np.any(b.x0 + b.side - c[:, 0] <= edge + mu.h)
                or np.any(c[:, 1] - b.y0 <= edge + mu.h) or np.any(b.y0 + b.side - c[:, 1] <= edge + mu.h)):
            out.append("plane support reaches the outer cell ring of the box")
    if config.unbounded_curve and curve is not None and supp.curve_mask.any():
        t = mu.t[supp.curve_mask]
        half = 0.5 * mu.seg_len[supp.curve_mask]
        margin = min(float(np.min(t - half)), float(np.min(curve.length - t - half)))
        if margin < config.curve_end_margin:
            out.append(f"curve support within {margin:.3f} of the curve ends (< {config.curve_end_margin})")
    return out
