"""Grid obstacle problem for the potential: thin obstacle on the curve, thick obstacle off it.

With constants A_gamma > A_0 the obstacle is

    psi = (A_gamma - Q)/2 on the curve,    psi = (A_0 - Q)/2 elsewhere,

and the potential is the solution of the linear complementarity problem
v >= psi, -lap v >= 0, (v - psi)(-lap v) = 0 with Dirichlet data on the box
boundary.  Projected SOR solves it; -lap v / (2 pi) recovers the measure.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numba
import numpy as np

from .energy import PotentialField
from .geometry import Box, Curve, distance_to_curve, normals_at, points_at
from .kernel import ExternalField
from .solver_measure import EquilibriumConstants


class ObstacleError(ValueError):
    pass


@dataclass(frozen=True)
class ObstacleProblem:
    box: Box
    hg: float
    psi: np.ndarray          # (n+1, n+1); -inf where unconstrained
    thin: np.ndarray         # bool mask of curve nodes
    boundary: np.ndarray     # Dirichlet values on the outer ring (interior entries unused)
    constants: EquilibriumConstants
    field: ExternalField

    @property
    def axes(self):
        return self.box.node_axes(self.hg)


def build_problem(curve: Curve | None, constants: EquilibriumConstants, fld: ExternalField,
                  box: Box, hg: float, boundary_source: PotentialField | str = "farfield") -> ObstacleProblem:
    """Assemble the two-level obstacle and Dirichlet data.

    ``boundary_source`` is either a measure-side :class:`PotentialField` on the
    same grid, or ``"farfield"`` for -log|x| (unit mass seen from far away).
    """
    Ag, A0 = constants.A_gamma, constants.A_0
    if Ag is not None and A0 is not None and not Ag > A0:
        raise ObstacleError(f"need A_gamma > A_0, got {Ag!r} <= {A0!r}")
    if not hg > 0:
        raise ObstacleError("grid spacing must be positive")
    xs, ys = box.node_axes(hg)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.c_[X.ravel(), Y.ravel()]
    Q = fld(nodes).reshape(X.shape)
    psi = np.full(X.shape, -np.inf) if A0 is None else 0.5 * (A0 - Q)
    thin = np.zeros(X.shape, dtype=bool)
    if Ag is not None and curve is not None:
        thin = (distance_to_curve(curve, nodes) <= 0.5 * hg + 1e-12 * hg).reshape(X.shape)
        thin[0, :] = thin[-1, :] = thin[:, 0] = thin[:, -1] = False
        psi = np.where(thin, 0.5 * (Ag - Q), psi)
        if not thin.any():
            raise ObstacleError("no grid node lies on the curve; refine the grid")
    if isinstance(boundary_source, PotentialField):
        if boundary_source.values.shape != X.shape or abs(boundary_source.hg - hg) > 1e-12 * hg:
            raise ObstacleError("boundary field must live on the problem grid")
        bnd = boundary_source.values.copy()
    elif boundary_source == "farfield":
        with np.errstate(divide="ignore"):
            bnd = -np.log(np.hypot(X, Y))
    else:
        raise ObstacleError(f"unknown boundary source {boundary_source!r}")
    ring = np.ones(X.shape, dtype=bool)
    ring[1:-1, 1:-1] = False
    if not np.all(np.isfinite(bnd[ring])):
        raise ObstacleError("boundary values must be finite")
    return ObstacleProblem(box, float(hg), psi, thin, bnd, constants, fld)


@numba.njit(cache=True)
def _psor(v, psi, omega, tol, max_sweeps, h2, energies):
    n0, n1 = v.shape
    sweeps = 0
    last = np.inf
    for sweep in range(max_sweeps):
        delta = 0.0
        for i in range(1, n0 - 1):          # row-major Gauss-Seidel order
            for j in range(1, n1 - 1):
                gs = 0.25 * (v[i + 1, j] + v[i - 1, j] + v[i, j + 1] + v[i, j - 1])
                new = v[i, j] + omega * (gs - v[i, j])
                if new < psi[i, j]:
                    new = psi[i, j]
                d = abs(new - v[i, j])
                if d > delta:
                    delta = d
                v[i, j] = new
        sweeps = sweep + 1
        e = 0.0
        for i in range(n0 - 1):
            for j in range(n1 - 1):
                dx = v[i + 1, j] - v[i, j]
                dy = v[i, j + 1] - v[i, j]
                e += dx * dx + dy * dy
        if sweep < energies.shape[0]:
            energies[sweep] = 0.5 * e
        last = delta
        if delta <= tol:
            break
    return sweeps, last


@dataclass
class PSORResult:
    field: PotentialField
    converged: bool
    sweeps: int
    last_update: float
    energies: np.ndarray     # discrete Dirichlet energy after each sweep


def psor_solve(problem: ObstacleProblem, omega: float = 1.5, tol: float = 1e-8,
               max_sweeps: int = 200_000, initial: np.ndarray | None = None) -> PSORResult:
    """Projected SOR in fixed row-major order, stopping when the max update is <= ``tol``."""
    if not 0 < omega < 2:
        raise ObstacleError("relaxation must lie in (0, 2)")
    psi = problem.psi
    if initial is None:
        v = problem.boundary.copy()
        interior = np.s_[1:-1, 1:-1]
        ring_mean = float(np.mean(np.r_[v[0], v[-1], v[1:-1, 0], v[1:-1, -1]]))
        v[interior] = ring_mean
    else:
        v = np.array(initial, dtype=float)
        v[0], v[-1], v[:, 0], v[:, -1] = (problem.boundary[0], problem.boundary[-1],
                                          problem.boundary[:, 0], problem.boundary[:, -1])
    v[1:-1, 1:-1] = np.maximum(v[1:-1, 1:-1], psi[1:-1, 1:-1])
    energies = np.empty(max_sweeps)
    sweeps, last = _psor(v, psi, float(omega), float(tol), int(max_sweeps), problem.hg**2, energies)
    return PSORResult(PotentialField(problem.box, problem.hg, v), bool(last <= tol), int(sweeps),
                      float(last), energies[:sweeps].copy())


def contact_mask(v: PotentialField, problem: ObstacleProblem, tol: float = 0.0) -> np.ndarray:
    mask = v.values - problem.psi <= tol
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = False
    return mask


@dataclass
class RecoveredMeasure:
    plane_density: np.ndarray   # per node, zero off the coincidence set and on curve nodes
    line_mass: np.ndarray       # per node mass carried by curve nodes
    plane_mass: float
    curve_mass: float
    min_density: float


def recover_measure(v: PotentialField, problem: ObstacleProblem, tol: float = 0.0) -> RecoveredMeasure:
    """Density -lap v / (2 pi) on the coincidence set, split into thick and thin parts."""
    lap = v.laplacian()
    dens = -lap / (2.0 * math.pi)
    contact = contact_mask(v, problem, tol)
    plane = np.where(contact & ~problem.thin, dens, 0.0)
    line = np.where(contact & problem.thin, dens * v.hg**2, 0.0)
    interior = np.isfinite(dens)
    return RecoveredMeasure(plane, line, float(plane.sum() * v.hg**2), float(line.sum()),
                            float(np.min(dens[interior])))


@dataclass
class SignoriniSample:
    t: float
    x: float
    y: float
    contact: bool
    gap: float           # v - psi on the curve
    d_plus: float        # outward normal derivative from the n+ side (one-sided stencil)
    d_minus: float
    jump: float          # discrete jump -hg * lap_h v at the nearby curve nodes
    product: float
    product_scaled: float


def _nearest_thin(problem: ObstacleProblem, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest curve node for each point (lowest index on ties)."""
    ii, jj = np.nonzero(problem.thin)
    xs, ys = problem.axes
    d2 = (xs[ii][None, :] - pts[:, :1]) ** 2 + (ys[jj][None, :] - pts[:, 1:]) ** 2
    k = np.argmin(d2, axis=1)
    return ii[k], jj[k]


def signorini_residuals(v: PotentialField, curve: Curve, problem: ObstacleProblem,
                        per_segment: int = 1) -> list[SignoriniSample]:
    """Jump of normal derivatives and complementarity at interior points of each curve segment.

    The checked jump is -hg * lap_h v on curve nodes; for a grid-aligned curve
    this is the sum of the two one-sided outward differences plus an O(hg)
    tangential term, and it equals 2 pi times the line density where the curve
    carries mass.  It is the quantity the discrete complementarity controls.
    For reference the one-sided derivatives are also estimated with the
    second-order stencil (-3f0 + 4f1 - f2)/2s, s = hg, along each normal.
    Gap and jump are read at the nearest curve node, where the discrete
    complementarity holds.
    """
    if problem.constants.A_gamma is None:
        raise ObstacleError("no curve constant")
    lap = v.laplacian()
    ts = curve.segment_midpoints(per_segment)
    pts = points_at(curve, ts)
    ni, nj = _nearest_thin(problem, pts)
    s = v.hg
    out = []
    psi_scale = max(1.0, float(np.max(np.abs(problem.psi[problem.thin]))))
    for t, p, i, j in zip(ts, pts, ni, nj):
        n_plus, n_minus = normals_at(curve, float(t))
        f0 = float(v.interpolate(p)[0])
        ds = []
        for n in (n_plus, n_minus):
            f1, f2 = v.interpolate([p + s * n, p + 2 * s * n])
            ds.append(-(-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * s))
        g = float(v.values[i, j] - problem.psi[i, j])
        jump = float(-v.hg * lap[i, j])
        prod = g * jump
        out.append(SignoriniSample(float(t), float(p[0]), float(p[1]), bool(g <= 0.0), g,
                                   ds[0], ds[1], jump, prod, prod / psi_scale))
    return out


def signorini_report_json(samples: list[SignoriniSample], path=None) -> str:
    text = json.dumps({"samples": [asdict(s) for s in samples]}, indent=1)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
