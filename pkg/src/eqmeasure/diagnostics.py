"""Post-solve checks: KKT residuals, support separation, energy identities, run reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .energy import PotentialField, energy, frechet_gradient
from .geometry import Curve, distance_to_curve
from .kernel import ExternalField
from .measure import ConstrainedMeasure, prune
from .solver_measure import EquilibriumConstants

# 3-point Gauss-Legendre rule on [-1/2, 1/2]; exact for the quadratic field
_GL_X = np.array([-math.sqrt(0.15), 0.0, math.sqrt(0.15)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class BlockKKT:
    equality_residual: float     # max |2U + Q - A| over support atoms
    inequality_margin: float     # min (2U + Q - A) over off-support atoms; inf if none
    n_support: int


@dataclass(frozen=True)
class KKTReport:
    curve: BlockKKT | None
    plane: BlockKKT | None
    tol: float
    passed: bool


def kkt_report(mu: ConstrainedMeasure, fld: ExternalField, constants: EquilibriumConstants,
               eps: float = 1e-3, tol: float = 0.02, grad=None) -> KKTReport:
    g = frechet_gradient(mu, fld) if grad is None else np.asarray(grad)
    _, supp = prune(mu, eps)

    def block(mask, offset, A):
        if A is None:
            return None
        gb = g[offset:offset + len(mask)] - A
        eq = float(np.max(np.abs(gb[mask]))) if mask.any() else math.inf
        ineq = float(np.min(gb[~mask])) if (~mask).any() else math.inf
        return BlockKKT(eq, ineq, int(mask.sum()))

    cb = block(supp.curve_mask, 0, constants.A_gamma)
    pb = block(supp.plane_mask, mu.n_curve, constants.A_0)
    ok = all(b.equality_residual <= tol and b.inequality_margin >= -tol for b in (cb, pb) if b is not None)
    return KKTReport(cb, pb, float(tol), bool(ok))


@dataclass(frozen=True)
class SeparationReport:
    applicable: bool
    distance: float | None
    threshold: float | None
    passed: bool | None


def separation_report(mu: ConstrainedMeasure, curve: Curve | None, eps: float = 1e-3,
                      factor: float = 2.0) -> SeparationReport:
    """Distance from the plane support to the curve, required to exceed ``factor * h``."""
    if not 0.0 < mu.a < 1.0 or curve is None:
        return SeparationReport(False, None, None, None)
    _, supp = prune(mu, eps)
    pts = mu.plane_centers[supp.plane_mask]
    d = float(np.min(distance_to_curve(curve, pts))) if len(pts) else math.inf
    thr = factor * mu.h
    return SeparationReport(True, d, thr, bool(d >= thr))


def separation_refines(coarse: SeparationReport, fine: SeparationReport, slack: float = 0.0) -> bool:
    """Distance must not shrink under refinement (up to ``slack``)."""
    if not (coarse.applicable and fine.applicable):
        return True
    return fine.distance >= coarse.distance - slack


def averaged_field_moment(mu: ConstrainedMeasure, fld: ExternalField) -> float:
    """int Q d(mu) for the piecewise-uniform measure: Q averaged over each cell and segment."""
    total = 0.0
    if mu.n_plane:
        ox, oy = np.meshgrid(_GL_X * mu.h, _GL_X * mu.h, indexing="ij")
        ww = np.outer(_GL_W, _GL_W).ravel()
        offs = np.c_[ox.ravel(), oy.ravel()]
        q = fld(mu.plane_centers[:, None, :] + offs[None])
        total += float(mu.v @ (q @ ww))
    if mu.n_curve:
        if mu.curve_dirs is None:
            total += float(mu.w @ fld(mu.curve_points))
        else:
            offs = (mu.seg_len[:, None, None] * _GL_X[None, :, None]) * mu.curve_dirs[:, None, :]
            q = fld(mu.curve_points[:, None, :] + offs)
            total += float(mu.w @ (q @ _GL_W))
    return total


def _trapezoid_weights(n: int, hg: float) -> np.ndarray:
    w = np.full(n, hg)
    w[0] = w[-1] = 0.5 * hg
    return w


def dirichlet_integral(v: PotentialField) -> float:
    """Trapezoid quadrature of |grad v|^2 over the box."""
    gx, gy = v.gradient()
    w = _trapezoid_weights(v.values.shape[0], v.hg)
    return float(np.sum(np.outer(w, w) * (gx**2 + gy**2)))


def boundary_flux_term(v: PotentialField) -> float:
    """Closed integral of v dv/dn over the box boundary (outward normal)."""
    gx, gy = v.gradient()
    vv = v.values
    w = _trapezoid_weights(vv.shape[0], v.hg)
    return float(w @ (vv[-1] * gx[-1]) - w @ (vv[0] * gx[0]) + w @ (vv[:, -1] * gy[:, -1]) - w @ (vv[:, 0] * gy[:, 0]))


def disk_and_circle_integrals(v: PotentialField, r0: float, n_theta: int = 800,
                              n_panels: int = 40) -> tuple[float, float]:
    """int_{B_r0} v and int_{dB_r0} v by polar quadrature on the bilinear interpolant."""
    theta = (np.arange(n_theta) + 0.5) * 2.0 * math.pi / n_theta
    xg, wg = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, r0, n_panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    rs = (0.5 * (hi - lo) * xg + 0.5 * (hi + lo)).ravel()
    rw = (0.5 * (hi - lo) * wg).ravel()
    R, T = np.meshgrid(rs, theta, indexing="ij")
    vals = v.interpolate(np.c_[(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]).reshape(R.shape)
    dtheta = 2.0 * math.pi / n_theta
    disk = float(np.sum(vals * (rw * rs)[:, None]) * dtheta)
    ring = v.interpolate(np.c_[r0 * np.cos(theta), r0 * np.sin(theta)])
    circle = float(np.sum(ring) * r0 * dtheta)
    return disk, circle


@dataclass(frozen=True)
class EnergyIdentityReport:
    energy: float              # discrete E[mu]
    field_moment: float        # cell-averaged int Q
    dirichlet: float           # int_box |grad v|^2
    boundary_term: float       # closed integral of v dv/dn
    energy_from_field: float
    total_from_field: float
    residual_1: float
    residual_2: float
    hg: float


def energy_identity_report(v: PotentialField, mu: ConstrainedMeasure, fld: ExternalField, r0: float,
                           eps: float = 1e-3, include_boundary: bool = True) -> EnergyIdentityReport:
    """Compare E and I with their expressions through the sampled potential ``v``.

    residual_1 = |E - (int |grad v|^2 - closed int v dv/dn) / 2 pi|
    residual_2 = |I - (that energy - (2/pi) int_B v + (r0/pi) int_dB v + r0^2)|

    The field term of the second identity assumes Q = |x|^2 and the support in
    B_r0.  ``I`` is taken for the piecewise-uniform measure (cell-averaged Q),
    since that is the measure whose potential ``v`` samples.
    """
    if fld.kind != "quadratic":
        raise PreconditionError("the closed-form field identity needs Q = |x|^2")
    _, supp = prune(mu, eps)
    if supp.bbox is None:
        raise PreconditionError("empty support")
    if _support_radius(mu, supp) > r0:
        raise PreconditionError(f"support not contained in B_{r0}")
    b = v.box
    if b.x0 > -r0 or b.y0 > -r0 or b.x0 + b.side < r0 or b.y0 + b.side < r0:
        raise PreconditionError("grid box does not contain B_r0")
    E = energy(mu)
    Qm = averaged_field_moment(mu, fld)
    dir_ = dirichlet_integral(v)
    bnd = boundary_flux_term(v) if include_boundary else 0.0
    E_field = (dir_ - bnd) / (2.0 * math.pi)
    disk, circle = disk_and_circle_integrals(v, r0)
    I_field = E_field - (2.0 / math.pi) * disk + (r0 / math.pi) * circle + r0 * r0
    return EnergyIdentityReport(E, Qm, dir_, bnd, E_field, I_field, abs(E - E_field),
                                abs(E + Qm - I_field), float(v.hg))


def _support_radius(mu: ConstrainedMeasure, supp) -> float:
    """Largest distance from the origin to a point of a support atom."""
    r = 0.0
    if supp.plane_mask.any():
        c = np.abs(mu.plane_centers[supp.plane_mask]) + 0.5 * mu.h
        r = max(r, float(np.max(np.hypot(c[:, 0], c[:, 1]))))
    if supp.curve_mask.any():
        c = mu.curve_points[supp.curve_mask]
        r = max(r, float(np.max(np.hypot(c[:, 0], c[:, 1]) + 0.5 * mu.seg_len[supp.curve_mask])))
    return r


def h1_ratio(v_trunc: PotentialField, truncated_energy: float) -> float:
    """||V||_{H^1(box)} over the truncated energy; the bound constant is not known, so only the ratio is reported."""
    w = _trapezoid_weights(v_trunc.values.shape[0], v_trunc.hg)
    W = np.outer(w, w)
    l2 = float(np.sum(W * v_trunc.values**2))
    h1 = math.sqrt(l2 + dirichlet_integral(v_trunc))
    return h1 / truncated_energy if truncated_energy > 0 else math.inf


@dataclass
class RunReport:
    """Everything a completed run reports, in a fixed field order."""

    name: str
    a: float
    h: float
    constants: dict
    kkt: dict
    separation: dict
    gap: float
    iterations: int
    energy: dict
    identity_residuals: dict = field(default_factory=dict)
    cross_solver: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    converged: bool = False
    status: str = ""
    warnings: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(v == "PASS" for v in self.checks.values())

    def to_json(self, path=None) -> str:
        text = json.dumps(_clean(asdict(self)), indent=1, allow_nan=False)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def summary_table(self) -> str:
        lines = [f"run {self.name}: status={self.status} gap={self.gap:.3e} iterations={self.iterations}"]
        for k, v in self.constants.items():
            lines.append(f"  {k:<28} {_fmt(v)}")
        for k, v in self.energy.items():
            lines.append(f"  {k:<28} {_fmt(v)}")
        for k, v in self.checks.items():
            lines.append(f"  check {k:<22} {v}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def kkt_dict(rep: KKTReport) -> dict:
    return {"curve": None if rep.curve is None else asdict(rep.curve),
            "plane": None if rep.plane is None else asdict(rep.plane),
            "tol": rep.tol, "passed": rep.passed}
