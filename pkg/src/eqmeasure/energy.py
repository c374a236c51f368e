"""Potentials, energies and the first variation 2U + Q of discrete measures.

Everything here is a direct sum over atoms.  Off-diagonal interactions use
atom midpoints; an evaluation point that coincides with an atom picks up that
atom's exact self-energy instead, so ``energy(mu) == weights @ U(atoms)``
holds by construction.
"""

from __future__ import annotations

import io
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .geometry import Box
from .kernel import ExternalField
from .measure import ConstrainedMeasure

COINCIDE_TOL = 1e-12


@numba.njit(cache=True)
def _potential_sum(targets, atoms, weights, diag, r0, tol):
    m = targets.shape[0]
    n = atoms.shape[0]
    out = np.zeros(m)
    tol2 = tol * tol
    logr0 = math.log(r0) if r0 > 0 else 0.0
    for i in range(m):
        xi = targets[i, 0]
        yi = targets[i, 1]
        acc = 0.0
        for j in range(n):
            wj = weights[j]
            if wj == 0.0:
                continue
            dx = xi - atoms[j, 0]
            dy = yi - atoms[j, 1]
            d2 = dx * dx + dy * dy
            if d2 <= tol2:
                acc += wj * (diag[j] + logr0)
            elif r0 > 0:
                if d2 < r0 * r0:
                    acc += wj * (logr0 - 0.5 * math.log(d2))
            else:
                acc -= wj * 0.5 * math.log(d2)
        out[i] = acc
    return out


@numba.njit(cache=True)
def _kernel_columns(atoms, cols, diag, r0, tol):
    n = atoms.shape[0]
    k = cols.shape[0]
    out = np.empty((n, k))
    tol2 = tol * tol
    logr0 = math.log(r0) if r0 > 0 else 0.0
    for c in range(k):
        j = cols[c]
        xj = atoms[j, 0]
        yj = atoms[j, 1]
        for i in range(n):
            dx = atoms[i, 0] - xj
            dy = atoms[i, 1] - yj
            d2 = dx * dx + dy * dy
            if i == j or d2 <= tol2:
                out[i, c] = diag[j] + logr0
            elif r0 > 0:
                out[i, c] = logr0 - 0.5 * math.log(d2) if d2 < r0 * r0 else 0.0
            else:
                out[i, c] = -0.5 * math.log(d2)
    return out


@numba.njit(cache=True)
def _square_primitive(u, v):
    # antiderivative of -log(u^2+v^2)/2 in both variables
    r2 = u * u + v * v
    acc = -3.0 * u * v
    if r2 > 0.0:
        acc += u * v * math.log(r2)
    if u != 0.0:
        acc += u * u * math.atan(v / u)
    if v != 0.0:
        acc += v * v * math.atan(u / v)
    return -0.5 * acc


@numba.njit(cache=True)
def _square_mean_log(px, py, cx, cy, h):
    """Mean of log(1/|p - y|) over the h-square centred at c."""
    x0 = cx - 0.5 * h - px
    x1 = cx + 0.5 * h - px
    y0 = cy - 0.5 * h - py
    y1 = cy + 0.5 * h - py
    return (_square_primitive(x1, y1) - _square_primitive(x0, y1)
            - _square_primitive(x1, y0) + _square_primitive(x0, y0)) / (h * h)


@numba.njit(cache=True)
def _line_primitive(u, eta):
    # antiderivative of -log(u^2+eta^2)/2 in u
    r2 = u * u + eta * eta
    acc = -2.0 * u
    if r2 > 0.0:
        acc += u * math.log(r2)
    if eta != 0.0:
        acc += 2.0 * eta * math.atan(u / eta)
    return -0.5 * acc


@numba.njit(cache=True)
def _segment_mean_log(px, py, cx, cy, tx, ty, length):
    """Mean of log(1/|p - y|) over the straight piece of given length centred at c, direction t."""
    rx = px - cx
    ry = py - cy
    xi = rx * tx + ry * ty
    eta = -rx * ty + ry * tx
    half = 0.5 * length
    return (_line_primitive(half - xi, eta) - _line_primitive(-half - xi, eta)) / length


@numba.njit(cache=True)
def _potential_sum_exact(targets, atoms, weights, sizes, dirs, is_curve, near, r0):
    """Direct sum with exact uniform-atom averages for atoms within ``near`` sizes of the target."""
    m = targets.shape[0]
    n = atoms.shape[0]
    out = np.zeros(m)
    logr0 = math.log(r0) if r0 > 0 else 0.0
    for i in range(m):
        xi = targets[i, 0]
        yi = targets[i, 1]
        acc = 0.0
        for j in range(n):
            wj = weights[j]
            if wj == 0.0:
                continue
            dx = xi - atoms[j, 0]
            dy = yi - atoms[j, 1]
            d2 = dx * dx + dy * dy
            rad = near * sizes[j]
            if d2 < rad * rad:
                if is_curve[j]:
                    k = _segment_mean_log(xi, yi, atoms[j, 0], atoms[j, 1], dirs[j, 0], dirs[j, 1], sizes[j])
                else:
                    k = _square_mean_log(xi, yi, atoms[j, 0], atoms[j, 1], sizes[j])
                acc += wj * (k + logr0)
            elif r0 > 0:
                if d2 < r0 * r0:
                    acc += wj * (logr0 - 0.5 * math.log(d2))
            else:
                acc -= wj * 0.5 * math.log(d2)
        out[i] = acc
    return out


def potential_at(points, atoms, weights, diag, r0: float | None = None) -> np.ndarray:
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, float)))
    return _potential_sum(pts, np.ascontiguousarray(atoms, dtype=float),
                          np.ascontiguousarray(weights, dtype=float),
                          np.ascontiguousarray(diag, dtype=float),
                          0.0 if r0 is None else float(r0), COINCIDE_TOL)


class KernelOperator:
    """Interaction matrix of a fixed atom set, dense below ``dense_threshold`` atoms.

    Above the threshold columns are generated on demand and kept in a bounded
    LRU cache; the full matrix is never stored.
    """

    def __init__(self, points, diag, r0: float | None = None, dense_threshold: int = 4096,
                 cache_bytes: int = 256 * 2**20):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.diag = np.ascontiguousarray(diag, dtype=float)
        self.r0 = 0.0 if r0 is None else float(r0)
        self.n = len(self.points)
        self.dense = self.n <= dense_threshold
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_cols = max(16, cache_bytes // max(8 * self.n, 1))
        self._matrix = None
        if self.dense and self.n:
            self._matrix = _kernel_columns(self.points, np.arange(self.n), self.diag, self.r0, COINCIDE_TOL)

    @classmethod
    def for_measure(cls, mu: ConstrainedMeasure, r0: float | None = None, dense_threshold: int = 4096):
        return cls(mu.points, mu.self_energies(), r0, dense_threshold)

    def column(self, j: int) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix[:, j]
        col = self._cache.get(j)
        if col is None:
            col = _kernel_columns(self.points, np.array([j]), self.diag, self.r0, COINCIDE_TOL)[:, 0]
            self._cache[j] = col
            if len(self._cache) > self._cache_cols:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(j)
        return col

    def entry(self, i: int, j: int) -> float:
        return float(self.column(j)[i])

    def matvec(self, w) -> np.ndarray:
        return _potential_sum(self.points, self.points, np.ascontiguousarray(w, dtype=float),
                              self.diag, self.r0, COINCIDE_TOL)


def potential(mu: ConstrainedMeasure, x, r0: float | None = None):
    """U^mu at point(s) ``x``; ``r0`` switches to the truncated kernel."""
    x = np.asarray(x, float)
    out = potential_at(x, mu.points, mu.weights, mu.self_energies(), r0)
    return float(out[0]) if x.ndim == 1 else out


def energy(mu: ConstrainedMeasure, r0: float | None = None) -> float:
    """Discrete E[mu] = sum_ij w_i w_j K_ij with self-energy diagonal."""
    return float(mu.weights @ potential_at(mu.points, mu.points, mu.weights, mu.self_energies(), r0))


def field_moment(mu: ConstrainedMeasure, fld: ExternalField) -> float:
    if len(mu.weights) == 0:
        return 0.0
    return float(mu.weights @ fld(mu.points))


def total_energy(mu: ConstrainedMeasure, fld: ExternalField) -> float:
    """I[mu] = E[mu] + integral of Q."""
    if len(mu.weights) == 0 or not mu.weights.sum() > 0:
        raise ValueError("not a probability measure")
    return energy(mu) + field_moment(mu, fld)


def frechet_gradient(mu: ConstrainedMeasure, fld: ExternalField) -> np.ndarray:
    """Per-atom 2U^mu + Q, curve block first."""
    pts = mu.points
    return 2.0 * potential_at(pts, pts, mu.weights, mu.self_energies()) + fld(pts)


@dataclass(frozen=True)
class PotentialField:
    """Potential sampled at the nodes of a uniform grid; ``values[i, j]`` sits at ``(xs[i], ys[j])``."""

    box: Box
    hg: float
    values: np.ndarray

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.box.node_axes(self.hg)

    def nodes(self) -> np.ndarray:
        xs, ys = self.axes
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.c_[X.ravel(), Y.ravel()]

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """Centred differences inside, second-order one-sided on the boundary."""
        gx, gy = np.gradient(self.values, self.hg, edge_order=2)
        return gx, gy

    def laplacian(self) -> np.ndarray:
        """Five-point Laplacian on interior nodes; NaN on the boundary ring."""
        v = self.values
        lap = np.full_like(v, np.nan)
        lap[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
                           - 4.0 * v[1:-1, 1:-1]) / self.hg**2
        return lap

    def interpolate(self, pts) -> np.ndarray:
        """Bilinear interpolation at arbitrary points inside the box."""
        pts = np.atleast_2d(np.asarray(pts, float))
        n = self.values.shape[0] - 1
        fx = (pts[:, 0] - self.box.x0) / self.hg
        fy = (pts[:, 1] - self.box.y0) / self.hg
        if np.any((fx < -1e-9) | (fx > n + 1e-9) | (fy < -1e-9) | (fy > n + 1e-9)):
            raise ValueError("interpolation point outside the grid")
        i = np.clip(np.floor(fx).astype(int), 0, n - 1)
        j = np.clip(np.floor(fy).astype(int), 0, n - 1)
        sx, sy = fx - i, fy - j
        v = self.values
        return ((1 - sx) * (1 - sy) * v[i, j] + sx * (1 - sy) * v[i + 1, j]
                + (1 - sx) * sy * v[i, j + 1] + sx * sy * v[i + 1, j + 1])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("x,y,U\n")
        xs, ys = self.axes
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                buf.write(f"{float(x)!r},{float(y)!r},{float(self.values[i, j])!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "PotentialField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
        if len(xs) != len(ys):
            raise ValueError("potential CSV is not a square grid")
        hg = (xs[-1] - xs[0]) / (len(xs) - 1)
        box = Box(float(xs[0]), float(ys[0]), float(xs[-1] - xs[0]))
        return cls(box, float(hg), data[:, 2].reshape(len(xs), len(ys)))


def potential_exact_near(mu: ConstrainedMeasure, x, near: float = 3.0, r0: float | None = None):
    """U^mu with atoms spread uniformly over their segment/cell when within ``near`` atom sizes of ``x``.

    This is the potential of the piecewise-uniform measure up to the far-field
    midpoint rule.  Curve atoms without a stored direction fall back to the
    midpoint rule.
    """
    x = np.asarray(x, float)
    pts = np.ascontiguousarray(np.atleast_2d(x))
    dirs = np.zeros((len(mu.weights), 2))
    is_curve = np.zeros(len(mu.weights), dtype=np.bool_)
    if mu.n_curve and mu.curve_dirs is not None:
        dirs[:mu.n_curve] = mu.curve_dirs
        is_curve[:mu.n_curve] = True
    sizes = mu.sizes.copy()
    if mu.n_curve and mu.curve_dirs is None:
        sizes[:mu.n_curve] = 0.0
    out = _potential_sum_exact(pts, np.ascontiguousarray(mu.points), np.ascontiguousarray(mu.weights),
                               sizes, dirs, is_curve, float(near), 0.0 if r0 is None else float(r0))
    return float(out[0]) if x.ndim == 1 else out


def sample_field(mu: ConstrainedMeasure, box: Box, hg: float, r0: float | None = None,
                 near_field: str = "midpoint") -> PotentialField:
    """Potential at every grid node.

    ``near_field="midpoint"`` evaluates exactly like :func:`potential`;
    ``"exact"`` integrates nearby atoms as uniform segments/cells, which is
    what grid-based comparisons against a continuum solver need.
    """
    if not hg > 0:
        raise ValueError("grid spacing must be positive")
    xs, ys = box.node_axes(hg)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.c_[X.ravel(), Y.ravel()]
    if near_field == "exact":
        vals = potential_exact_near(mu, nodes, r0=r0)
    elif near_field == "midpoint":
        keep = mu.weights > 0
        vals = potential_at(nodes, mu.points[keep], mu.weights[keep], mu.self_energies()[keep], r0)
    else:
        raise ValueError(f"unknown near-field rule {near_field!r}")
    return PotentialField(box, float(hg), vals.reshape(X.shape))
