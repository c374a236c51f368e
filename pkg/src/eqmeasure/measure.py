"""Discrete measures split into a curve block (mass a) and a plane block (mass 1 - a)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import Box, Curve, distance_to_curve, point_at
from .kernel import CELL_SELF_ENERGY_C0, self_energy_cell, self_energy_segment

MASS_TOL = 1e-12


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class ConstrainedMeasure:
    """Weighted atoms; the curve block always comes first in stacked arrays.

    Curve atoms are arc pieces of length ``seg_len`` centred at ``curve_points``
    (arc parameter ``t`` of the midpoint); plane atoms are ``h``-squares centred
    at ``plane_centers``.
    """

    a: float
    t: np.ndarray
    curve_points: np.ndarray
    seg_len: np.ndarray
    w: np.ndarray
    plane_centers: np.ndarray
    h: float
    v: np.ndarray
    c0: float = CELL_SELF_ENERGY_C0
    curve_dirs: np.ndarray | None = None   # unit chord direction of each curve atom

    @property
    def n_curve(self) -> int:
        return len(self.w)

    @property
    def n_plane(self) -> int:
        return len(self.v)

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.curve_points.reshape(-1, 2), self.plane_centers.reshape(-1, 2)])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.w, self.v])

    @property
    def sizes(self) -> np.ndarray:
        return np.concatenate([self.seg_len, np.full(self.n_plane, self.h)])

    def self_energies(self) -> np.ndarray:
        curve = self_energy_segment(self.seg_len) if self.n_curve else np.empty(0)
        plane = np.full(self.n_plane, self_energy_cell(self.h, self.c0)) if self.n_plane else np.empty(0)
        return np.concatenate([np.atleast_1d(curve), plane])

    def with_weights(self, weights) -> "ConstrainedMeasure":
        weights = np.asarray(weights, float)
        return replace(self, w=weights[:self.n_curve].copy(), v=weights[self.n_curve:].copy())

    def permuted(self, curve_perm=None, plane_perm=None) -> "ConstrainedMeasure":
        """Same measure with atoms re-indexed (used to probe tie-break independence)."""
        cp = np.arange(self.n_curve) if curve_perm is None else np.asarray(curve_perm)
        pp = np.arange(self.n_plane) if plane_perm is None else np.asarray(plane_perm)
        dirs = None if self.curve_dirs is None else self.curve_dirs[cp]
        return replace(self, t=self.t[cp], curve_points=self.curve_points[cp], seg_len=self.seg_len[cp],
                       w=self.w[cp], plane_centers=self.plane_centers[pp], v=self.v[pp], curve_dirs=dirs)


def curve_atom_edges(L: float, m: int, grading: str = "uniform") -> np.ndarray:
    """Arc-length breakpoints of ``m`` curve atoms.

    ``cosine`` clusters atoms at both ends (lengths O(L/m^2) there), which
    resolves inverse square-root end densities.
    """
    k = np.arange(m + 1)
    if grading == "uniform":
        edges = np.linspace(0.0, L, m + 1)
    elif grading == "cosine":
        edges = 0.5 * L * (1.0 - np.cos(np.pi * k / m))
    else:
        raise MeasureError(f"unknown grading {grading!r}")
    edges[0], edges[-1] = 0.0, L
    return edges


def init_feasible(curve: Curve | None, a: float, box: Box, h: float, m: int,
                  exclusion: float | None = None, grading: str = "uniform") -> ConstrainedMeasure:
    """Uniform arc-length measure of mass ``a`` on the curve plus uniform mass ``1 - a`` on cells.

    Curve atoms carry mass proportional to their length (``a/m`` each for the
    uniform grading).  Cells whose centres lie within ``exclusion`` (default
    ``2h``) of the curve are left out so the two blocks stay a positive
    distance apart.  With ``a == 0`` the curve carries no constraint: no curve
    atoms are created and no cells are excluded.  With ``a == 1`` the plane
    block is empty.
    """
    if not 0.0 <= a <= 1.0:
        raise MeasureError(f"mass fraction a={a} outside [0, 1]")
    if m < 1:
        raise MeasureError("need at least one curve atom")
    if a > 0 and curve is None:
        raise MeasureError("a > 0 needs a curve")

    if a > 0:
        L = curve.length
        edges = curve_atom_edges(L, m, grading)
        t = 0.5 * (edges[:-1] + edges[1:])
        pts = np.array([point_at(curve, ti) for ti in t])
        seg = np.diff(edges)
        dirs = _chord_dirs(curve, edges)
        w = np.full(m, a / m) if grading == "uniform" else a * seg / seg.sum()
        if not np.all(box.contains(curve.vertices)):
            raise MeasureError("curve leaves the computational box")
    else:
        t, pts, seg, w = np.empty(0), np.empty((0, 2)), np.empty(0), np.empty(0)
        dirs = np.empty((0, 2))

    if a < 1:
        cells = box.cell_centers(h)
        if a > 0:
            gap = 2.0 * h if exclusion is None else exclusion
            cells = cells[distance_to_curve(curve, cells) > gap]
        if len(cells) == 0:
            raise MeasureError("no admissible plane cell away from the curve; enlarge the box or refine h")
        v = np.full(len(cells), (1.0 - a) / len(cells))
    else:
        cells, v = np.empty((0, 2)), np.empty(0)
    return ConstrainedMeasure(a, t, pts, seg, w, cells, float(h), v, curve_dirs=dirs)


def _chord_dirs(curve: Curve, edges: np.ndarray) -> np.ndarray:
    ends = np.array([point_at(curve, float(e)) for e in edges])
    d = np.diff(ends, axis=0)
    return d / np.hypot(d[:, 0], d[:, 1])[:, None]


def mass_on_curve(mu: ConstrainedMeasure) -> float:
    return float(np.sum(mu.w))


def restore_block_masses(mu: ConstrainedMeasure) -> ConstrainedMeasure:
    """Rescale each block to its exact target mass (removes round-off drift)."""
    w, v = mu.w.copy(), mu.v.copy()
    if len(w) and w.sum() > 0:
        w *= mu.a / w.sum()
    if len(v) and v.sum() > 0:
        v *= (1.0 - mu.a) / v.sum()
    return replace(mu, w=w, v=v)


def check_block_masses(mu: ConstrainedMeasure, tol: float = MASS_TOL) -> None:
    if np.any(mu.w < 0) or np.any(mu.v < 0):
        raise MeasureError("negative weight")
    if abs(mu.w.sum() - mu.a) > tol or abs(mu.v.sum() - (1.0 - mu.a)) > tol:
        raise MeasureError(f"block masses {mu.w.sum()!r}, {mu.v.sum()!r} differ from a={float(mu.a)!r}")


@dataclass(frozen=True)
class SupportSummary:
    curve_mask: np.ndarray
    plane_mask: np.ndarray
    bbox: tuple[float, float, float, float] | None  # xmin, xmax, ymin, ymax of atom extents

    @property
    def mask(self) -> np.ndarray:
        return np.concatenate([self.curve_mask, self.plane_mask])


def _threshold(weights: np.ndarray, eps: float) -> float:
    if len(weights) == 0:
        return np.inf
    return eps * weights.sum() / len(weights)


def prune(mu: ConstrainedMeasure, eps: float = 1e-3) -> tuple[ConstrainedMeasure, SupportSummary]:
    """Numerical support: atoms heavier than ``eps`` times their block's mean weight.

    Weights are untouched; the returned measure is ``mu`` itself.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    cm = mu.w > _threshold(mu.w, eps)
    pm = mu.v > _threshold(mu.v, eps)
    lo, hi = [], []
    if cm.any():
        half = 0.5 * mu.seg_len[cm][:, None]
        # curve atoms may be tilted; bound them by a disc of half their length
        lo.append((mu.curve_points[cm] - half).min(axis=0))
        hi.append((mu.curve_points[cm] + half).max(axis=0))
    if pm.any():
        lo.append(mu.plane_centers[pm].min(axis=0) - 0.5 * mu.h)
        hi.append(mu.plane_centers[pm].max(axis=0) + 0.5 * mu.h)
    bbox = None
    if lo:
        l, u = np.min(lo, axis=0), np.max(hi, axis=0)
        bbox = (float(l[0]), float(u[0]), float(l[1]), float(u[1]))
    return mu, SupportSummary(cm, pm, bbox)


def measure_to_csv(mu: ConstrainedMeasure, path=None) -> str:
    buf = io.StringIO()
    buf.write("block,x,y,size,weight\n")
    for p, s, w in zip(mu.curve_points, mu.seg_len, mu.w):
        buf.write(f"curve,{float(p[0])!r},{float(p[1])!r},{float(s)!r},{float(w)!r}\n")
    for p, w in zip(mu.plane_centers, mu.v):
        buf.write(f"plane,{float(p[0])!r},{float(p[1])!r},{float(mu.h)!r},{float(w)!r}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def measure_from_csv(path, curve: Curve | None = None) -> ConstrainedMeasure:
    """Inverse of :func:`measure_to_csv`; arc parameters are recovered by projection onto ``curve``."""
    cp, cs, cw, pp, pw, hs = [], [], [], [], [], set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = (float(row["x"]), float(row["y"]))
            if row["block"] == "curve":
                cp.append(p); cs.append(float(row["size"])); cw.append(float(row["weight"]))
            elif row["block"] == "plane":
                pp.append(p); pw.append(float(row["weight"])); hs.add(float(row["size"]))
            else:
                raise MeasureError(f"unknown block {row['block']!r}")
    if len(hs) > 1:
        raise MeasureError("plane cells of mixed size")
    cp = np.array(cp, float).reshape(-1, 2)
    t = np.full(len(cp), np.nan)
    dirs = None
    if curve is not None and len(cp):
        t = _project_params(curve, cp)
        half = 0.5 * np.array(cs, float)
        edges = np.clip(np.r_[t - half, t[-1:] + half[-1:]], 0.0, curve.length)
        dirs = _chord_dirs(curve, edges) if np.allclose(edges[1:-1], (t + half)[:-1]) else None
    w = np.array(cw, float)
    a = float(np.sum(w)) if len(w) else 0.0
    if len(w) == 0 and len(pw) == 0:
        raise MeasureError("empty measure")
    if len(pw) == 0:
        a = 1.0
    h = hs.pop() if hs else 0.0
    return ConstrainedMeasure(a, t, cp, np.array(cs, float), w,
                              np.array(pp, float).reshape(-1, 2), h, np.array(pw, float), curve_dirs=dirs)


def _project_params(curve: Curve, pts: np.ndarray) -> np.ndarray:
    a = curve.vertices[:-1]
    d = np.diff(curve.vertices, axis=0)
    dd = np.sum(d * d, axis=1)
    rel = pts[:, None, :] - a[None]
    s = np.clip(np.sum(rel * d[None], axis=2) / dd[None], 0.0, 1.0)
    dist = np.sum((rel - s[..., None] * d[None]) ** 2, axis=2)
    k = np.argmin(dist, axis=1)
    seg = np.sqrt(dd)
    return curve.cumulative_arclength[k] + s[np.arange(len(pts)), k] * seg[k]
