"""Planar curves as unit-speed polylines, plus the square computational box."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CurveError(ValueError):
    """Invalid curve construction or query."""


class SelfIntersectionError(CurveError):
    def __init__(self, i: int, j: int):
        super().__init__(f"polyline segments {i} and {j} intersect")
        self.pair = (i, j)


@dataclass(frozen=True)
class Curve:
    vertices: np.ndarray          # (n, 2)
    cumulative_arclength: np.ndarray  # (n,), starts at 0
    kind: str = "polyline"

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1

    def segment_midpoints(self, per_segment: int = 1) -> np.ndarray:
        """Arc parameters of ``per_segment`` evenly spaced interior points in each segment."""
        t = self.cumulative_arclength
        frac = (np.arange(per_segment) + 0.5) / per_segment
        return (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()


def _segments_cross(p, q, r, s) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-14 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-14 <= c[0] <= max(a[0], b[0]) + 1e-14
                and min(a[1], b[1]) - 1e-14 <= c[1] <= max(a[1], b[1]) + 1e-14)

    o1, o2, o3, o4 = orient(p, q, r), orient(p, q, s), orient(r, s, p), orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p, q, r)) or (o2 == 0 and on_seg(p, q, s))
            or (o3 == 0 and on_seg(r, s, p)) or (o4 == 0 and on_seg(r, s, q)))


def curve_from_vertices(vertices, kind: str = "polyline", max_turn_deg: float = 30.0) -> Curve:
    """Validate a vertex list and build its arc-length table.

    Raises :class:`SelfIntersectionError` naming the first crossing pair of
    non-adjacent segments, and :class:`CurveError` for repeated vertices or
    turning angles above ``max_turn_deg``.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
        raise CurveError("need at least two planar vertices")
    seg = np.diff(v, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lengths <= 0):
        raise CurveError("consecutive vertices must be distinct")
    n = len(seg)
    for i in range(n):
        for j in range(i + 2, n):
            if _segments_cross(v[i], v[i + 1], v[j], v[j + 1]):
                raise SelfIntersectionError(i, j)
    if n > 1:
        u = seg / lengths[:, None]
        cos_turn = np.clip(np.sum(u[:-1] * u[1:], axis=1), -1.0, 1.0)
        turn = np.degrees(np.arccos(cos_turn))
        if np.any(turn > max_turn_deg + 1e-9):
            k = int(np.argmax(turn))
            raise CurveError(f"turning angle {turn[k]:.2f} deg at vertex {k + 1} exceeds {max_turn_deg} deg")
    t = np.concatenate([[0.0], np.cumsum(lengths)])
    v.setflags(write=False)
    t.setflags(write=False)
    return Curve(v, t, kind)


def make_curve(kind: str, n: int = 2, *, start=(-1.0, 0.0), end=(1.0, 0.0),
               center=(0.0, 0.0), radius: float = 1.0, angles=(0.0, math.pi),
               path: str | Path | None = None, max_turn_deg: float = 30.0) -> Curve:
    """Build a curve of the given kind sampled with ``n`` vertices.

    Kinds: ``segment`` (start -> end), ``circle-arc`` (vertices exactly on the
    circle) and ``polyline-file`` (see :func:`read_polyline`; ``n`` ignored).
    """
    if kind == "polyline-file":
        if path is None:
            raise CurveError("polyline-file needs a path")
        return curve_from_vertices(read_polyline(path), "polyline-file", max_turn_deg)
    if n < 2:
        raise CurveError("resolution n must be >= 2")
    if kind == "segment":
        s = np.linspace(0.0, 1.0, n)[:, None]
        p0, p1 = np.asarray(start, float), np.asarray(end, float)
        verts = p0 + s * (p1 - p0)
        verts[-1] = p1
    elif kind == "circle-arc":
        if radius <= 0:
            raise CurveError("radius must be positive")
        th = np.linspace(angles[0], angles[1], n)
        verts = np.c_[center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)]
    else:
        raise CurveError(f"unknown curve kind {kind!r}")
    return curve_from_vertices(verts, kind, max_turn_deg)


def read_polyline(path) -> np.ndarray:
    """Read ``x y`` pairs, one per line."""
    pts = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CurveError(f"{path}:{lineno}: expected 'x y', got {line!r}")
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise CurveError(f"{path}:{lineno}: {exc}") from None
    if len(pts) < 2:
        raise CurveError(f"{path}: need at least two points")
    return np.array(pts)


def write_polyline(path, vertices) -> None:
    Path(path).write_text("".join(f"{float(x)!r} {float(y)!r}\n" for x, y in np.asarray(vertices, float)))


def _locate(curve: Curve, t: float) -> int:
    if not 0.0 <= t <= curve.length:
        raise CurveError(f"arc parameter {t} outside [0, {curve.length}]")
    i = int(np.searchsorted(curve.cumulative_arclength, t, side="right")) - 1
    return min(i, curve.n_segments - 1)


def point_at(curve: Curve, t: float) -> np.ndarray:
    i = _locate(curve, t)
    t0, t1 = curve.cumulative_arclength[i], curve.cumulative_arclength[i + 1]
    if t == t0:
        return curve.vertices[i].copy()
    if t == t1:
        return curve.vertices[i + 1].copy()
    s = (t - t0) / (t1 - t0)
    return curve.vertices[i] + s * (curve.vertices[i + 1] - curve.vertices[i])


def points_at(curve: Curve, ts) -> np.ndarray:
    return np.array([point_at(curve, float(t)) for t in np.atleast_1d(ts)])


def normals_at(curve: Curve, t: float, vertex_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals ``(n_plus, n_minus)``; ``n_plus`` is the left normal of the direction of travel."""
    i = _locate(curve, t)
    tv = curve.cumulative_arclength
    scale = vertex_tol * max(curve.length, 1.0)
    if abs(t - tv[i]) <= scale or abs(t - tv[i + 1]) <= scale:
        raise CurveError(f"normal undefined at vertex (t={t})")
    d = curve.vertices[i + 1] - curve.vertices[i]
    d = d / np.hypot(*d)
    n_plus = np.array([-d[1], d[0]])
    return n_plus, -n_plus


def distance_to_curve(curve: Curve, x) -> np.ndarray | float:
    """Euclidean distance from point(s) ``x`` to the polyline."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    a = curve.vertices[:-1]
    d = np.diff(curve.vertices, axis=0)
    dd = np.sum(d * d, axis=1)
    out = np.empty(len(pts))
    for k in range(0, len(pts), 2048):
        p = pts[k:k + 2048]
        rel = p[:, None, :] - a[None, :, :]
        s = np.clip(np.sum(rel * d[None], axis=2) / dd[None], 0.0, 1.0)
        diff = rel - s[..., None] * d[None]
        out[k:k + 2048] = np.sqrt(np.min(np.sum(diff * diff, axis=2), axis=1))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class Box:
    """Axis-aligned square ``[x0, x0+side] x [y0, y0+side]``."""

    x0: float
    y0: float
    side: float

    @classmethod
    def centered(cls, half_width: float) -> "Box":
        return cls(-half_width, -half_width, 2.0 * half_width)

    def _count(self, h: float) -> int:
        n = self.side / h
        k = int(round(n))
        if h <= 0 or k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
            raise ValueError(f"spacing {h} does not divide box side {self.side}")
        return k

    def cell_centers(self, h: float) -> np.ndarray:
        """Centers of the ``h``-cells, row-major in (x, y)."""
        k = self._count(h)
        c = (np.arange(k) + 0.5) * h
        X, Y = np.meshgrid(self.x0 + c, self.y0 + c, indexing="ij")
        return np.c_[X.ravel(), Y.ravel()]

    def node_axes(self, hg: float) -> tuple[np.ndarray, np.ndarray]:
        k = self._count(hg)
        s = np.arange(k + 1) * hg
        return self.x0 + s, self.y0 + s

    def contains(self, pts, pad: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(pts)
        return ((p[:, 0] >= self.x0 - pad) & (p[:, 0] <= self.x0 + self.side + pad)
                & (p[:, 1] >= self.y0 - pad) & (p[:, 1] <= self.y0 + self.side + pad))
