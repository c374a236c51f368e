"""Logarithmic kernel, its continuous truncation, atom self-energies and the external field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Mean of log(1/|x-y|) over x, y uniform in the unit square.  Frozen from a
# 2D adaptive quadrature of the difference density (tests/test_kernel.py
# recomputes it); equals 25/12 - pi/3 - log(2)/3.
CELL_SELF_ENERGY_C0 = 0.8050867219500872

# Mean of log(1/|s-t|) over s, t uniform in [0, 1].
SEGMENT_SELF_ENERGY_C = 1.5


class SingularityError(ValueError):
    """Kernel evaluated at coincident points."""


class AdmissibilityError(ValueError):
    """External field fails the growth proxy for admissibility."""


@dataclass(frozen=True)
class KernelSpec:
    truncation_radius: float | None = None
    c0: float = CELL_SELF_ENERGY_C0

    def __post_init__(self):
        if self.truncation_radius is not None and not self.truncation_radius > 0:
            raise ValueError("truncation radius must be positive")


def _dist(x, y) -> np.ndarray:
    d = np.asarray(x, float) - np.asarray(y, float)
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r == 0):
        raise SingularityError("kernel is singular at x == y; use the self-energy terms")
    return r


def log_kernel(x, y):
    """log(1/|x - y|)."""
    r = _dist(x, y)
    out = -np.log(r)
    return float(out) if np.ndim(out) == 0 else out


def truncated_kernel(x, y, r0: float):
    """log(r0/|x - y|) inside distance r0, zero beyond (continuous at r0)."""
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    r = _dist(x, y)
    out = np.maximum(np.log(r0 / r), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def self_energy_segment(length):
    """Average of log(1/|s-t|) over a straight segment of the given length against itself."""
    length = np.asarray(length, float)
    if np.any(length <= 0):
        raise ValueError("segment length must be positive")
    out = -np.log(length) + SEGMENT_SELF_ENERGY_C
    return float(out) if out.ndim == 0 else out


def self_energy_cell(h, c0: float = CELL_SELF_ENERGY_C0):
    """Average of log(1/|x-y|) over an h-square against itself."""
    h = np.asarray(h, float)
    if np.any(h <= 0):
        raise ValueError("cell side must be positive")
    out = -np.log(h) + c0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExternalField:
    """Radial external field Q(x) = q(|x|).

    Construct through :meth:`quadratic` or :meth:`radial`; the latter checks
    that q(r) - 2 log r increases along r in {10, 100, 1000} (the growth
    condition behind |z| exp(-Q(z)) -> 0).  Upper semicontinuity and
    positive capacity of {w > 0} are not machine-checked.
    """

    kind: str
    profile: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    @classmethod
    def quadratic(cls) -> "ExternalField":
        return cls("quadratic", lambda r: r * r)

    @classmethod
    def radial(cls, profile: Callable[[np.ndarray], np.ndarray], name: str = "user-radial") -> "ExternalField":
        fld = cls(name, profile)
        fld.check_admissible()
        return fld

    def check_admissible(self) -> None:
        radii = np.array([10.0, 100.0, 1000.0])
        for theta in (0.0, math.pi / 4, 2.0):
            pts = radii[:, None] * np.array([math.cos(theta), math.sin(theta)])
            g = self(pts) - 2.0 * np.log(radii)
            if not (np.all(np.isfinite(g)) and np.all(np.diff(g) > 0)):
                raise AdmissibilityError(
                    f"Q - 2 log|x| does not grow along ray theta={theta}: {g.tolist()}")

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.kind == "quadratic":
            out = np.sum(x * x, axis=-1)
        else:
            out = np.asarray(self.profile(np.hypot(x[..., 0], x[..., 1])), float)
        return float(out) if np.ndim(out) == 0 else out


def external_field(fld: ExternalField, x):
    return fld(x)
