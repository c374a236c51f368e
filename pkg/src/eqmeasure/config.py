"""Experiment configuration: a sectioned ``key = value`` text format.

Grammar (one item per line):

    # comment          ignored, as are blank lines
    [section]          starts a section; each section may appear once
    key = value        value is the rest of the line, stripped

Values are floats (written with ``repr`` so that dumping and re-parsing is
bit exact), integers, booleans (``true``/``false``), comma-separated float
pairs, or plain words.  Unknown sections and keys are errors that name the
line.  Omitted keys take the defaults below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

BUNDLED = ("circular_law", "semicircle", "mixed")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class RunSection:
    name: str = "run"
    seed: int = 0


@dataclass(frozen=True)
class ProblemSection:
    a: float = 0.0
    field: str = "quadratic"


@dataclass(frozen=True)
class CurveSection:
    kind: str = "none"            # none | segment | circle-arc | polyline-file
    n: int = 2                    # vertex count for generated curves
    start: tuple = (-1.0, 0.0)
    end: tuple = (1.0, 0.0)
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    angles: tuple = (0.0, 3.141592653589793)
    path: str = ""
    max_turn_deg: float = 30.0


@dataclass(frozen=True)
class GridSection:
    box_half_width: float = 2.0
    h: float = 0.05
    hg: float = 0.05
    m: int = 200
    curve_grading: str = "uniform"   # uniform | cosine
    r0: float = 1.5
    identity_box_half_width: float = 3.0


@dataclass(frozen=True)
class SolverSection:
    step_rule: str = "pairwise"
    max_iterations: int = 50000
    gap_rtol: float = 1e-06
    support_eps: float = 0.001


@dataclass(frozen=True)
class ObstacleSection:
    enabled: bool = True
    omega: float = 1.9
    tol: float = 1e-10
    max_sweeps: int = 200000
    boundary: str = "measure"     # measure | farfield


@dataclass(frozen=True)
class SpectralSection:
    fourier_r0: float = 2.0
    disk_radius: float = 1.0
    cutoff: float = 50.0
    n_random: int = 10000


@dataclass(frozen=True)
class ChecksSection:
    kkt_c: float = 0.4            # KKT tolerance is kkt_c * h
    separation_factor: float = 2.0
    cross_solver_c: float = 1.0   # max |v - U| <= cross_solver_c * hg
    signorini_tol: float = 1e-06
    identity_tol: float = 0.05
    bessel_tol: float = 1e-10
    ode_tol: float = 1e-08
    fourier_tol: float = 0.001


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    curve: CurveSection = field(default_factory=CurveSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    obstacle: ObstacleSection = field(default_factory=ObstacleSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    checks: ChecksSection = field(default_factory=ChecksSection)


_SECTION_TYPES = {"run": RunSection, "problem": ProblemSection, "curve": CurveSection, "grid": GridSection,
                  "solver": SolverSection, "obstacle": ObstacleSection, "spectral": SpectralSection,
                  "checks": ChecksSection}
_CHOICES = {("problem", "field"): ("quadratic",),
            ("curve", "kind"): ("none", "segment", "circle-arc", "polyline-file"),
            ("grid", "curve_grading"): ("uniform", "cosine"),
            ("solver", "step_rule"): ("pairwise", "vanilla"),
            ("obstacle", "boundary"): ("measure", "farfield")}
_POSITIVE = {("grid", "box_half_width"), ("grid", "h"), ("grid", "hg"), ("grid", "m"), ("grid", "r0"),
             ("grid", "identity_box_half_width"), ("solver", "max_iterations"), ("solver", "gap_rtol"),
             ("solver", "support_eps"), ("obstacle", "tol"), ("obstacle", "max_sweeps"),
             ("spectral", "fourier_r0"), ("spectral", "disk_radius"), ("spectral", "cutoff"),
             ("spectral", "n_random"), ("curve", "n"), ("curve", "radius"), ("curve", "max_turn_deg")}


def _convert(section: str, key: str, default, text: str, line: int):
    try:
        if isinstance(default, bool):
            if text not in ("true", "false"):
                raise ValueError("expected true or false")
            value = text == "true"
        elif isinstance(default, int):
            value = int(text)
        elif isinstance(default, float):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError("not finite")
        elif isinstance(default, tuple):
            value = tuple(float(p) for p in text.split(","))
            if len(value) != len(default):
                raise ValueError(f"expected {len(default)} comma-separated numbers")
        else:
            value = text
    except ValueError as exc:
        raise ConfigError(str(exc), line, f"{section}.{key}") from None
    choices = _CHOICES.get((section, key))
    if choices is not None and value not in choices:
        raise ConfigError(f"must be one of {', '.join(choices)}", line, f"{section}.{key}")
    if (section, key) in _POSITIVE and not value > 0:
        raise ConfigError("must be positive", line, f"{section}.{key}")
    if isinstance(default, (int, float)) and not isinstance(default, bool) and value < 0 and section == "checks":
        raise ConfigError("thresholds must be >= 0", line, f"{section}.{key}")
    return value


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, dict] = {}
    lines: dict[tuple, int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError("malformed section header", lineno)
            section = s[1:-1].strip()
            if section not in _SECTION_TYPES:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if section in values:
                raise ConfigError(f"section [{section}] repeated", lineno)
            values[section] = {}
            continue
        if "=" not in s:
            raise ConfigError("expected 'key = value'", lineno)
        if section is None:
            raise ConfigError("key outside any section", lineno)
        key, val = (p.strip() for p in s.split("=", 1))
        defaults = _SECTION_TYPES[section]()
        if not hasattr(defaults, key):
            raise ConfigError("unknown key", lineno, f"{section}.{key}")
        if key in values[section]:
            raise ConfigError("key repeated", lineno, f"{section}.{key}")
        values[section][key] = _convert(section, key, getattr(defaults, key), val, lineno)
        lines[(section, key)] = lineno
    parts = {name: _SECTION_TYPES[name](**values.get(name, {})) for name in _SECTION_TYPES}
    cfg = ExperimentConfig(**parts)
    a = cfg.problem.a
    if not 0.0 <= a <= 1.0:
        raise ConfigError(f"a={a!r} outside [0, 1]", lines.get(("problem", "a")), "problem.a")
    if a > 0 and cfg.curve.kind == "none":
        raise ConfigError("a > 0 needs a curve", lines.get(("curve", "kind")), "curve.kind")
    if cfg.curve.kind == "polyline-file" and not cfg.curve.path:
        raise ConfigError("polyline-file needs a path", lines.get(("curve", "path")), "curve.path")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled_config(str(path))
    return parse_config(p.read_text())


def bundled_config(name: str) -> ExperimentConfig:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled config {name!r}")
    return parse_config(bundled_text(name))


def bundled_text(name: str) -> str:
    return resources.files("eqmeasure").joinpath("configs", f"{name}.cfg").read_text()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(ExperimentConfig):
        sec = getattr(cfg, f.name)
        out.append(f"[{f.name}]")
        for sf in fields(sec):
            out.append(f"{sf.name} = {_format(getattr(sec, sf.name))}")
        out.append("")
    return "\n".join(out)


def with_overrides(cfg: ExperimentConfig, **sections) -> ExperimentConfig:
    """Copy with some fields replaced, e.g. ``with_overrides(cfg, grid={"h": 0.1})``."""
    parts = {name: replace(getattr(cfg, name), **kw) for name, kw in sections.items()}
    return replace(cfg, **parts)
