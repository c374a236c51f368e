"""Command line pipeline: solve -> obstacle cross-check -> spectral checks -> verify.

Each stage reads the artifacts of earlier stages from the output directory,
so stages can be rerun one at a time.  Exit codes: 0 all checks passed,
1 some check failed, 2 bad configuration or missing inputs, 3 a solver did
not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import spectral
from .config import ConfigError, ExperimentConfig, dump_config, load_config, with_overrides
from .energy import energy, field_moment, sample_field
from .geometry import Box, Curve, CurveError, make_curve
from .kernel import ExternalField
from .measure import measure_from_csv, measure_to_csv
from .obstacle import (ObstacleError, build_problem, psor_solve, recover_measure, signorini_report_json,
                       signorini_residuals)
from .solver_measure import EquilibriumConstants, SolverConfig, kkt_constants, solve

log = logging.getLogger("eqmeasure")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class InputError(RuntimeError):
    pass


def build_curve(cfg: ExperimentConfig) -> Curve | None:
    c = cfg.curve
    if c.kind == "none":
        return None
    return make_curve(c.kind, c.n, start=c.start, end=c.end, center=c.center, radius=c.radius,
                      angles=c.angles, path=c.path or None, max_turn_deg=c.max_turn_deg)


def build_field(cfg: ExperimentConfig) -> ExternalField:
    return ExternalField.quadratic()


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    g, s = cfg.grid, cfg.solver
    return SolverConfig(a=cfg.problem.a, box=Box.centered(g.box_half_width), h=g.h, m=g.m,
                        max_iterations=s.max_iterations, gap_rtol=s.gap_rtol, step_rule=s.step_rule,
                        support_eps=s.support_eps, curve_grading=g.curve_grading)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(diag._clean(obj), indent=1, allow_nan=False) + "\n")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise InputError(f"missing {path.name}; run the earlier stage first")
    return json.loads(path.read_text())


def _load_measure(out: Path, curve: Curve | None, a: float):
    p = out / "measure.csv"
    if not p.exists():
        raise InputError("missing measure.csv; run 'solve' first")
    mu = measure_from_csv(p, curve)
    # the CSV cannot tell an empty block from a zero-mass one; the config can
    return replace(mu, a=a)


def stage_solve(cfg: ExperimentConfig, out: Path) -> int:
    curve, fld = build_curve(cfg), build_field(cfg)
    res = solve(solver_config(cfg), curve, fld)
    mu = res.measure
    measure_to_csv(mu, out / "measure.csv")
    res.trace_csv(out / "trace.csv")
    U = sample_field(mu, Box.centered(cfg.grid.box_half_width), cfg.grid.hg, near_field="exact")
    U.to_csv(out / "potential.csv")
    _write_json(out / "solve.json", {
        "status": res.status, "converged": res.converged, "iterations": int(res.trace[-1, 0]),
        "gap": res.gap, "I": res.energy,
        "constants": {"A_gamma": res.constants.A_gamma, "A_0": res.constants.A_0},
        "warnings": res.warnings})
    log.info("solve: %s after %d iterations, I=%.8f", res.status, int(res.trace[-1, 0]), res.energy)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _constants(mu, fld, cfg) -> EquilibriumConstants:
    return kkt_constants(mu, fld, cfg.solver.support_eps)


def stage_obstacle(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.obstacle.enabled:
        _write_json(out / "obstacle.json", {"enabled": False})
        return EXIT_OK
    curve, fld = build_curve(cfg), build_field(cfg)
    mu = _load_measure(out, curve, cfg.problem.a)
    consts = _constants(mu, fld, cfg)
    box = Box.centered(cfg.grid.box_half_width)
    hg = cfg.grid.hg
    U = sample_field(mu, box, hg, near_field="exact")
    source = U if cfg.obstacle.boundary == "measure" else "farfield"
    problem = build_problem(curve, consts, fld, box, hg, source)
    ob = cfg.obstacle
    res = psor_solve(problem, omega=ob.omega, tol=ob.tol, max_sweeps=ob.max_sweeps)
    res.field.to_csv(out / "obstacle_potential.csv")
    rec = recover_measure(res.field, problem)
    energies = res.energies
    summary = {"enabled": True, "converged": res.converged, "sweeps": res.sweeps,
               "last_update": res.last_update,
               "max_abs_difference": float(np.max(np.abs(res.field.values - U.values))),
               "dirichlet_energy_monotone": bool(np.all(np.diff(energies) <= 1e-12 * max(1.0, abs(energies[0])))),
               "recovered_plane_mass": rec.plane_mass, "recovered_curve_mass": rec.curve_mass,
               "min_recovered_density": rec.min_density, "signorini": None}
    if curve is not None and consts.A_gamma is not None:
        samples = signorini_residuals(res.field, curve, problem)
        signorini_report_json(samples, out / "signorini.json")
        summary["signorini"] = {"samples": len(samples),
                                "min_jump": min(s.jump for s in samples),
                                "max_product_scaled": max(abs(s.product_scaled) for s in samples),
                                "contact_samples": sum(s.contact for s in samples)}
    _write_json(out / "obstacle.json", summary)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def spectral_checks(cfg: ExperimentConfig, seed: int) -> dict:
    from scipy.special import j0 as scipy_j0

    sp = cfg.spectral
    xs = np.linspace(0.0, 50.0, 5001)
    j0_err = float(np.max(np.abs(spectral.bessel_j0(xs) - scipy_j0(xs))))
    xo = xs[1:]
    ode = float(np.max(np.abs(spectral.bessel_j0(xo, 2) + spectral.bessel_j0(xo, 1) / xo + spectral.bessel_j0(xo))))
    R, r0 = sp.disk_radius, sp.fourier_r0
    fe = spectral.energy_via_fourier(lambda x: spectral.disk_form_factor(x, R), r0, sp.cutoff)
    exact = spectral.disk_energy(R) + math.log(r0)
    rng = np.random.default_rng(seed)
    xi = 10.0 ** rng.uniform(-4.0, 2.0, sp.n_random)
    fk = spectral.fourier_kernel(xi, r0)
    return {"j0_max_error": j0_err, "ode_residual": ode, "fourier_energy": fe.value,
            "fourier_exact": exact, "fourier_deviation": abs(fe.value - exact),
            "fourier_tail_estimate": fe.tail_estimate, "fk_min": float(np.min(fk)),
            "fk_samples": int(sp.n_random), "seed": int(seed)}


def stage_spectral(cfg: ExperimentConfig, out: Path, seed: int) -> int:
    res = spectral_checks(cfg, seed)
    _write_json(out / "spectral.json", res)
    ch = cfg.checks
    ok = (res["j0_max_error"] <= ch.bessel_tol and res["ode_residual"] <= ch.ode_tol
          and res["fourier_deviation"] <= ch.fourier_tol and res["fk_min"] > 0)
    return EXIT_OK if ok else EXIT_FAIL


def _pf(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def stage_verify(cfg: ExperimentConfig, out: Path) -> int:
    curve, fld = build_curve(cfg), build_field(cfg)
    solved = _read_json(out / "solve.json")
    mu = _load_measure(out, curve, cfg.problem.a)
    ch, g = cfg.checks, cfg.grid
    consts = _constants(mu, fld, cfg)
    checks = {"converged": _pf(solved["converged"])}

    kkt = diag.kkt_report(mu, fld, consts, cfg.solver.support_eps, ch.kkt_c * g.h)
    checks["kkt"] = _pf(kkt.passed)
    if consts.A_gamma is not None and consts.A_0 is not None:
        checks["constants_order"] = _pf(consts.A_gamma > consts.A_0)
    sep = diag.separation_report(mu, curve, cfg.solver.support_eps, ch.separation_factor)
    if sep.applicable:
        checks["separation"] = _pf(sep.passed)

    E = energy(mu)
    E_trunc = energy(mu, g.r0)
    energies = {"I": E + field_moment(mu, fld), "E": E, "field_moment": field_moment(mu, fld),
                "truncated_energy": E_trunc, "h1_ratio": None}
    checks["truncated_energy_nonneg"] = _pf(E_trunc >= 0)

    identity = {}
    ibox = Box.centered(g.identity_box_half_width)
    try:
        v = sample_field(mu, ibox, g.hg, near_field="exact")
        rep = diag.energy_identity_report(v, mu, fld, g.r0, cfg.solver.support_eps)
        identity = {"residual_1": rep.residual_1, "residual_2": rep.residual_2, "hg": rep.hg,
                    "boundary_term": rep.boundary_term / (2 * math.pi)}
        checks["energy_identity"] = _pf(rep.residual_1 <= ch.identity_tol and rep.residual_2 <= ch.identity_tol)
        vt = sample_field(mu, ibox, g.hg, r0=g.r0, near_field="exact")
        energies["h1_ratio"] = diag.h1_ratio(vt, E_trunc)
    except diag.PreconditionError as exc:
        identity = {"not_applicable": str(exc)}

    cross = {}
    obs_path = out / "obstacle.json"
    if cfg.obstacle.enabled:
        obs = _read_json(obs_path)
        cross = obs
        checks["psor_converged"] = _pf(obs["converged"])
        checks["cross_solver"] = _pf(obs["max_abs_difference"] <= ch.cross_solver_c * g.hg)
        if obs.get("signorini"):
            s = obs["signorini"]
            checks["signorini"] = _pf(s["min_jump"] >= -ch.signorini_tol and s["max_product_scaled"] <= ch.signorini_tol)

    spec_path = out / "spectral.json"
    if spec_path.exists():
        sp = json.loads(spec_path.read_text())
        identity["fourier"] = sp["fourier_deviation"]
        checks["spectral"] = _pf(sp["j0_max_error"] <= ch.bessel_tol and sp["ode_residual"] <= ch.ode_tol
                                 and sp["fourier_deviation"] <= ch.fourier_tol and sp["fk_min"] > 0)

    report = diag.RunReport(
        name=cfg.run.name, a=cfg.problem.a, h=g.h,
        constants={"A_gamma": consts.A_gamma, "A_0": consts.A_0},
        kkt=diag.kkt_dict(kkt), separation=asdict(sep), gap=solved["gap"], iterations=solved["iterations"],
        energy=energies, identity_residuals=identity, cross_solver=cross, checks=checks,
        converged=solved["converged"], status=solved["status"], warnings=solved["warnings"])
    report.to_json(out / "report.json")
    print(report.summary_table())
    if not solved["converged"]:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if report.all_passed else EXIT_FAIL


def run_all(cfg: ExperimentConfig, out: Path, seed: int) -> int:
    code = stage_solve(cfg, out)
    if code != EXIT_OK:
        stage_verify(cfg, out)
        return code
    code = stage_obstacle(cfg, out)
    if code == EXIT_NOT_CONVERGED:
        stage_verify(cfg, out)
        return code
    stage_spectral(cfg, out, seed)
    return stage_verify(cfg, out)


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise InputError("--threads must be >= 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqmeasure", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["solve", "obstacle", "spectral-test", "verify", "all"])
    p.add_argument("--config", required=True, help="config file, or a bundled name: circular_law, semicircle, mixed")
    p.add_argument("--out", default="out", help="artifact directory")
    p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must fit in an unsigned 64-bit integer", key="--seed")
            cfg = with_overrides(cfg, run={"seed": args.seed})
        _set_threads(args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.cfg").write_text(dump_config(cfg))
        seed = cfg.run.seed
        if args.command == "solve":
            return stage_solve(cfg, out)
        if args.command == "obstacle":
            return stage_obstacle(cfg, out)
        if args.command == "spectral-test":
            return stage_spectral(cfg, out, seed)
        if args.command == "verify":
            return stage_verify(cfg, out)
        return run_all(cfg, out, seed)
    except (ConfigError, InputError, CurveError, ObstacleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
