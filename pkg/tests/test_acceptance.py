"""Acceptance criteria; each test records one PASS/FAIL line shown in the terminal summary."""

import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, cross_solve
from eqmeasure.cli import main
from eqmeasure.diagnostics import energy_identity_report, kkt_report, separation_report
from eqmeasure.energy import sample_field
from eqmeasure.geometry import Box
from eqmeasure.measure import mass_on_curve, prune
from eqmeasure.obstacle import signorini_residuals
from eqmeasure.spectral import bessel_j0, disk_energy, disk_form_factor, energy_via_fourier, fourier_kernel

KKT_C = 0.4


def record(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, f"{label}: {detail}"


def order(e_coarse, e_fine):
    return math.log2(e_coarse / e_fine)


def test_1_circular_law(circular_run):
    res, seconds = circular_run
    mu = res.measure
    _, s = prune(mu)
    r = np.hypot(*mu.plane_centers.T)
    inner = s.plane_mask & (r < 0.9)
    dens = mu.v[inner] / mu.h**2
    dens_err = float(np.max(np.abs(dens * math.pi - 1.0)))
    A0 = res.constants.A_0
    I = res.energy
    bbox_err = float(np.max(np.abs(np.array(s.bbox) - np.array([-1.0, 1.0, -1.0, 1.0]))))
    ok = dens_err <= 0.05 and abs(A0 - 1) <= 2e-2 and abs(I - 0.75) <= 3e-2 and bbox_err <= mu.h and seconds < 120
    record("1 circular law", ok,
           f"density rel err {dens_err:.2e}, A_0={A0:.5f}, I={I:.5f}, bbox off by {bbox_err:.3f} "
           f"(h={mu.h}), {seconds:.1f}s")


def test_2_semicircle(semicircle_run):
    mu = semicircle_run.measure
    x, ell = mu.curve_points[:, 0], mu.seg_len
    exact = np.sqrt(np.clip(2.0 - x * x, 0.0, None)) / math.pi
    l1 = float(np.sum(np.abs(mu.w / ell - exact) * ell) / np.sum(exact * ell))
    _, s = prune(mu)
    lo = float(np.min(x[s.curve_mask] - 0.5 * ell[s.curve_mask]))
    hi = float(np.max(x[s.curve_mask] + 0.5 * ell[s.curve_mask]))
    end_err = max(abs(lo + math.sqrt(2)), abs(hi - math.sqrt(2)))
    ok = l1 <= 0.05 and end_err <= float(ell.max())
    record("2 semicircle", ok, f"L1 rel err {l1:.2e}, support [{lo:.4f}, {hi:.4f}], endpoint err {end_err:.4f} "
                               f"(atom {ell.max():.3f})")


def test_3_mixed(mixed_runs):
    masses, margins, seps = [], [], []
    for h, (curve, res) in sorted(mixed_runs.items(), reverse=True):
        masses.append(abs(mass_on_curve(res.measure) - 0.5))
        margins.append(res.constants.A_gamma - res.constants.A_0)
        seps.append(separation_report(res.measure, curve, factor=2.0))
    # stable: positive, and each refinement moves the margin by under 5% of its value
    rel = np.abs(np.diff(margins)) / np.array(margins[1:])
    stable = all(m > 0 for m in margins) and bool(np.all(rel <= 0.05))
    sep_ok = all(s.passed for s in seps[1:])
    ok = max(masses) <= 1e-12 and stable and sep_ok
    record("3 mixed", ok, f"|mu(G)-0.5| max {max(masses):.1e}, margins "
                          + ", ".join(f"{m:.4f}" for m in margins)
                          + " (rel steps " + ", ".join(f"{r:.1%}" for r in rel) + ")"
                          + ", separation " + ", ".join(f"{s.distance:.3f}>={s.threshold:.2f}" for s in seps[1:]))


def test_4_kkt(circular_run, semicircle_run, mixed_runs, quadratic):
    runs = [("circular", circular_run[0]), ("semicircle", semicircle_run), ("mixed", mixed_runs[0.05][1])]
    parts, ok = [], True
    for name, res in runs:
        h = res.measure.h if res.measure.n_plane else float(res.measure.seg_len.max())
        rep = kkt_report(res.measure, quadratic, res.constants, tol=KKT_C * h, grad=res.gradient)
        blocks = [b for b in (rep.curve, rep.plane) if b is not None]
        eq = max(b.equality_residual for b in blocks)
        margin = min(b.inequality_margin for b in blocks)
        gap_ok = res.converged and res.gap <= 1e-6 * abs(res.energy)
        mono = bool(np.all(np.diff(res.trace[:, 1]) <= 0.0))
        ok &= rep.passed and gap_ok and mono
        parts.append(f"{name} eq {eq:.1e} margin {margin:.1e} gap/|I| {res.gap / abs(res.energy):.1e} "
                     f"monotone {mono}")
    record("4 KKT", ok, "; ".join(parts))


@pytest.fixture(scope="module")
def semicircle_cross(semicircle_run, semicircle_curve, quadratic):
    return cross_solve(semicircle_curve, semicircle_run, quadratic, Box.centered(3.0), 0.05)


def test_5_cross_solver(circular_cross, mixed_cross, semicircle_cross, semicircle_curve):
    hs = sorted(circular_cross, reverse=True)
    err_a0 = [float(np.max(np.abs(circular_cross[h][1].values - circular_cross[h][3].field.values))) for h in hs]
    ord_a0 = [order(a, b) for a, b in zip(err_a0, err_a0[1:])]

    err_all, err_common = [], []
    for h in hs:
        _, _, U, _, psor = mixed_cross[h]
        d = np.abs(U.values - psor.field.values)
        k = int(round(hs[0] / h))
        err_all.append(float(d.max()))
        err_common.append(float(d[::k, ::k].max()))
    ord_common = [order(a, b) for a, b in zip(err_common, err_common[1:])]
    ord_all = [order(a, b) for a, b in zip(err_all, err_all[1:])]

    sig = []
    for curve, problem, psor in [(mixed_cross[0.05][0], mixed_cross[0.05][3], mixed_cross[0.05][4]),
                                 (semicircle_curve, semicircle_cross[1], semicircle_cross[2])]:
        sig += signorini_residuals(psor.field, curve, problem)
    min_jump = min(s.jump for s in sig)
    max_prod = max(abs(s.product_scaled) for s in sig)

    ok = (min(ord_a0) >= 0.8 and min(ord_common) >= 0.8 and err_all[-1] < err_all[0]
          and min_jump >= -1e-6 and max_prod <= 1e-6)
    ACCEPTANCE_LINES.append("INFO  5 mixed all-node max |U - v| " + ", ".join(f"{e:.2e}" for e in err_all)
                            + ", orders " + ", ".join(f"{o:.2f}" for o in ord_all)
                            + " (limited by the crack-tip singularity at the segment ends)")
    record("5 cross-solver", ok,
           "a=0 errors " + ", ".join(f"{e:.2e}" for e in err_a0) + " orders " + ", ".join(f"{o:.2f}" for o in ord_a0)
           + "; mixed coarse-node errors " + ", ".join(f"{e:.2e}" for e in err_common)
           + " orders " + ", ".join(f"{o:.2f}" for o in ord_common)
           + f"; Signorini min jump {min_jump:.1e}, max product {max_prod:.1e}")


def series_j0(x: float) -> float:
    import mpmath
    with mpmath.workdps(40):
        return float(mpmath.nsum(lambda k: (-1) ** k * (mpmath.mpf(x) / 2) ** (2 * k) / mpmath.factorial(k) ** 2,
                                 [0, mpmath.inf]))


def test_6_spectral():
    xs = np.linspace(0.0, 50.0, 501)
    j0_err = float(np.max(np.abs(bessel_j0(xs) - np.array([series_j0(x) for x in xs]))))
    xo = np.linspace(0.1, 50.0, 2000)
    ode = float(np.max(np.abs(bessel_j0(xo, 2) + bessel_j0(xo, 1) / xo + bessel_j0(xo))))
    fe = energy_via_fourier(lambda x: disk_form_factor(x, 1.0), 2.0, 50.0)
    target = 0.25 + math.log(2.0)
    dev = abs(fe.value - target)
    rng = np.random.default_rng(12345)
    fk_min = float(np.min(fourier_kernel(10 ** rng.uniform(-4, 2, 10_000), 2.0)))
    ok = j0_err <= 1e-10 and ode <= 1e-8 and dev <= 1e-3 and fk_min > 0 and disk_energy(1.0) == 0.25
    record("6 spectral", ok, f"J0 err {j0_err:.1e}, ODE residual {ode:.1e}, disc energy {fe.value:.6f} "
                             f"vs {target:.6f}, min FK {fk_min:.2e}")


def test_7_energy_identities(circular_run, quadratic):
    res, _ = circular_run
    box = Box.centered(3.0)
    reps = [energy_identity_report(sample_field(res.measure, box, hg, near_field="exact"), res.measure, quadratic, 1.5)
            for hg in (0.05, 0.025)]
    r1 = [r.residual_1 for r in reps]
    r2 = [r.residual_2 for r in reps]
    ok = max(r1[0], r2[0]) <= 5e-2 and r1[0] >= 1.5 * r1[1] and r2[0] >= 1.5 * r2[1]
    record("7 energy identities", ok, f"residual_1 {r1[0]:.2e} -> {r1[1]:.2e} (x{r1[0] / r1[1]:.1f}), "
                                      f"residual_2 {r2[0]:.2e} -> {r2[1]:.2e} (x{r2[0] / r2[1]:.1f})")


def test_8_determinism(tmp_path):
    codes = [main(["all", "--config", "mixed", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = codes == [0, 0] and all(same) and len(names) >= 10
    record("8 determinism", ok, f"exit codes {codes}, {sum(same)}/{len(names)} artifacts byte-identical")
