import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eqmeasure.energy import (KernelOperator, PotentialField, energy, field_moment, frechet_gradient, potential,
                              potential_exact_near, sample_field, total_energy)
from eqmeasure.geometry import Box
from eqmeasure.kernel import CELL_SELF_ENERGY_C0, ExternalField
from eqmeasure.measure import ConstrainedMeasure


def plane_measure(centers, h, v):
    centers = np.asarray(centers, float).reshape(-1, 2)
    return ConstrainedMeasure(0.0, np.empty(0), np.empty((0, 2)), np.empty(0), np.empty(0), centers, h,
                              np.asarray(v, float))


def disk_measure(h=0.02, R=1.0):
    c = Box.centered(R).cell_centers(h)
    c = c[np.hypot(*c.T) < R]
    return plane_measure(c, h, np.full(len(c), 1.0 / len(c)))


@pytest.fixture(scope="module")
def disk():
    return disk_measure()


def test_single_cell_potential():
    mu = plane_measure([[0, 0]], 1.0, [1.0])
    assert potential(mu, (math.e, 0)) == pytest.approx(-1.0, abs=1e-15)
    assert potential(mu, (0, 0)) == CELL_SELF_ENERGY_C0
    assert energy(mu) == CELL_SELF_ENERGY_C0


def test_uniform_disk_potential_and_energy(disk):
    # unit disk with uniform mass: U = (1 - |x|^2)/2 inside, log(1/|x|) outside,
    # E = 1/4 and I = E + mean |x|^2 = 3/4
    assert potential(disk, (0.0, 0.0)) == pytest.approx(0.5, abs=2e-3)
    assert potential(disk, (2.0, 0.0)) == pytest.approx(math.log(0.5), abs=1e-3)
    assert energy(disk) == pytest.approx(0.25, abs=3e-3)
    assert total_energy(disk, ExternalField.quadratic()) == pytest.approx(0.75, abs=3e-3)


def test_two_distant_atoms():
    h = 0.1
    mu = plane_measure([[0, 0], [3, 4]], h, [0.25, 0.75])
    s = math.log(1 / h) + CELL_SELF_ENERGY_C0
    expected = (0.25**2 + 0.75**2) * s + 2 * 0.25 * 0.75 * math.log(1 / 5)
    assert energy(mu) == pytest.approx(expected, abs=1e-14)


def test_energy_is_weighted_potential(disk):
    assert energy(disk) == pytest.approx(float(disk.weights @ potential(disk, disk.points)), rel=1e-13)


def test_gradient_matches_finite_differences(rng):
    h = 0.25
    c = Box.centered(1.0).cell_centers(h)
    mu = plane_measure(c, h, rng.dirichlet(np.ones(len(c))))
    q = ExternalField.quadratic()
    g = frechet_gradient(mu, q)
    for _ in range(20):
        i, j = rng.choice(len(c), 2, replace=False)
        d = np.zeros(len(c))
        d[i], d[j] = 1.0, -1.0
        eps = 1e-4
        f = lambda s: total_energy(mu.with_weights(mu.weights + s * d), q)
        fd = (f(eps) - f(-eps)) / (2 * eps)
        assert fd == pytest.approx(g[i] - g[j], rel=1e-6, abs=1e-8)


def test_kernel_operator_dense_and_lazy_agree(rng):
    h = 0.25
    c = Box.centered(1.0).cell_centers(h)
    mu = plane_measure(c, h, rng.dirichlet(np.ones(len(c))))
    dense = KernelOperator.for_measure(mu)
    lazy = KernelOperator.for_measure(mu, dense_threshold=4)
    assert dense.dense and not lazy.dense
    for j in (0, 7, 15):
        np.testing.assert_array_equal(dense.column(j), lazy.column(j))
    np.testing.assert_allclose(dense.matvec(mu.weights), potential(mu, mu.points), rtol=1e-14)
    assert dense.entry(3, 3) == pytest.approx(math.log(1 / h) + CELL_SELF_ENERGY_C0)


def test_sample_field_matches_potential(disk):
    box = Box.centered(2.0)
    fld = sample_field(disk, box, 0.5)
    nodes = fld.nodes()
    np.testing.assert_allclose(fld.values.ravel(), potential(disk, nodes), rtol=1e-13)
    assert fld.values.shape == (9, 9)
    with pytest.raises(ValueError):
        sample_field(disk, box, 0.5, near_field="spline")


def test_exact_near_field_of_one_cell():
    # log potential of a uniform unit square at its centre is the mean of log(1/r)
    mu = plane_measure([[0, 0]], 1.0, [1.0])
    from scipy import integrate
    val, _ = integrate.dblquad(lambda y, x: -0.5 * math.log(x * x + y * y), 0, 0.5, 0, 0.5, epsabs=1e-12)
    assert potential_exact_near(mu, (0.0, 0.0)) == pytest.approx(4 * val, abs=1e-10)
    assert potential_exact_near(mu, (10.0, 0.0)) == pytest.approx(math.log(0.1), abs=1e-12)


def test_far_field_decay(disk):
    for R in (5.0, 20.0, 100.0):
        assert potential(disk, (R, 0.0)) == pytest.approx(-math.log(R), abs=1e-3 / R**2)


def test_field_moment(disk):
    assert field_moment(disk, ExternalField.quadratic()) == pytest.approx(0.5, abs=1e-3)
    empty = plane_measure(np.empty((0, 2)), 0.1, [])
    assert field_moment(empty, ExternalField.quadratic()) == 0.0
    with pytest.raises(ValueError):
        total_energy(empty, ExternalField.quadratic())


def test_potential_is_superharmonic_inside(disk):
    # discrete Laplacian of a log potential of positive mass is <= 0 up to quadrature error
    hg = 0.1
    fld = sample_field(disk, Box.centered(1.5), hg, near_field="exact")
    lap = fld.laplacian()[1:-1, 1:-1]
    assert np.nanmax(lap) <= 0.05
    # inside the disk it equals -2 pi times the density 1/pi
    xs, ys = fld.axes
    X, Y = np.meshgrid(xs[1:-1], ys[1:-1], indexing="ij")
    inner = np.hypot(X, Y) < 0.6
    np.testing.assert_allclose(lap[inner], -2.0, atol=0.05)


def test_potential_csv_roundtrip(disk, tmp_path):
    fld = sample_field(disk, Box.centered(1.0), 0.25)
    p = tmp_path / "u.csv"
    text = fld.to_csv(p)
    back = PotentialField.from_csv(p)
    np.testing.assert_array_equal(back.values, fld.values)
    assert back.hg == fld.hg and back.box == fld.box
    assert back.to_csv() == text


def test_interpolation_is_exact_for_bilinear():
    box = Box.centered(1.0)
    xs, ys = box.node_axes(0.25)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    f = PotentialField(box, 0.25, 1 + 2 * X - Y + 0.5 * X * Y)
    pts = np.array([[0.1, -0.37], [1.0, 1.0], [-1.0, 0.3]])
    np.testing.assert_allclose(f.interpolate(pts), 1 + 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1],
                               atol=1e-14)
    with pytest.raises(ValueError):
        f.interpolate([[1.5, 0]])


@given(seed=st.integers(0, 10**6), scale=st.floats(0.1, 10.0))
def test_energy_scaling(seed, scale):
    # dilating by s shifts the log energy of a probability measure by -log s
    rng = np.random.default_rng(seed)
    c = Box.centered(1.0).cell_centers(0.5)
    w = rng.dirichlet(np.ones(len(c)))
    e1 = energy(plane_measure(c, 0.5, w))
    e2 = energy(plane_measure(scale * c, 0.5 * scale, w))
    assert e2 == pytest.approx(e1 - math.log(scale), abs=1e-12)
