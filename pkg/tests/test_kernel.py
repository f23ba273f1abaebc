import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riesz_condenser import kernel as kern
from riesz_condenser.errors import DimensionMismatchError
from riesz_condenser.geometry import PointCloud, fibonacci_sphere
from riesz_condenser.kernel import KernelSpec, cell_constant
from riesz_condenser.measure import DiscreteMeasure, SignedMeasure, point_mass
from riesz_condenser.parallel import thread_scope


def cloud(points, h=0.1):
    points = np.atleast_2d(np.asarray(points, float))
    return PointCloud(points, np.full(len(points), h ** points.shape[1]), h)


def test_spec_invariants():
    with pytest.raises(ValueError):
        KernelSpec(3.0, 3)
    with pytest.raises(ValueError):
        KernelSpec(0.0, 3)
    with pytest.raises(ValueError):
        KernelSpec(2.0, 3, "regularized", 0.0)
    assert KernelSpec.for_grid(2.0, 3, 0.2).eps == pytest.approx(0.1)


def test_kernel_value_examples(oracles):
    exact = KernelSpec(2.0, 3)
    assert kern.kernel_value((0, 0, 0), (2, 0, 0), exact) == 0.5
    assert kern.kernel_value((0, 0, 0), (0, 0, 0), exact) == math.inf
    reg = KernelSpec(2.0, 3, "regularized", 1.0)
    assert kern.kernel_value((1, 2, 3), (1, 2, 3), reg) == 1.0
    v = kern.kernel_value((0, 0, 0), (1, 1, 1), KernelSpec(1.5, 3))
    assert v == pytest.approx(oracles["kernel_value_15_3_111"], rel=1e-14)


def test_kernel_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        kern.kernel_value((0, 0), (1, 0, 0), KernelSpec(2.0, 3))


def test_assemble_two_point_regularized():
    spec = KernelSpec(2.0, 3, "regularized", 1.0)
    c = cloud([[0, 0, 0], [2, 0, 0]])
    K = kern.assemble_matrix(c, c, spec)
    s = 5 ** -0.5
    assert np.allclose(K, [[1, s], [s, 1]], rtol=1e-15, atol=0)


@pytest.mark.parametrize("mode", ["exact", "regularized"])
def test_assemble_symmetric(mode):
    rng = np.random.default_rng(1)
    c = cloud(rng.random((60, 3)))
    spec = KernelSpec(1.5, 3) if mode == "exact" else KernelSpec(1.5, 3, "regularized", 0.05)
    K = kern.assemble_matrix(c, c, spec)
    assert np.array_equal(K, K.T)
    assert np.all(np.isfinite(K))
    if mode == "exact":
        assert np.allclose(np.diag(K), spec.diag_value(c.sizes))


def test_regularized_matrix_is_positive_definite():
    rng = np.random.default_rng(2)
    c = cloud(rng.random((50, 3)))
    K = kern.assemble_matrix(c, c, KernelSpec(2.0, 3, "regularized", 0.1))
    assert np.linalg.eigvalsh(K).min() > 0
    assert kern.is_positive_definite(K)


def test_cross_matrix_exact_coincident_is_inf():
    a = np.array([[0.0, 0, 0], [1, 0, 0]])
    K = kern.cross_matrix(a, a[:1], KernelSpec(2.0, 3))
    assert K[0, 0] == math.inf and K[1, 0] == 1.0


def test_assembly_is_deterministic_across_threads():
    rng = np.random.default_rng(3)
    c = cloud(rng.random((700, 3)))
    spec = KernelSpec(2.0, 3)
    with thread_scope(1):
        K1 = kern.assemble_matrix(c, c, spec)
    with thread_scope(3):
        K3 = kern.assemble_matrix(c, c, spec)
    assert np.array_equal(K1, K3)


# -- cell self-energy constant ------------------------------------------------------

@pytest.mark.parametrize("key", ["3,2.0", "3,2.5", "2,1.5", "4,3.0"])
def test_cell_constant_matches_monte_carlo(oracles, key):
    n, a = key.split(",")
    ref = oracles["cell_constant_mc"][key]
    c = cell_constant(int(n), float(a))
    assert abs(c - ref["mean"]) <= 4.0 * ref["stderr"]


def test_cell_constant_closed_forms(oracles):
    closed = oracles["cell_constant_closed"]
    assert cell_constant(3, 2.0) == pytest.approx(closed["3,2.0"], rel=1e-12)
    assert cell_constant(2, 1.0) == pytest.approx(closed["2,1.0"], rel=1e-12)


def test_cell_constant_quadrature_converged():
    for n, a in [(3, 0.5), (3, 1.5), (2, 0.7)]:
        assert cell_constant(n, a, order=24) == pytest.approx(cell_constant(n, a, order=32), rel=1e-10)


def test_diag_rule_scaling():
    spec = KernelSpec(2.0, 3)
    d = spec.diag_value(np.array([0.5, 0.25]))
    c = cell_constant(3, 2.0)
    assert np.allclose(d, [c / 0.5, c / 0.25])


# -- potentials and energies ---------------------------------------------------

def test_point_mass_potential():
    assert kern.potential(point_mass((0, 0, 0)), (2, 0, 0), KernelSpec(2.0, 3)) == 0.5


def test_sphere_potential_outside():
    pts = fibonacci_sphere(5000, radius=1.0)
    mu = SignedMeasure(pts, np.full(5000, 1.0 / 5000))
    rng = np.random.default_rng(4)
    spec = KernelSpec(2.0, 3)
    for _ in range(5):
        d = rng.normal(size=3)
        x = 2.0 * d / np.linalg.norm(d)
        assert abs(kern.potential(mu, x, spec) - 0.5) < 1e-3


def test_zero_measure_potential():
    mu = SignedMeasure(np.zeros((0, 3)), np.zeros(0))
    assert kern.potential(mu, (1, 0, 0), KernelSpec(2.0, 3)) == 0.0


def test_two_unit_masses_energy():
    spec = KernelSpec(2.0, 3)
    c = cloud([[0, 0, 0], [2, 0, 0]], h=0.1)
    mu = DiscreteMeasure(c, [1.0, 1.0])
    d = spec.diag_value(np.array([0.1]))[0]
    assert kern.energy(mu, spec) == pytest.approx(2 * d + 1, rel=1e-14)


@pytest.mark.parametrize("mode", ["exact", "regularized"])
def test_mutual_energy_symmetric(mode):
    rng = np.random.default_rng(5)
    spec = KernelSpec(1.5, 3) if mode == "exact" else KernelSpec(1.5, 3, "regularized", 0.1)
    for _ in range(10):
        mu = SignedMeasure(rng.random((30, 3)), rng.normal(size=30))
        nu = SignedMeasure(rng.random((20, 3)) + 2, rng.normal(size=20))
        a, b = kern.mutual_energy(mu, nu, spec), kern.mutual_energy(nu, mu, spec)
        assert abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def test_mutual_energy_bilinear():
    rng = np.random.default_rng(6)
    spec = KernelSpec(2.0, 3, "regularized", 0.2)
    pts = rng.random((40, 3))
    w1, w2 = rng.normal(size=40), rng.normal(size=40)
    nu = SignedMeasure(rng.random((25, 3)), rng.normal(size=25))
    a, b = 1.7, -0.4
    lhs = kern.mutual_energy(SignedMeasure(pts, a * w1 + b * w2), nu, spec)
    rhs = (a * kern.mutual_energy(SignedMeasure(pts, w1), nu, spec)
           + b * kern.mutual_energy(SignedMeasure(pts, w2), nu, spec))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1.0)


def test_regularized_energy_strictly_positive():
    rng = np.random.default_rng(7)
    pts = rng.random((100, 3))
    spec = KernelSpec(2.0, 3, "regularized", 0.05)
    for _ in range(100):
        w = rng.normal(size=100)
        assert kern.energy(SignedMeasure(pts, w), spec) > 0


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.2, 5.0), alpha=st.sampled_from([0.5, 1.0, 1.5, 2.0, 2.5]))
def test_regularized_below_exact_and_converges(r, alpha):
    x, y = (0.0, 0.0, 0.0), (r, 0.0, 0.0)
    exact = kern.kernel_value(x, y, KernelSpec(alpha, 3))
    prev = None
    for eps in (1e-1, 1e-2, 1e-3):
        reg = kern.kernel_value(x, y, KernelSpec(alpha, 3, "regularized", eps))
        assert reg <= exact
        err = (exact - reg) / exact
        # relative error is (3 - alpha) / 2 * (eps / r)**2 to leading order
        assert err <= (3 - alpha) * (eps / r) ** 2
        if prev is not None:
            assert err <= prev
        prev = err
