import numpy as np
import pytest

from conftest import fd_christoffel, fd_ricci
from ricciforge import jets as J
from ricciforge.fields import contract
from ricciforge.errors import MissingDirectionError, OrderExhaustedError, ParameterGuardError
from ricciforge.geometry import (
    ChartMetricJet,
    Geometry,
    OpRequest,
    christoffel,
    conformal_metric,
    constant_curvature_metric,
    covariant_derivative,
    curvature,
    flat_metric,
    operator_apply,
    product_metric,
    random_metric,
    random_sym2,
    rough_laplacian,
)
from ricciforge.identities import make_rng, tangent_residual
from ricciforge.tensors import curvature_symmetry_defects


def sphere_closed_form(K, center):
    center = np.asarray(center, dtype=float)

    def metric(x):
        y = center + x
        return 4.0 * np.eye(y.size) / (1 + K * y @ y) ** 2
    return metric


def shifted_sphere_jet(alg, K, center):
    xs = J.coordinates(alg)
    r2 = sum(((xs[i] + c) * (xs[i] + c) for i, c in enumerate(center)), J.constant(alg, 0.0))
    return 4.0 * J.power(1.0 + K * r2, -2.0) * J.constant(alg, np.eye(alg.dim))


def test_flat_christoffel_vanishes():
    G = christoffel(ChartMetricJet(flat_metric(J.get_algebra(3, 3))))
    assert not np.any(G.coef)


def test_exponential_conformal_christoffel():
    alg = J.get_algebra(2, 3)
    x1, _ = J.coordinates(alg)
    geom = Geometry(conformal_metric(J.exp(2.0 * x1)))
    G = geom.christoffel.value()
    assert G[0, 0, 0] == pytest.approx(1.0)
    assert G[0, 1, 1] == pytest.approx(-1.0)
    assert G[1, 0, 1] == pytest.approx(1.0)
    oracle = fd_christoffel(lambda x: np.exp(2 * x[0]) * np.eye(2), np.zeros(2))
    assert np.allclose(G, oracle, atol=1e-7)


def test_christoffel_symmetric_in_lower_indices():
    g = random_metric(J.get_algebra(3, 4), make_rng(0, 0))
    G = Geometry(g).christoffel.coef
    assert np.array_equal(G, G.transpose(0, 2, 1, 3))


def test_flat_curvature_vanishes():
    riem, ric, scalar = curvature(ChartMetricJet(flat_metric(J.get_algebra(2, 3))))
    assert not np.any(riem.coef) and not np.any(ric.coef) and not np.any(scalar.coef)


def test_round_sphere_anchor():
    geom = Geometry(constant_curvature_metric(J.get_algebra(2, 4), 1.0))
    assert np.allclose(geom.ricci.value(), 4 * np.eye(2), atol=1e-14)
    assert geom.scalar.value() == pytest.approx(2.0)
    assert geom.riemann.value()[0, 1, 0, 1] == pytest.approx(16.0)


@pytest.mark.parametrize("n,K,center", [(2, 1.0, [0.2, -0.1]), (3, -1.0, [0.1, 0.2, -0.15])])
def test_curvature_against_finite_differences(n, K, center):
    alg = J.get_algebra(n, 4)
    geom = Geometry(shifted_sphere_jet(alg, K, center))
    oracle = fd_ricci(sphere_closed_form(K, center), np.zeros(n))
    assert np.allclose(geom.ricci.value(), oracle, atol=1e-6)
    assert np.allclose(geom.ricci.value(), (n - 1) * K * geom.g.value(), atol=1e-12)


def test_hyperbolic_origin():
    geom = Geometry(constant_curvature_metric(J.get_algebra(3, 4), -1.0))
    assert np.allclose(geom.ricci.value(), -2.0 * geom.g.value(), atol=1e-13)


def test_riemann_symmetries_at_every_valid_order():
    geom = Geometry(random_metric(J.get_algebra(3, 6), make_rng(1, 0)))
    R = geom.riemann
    valid = R.valid
    size = J.get_algebra(3, valid).size
    for c in range(size):
        assert max(curvature_symmetry_defects(R.coef[..., c])) < 1e-12
    ric = geom.ricci.coef
    assert np.array_equal(ric, ric.transpose(1, 0, 2))
    assert geom.budget == valid


def test_metric_compatibility():
    geom = Geometry(random_metric(J.get_algebra(3, 5), make_rng(2, 0)))
    ng = covariant_derivative(geom.g, geom)
    assert np.max(np.abs(ng.coef[..., : J.get_algebra(3, ng.valid).size])) < 1e-12


def test_leibniz_with_metric():
    alg = J.get_algebra(2, 4)
    rng = make_rng(3, 0)
    geom = Geometry(random_metric(alg, rng))
    f = J.random_jet(alg, rng)
    lhs = geom.cov(geom.scalar_times(f, geom.g))
    rhs = J.Jet.contract2("m", f.d(), "ij", geom.g, "mij")
    assert np.allclose(lhs.value(), rhs.value(), atol=1e-13)


def test_flat_cov_is_coordinate_derivative():
    alg = J.get_algebra(3, 3)
    geom = Geometry(flat_metric(alg))
    t = J.random_jet(alg, make_rng(4, 0), (3, 3))
    assert np.array_equal(geom.cov(t).coef, t.d().coef)


def test_laplacian_sign_anchor():
    alg = J.get_algebra(2, 4)
    x1, _ = J.coordinates(alg)
    geom = Geometry(flat_metric(alg))
    assert rough_laplacian(J.cos(x1), geom).value() == pytest.approx(1.0)
    assert rough_laplacian(J.constant(alg, np.ones((2, 2))), geom).value() == pytest.approx(np.zeros((2, 2)))


def test_sphere_laplacian_of_coordinate():
    center = [0.3, -0.2]
    alg = J.get_algebra(2, 4)
    geom = Geometry(shifted_sphere_jet(alg, 1.0, center))
    x1, _ = J.coordinates(alg)
    lap = geom.rough_laplacian(x1).value()
    metric = sphere_closed_form(1.0, center)
    G = fd_christoffel(metric, np.zeros(2), step=1e-5)
    # Delta f = -g^ij (d_i d_j f - Gamma^k_ij d_k f) with f = x1
    oracle = np.einsum("ij,ij->", np.linalg.inv(metric(np.zeros(2))), G[0])
    assert lap == pytest.approx(oracle, abs=1e-9)


def test_divergence_of_constant_is_zero():
    alg = J.get_algebra(2, 2)
    geom = Geometry(flat_metric(alg))
    out = operator_apply(OpRequest("divergence", J.constant(alg, [[1.0, 2.0], [2.0, 3.0]])), geom)
    assert not np.any(out.coef)


@pytest.mark.parametrize("n", [2, 3])
def test_ein_guards(n):
    alg = J.get_algebra(n, 2)
    geom = Geometry(flat_metric(alg))
    for bad in (-1.0 / n, -1.0 / (2 * (n - 1))):
        with pytest.raises(ParameterGuardError):
            operator_apply(OpRequest("ein", None, kappa=bad, lam=1.0), geom)


def test_unknown_tag():
    with pytest.raises(ValueError):
        OpRequest("nonsense")


def test_order_exhausted():
    alg = J.get_algebra(2, 1)
    geom = Geometry(random_metric(alg, make_rng(5, 0)))
    with pytest.raises(OrderExhaustedError):
        geom.lichnerowicz(random_sym2(alg, make_rng(5, 1)))


def test_missing_direction():
    with pytest.raises(MissingDirectionError):
        ChartMetricJet(flat_metric(J.get_algebra(2, 2))).perturbed()


@pytest.mark.parametrize("seed", range(3))
def test_ricci_linearization(seed):
    alg = J.get_algebra(3, 5)
    rng = make_rng(seed, 5)
    chart = ChartMetricJet(random_metric(alg, rng), random_sym2(alg, rng))
    G = chart.geometry()
    lhs = chart.perturbed_geometry().ricci
    rhs = 0.5 * G.lichnerowicz(chart.h) - G.killing_sym(G.bianchi(chart.h))
    assert tangent_residual(lhs, rhs) < 1e-10


def test_bianchi_of_parallel_ricci_linearization():
    g = product_metric(J.get_algebra(4, 4), [(2, 1.0), (2, 2.0)])
    rng = make_rng(6, 0)
    h = random_sym2(g.alg, rng)
    base = Geometry(g)
    r0 = base.ricci
    lhs = Geometry(g.with_tangent(h)).bianchi(r0)
    rhs = -1.0 * base.endo(r0, base.bianchi(h))
    assert tangent_residual(lhs, rhs) < 1e-10


def test_contravariant_ricci_linearization_on_sphere():
    g = constant_curvature_metric(J.get_algebra(3, 5), 1.0)
    h = random_sym2(g.alg, make_rng(7, 0))
    G = Geometry(g)
    lhs = Geometry(g.with_tangent(h)).ric_contra()
    inner = 0.5 * G.lichnerowicz(h) - G.killing_sym(G.bianchi(h)) - 2.0 * G.ric_action(h)
    rhs = contract("ia,ab,bj->ij", G.ginv, inner, G.ginv)
    assert tangent_residual(lhs, rhs) < 1e-10
