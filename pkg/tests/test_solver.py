import json
import math
from pathlib import Path

import numpy as np
import pytest

from ricciforge import solver as S
from ricciforge import torus as T
from ricciforge.errors import ConfigError, ParameterGuardError, ZeroMultiplierError
from ricciforge.identities import make_rng

PINS = json.loads((Path(__file__).parent / "data" / "solve_pins.json").read_text())


def zero2(grid):
    return T.constant_field(grid, np.zeros((grid.n, grid.n)))


def test_residual_vanishes_at_origin():
    g = T.TorusGrid(2, 16)
    assert S.ein_residual(zero2(g), None, 0.1, 1.0).sup_norm() < 1e-12


@pytest.mark.parametrize("n,kappa,lam", [(2, 0.0, 1.0), (2, 0.3, 0.7), (3, -0.1, 2.0)])
def test_residual_at_zero_term_by_term(n, kappa, lam):
    g = T.TorusGrid(n, 16)
    e = T.random_band_limited(g, make_rng(n, 30), (n, n), band=3, symmetric=True, amplitude=0.05)
    F = S.ein_residual(zero2(g), e, kappa, lam)
    assert np.max(np.abs(F.data - S.ein_residual_terms(e, kappa, lam).data)) < 1e-12


def test_multiplier_values():
    g = T.TorusGrid(2, 16)
    L = S.linearization_at_zero(0.0, 1.0, g)
    k2 = g.k2
    for a in range(3):
        assert np.allclose(L.matrices[..., a, a], 0.5 * (k2 + 2))
    assert np.allclose(L.matrices[0, 0], np.eye(3))


def test_traceless_multiplier_with_kappa():
    g = T.TorusGrid(2, 16)
    L = S.linearization_at_zero(0.1, 1.0, g)
    u = T.scalar_field(g, lambda x, y: np.cos(x))
    E = np.array([[1.0, 0.0], [0.0, -1.0]])
    h = T.GridTensor(g, E[:, :, None, None] * u.data)
    assert np.max(np.abs(L.apply(h).data - 1.5 * h.data)) < 1e-13


@pytest.mark.parametrize("n,kappa", [(2, 0.1), (3, 0.2), (3, -0.1)])
def test_conformal_multiplier_acts_on_traces(n, kappa):
    g = T.TorusGrid(n, 8)
    L = S.linearization_at_zero(kappa, 1.0, g)
    u = T.scalar_field(g, lambda *x: np.cos(x[0] + x[1]))
    h = T.GridTensor(g, np.eye(n)[(...,) + (None,) * n] * u.data)
    tr_out = np.einsum("ii...->...", L.apply(h).data)
    expected = S.conformal_multiplier(kappa, 1.0, 2.0, n) * n * u.data
    assert np.max(np.abs(tr_out - expected)) < 1e-12


def test_zero_multiplier_rejected_with_mode():
    g = T.TorusGrid(2, 8)
    with pytest.raises(ZeroMultiplierError) as info:
        S.linearization_at_zero(0.0, -1.0, g)
    assert sum(k * k for k in info.value.mode) == 2


@pytest.mark.parametrize("kappa", [0.0, 0.15])
def test_linearization_finite_differences(kappa):
    g = T.TorusGrid(2, 32)
    h = T.random_band_limited(g, make_rng(1, 31), (2, 2), band=3, symmetric=True)
    L = S.linearization_at_zero(kappa, 1.0, g)
    Lh = L.apply(h)
    ts = [1e-3, 1e-4]
    errs = [np.max(np.abs((S.ein_residual(t * h, None, kappa, 1.0) - 0.0).data / t - Lh.data)) for t in ts]
    assert math.log(errs[0] / errs[1]) / math.log(10) == pytest.approx(1.0, abs=0.05)


def test_quadratic_remainder():
    """F(eps h, 0) - eps L h is O(eps^2) for kappa = 0, Lambda = 1."""
    g = T.TorusGrid(2, 32)
    h = T.GridTensor(g, np.eye(2)[:, :, None, None] * np.cos(g.coords[0]))
    L = S.linearization_at_zero(0.0, 1.0, g)
    assert np.max(np.abs(L.apply(h).data - 0.5 * (1 + 2) * h.data)) < 1e-13
    eps = np.array([4e-3, 2e-3, 1e-3])
    rem = [np.max(np.abs(S.ein_residual(e * h, None, 0.0, 1.0).data - e * L.apply(h).data)) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(rem), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.05)


def test_zero_prescription_gives_zero():
    r = S.newton_chord_solve(S.SolveConfig(N=16, eps=0.0))
    assert r.converged and len(r.iterations) == 1 and r.h_sup == 0.0


@pytest.mark.parametrize("name", sorted(PINS))
def test_regression_pins(name):
    pin = PINS[name]
    cfg = S.SolveConfig(**pin["config"])
    r = S.newton_chord_solve(cfg)
    assert r.converged
    assert r.final_residual < 1e-10 and r.gauge_norm < 1e-9 and r.direct_check < 1e-9
    fp = S.solution_fingerprint(r.h)
    assert fp["h_sup"] == pytest.approx(pin["h_sup"], rel=1e-9)
    assert np.allclose(fp["cos_modes"], pin["cos_modes"], rtol=1e-8, atol=1e-12)
    assert len(r.iterations) == pin["iterations"]


def test_linear_scaling_in_eps():
    h2 = S.newton_chord_solve(S.SolveConfig(eps=1e-2)).h_sup
    h3 = S.newton_chord_solve(S.SolveConfig(eps=1e-3)).h_sup
    assert 0.8 <= h3 / (h2 / 10) <= 1.2


def test_predicted_response_for_conformal_cosine():
    cfg = S.SolveConfig(N=16, eps=1e-3)
    pred = S.linear_response(S.prescription(cfg), 0.0, 1.0)
    expected = (2.0 / 3.0) * S.prescription(cfg).data
    assert np.max(np.abs(pred.data - expected)) < 1e-15


def test_shift_equivariance():
    base = S.newton_chord_solve(S.SolveConfig(N=32, pattern="mixed", kappa=0.1))
    moved = S.newton_chord_solve(S.SolveConfig(N=32, pattern="mixed", kappa=0.1, shift=(3, 5)))
    rolled = np.roll(base.h.data, (3, 5), axis=(2, 3))
    assert np.max(np.abs(moved.h.data - rolled)) < 1e-10


def test_gauge_verify_at_zero():
    g = T.TorusGrid(2, 16)
    omega, sup, p_sup = S.gauge_verify(zero2(g), zero2(g), 0.0, 1.0)
    assert sup == 0.0 and p_sup == 0.0


def test_gauge_multiplier_floor_is_lambda():
    assert np.min(S.gauge_multipliers(0.7, T.TorusGrid(2, 16))) == pytest.approx(0.7)


def test_large_prescription_reports_failure():
    with pytest.warns(UserWarning, match="exceeds"):
        r = S.newton_chord_solve(S.SolveConfig(N=16, eps=2.0))
    assert r.verdict in ("diverged", "positivity_lost", "max_iterations")
    assert r.warnings


def test_finite_difference_newton_mode():
    r = S.newton_chord_solve(S.SolveConfig(N=16, eps=1e-2, mode="full_newton_fd"))
    chord = S.newton_chord_solve(S.SolveConfig(N=16, eps=1e-2))
    assert r.converged
    assert len(r.iterations) <= len(chord.iterations)
    assert np.max(np.abs(r.h.data - chord.h.data)) < 1e-9


def test_report_json():
    r = S.newton_chord_solve(S.SolveConfig(N=16))
    data = json.loads(r.to_json())
    for key in ("config", "iterations", "gauge_norm", "direct_check", "verdict", "projection_coefficients"):
        assert key in data
    assert data["projection_coefficients"] == []
    assert 0 < r.convergence_factor < 0.1


def test_config_guards():
    with pytest.raises(ParameterGuardError):
        S.SolveConfig(n=2, kappa=-0.5)
    with pytest.raises(ConfigError):
        S.SolveConfig(lam=0.0)
    with pytest.raises(ConfigError):
        S.SolveConfig(mode="bisection")
    with pytest.raises(ValueError):
        S.SolveConfig(n=3, N=64)
