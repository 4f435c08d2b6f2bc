"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from ricciforge import bounds as B
from ricciforge import identities as I
from ricciforge import solver as S
from ricciforge import torus as T
from ricciforge.cli import trial_seeds

PINS = json.loads((Path(__file__).parent / "data" / "solve_pins.json").read_text())


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail
    return report


def test_c1_identity_suite(verdict):
    start = time.perf_counter()
    rows = I.identity_suite(trial_seeds(0, 20), dims=(2, 3), order=6, tol=1e-9)
    elapsed = time.perf_counter() - start
    checked = [r for r in rows if not r.expect_failure]
    worst = max(r.max_residual for r in checked)
    ok = all(r.passed for r in rows) and worst < 1e-9 and elapsed < 30
    verdict("C1 identity suite", ok, f"{len(rows)} rows, worst residual {worst:.2e}, {elapsed:.1f}s")


def test_c2_parallel_ricci_commutations(verdict):
    rows = {r.identity: r for r in I.commutation_suite(trial_seeds(1, 5))}
    held = [rows[f"commutation_{k}[{bg}]"].max_residual for k in ("div", "trace") for bg in ("flat", "product")]
    generic = min(rows["commutation_div[generic]"].details["per_seed"].values())
    ok = max(held) < 1e-10 and generic > 1e-3
    verdict("C2 parallel-Ricci commutations", ok,
            f"flat/product worst {max(held):.2e}, generic div smallest {generic:.3f}")


def test_c3_shifted_lichnerowicz_minimum(verdict):
    start = time.perf_counter()
    grid = T.TorusGrid(2, 8)
    _, proj = T.kernel_and_projection("lichnerowicz", grid)
    geom = T.grid_geometry(T.constant_field(grid, np.zeros((2, 2))))
    lap = T.laplacian_multiplier(grid)
    errs = []
    for c in (0.5, 1.0, 2.0):
        fourier = lap.matrices[..., 0, 0].copy()
        fourier[0, 0] += c
        dense, _ = T.dense_spectrum(lambda b, c=c: geom.lichnerowicz(b) + c * proj(b), grid)
        errs += [abs(fourier.min() - min(c, 1.0)), abs(dense[0] - min(c, 1.0)), abs(fourier.min() - dense[0])]
    elapsed = time.perf_counter() - start
    ok = max(errs) < 1e-8 and elapsed < 10
    verdict("C3 min spec(Delta_L + c Pi) = min(c, 1)", ok, f"worst error {max(errs):.2e}, {elapsed:.1f}s")


def test_c4_traceless_bound(verdict):
    margins = []
    for n in (3, 4):
        for seed in range(50):
            rng = I.make_rng(seed, 60, n)
            kw = {} if seed % 2 == 0 else {"amplitude": 0.02, "base_curvature": 1.0}
            margins.append(B.fujitani_check(B.random_curvature_data(n, rng, **kw))["margin"])
    equality = []
    for n in (3, 4):
        for K in (1.0, -0.5, 2.0):
            row = B.fujitani_check(B.constant_curvature_data(n, K))
            equality += [abs(row["exact_min"] - n * K), abs(row["bound"] - n * K)]
    ok = min(margins) >= -1e-10 and max(equality) < 1e-10
    verdict("C4 traceless eigenvalue bound", ok,
            f"100 samples, smallest margin {min(margins):.3e}, equality error {max(equality):.2e}")


def test_c5_pinned_solves(verdict):
    start = time.perf_counter()
    lines, ok = [], True
    for name in ("t2_kappa0", "t2_kappa01", "t3_kappa0"):
        pin = PINS[name]
        r = S.newton_chord_solve(S.SolveConfig(**pin["config"]))
        fp = S.solution_fingerprint(r.h) if r.h is not None else {"h_sup": math.nan, "cos_modes": math.nan}
        good = (r.converged and len(r.iterations) - 1 <= 40 and r.final_residual < 1e-10
                and r.gauge_norm < 1e-9 and r.direct_check < 1e-9
                and math.isclose(fp["h_sup"], pin["h_sup"], rel_tol=1e-9)
                and np.allclose(fp["cos_modes"], pin["cos_modes"], rtol=1e-8, atol=1e-12))
        ok &= good
        lines.append(f"{name} it={len(r.iterations) - 1} res={r.final_residual:.1e} "
                     f"omega={r.gauge_norm:.1e} direct={r.direct_check:.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    verdict("C5 pinned solves", ok, "; ".join(lines) + f"; {elapsed:.1f}s")


def test_c6_linear_response(verdict):
    devs = []
    for eps in (1e-2, 1e-3, 1e-4):
        cfg = S.SolveConfig(eps=eps)
        r = S.newton_chord_solve(cfg)
        predicted = S.linear_response(S.prescription(cfg), cfg.kappa, cfg.lam).sup_norm()
        devs.append(abs(r.h_sup / predicted - 1))
    rates = [devs[i + 1] / devs[i] for i in range(2)]
    ok = max(devs) < 0.05 and all(0.05 < q < 0.2 for q in rates)
    verdict("C6 linear response", ok,
            "deviations " + ", ".join(f"{d:.2e}" for d in devs) + ", ratios " + ", ".join(f"{q:.3f}" for q in rates))


def test_c7_adjointness(verdict):
    grid = T.TorusGrid(2, 16)
    geom = T.grid_geometry(T.constant_field(grid, np.zeros((2, 2))))
    worst = 0.0
    for seed in range(10):
        rng = I.make_rng(seed, 70)
        w = T.random_band_limited(grid, rng, (2,))
        u = T.random_band_limited(grid, rng, (2, 2), symmetric=True)
        t = T.random_band_limited(grid, rng, (2, 2, 2))
        worst = max(worst, abs(T.l2_inner(geom.killing_sym(w), u) - T.l2_inner(w, geom.div(u))),
                    abs(T.l2_inner(geom.D(u), t) - T.l2_inner(u, geom.D_star(t))))
    verdict("C7 adjointness", worst < 1e-10, f"10 pairs, worst defect {worst:.2e}")


def test_c8_ein4_trace(verdict):
    res = [I.check_ein4_trace(seed, n) for seed in range(10) for n in (2, 3)]
    verdict("C8 ein4 trace identity", max(res) < 1e-11, f"20 jets, worst residual {max(res):.2e}")
