"""Batch entry point: ``ricciforge <command> [--flag value]... [--config path] [--out path]``.

Every flag mirrors a key of the JSON config file.  When both give a value
the config file wins and a warning is printed.  Exit status: 0 when every
row passed, 1 on a failing suite, 2 on an invalid invocation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import bounds, identities, solver, torus
from .errors import BoundViolationError, RicciForgeError

SCHEMA = 1


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


# key -> (type, default, help); lists are given as comma-separated strings on the command line
COMMANDS = {
    "identities": {
        "seeds": (int, 20, "number of random trials"),
        "seed": (int, 0, "64-bit master seed"),
        "order": (int, identities.DEFAULT_ORDER, "jet order (6-10)"),
        "dims": (_ints, [2, 3], "chart dimensions"),
        "tolerance": (float, 1e-9, "relative residual tolerance"),
    },
    "fujitani": {
        "seeds": (int, 50, "random curvature samples per dimension"),
        "seed": (int, 0, "64-bit master seed"),
        "dims": (_ints, [3, 4], "dimensions"),
        "method": (str, "eigen_bound", "sectional extrema: eigen_bound or grid_search"),
        "samples": (int, 10_000, "planes sampled by grid_search"),
    },
    "spectrum": {
        "n": (int, 2, "torus dimension"),
        "N": (int, 8, "points per axis"),
        "c": (_floats, [0.5, 1.0, 2.0], "kernel shifts"),
        "tolerance": (float, 1e-8, "agreement tolerance"),
    },
    "solve-ein": {
        "n": (int, 2, "torus dimension"),
        "N": (int, 64, "points per axis"),
        "kappa": (float, 0.0, "scalar-curvature coefficient"),
        "lambda": (float, 1.0, "cosmological constant"),
        "eps": (float, 1e-2, "prescription amplitude"),
        "pattern": (str, "conformal", "prescription pattern"),
        "tolerance_residual": (float, 1e-10, "sup-norm stopping tolerance"),
        "tolerance_gauge": (float, 1e-9, "gauge 1-form tolerance"),
        "max_iterations": (int, 40, "iteration cap"),
        "mode": (str, "newton_chord", "newton_chord or full_newton_fd"),
        "field_out": (str, "", "optional path for the solved h"),
        "field_format": (str, "binary", "binary or csv"),
    },
    "linearize": {
        "n": (int, 2, "torus dimension"),
        "N": (int, 32, "points per axis"),
        "kappa": (float, 0.0, "scalar-curvature coefficient"),
        "lambda": (float, 1.0, "cosmological constant"),
        "eps": (float, 0.0, "prescription amplitude; the limit is the derivative at (0, 0) only for eps = 0"),
        "seed": (int, 0, "64-bit master seed"),
        "steps": (_floats, [1e-3, 1e-4, 1e-5], "finite-difference steps"),
    },
}

USAGE = "usage: ricciforge {" + ",".join(COMMANDS) + "} [--flag value]... [--config path] [--out path] [--format json|csv]"


class UsageError(Exception):
    pass


def _dest(key):
    return key.replace("-", "_")


def _parser(command):
    p = argparse.ArgumentParser(prog=f"ricciforge {command}", add_help=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    for key, (_, _, helptext) in COMMANDS[command].items():
        flag = "--" + key.replace("_", "-")
        aliases = [flag] if flag == "--" + key else [flag, "--" + key]
        p.add_argument(*aliases, dest=_dest(key), default=None, help=helptext)
    return p


def resolve_config(argv):
    """Merge flags and config file into ``(command, params, out, fmt)``."""
    argv = list(argv)
    command = argv[0] if argv and not argv[0].startswith("-") else None
    rest = argv[1:] if command else argv
    file_cfg = {}
    if "--config" in rest:
        i = rest.index("--config")
        if i + 1 >= len(rest):
            raise UsageError("--config needs a path")
        try:
            with open(rest[i + 1]) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config must be a JSON object")
    if command is None:
        command = file_cfg.get("command")
    elif "command" in file_cfg and file_cfg["command"] != command:
        _warn(f"config command {file_cfg['command']!r} overrides {command!r}")
        command = file_cfg["command"]
    if command not in COMMANDS:
        raise UsageError("missing or unknown command" if command is None else f"unknown command {command!r}")
    parser = _parser(command)
    try:
        args = parser.parse_args(rest)
    except SystemExit as exc:
        raise UsageError("invalid flags") from exc
    spec = COMMANDS[command]
    unknown = set(file_cfg) - set(spec) - {"command", "out", "format"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    params = {}
    for key, (typ, default, _) in spec.items():
        flag_val = getattr(args, _dest(key))
        if key in file_cfg:
            if flag_val is not None:
                _warn(f"config file value for {key!r} overrides the command-line flag")
            raw = file_cfg[key]
        else:
            raw = flag_val
        if raw is None:
            params[key] = default
            continue
        try:
            params[key] = typ(raw) if not isinstance(raw, list) else [float(v) if typ is _floats else int(v) for v in raw]
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key!r}: {raw!r}") from exc
    out = file_cfg.get("out", args.out)
    fmt = file_cfg.get("format", args.format)
    if fmt not in ("json", "csv"):
        raise UsageError(f"unknown format {fmt!r}")
    return command, params, out, fmt


def _warn(msg):
    print(f"ricciforge: warning: {msg}", file=sys.stderr)


def thread_cap():
    try:
        return max(1, int(os.environ.get("RICCIFORGE_THREADS", "1")))
    except ValueError:
        return 1


def trial_seeds(seed, count):
    """Per-trial 64-bit keys derived from the master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


# -- commands -------------------------------------------------------------------------------

def run_identities(p, workers=1):
    if not identities.MIN_SUITE_ORDER <= p["order"] <= 10:
        raise UsageError(f"order must lie in {identities.MIN_SUITE_ORDER}..10")
    seeds = trial_seeds(p["seed"], p["seeds"])
    results = identities.identity_suite(seeds, p["dims"], p["order"], p["tolerance"])
    rows = []
    for r in results:
        rows.append({"identity": r.identity, "anchor": r.anchor, "seeds": len(r.seeds),
                     "max_residual": r.max_residual, "tolerance": r.tolerance,
                     "expect_failure": r.expect_failure, "passed": r.passed})
    return rows, {}


def run_fujitani(p, workers=1):
    rows = []
    seeds = trial_seeds(p["seed"], p["seeds"])
    for n in p["dims"]:
        for k, s in enumerate(seeds):
            rng = identities.make_rng(s, n)
            base = 1.0 if k % 2 else 0.0  # alternate generic and near-constant-curvature samples
            data = bounds.random_curvature_data(n, rng, amplitude=0.1 if base else 1.0, base_curvature=base)
            rows.append(_fujitani_row(f"random[n={n},trial={k}]", data, p, rng))
        for K in (1.0, -0.5):
            data = bounds.constant_curvature_data(n, K)
            row = _fujitani_row(f"constant[n={n},K={K:g}]", data, p, identities.make_rng(0, n))
            row["equality_error"] = abs(row["exact_min"] - n * K) if "exact_min" in row else math.nan
            row["passed"] = row["passed"] and abs(row["bound"] - n * K) < 1e-10 and row["equality_error"] < 1e-10
            rows.append(row)
    return rows, {}


def _fujitani_row(label, data, p, rng):
    row = {"identity": "traceless minimum of (Ric - Riem) >= min{2 Ric_min - (n-2) K_max, n K_min}",
           "case": label}
    try:
        row.update(bounds.fujitani_check(data, p["method"], rng, p["samples"]))
        row["passed"] = True
    except BoundViolationError as exc:
        row.update({"passed": False, "error": str(exc)})
    return row


def run_spectrum(p, workers=1):
    grid = torus.TorusGrid(p["n"], p["N"])
    kb, proj = torus.kernel_and_projection("lichnerowicz", grid)
    geom = torus.grid_geometry(torus.constant_field(grid, np.zeros((grid.n, grid.n))))
    rows = []
    lap = torus.laplacian_multiplier(grid)
    zero = np.zeros(grid.k2.shape)
    zero[(0,) * grid.n] = 1.0
    for c in p["c"]:
        fourier = float(np.min(lap.matrices[..., 0, 0] + c * zero))
        dense, asym = torus.dense_spectrum(lambda b, c=c: geom.lichnerowicz(b) + c * proj(b), grid)
        expected = min(c, 1.0)
        rows.append({"identity": "min spec(Delta_L + c Pi) = min(c, 1)", "c": c,
                     "kernel_dim": len(kb.fields), "fourier_min": fourier, "dense_min": float(dense[0]),
                     "expected": expected, "galerkin_asymmetry": asym,
                     "passed": abs(fourier - expected) < p["tolerance"] and abs(dense[0] - expected) < p["tolerance"]})
    return rows, {"band": grid.resolved_band}


def run_solve(p, workers=1):
    cfg = solver.SolveConfig(n=p["n"], N=p["N"], kappa=p["kappa"], lam=p["lambda"], eps=p["eps"],
                             pattern=p["pattern"], tolerance_residual=p["tolerance_residual"],
                             tolerance_gauge=p["tolerance_gauge"], max_iterations=p["max_iterations"],
                             mode=p["mode"])
    report = solver.newton_chord_solve(cfg)
    if p["field_out"] and report.h is not None:
        torus.write_field(p["field_out"], report.h, p["field_format"])
    rows = [{"m": it["m"], "residual": it["residual"], "passed": report.converged} for it in report.iterations]
    extra = report.to_dict()
    extra.pop("config")
    return rows, extra


def run_linearize(p, workers=1):
    grid = torus.TorusGrid(p["n"], p["N"])
    rng = identities.make_rng(p["seed"], 17)
    cfg = solver.SolveConfig(n=p["n"], N=p["N"], kappa=p["kappa"], lam=p["lambda"], eps=p["eps"])
    e = solver.prescription(cfg)
    h = torus.random_band_limited(grid, rng, (grid.n, grid.n), band=3, symmetric=True)
    L = solver.linearization_at_zero(p["kappa"], p["lambda"], grid)
    zero = torus.constant_field(grid, np.zeros((grid.n, grid.n)))
    F0 = solver.ein_residual(zero, e, p["kappa"], p["lambda"])
    Lh = L.apply(h)
    rows = []
    for t in p["steps"]:
        Ft = solver.ein_residual(t * h, e, p["kappa"], p["lambda"])
        err = float(np.max(np.abs(((Ft - F0) / t - Lh).data)))
        rows.append({"identity": "(F(th, e) - F(0, e))/t -> D_h F(0,0) h", "t": t, "error": err})
    slopes = [math.log(a["error"] / b["error"]) / math.log(a["t"] / b["t"])
              for a, b in zip(rows, rows[1:]) if a["error"] > 0 and b["error"] > 0]
    for r, s in zip(rows[1:], slopes):
        r["slope"] = s
    ok = all(s > 0.8 for s in slopes) if slopes else False
    for r in rows:
        r["passed"] = ok
    k2 = np.arange(0, 5)
    table = {"conformal_multiplier": [solver.conformal_multiplier(p["kappa"], p["lambda"], k, grid.n) for k in k2],
             "traceless_multiplier": [0.5 * (k + 2 * p["lambda"]) for k in k2], "k2": k2.tolist()}
    return rows, table


RUNNERS = {"identities": run_identities, "fujitani": run_fujitani, "spectrum": run_spectrum,
           "solve-ein": run_solve, "linearize": run_linearize}


# -- output -------------------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.generic):
        return _clean(x.item())
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def build_report(command, params, rows, extra):
    passed = all(r.get("passed", True) for r in rows)
    return _clean({"schema": SCHEMA, "command": command, "config": params, "passed": passed,
                   "failing": [i for i, r in enumerate(rows) if not r.get("passed", True)],
                   "rows": rows, "summary": extra,
                   "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())})


def render(report, fmt):
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    rows = report["rows"]
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ricciforge-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, params, out, fmt = resolve_config(argv)
    except UsageError as exc:
        print(f"ricciforge: {exc}\n{USAGE}", file=sys.stderr)
        return 2
    workers = thread_cap()
    try:
        with threadpool_limits(limits=workers):
            rows, extra = RUNNERS[command](params, workers)
    except UsageError as exc:
        print(f"ricciforge: {exc}\n{USAGE}", file=sys.stderr)
        return 2
    except (RicciForgeError, ValueError) as exc:
        print(f"ricciforge: invalid configuration: {exc}", file=sys.stderr)
        return 2
    report = build_report(command, params, rows, extra)
    text = render(report, fmt)
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)
    if not report["passed"]:
        for i in report["failing"]:
            print(f"ricciforge: FAILED row {i}: {json.dumps(report['rows'][i], sort_keys=True)}", file=sys.stderr)
        return 1
    return 0
