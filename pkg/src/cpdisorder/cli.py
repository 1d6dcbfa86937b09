"""Command-line interface.

Exit codes: 0 success, 1 invalid input (the message names the flag),
2 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import bayes, simulate, variational
from ._quad import QuadratureError
from .model import PRESETS, ModelParams, ParameterError, load_params, thresholds
from .posterior import apply_generator, direct_bayes_posterior


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"--{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        named = re.search(r"--([\w-]+)", message)
        raise UsageError(named.group(1) if named else "command", message)


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--pi0", type=float)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="JSON file with lambda0, lambda1, lambda, c, pi0")


def _params(args) -> ModelParams:
    base = {}
    if getattr(args, "config", None):
        try:
            base = load_params(args.config).to_dict()
        except OSError as exc:
            raise UsageError("config", str(exc)) from exc
        except (json.JSONDecodeError, ParameterError) as exc:
            raise UsageError("config", str(exc)) from exc
    elif getattr(args, "preset", None):
        base = PRESETS[args.preset].to_dict()
    for key, attr in (("lambda0", "lambda0"), ("lambda1", "lambda1"), ("lambda", "lam"),
                      ("c", "c"), ("pi0", "pi0")):
        value = getattr(args, attr, None)
        if value is not None:
            base[key] = value
    try:
        return ModelParams.from_mapping(base)
    except ParameterError as exc:
        raise UsageError(exc.field, str(exc).split(": ", 1)[-1]) from exc


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _grid_rows(sol: bayes.BayesSolution, n: int):
    if n < 2:
        raise UsageError("grid", "need at least 2 points")
    pis = np.linspace(0.0, 1.0, n)
    return [(float(p), float(v)) for p, v in zip(pis, sol.value(pis))]


def _write_csv(rows, header, out: Optional[str]):
    fh = open(out, "w", newline="") if out else io.StringIO()
    writer = csv.writer(fh)
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    if out:
        fh.close()
    else:
        sys.stdout.write(fh.getvalue())


# ---------------------------------------------------------------------------
# commands


def cmd_solve_bayes(args) -> int:
    params = _params(args)
    sol = bayes.solve_bayes(params, tol=args.tol)
    B_bar, B_hat = thresholds(params)
    out = {
        "command": "solve-bayes",
        "inputs": params.to_dict(),
        "outputs": {
            "case": sol.case.value, "B_bar": B_bar, "B_hat": B_hat, "B_star": sol.B_star,
            "smooth_fit": sol.smooth_fit, "left_derivative": sol.left_derivative_at_boundary,
            "V_at_pi0": sol.value(params.pi0),
        },
        "diagnostics": {"root_tol": args.tol},
    }
    if args.grid:
        rows = _grid_rows(sol, args.grid)
        if args.out:
            _write_csv(rows, ("pi", "V"), args.out)
            out["outputs"]["grid_csv"] = args.out
        else:
            out["outputs"]["grid"] = [list(r) for r in rows]
    _emit(out)
    return 0


def cmd_value_function(args) -> int:
    params = _params(args)
    sol = bayes.solve_bayes(params, tol=args.tol)
    pis = np.linspace(0.0, 1.0, args.grid)
    rows = [(float(p), float(v), float(d)) for p, v, d in zip(pis, sol.value(pis), sol.derivative(pis))]
    _write_csv(rows, ("pi", "V", "dV"), args.out)
    return 0


def cmd_solve_variational(args) -> int:
    params = _params(args)
    if args.alpha is None:
        raise UsageError("alpha", "missing")
    pi0 = params.pi0
    try:
        sol = variational.solve_variational(pi0, args.alpha, params, tol=args.tol)
    except ValueError as exc:
        raise UsageError("alpha", str(exc)) from exc
    if sol.directive is variational.Directive.STOP_IMMEDIATELY:
        achieved = 1.0 - pi0
        directive = "stop_immediately"
    else:
        achieved = variational.false_alarm_u(pi0, sol.B_alpha, params)
        directive = "threshold"
    _emit({
        "command": "solve-variational",
        "inputs": {**params.to_dict(), "alpha": args.alpha},
        "outputs": {"directive": directive, "B_alpha": sol.B_alpha, "achieved_u": achieved},
        "diagnostics": {"root_tol": args.tol, "residual": achieved - args.alpha},
    })
    return 0


def _parse_sweep(text: str):
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise UsageError("sweep", "expected start:stop:count") from exc
    if not (0 < a <= b <= 1 and n >= 1):
        raise UsageError("sweep", "need 0 < start <= stop <= 1 and count >= 1")
    return np.round(np.linspace(a, b, n), 12)


def cmd_simulate(args) -> int:
    params = _params(args)
    config = simulate.SimConfig(n_paths=args.n_paths, seed=args.seed, horizon_cap=args.horizon_cap,
                                workers=args.workers)
    sol = bayes.solve_bayes(params) if (args.use_bstar or args.sweep) else None
    if args.sweep:
        rows = simulate.sweep(params, _parse_sweep(args.sweep), config)
        if args.out:
            simulate.write_sweep_csv(rows, args.out)
        else:
            _write_csv([[r[k] for k in simulate.SWEEP_COLUMNS] for r in rows], simulate.SWEEP_COLUMNS, None)
            return 0
        ok, near, low = simulate.sweep_minimum_check(rows, sol.B_star)
        _emit({"command": "simulate", "inputs": {**params.to_dict(), "sweep": args.sweep,
                                                  "n_paths": args.n_paths, "seed": args.seed},
               "outputs": {"csv": args.out, "B_star": sol.B_star, "nearest_B": rows[near]["B"],
                           "argmin_B": rows[low]["B"], "minimum_at_B_star_within_3se": ok},
               "diagnostics": {}})
        return 0
    if args.use_bstar:
        B = sol.B_star
    elif args.B is not None:
        B = args.B
        if not 0 < B <= 1:
            raise UsageError("B", "must lie in (0, 1]")
    else:
        raise UsageError("B", "give --B or --use-bstar")
    batch = simulate.simulate_paths(params, B, config)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        direct = simulate.estimate_risk_direct(params, B, config, batch)
        ident = simulate.estimate_risk_identity(params, B, config, batch)
        fa = simulate.estimate_false_alarm(params, B, config, batch)
    outputs = {"B": B, "risk_direct": direct.to_dict(), "risk_identity": ident.to_dict(),
               "false_alarm": fa.to_dict()}
    if sol is not None:
        V = sol.value(params.pi0)
        outputs["V_at_pi0"] = V
        outputs["z_direct"] = (direct.mean - V) / direct.stderr if direct.stderr > 0 else 0.0
    _emit({"command": "simulate",
           "inputs": {**params.to_dict(), "n_paths": args.n_paths, "seed": args.seed},
           "outputs": outputs,
           "diagnostics": {"warnings": sorted({str(w.message) for w in caught})}})
    return 0


# ---------------------------------------------------------------------------
# verify


def _check(rows, preset, name, value, limit, ok):
    rows.append((preset, name, value, limit, bool(ok)))


def verify_preset(name: str, params: ModelParams, n_paths: int, seed: int, workers: int) -> list:
    rows: list = []
    sol = bayes.solve_bayes(params)
    B, c = sol.B_star, params.c
    _check(rows, name, "boundary_above_B_bar", B - params.B_bar, ">= 0", B >= params.B_bar and B <= 1)

    inner = np.linspace(0.01, B - 0.01, 12) if B > 0.03 else np.array([])
    res = [abs(apply_generator(sol.value, p, params, fprime=sol.derivative, breakpoints=[B]) + c * p)
           for p in inner]
    worst = max(res) if res else 0.0
    _check(rows, name, "generator_residual_continuation", worst, "<= 1e-4", worst <= 1e-4)
    outer = np.linspace(B + 0.01, 0.99, 8)
    sup = min(apply_generator(sol.value, p, params, fprime=sol.derivative, breakpoints=[B]) + c * p
              for p in outer)
    _check(rows, name, "generator_sign_stopping", sup, ">= -1e-6", sup >= -1e-6)

    cont = abs(float(sol.value(np.nextafter(B, 0))) - (1 - B))
    _check(rows, name, "continuous_fit", cont, "<= 1e-10", cont <= 1e-10)
    left = sol.left_derivative_at_boundary
    if sol.smooth_fit:
        _check(rows, name, "smooth_fit", abs(left + 1), "<= 1e-4", abs(left + 1) <= 1e-4)
    else:
        target = bayes.fprime_limit_at_hat(params)
        _check(rows, name, "broken_fit_value", abs(left - target), "<= 1e-4", abs(left - target) <= 1e-4)
        _check(rows, name, "broken_fit_above_minus_one", left, "> -1", left > -1)

    grid = np.linspace(0, 1, 201)
    vals = sol.value(grid)
    _check(rows, name, "majorant", float(np.max(vals - (1 - grid))), "<= 1e-10",
           np.max(vals - (1 - grid)) <= 1e-10)
    _check(rows, name, "nonincreasing", float(np.max(np.diff(vals))), "<= 1e-12", np.max(np.diff(vals)) <= 1e-12)
    mid = sol.value(0.5 * (grid[:-2] + grid[2:])) - 0.5 * (vals[:-2] + vals[2:])
    _check(rows, name, "midpoint_concave", float(np.min(mid)), ">= -1e-8", np.min(mid) >= -1e-8)

    pi0 = min(0.5 * B, 0.05)
    p = params.replace(pi0=pi0)
    config = simulate.SimConfig(n_paths=n_paths, seed=seed, workers=workers)
    batch = simulate.simulate_paths(p, B, config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        direct = simulate.estimate_risk_direct(p, B, config, batch)
        ident = simulate.estimate_risk_identity(p, B, config, batch)
        fa = simulate.estimate_false_alarm(p, B, config, batch)
    V = float(sol.value(pi0))
    for label, est in (("mc_direct_vs_value", direct), ("mc_identity_vs_value", ident)):
        z = abs(est.mean - V) / est.stderr
        _check(rows, name, label, z, "<= 3 SE", z <= 3)
    z = abs(direct.mean - ident.mean) / np.hypot(direct.stderr, ident.stderr)
    _check(rows, name, "mc_direct_vs_identity", z, "<= 3 SE", z <= 3)
    se = np.hypot(fa.stderr, fa.indicator_stderr)
    z = abs(fa.mean - fa.indicator_mean) / se
    _check(rows, name, "mc_false_alarm_rb_vs_indicator", z, "<= 3 SE", z <= 3)
    _check(rows, name, "capped_fraction", direct.capped_fraction, "<= 1e-3", direct.capped_fraction <= 1e-3)

    rng = simulate._block_rng(seed, 10 ** 6)
    worst = 0.0
    for _ in range(20):
        path = simulate.sample_path(p, B, rng)
        jumps = []
        for t, mark, _before, after in path.events:
            jumps.append((t, mark))
            worst = max(worst, abs(after - direct_bayes_posterior(jumps, t, pi0, p)))
    _check(rows, name, "posterior_recursion_vs_direct_bayes", worst, "<= 1e-6", worst <= 1e-6)
    return rows


def cmd_verify(args) -> int:
    if args.preset == "all" or args.preset is None and not any(
            getattr(args, k) is not None for k in ("lambda0", "lambda1", "lam", "c", "config")):
        targets = [(k, PRESETS[k]) for k in sorted(PRESETS)]
    else:
        targets = [(args.preset or "custom", _params(args))]
    rows = []
    for name, params in targets:
        rows.extend(verify_preset(name, params, args.n_paths, args.seed, args.workers))
    width = max(len(r[1]) for r in rows)
    for preset, check, value, limit, ok in rows:
        sys.stdout.write(f"{preset:<7} {check:<{width}} {value: .6e}  {limit:<10} {'PASS' if ok else 'FAIL'}\n")
    failed = sum(not r[4] for r in rows)
    sys.stdout.write(f"{len(rows) - failed}/{len(rows)} checks passed\n")
    return 0 if failed == 0 else 2


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpdisorder", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve-bayes", help="optimal boundary and value function")
    _model_flags(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--grid", type=int, help="tabulate V on N uniform points")
    p.add_argument("--out", help="CSV path for --grid")
    p.set_defaults(func=cmd_solve_bayes)

    p = sub.add_parser("value-function", help="CSV of V and its left derivative")
    _model_flags(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_value_function)

    p = sub.add_parser("solve-variational", help="threshold for a false-alarm bound")
    _model_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_solve_variational)

    p = sub.add_parser("simulate", help="Monte Carlo estimates for a threshold rule")
    _model_flags(p)
    p.add_argument("--B", type=float)
    p.add_argument("--use-bstar", action="store_true")
    p.add_argument("--n-paths", type=int, default=200000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep", help="start:stop:count thresholds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--horizon-cap", type=float)
    p.add_argument("--out", help="CSV path for --sweep")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the invariant checks")
    _model_flags(p)
    p.set_defaults(preset=None)
    for action in p._actions:
        if action.dest == "preset":
            action.choices = sorted(PRESETS) + ["all"]
    p.add_argument("--n-paths", type=int, default=200000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for flag in ("n_paths", "workers", "grid"):
            value = getattr(args, flag, None)
            if value is not None and value < 1:
                raise UsageError(flag.replace("_", "-"), "must be >= 1")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (ParameterError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (QuadratureError, bayes.RootBracketError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
