"""Command-line front end.

Exit codes: 0 when every check passes, 2 when a verification or ordering
check fails, 1 on malformed input or solver errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dual import EquilibriumSolution, solve_sorte
from .errors import SchemaError, ScaleError, SorteError, ValidationError
from .exponential import buhlmann_equilibrium
from .market import to_csv
from .oracle import brute_force_primal
from .scenario import Scenario, load_scenario
from .utility import UtilityProfile
from .verification import check_fair_pricing, check_pareto, deterministic_allocation, verify_sorte

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
ORACLE_TOL = 1e-5


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _solve_report(sc: Scenario, args) -> tuple[dict, bool]:
    sol = solve_sorte(sc.model, sc.profile, sc.spec, sc.A)
    report = verify_sorte(sc.model, sc.profile, sc.spec, sc.A, sol, tol=args.tol)
    extra = {
        "pareto_B_A": check_pareto(sc.model, sc.profile, sc.spec, sol, "B_A", trials=args.trials, seed=args.seed),
        "pareto_Q_budget": check_pareto(
            sc.model, sc.profile, sc.spec, sol, "Q_budget", trials=args.trials, seed=args.seed
        ),
        "fair_pricing": check_fair_pricing(sc.model, sc.spec, sol.pricing, seed=args.seed),
    }
    ok = report.passed and all(extra.values())
    out = {
        "solution": sol.to_dict(sc.model),
        "report": report.to_dict(),
        "checks": extra,
        "diagnostics": {
            k: sol.diagnostics[k]
            for k in ("clearing_residual", "budget_residual", "foc_residual", "dv_condition", "warnings")
            if k in sol.diagnostics
        },
    }
    if args.oracle:
        try:
            bf = brute_force_primal(sc.model, sc.profile, sc.spec, sc.A, seed=args.seed)
        except ScaleError as exc:
            print(f"warning: oracle skipped: {exc}", file=sys.stderr)
        else:
            dv = abs(bf.value - sol.primal_value)
            dy = float(np.max(np.abs(bf.Y - sol.Y)))
            out["oracle"] = {"value": bf.value, "value_discrepancy": dv, "allocation_discrepancy": dy}
            ok = ok and dv <= ORACLE_TOL and dy <= 10 * ORACLE_TOL
    out["passed"] = ok
    return out, ok


def _solve_text(sc: Scenario, out: dict) -> str:
    sol = out["solution"]
    m = sc.model
    lines = [f"SORTE  N={m.n_agents}  S={m.n_scenarios}  constraints={sc.spec.label}  A={_fmt(sc.A)}", ""]
    lines.append("allocation Y")
    lines.append(to_csv(sol["Y"], m.scenario_ids, m.agent_ids).rstrip())
    lines.append("")
    lines.append("pricing densities dQ/dP")
    lines.append(to_csv(sol["densities"], m.scenario_ids, m.agent_ids).rstrip())
    lines.append("")
    lines.append("budgets a: " + ", ".join(f"{n}={_fmt(v)}" for n, v in zip(m.agent_ids, sol["a"])))
    lines.append(f"lambda: {_fmt(sol['lambda'])}")
    lines.append(f"primal value: {_fmt(sol['primal_value'])}")
    lines.append(f"dual value: {_fmt(sol['dual_value'])}")
    lines.append(f"gap: {sol['gap']:.3e}")
    lines.append("")
    lines.append("checks")
    for c in out["report"]["checks"]:
        lines.append(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']:<18} residual {c['residual']:.3e}")
    for name, passed in out["checks"].items():
        lines.append(f"  {'PASS' if passed else 'FAIL'}  {name}")
    if "oracle" in out:
        o = out["oracle"]
        lines.append(
            f"  oracle value {_fmt(o['value'])}  value discrepancy {o['value_discrepancy']:.3e}"
            f"  allocation discrepancy {o['allocation_discrepancy']:.3e}"
        )
    gains = out["report"]["utility_gain"]
    lines.append("utility change vs no trade: " + ", ".join(f"{n}={_fmt(g)}" for n, g in zip(m.agent_ids, gains)))
    lines.append("")
    lines.append("PASS" if out["passed"] else "FAIL")
    return "\n".join(lines)


def _solve_csv(sc: Scenario, out: dict) -> str:
    sol = out["solution"]
    m = sc.model
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "a", "lambda", *(f"Y:{s}" for s in m.scenario_ids), *(f"Q:{s}" for s in m.scenario_ids)])
    for n, agent in enumerate(m.agent_ids):
        w.writerow([agent, repr(sol["a"][n]), repr(sol["lambda"]), *map(repr, sol["Y"][n]), *map(repr, sol["densities"][n])])
    return buf.getvalue()


def cmd_solve(args) -> int:
    sc = load_scenario(args.path)
    out, ok = _solve_report(sc, args)
    if args.format == "json":
        _emit(json.dumps(out, indent=2))
    elif args.format == "csv":
        _emit(_solve_csv(sc, out))
    else:
        _emit(_solve_text(sc, out))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    sc = load_scenario(args.path)
    try:
        data = json.loads(Path(args.solution).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"solution is not valid JSON: {exc}") from None
    if isinstance(data, dict) and "solution" in data:
        data = data["solution"]
    try:
        sol = EquilibriumSolution.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed solution document: {exc}") from None
    if sol.Y.shape != sc.model.endowments.shape or sol.densities.shape != sc.model.endowments.shape:
        raise ValidationError("solution dimensions do not match the scenario")
    report = verify_sorte(sc.model, sc.profile, sc.spec, sc.A, sol, tol=args.tol)
    if args.format == "json":
        _emit(json.dumps(report.to_dict(), indent=2))
    else:
        for c in report.checks:
            _emit(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<18} residual {c.residual:.3e}  {c.detail}")
        _emit("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_compare(args) -> int:
    sc = load_scenario(args.path)
    m, N = sc.model, sc.model.n_agents
    a = np.full(N, sc.A / N) if args.budget_vector is None else np.asarray(args.budget_vector, dtype=float)
    if a.shape != (N,):
        raise ValidationError(f"--budget-vector needs {N} entries")
    if abs(a.sum() - sc.A) > 1e-9 * max(1.0, abs(sc.A)):
        raise ValidationError(f"budget vector sums to {a.sum()!r}, expected A = {sc.A!r}")
    profile = sc.profile
    det = deterministic_allocation(m, profile, sc.A)
    sol = solve_sorte(m, profile, sc.spec, sc.A)
    alphas, gammas = profile.alphas, profile.gammas
    if not np.allclose(gammas, 1.0):
        raise ValidationError("compare supports unweighted exponential profiles only")
    buhl = buhlmann_equilibrium(m, alphas, a)
    rows = [("deterministic", det.value), ("buhlmann", buhl.value), ("sorte", sol.primal_value)]
    checks = {"deterministic<=sorte": det.value <= sol.primal_value + args.tol}
    if sc.spec.is_full:
        at_hat = buhlmann_equilibrium(m, alphas, sol.a)
        rows.append(("buhlmann_at_a_hat", at_hat.value))
        checks["buhlmann_at_a_hat==sorte"] = abs(at_hat.value - sol.primal_value) <= args.tol
        checks["buhlmann<=sorte"] = buhl.value <= sol.primal_value + args.tol
    if sc.spec.is_none:
        checks["deterministic==sorte"] = abs(det.value - sol.primal_value) <= args.tol
    ok = all(checks.values())
    if args.format == "json":
        _emit(json.dumps({"values": dict(rows), "budget_vector": a.tolist(), "checks": checks, "passed": ok}, indent=2))
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([name for name, _ in rows])
        w.writerow([repr(v) for _, v in rows])
        _emit(buf.getvalue())
    else:
        for name, v in rows:
            _emit(f"{name:<20} {_fmt(v)}")
        for name, passed in checks.items():
            _emit(f"{'PASS' if passed else 'FAIL'}  {name}")
    return EXIT_OK if ok else EXIT_FAIL


def _sweep_point(sc: Scenario, param: str, x: float, agent: int | None):
    A, profile = sc.A, sc.profile
    if param == "A":
        A = x
    else:
        gammas = profile.gammas.copy()
        if agent is None:
            gammas[:] = x
        else:
            gammas[agent] = x
        profile = UtilityProfile.exponential(profile.alphas, gammas)
    return solve_sorte(sc.model, profile, sc.spec, A)


def cmd_sweep(args) -> int:
    sc = load_scenario(args.path)
    if args.agent is not None and not 0 <= args.agent < sc.model.n_agents:
        raise ValidationError(f"--agent must be in [0, {sc.model.n_agents})")
    grid = list(args.grid)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        sols = list(pool.map(lambda x: _sweep_point(sc, args.param, x, args.agent), grid))
    ok = True
    if args.param == "A":
        pts = sorted({x: s.primal_value for x, s in zip(grid, sols)}.items())
        ok = all(v1 < v2 for (_, v1), (_, v2) in zip(pts, pts[1:]))
        if not ok:
            print("error: systemic value is not strictly increasing in A", file=sys.stderr)
    header = [args.param, "value", "lambda", *(f"a:{n}" for n in sc.model.agent_ids)]
    table = [[x, s.primal_value, s.lam, *s.a.tolist()] for x, s in zip(grid, sols)]
    if args.format == "json":
        _emit(json.dumps({"columns": header, "rows": table, "passed": ok}, indent=2))
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])
        _emit(buf.getvalue())
    return EXIT_OK if ok else EXIT_FAIL


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("expected at least one finite number")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-9, help="verification tolerance (default 1e-9)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised checks and the oracle")
    common.add_argument("--format", choices=("text", "csv", "json"), default="text")

    parser = argparse.ArgumentParser(prog="sorte", description="Compute and verify systemic optimal risk transfer equilibria.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve a scenario document and verify the result")
    p.add_argument("path")
    p.add_argument("--oracle", action="store_true", help="also run the brute-force primal oracle")
    p.add_argument("--trials", type=int, default=200, help="random directions per Pareto check")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", parents=[common], help="verify a solution produced by 'solve --format json'")
    p.add_argument("path")
    p.add_argument("solution")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", parents=[common], help="deterministic, Buhlmann and SORTE values side by side")
    p.add_argument("path")
    p.add_argument("--budget-vector", type=_floats, default=None, help="Buhlmann budgets, e.g. '0,0'")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="solve over a grid of A or weight values")
    p.add_argument("path")
    p.add_argument("--param", choices=("A", "gamma"), required=True)
    p.add_argument("--grid", type=_floats, required=True, help="comma or space separated values")
    p.add_argument("--agent", type=int, default=None, help="for gamma sweeps: vary only this agent (0-based)")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SorteError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
