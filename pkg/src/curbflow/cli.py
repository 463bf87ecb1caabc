"""Command-line interface: solve, price, design, sweep, verify, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io, planner, pricing, solver, verify
from .scenario import ScenarioError, check_supply_sufficiency, load_scenario
from .search import Binomial

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_INFEASIBLE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _range(text: str):
    """Parse 'a:b:n' into n evenly spaced values from a to b."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("range needs at least one point")
    return np.linspace(a, b, n)


def _load(args):
    sc = load_scenario(args.scenario)
    search = getattr(args, "search", None)
    if search == "binomial":
        sc = sc.with_search(Binomial())
    elif search == "piecewise":
        sc = sc.with_search(planner.piecewise_model(sc))
    return sc


def _require_supply(sc):
    rep = check_supply_sufficiency(sc)
    if not rep.feasible:
        raise CliError(f"insufficient parking supply: AV margin {rep.av_margin:.6g}, "
                       f"HV margin {rep.hv_margin:.6g}", EXIT_INFEASIBLE)


def _params(path) -> dict:
    """The scenario document as loaded; it already passed validation."""
    return json.loads(Path(path).read_text())


def _manifest(args, command):
    return io.RunManifest(command=command, scenario_path=str(args.scenario),
                          parameters={"scenario": _params(args.scenario),
                                      **{k: v for k, v in vars(args).items() if k not in ("func", "scenario")}})


def cmd_solve(args) -> int:
    sc = _load(args)
    _require_supply(sc)
    man = _manifest(args, "solve")
    sols = {c: solver.solve(sc, c, args.mode) if sc.demand(c) > 0 else None for c in "ac"}
    out = Path(args.out)
    man.outputs.append(io.write_solution_csv(out / "solution.csv", sols["a"], sols["c"]))
    summary = {"mode": args.mode, "search": sc.search.kind, "classes": io.solution_summary(sols["a"], sols["c"])}
    if args.mode == solver.EQUILIBRIUM:
        summary["p_a"] = sols["a"].level if sols["a"] else None
        summary["p_c"] = sols["c"].level if sols["c"] else None
    else:
        summary["MP_a"] = sols["a"].level if sols["a"] else None
        summary["MP_c"] = sols["c"].level if sols["c"] else None
    man.outputs.append(io.write_json(out / "summary.json", summary))
    man.finish(out)
    print(json.dumps(io._clean({k: v for k, v in summary.items() if k != "classes"}), sort_keys=True))
    return EXIT_OK


def cmd_price(args) -> int:
    sc = _load(args)
    _require_supply(sc)
    man = _manifest(args, "price")
    eq = tuple(solver.solve_equilibrium(sc, c) for c in "ac")
    op = tuple(solver.solve_optimum(sc, c) for c in "ac")
    sched = pricing.optimal_prices(op[0], op[1], sc)
    red = pricing.unpriced_vs_priced_reduction(sc, eq, op)
    out = Path(args.out)
    man.outputs.append(io.write_pricing(out, sched))
    summary = {"TP_min": sched.TP_min, "TC": sched.TC, "net_revenue": sched.net_revenue,
               "reduction_vs_unpriced": red}
    man.outputs.append(io.write_json(out / "pricing_summary.json", summary))
    man.finish(out)
    print(json.dumps(io._clean(summary), sort_keys=True))
    return EXIT_OK


def design_summary(sc, which: str) -> dict:
    sc = sc.with_search(planner.piecewise_model(sc))
    if which == "benchmark":
        d, _ = planner.benchmark_design(sc)
    elif which == "first-best":
        d = planner.first_best(sc)
    else:
        d = planner.second_best(sc)
    ev = planner.tc_closed_form(d, sc)
    bc = planner.bound_constants(sc)
    saving, frac = planner.budget_saving(sc)
    return {
        "theta": d.theta, "k": d.k, "TC": ev.TC, "NP": ev.NP, "reduction": ev.reduction,
        "budget": ev.budget,
        "bounds": {"l52": bc["l52"], "l53": bc["l53"], "l54": bc["l54"]},
        "budget_saving": saving if which == "second-best" else 0.0,
        "budget_saving_fraction": frac if which == "second-best" else 0.0,
    }


def cmd_design(args) -> int:
    sc = _load(args)
    print(json.dumps(io._clean(design_summary(sc, args.which)), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load(args)
    sc = sc.with_search(planner.piecewise_model(sc))
    man = _manifest(args, "sweep")
    res = planner.sweep(sc, args.theta, args.k)
    out = Path(args.out)
    man.outputs.append(io.write_sweep_csv(out, res))
    man.finish(out.parent)
    best = res.argmin
    info = {"cells": int(res.TC.size), "feasible_cells": int(res.feasible.sum())}
    if best is None:
        info["argmin"] = None
    else:
        i, j = best
        info["argmin"] = {"theta": res.thetas[i], "k": res.ks[j], "TC": res.TC[i, j]}
    print(json.dumps(io._clean(info), sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = _load(args)
    rep = verify.run(sc, args.bins, str(args.scenario))
    print(rep.text())
    if args.out:
        out = Path(args.out)
        man = _manifest(args, "verify")
        man.outputs.append(io.write_json(out / "verify.json", rep.as_dict()))
        (out / "verify.txt").write_text(rep.text() + "\n")
        man.outputs.append(out / "verify.txt")
        man.finish(out)
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def reproduction_report(sc) -> dict:
    """Headline figures for one scenario: equilibrium levels, pricing and, when planning data is present, designs."""
    out = {"search": sc.search.kind, "supply": type(sc.supply).__name__}
    eq = tuple(solver.solve_equilibrium(sc, c) for c in "ac")
    op = tuple(solver.solve_optimum(sc, c) for c in "ac")
    out["equilibrium"] = {"p_a": eq[0].level, "p_c": eq[1].level, "span_a": eq[0].span, "span_c": eq[1].span}
    out["optimum"] = {"MP_a": op[0].level, "MP_c": op[1].level, "span_a": op[0].span, "span_c": op[1].span}
    sched = pricing.optimal_prices(op[0], op[1], sc)
    out["pricing"] = {"TC": sched.TC, "TP_min": sched.TP_min,
                      "reduction_vs_unpriced": pricing.unpriced_vs_priced_reduction(sc, eq, op)}
    if sc.planning is not None:
        pw = sc.with_search(planner.piecewise_model(sc))
        out["NP"] = planner.infrastructure_cost(pw)
        out["designs"] = {w: design_summary(sc, w) for w in ("benchmark", "first-best", "second-best")}
        out["reductions"] = planner.reductions(pw)
        rb = planner.reduction_bounds(pw)
        out["bound_maxima"] = {k: v for k, v in rb.items() if k.startswith(("max_", "argmax_"))}
    return out


def cmd_report(args) -> int:
    sc = _load(args)
    _require_supply(sc)
    man = _manifest(args, "report")
    rep = reproduction_report(sc)
    out = Path(args.out)
    man.outputs.append(io.write_json(out / "report.json", rep))
    man.finish(out)
    print(json.dumps(io._clean(rep), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curbflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="equilibrium or optimum parking distributions")
    s.add_argument("--scenario", required=True)
    s.add_argument("--mode", choices=solver.MODES, required=True)
    s.add_argument("--search", choices=("binomial", "piecewise"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("price", help="optimal location prices")
    s.add_argument("--scenario", required=True)
    s.add_argument("--search", choices=("binomial", "piecewise"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("design", help="closed-form planning designs")
    s.add_argument("--scenario", required=True)
    s.add_argument("--which", choices=("benchmark", "first-best", "second-best"), required=True)
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("sweep", help="grid of (theta, k) designs")
    s.add_argument("--scenario", required=True)
    s.add_argument("--theta", type=_range, required=True, help="a:b:n")
    s.add_argument("--k", type=_range, required=True, help="a:b:n")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="cross-check solver, oracle and closed forms")
    s.add_argument("--scenario", required=True)
    s.add_argument("--bins", type=int, default=2000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="headline reproduction figures for a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--search", choices=("binomial", "piecewise"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (planner.InfeasibleDesignError, solver.SupplyInfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except planner.PlanningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (solver.SolverError, verify.oracle.OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
