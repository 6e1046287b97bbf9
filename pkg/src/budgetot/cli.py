"""Command-line interface: solve, check, generate, evaluate, oracle.

Exit codes: 0 success, 1 infeasible or invalid instance, 2 I/O or usage
error, 3 solver did not converge (outputs are still written).

Every flag can also be given in a JSON config file (``--config``) using the
flag name with dashes replaced by underscores; flags given on the command
line win over the file, and the ``SCOTM_SEED`` environment variable wins over
both for the seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import ArmijoParams, BudgetOTError, BudgetSpec, Marginals, SolverConfig
from .feasibility import PrioritySpec, priority_bounds, nonempty_bounds
from .generators import GENERATORS
from .io import (
    FileFormatError,
    read_index_csv,
    read_json,
    read_matrix_csv,
    read_pairs_csv,
    read_vector_csv,
    write_index_csv,
    write_json,
    write_matrix_csv,
    write_triplets_csv,
    write_vector_csv,
    dumps_json,
)
from .metrics import density_percent, pppm, precision_recall_f1, psmbpp, topk_coverage
from .objective import ObjectiveParams

log = logging.getLogger("budgetot")

EXIT_OK, EXIT_INFEASIBLE, EXIT_IO, EXIT_NOT_CONVERGED = 0, 1, 2, 3
SEED_ENV = "SCOTM_SEED"


class UsageError(Exception):
    pass


_CFG = SolverConfig()
_ARM = ArmijoParams()
SOLVER_DEFAULTS = {
    "gamma": _CFG.gamma, "q": _CFG.q, "sigma0": _CFG.sigma0, "theta": _CFG.theta,
    "eps_base": _CFG.eps_base, "eps_scale": _CFG.eps_scale, "outer_tol": _CFG.outer_tol,
    "max_outer": _CFG.max_outer, "max_inner": _CFG.max_inner, "zero_tol": _CFG.zero_tol,
    "engine": _CFG.engine, "strict_feasibility": _CFG.strict_feasibility,
    "complete_support": _CFG.complete_support, "refine_support": _CFG.refine_support,
    "armijo_step": _ARM.init_step, "armijo_shrink": _ARM.shrink, "armijo_c1": _ARM.c1,
    "armijo_max_backtracks": _ARM.max_backtracks, "seed": _CFG.seed,
}

DEFAULTS = {
    "solve": {**SOLVER_DEFAULTS, "a": None, "b": None, "rho_s": None, "rho_t": None, "out": "plan.csv",
              "triplets": None, "report": None, "figures": True, "timing": False},
    "check": {"a": None, "b": None, "m": None, "n": None, "rho_s": None, "rho_t": None,
              "prioritized": None, "h": None, "meta": None},
    "generate": {"m": None, "n": None, "seed": 0, "rho_s": 9, "rho_t": 5, "r": 0.1, "h": 8,
                 "out_dir": ".", "normalize": True},
    "evaluate": {"metrics": "density", "zero_tol": _CFG.zero_tol, "prioritized": None, "meta": None,
                 "rho_s": None, "ranks": None, "k": 1, "cap": None, "truth": None, "out": None},
    "oracle": {"a": None, "b": None, "rho_s": None, "rho_t": None, "gamma": _CFG.gamma, "q": _CFG.q,
               "out": None, "report": None, "seed": 0},
}
REQUIRED = {"solve": ("cost", "rho_s", "rho_t"), "check": (), "generate": ("kind",),
            "evaluate": ("plan",), "oracle": ("cost", "rho_s", "rho_t")}
_ALL_KEYS = {k for d in DEFAULTS.values() for k in d} | {k for r in REQUIRED.values() for k in r} | {"log_level"}


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--gamma", type=float, help=f"regularization weight (default {_CFG.gamma})")
    g.add_argument("--q", type=float, help=f"entropy deformation in [0, 1) (default {_CFG.q})")
    g.add_argument("--sigma0", type=float, help=f"initial penalty weight (default {_CFG.sigma0})")
    g.add_argument("--theta", type=float, help=f"penalty growth factor (default {_CFG.theta})")
    g.add_argument("--eps-base", type=float, help=f"inner tolerance decay (default {_CFG.eps_base})")
    g.add_argument("--eps-scale", type=float, help=f"inner tolerance at k=0 (default {_CFG.eps_scale})")
    g.add_argument("--outer-tol", type=float, help=f"coupling residual target (default {_CFG.outer_tol})")
    g.add_argument("--max-outer", type=int)
    g.add_argument("--max-inner", type=int)
    g.add_argument("--zero-tol", type=float)
    g.add_argument("--engine", choices=["auto", "numba", "numpy"])
    g.add_argument("--strict-feasibility", action=argparse.BooleanOptionalAction,
                   help="refuse instances failing the sufficient conditions (default on)")
    g.add_argument("--complete-support", action=argparse.BooleanOptionalAction,
                   help="extend the final support greedily up to the budgets (default on)")
    g.add_argument("--refine-support", action=argparse.BooleanOptionalAction,
                   help="re-solve the objective on the final support (default on)")
    g.add_argument("--armijo-step", type=float)
    g.add_argument("--armijo-shrink", type=float)
    g.add_argument("--armijo-c1", type=float)
    g.add_argument("--armijo-max-backtracks", type=int)


def build_parser() -> argparse.ArgumentParser:
    sup = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="budgetot", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name, **kw):
        p = sub.add_parser(name, argument_default=sup, **kw)
        p.add_argument("--config", help="JSON file with flag values")
        p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        return p

    p = common("solve", help="solve a budget-constrained transport instance")
    p.add_argument("--cost", help="cost matrix CSV")
    p.add_argument("--a", help="row marginal CSV (default uniform)")
    p.add_argument("--b", help="column marginal CSV (default uniform)")
    p.add_argument("--rho-s", type=int, help="max non-zeros per row")
    p.add_argument("--rho-t", type=int, help="max non-zeros per column")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="dense plan CSV (default plan.csv)")
    p.add_argument("--triplets", help="sparse plan CSV (default <out>.triplets.csv)")
    p.add_argument("--report", help="JSON report; figures are written next to it")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, help="render report figures")
    p.add_argument("--timing", action=argparse.BooleanOptionalAction,
                   help="include wall time in the report (breaks byte-identical reruns)")
    _add_solver_flags(p)

    p = common("check", help="evaluate the sufficient feasibility and priority conditions")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--m", type=int, help="rows, for uniform a")
    p.add_argument("--n", type=int, help="columns, for uniform b")
    p.add_argument("--rho-s", type=int)
    p.add_argument("--rho-t", type=int)
    p.add_argument("--prioritized", help="index CSV of prioritized rows")
    p.add_argument("--h", type=int)
    p.add_argument("--meta", help="meta.json written by 'generate'")

    p = common("generate", help="write a synthetic instance")
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rho-s", type=int)
    p.add_argument("--rho-t", type=int)
    p.add_argument("--r", type=float, help="prioritized fraction (tasks)")
    p.add_argument("--h", type=int, help="guaranteed matches per prioritized row (tasks)")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction,
                   help="scale gaussian2 costs to [0, 1] (default on)")
    p.add_argument("--out-dir")

    p = common("evaluate", help="compute metrics of a plan")
    p.add_argument("--plan", help="dense plan CSV")
    p.add_argument("--metrics", help="comma list from density,pppm,psmbpp,topk,prf")
    p.add_argument("--zero-tol", type=float)
    p.add_argument("--prioritized")
    p.add_argument("--meta")
    p.add_argument("--rho-s", type=int)
    p.add_argument("--ranks", help="integer rank matrix CSV")
    p.add_argument("--k", type=int)
    p.add_argument("--cap", type=int, help="per-row slot cap for top-k (default rho-t)")
    p.add_argument("--truth", help="CSV of true i,j pairs")
    p.add_argument("--out")

    p = common("oracle", help="brute-force optimum of a tiny instance")
    p.add_argument("--cost")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--rho-s", type=int)
    p.add_argument("--rho-t", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--report")
    return parser


def resolve_options(command: str, ns: argparse.Namespace, environ=None) -> dict:
    """Merge defaults, config file, explicit flags and the seed variable."""
    environ = os.environ if environ is None else environ
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    opts = dict(DEFAULTS[command])
    cfg_path = flags.pop("config", None)
    if cfg_path is not None:
        cfg = read_json(cfg_path)
        if not isinstance(cfg, dict):
            raise UsageError(f"{cfg_path}: config must be a JSON object")
        section = cfg.pop(command, {}) if isinstance(cfg.get(command), dict) else {}
        for other in DEFAULTS:
            cfg.pop(other, None)
        merged = {**cfg, **section}
        unknown = sorted(set(merged) - _ALL_KEYS)
        if unknown:
            raise UsageError(f"{cfg_path}: unknown keys {unknown}")
        opts.update({k: v for k, v in merged.items() if k in DEFAULTS[command] or k in REQUIRED[command]
                     or k == "log_level"})
    opts.update(flags)
    if SEED_ENV in environ and "seed" in opts:
        try:
            opts["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"{SEED_ENV}={environ[SEED_ENV]!r} is not an integer") from None
    missing = [k for k in REQUIRED[command] if opts.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return opts


def solver_config(opts: dict) -> SolverConfig:
    arm = ArmijoParams(opts["armijo_step"], opts["armijo_shrink"], opts["armijo_c1"],
                       int(opts["armijo_max_backtracks"]))
    names = {f.name for f in dataclasses.fields(SolverConfig)} - {"armijo"}
    return SolverConfig(armijo=arm, **{k: opts[k] for k in names})


def _marginals(opts: dict, m: int, n: int) -> Marginals:
    u = Marginals.uniform(m, n)
    a = read_vector_csv(opts["a"]) if opts.get("a") else u.a
    b = read_vector_csv(opts["b"]) if opts.get("b") else u.b
    return Marginals(a, b)


def _figure_paths(report: Path) -> tuple:
    stem = report.with_suffix("")
    return Path(f"{stem}_plan.png"), Path(f"{stem}_residuals.png")


def cmd_solve(opts: dict) -> int:
    from .solver import solve
    from .core import MaxInnerExceeded, MaxOuterExceeded

    C = read_matrix_csv(opts["cost"])
    ab = _marginals(opts, *C.shape)
    budget = BudgetSpec(int(opts["rho_s"]), int(opts["rho_t"]))
    cfg = solver_config(opts)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MaxInnerExceeded)
        warnings.simplefilter("always", MaxOuterExceeded)
        rep = solve(C, ab, budget, cfg)
    for w in caught:
        log.warning("%s", w.message)
    T = rep.final_plan.values
    out = Path(opts["out"])
    write_matrix_csv(out, T)
    trip = Path(opts["triplets"]) if opts.get("triplets") else out.with_suffix(".triplets.csv")
    write_triplets_csv(trip, T, cfg.zero_tol)
    summary = {
        "converged": rep.converged,
        "objective_G": rep.objective_G,
        "residual": rep.residual,
        "stationarity": rep.stationarity,
        "density_percent": density_percent(T, cfg.zero_tol),
        "outer_iters": rep.outer_iters,
        "total_inner_iters": rep.total_inner_iters,
    }
    if opts.get("report"):
        report = Path(opts["report"])
        body = rep.to_dict(include_timing=bool(opts["timing"]))
        body["instance"] = {"m": C.shape[0], "n": C.shape[1], "rho_s": budget.rho_s, "rho_t": budget.rho_t}
        body["density_percent"] = summary["density_percent"]
        write_json(report, body)
        if opts["figures"]:
            from .plotting import plot_plan_heatmap, plot_residual_history

            plan_png, res_png = _figure_paths(report)
            plot_plan_heatmap(T, plan_png, zero_tol=cfg.zero_tol)
            plot_residual_history(rep.per_outer, res_png, cfg.outer_tol)
    for k, v in summary.items():
        print(f"{k}: {v}")
    if not rep.converged:
        log.error("solver stopped before reaching outer_tol; outputs written")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _priority_from(opts: dict):
    meta = read_json(opts["meta"]) if opts.get("meta") else {}
    prio = read_index_csv(opts["prioritized"]) if opts.get("prioritized") else meta.get("prioritized")
    return meta, prio


def cmd_check(opts: dict) -> int:
    meta, prio = _priority_from(opts)
    for key in ("rho_s", "rho_t", "h"):
        if opts.get(key) is None and key in meta:
            opts[key] = meta[key]
    missing = [k for k in ("rho_s", "rho_t") if opts.get(k) is None]
    if missing:
        raise UsageError("missing " + ", ".join("--" + k.replace("_", "-") for k in missing) + " (or --meta)")
    m = opts.get("m") or meta.get("m")
    n = opts.get("n") or meta.get("n")
    if opts.get("a"):
        m = len(read_vector_csv(opts["a"]))
    if opts.get("b"):
        n = len(read_vector_csv(opts["b"]))
    if not m or not n:
        raise UsageError("give --a/--b files or --m/--n for uniform marginals")
    ab = _marginals(opts, int(m), int(n))
    budget = BudgetSpec(int(opts["rho_s"]), int(opts["rho_t"]))
    budget.check_shape(ab.m, ab.n)
    ok = True
    labels = {"4": "max(a) <= sum of rho_s-1 smallest b", "5": "max(b) <= sum of rho_t-1 smallest a"}
    for key, (lhs, rhs) in nonempty_bounds(ab, budget).items():
        good = lhs <= rhs + 1e-12
        ok &= good
        print(f"condition ({key}): {'pass' if good else 'FAIL'}  {lhs:.17g} <= {rhs:.17g}  [{labels[key]}]")
    if prio is not None and opts.get("h") is not None:
        bounds = priority_bounds(ab, budget, PrioritySpec(prio, int(opts["h"])))
        have, need = bounds["6"]
        good = have >= need - 1e-12
        ok &= good
        print(f"condition (6): {'pass' if good else 'FAIL'}  {have:.17g} >= {need:.17g}  "
              "[smallest prioritized a >= sum of h largest b]")
        have, need = bounds["7"]
        print(f"condition (7): {'pass' if have >= need - 1e-12 else 'fail'}  {have:.17g} >= {need:.17g}  "
              "[column analogue, informational]")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_generate(opts: dict) -> int:
    kind = opts["kind"]
    seed = int(opts["seed"])
    if kind == "gaussian2":
        inst = GENERATORS[kind](m=opts["m"] or 30, n=opts["n"] or 30, seed=seed, normalize=bool(opts["normalize"]))
    elif kind == "tasks":
        n = opts["n"] or opts["m"] or 32
        inst = GENERATORS[kind](n=n, m=opts["m"] or n, rho_s=int(opts["rho_s"]), rho_t=int(opts["rho_t"]),
                                r=float(opts["r"]), h=int(opts["h"]), seed=seed)
    else:
        inst = GENERATORS[kind](m=opts["m"] or 5, n=opts["n"] or 4, seed=seed)
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "cost.csv", inst.cost)
    write_vector_csv(out / "a.csv", inst.marginals.a)
    write_vector_csv(out / "b.csv", inst.marginals.b)
    if inst.prioritized:
        write_index_csv(out / "prioritized.csv", inst.prioritized)
    if inst.ranks is not None:
        write_matrix_csv(out / "ranks.csv", inst.ranks)
    if inst.points is not None:
        write_matrix_csv(out / "points_x.csv", inst.points[0])
        write_matrix_csv(out / "points_y.csv", inst.points[1])
    write_json(out / "meta.json", inst.meta)
    print(f"wrote {kind} instance {inst.cost.shape[0]}x{inst.cost.shape[1]} to {out}")
    return EXIT_OK


def cmd_evaluate(opts: dict) -> int:
    T = read_matrix_csv(opts["plan"])
    tol = float(opts["zero_tol"])
    meta, prio = _priority_from(opts)
    rho_s = opts.get("rho_s") or meta.get("rho_s")
    wanted = [w.strip() for w in str(opts["metrics"]).split(",") if w.strip()]
    res = {}
    for w in wanted:
        if w == "density":
            res["density_percent"] = density_percent(T, tol)
        elif w == "pppm":
            res["pppm"] = pppm(T, _need(prio, "prioritized rows"), tol)
        elif w == "psmbpp":
            rs = _need(rho_s, "--rho-s")
            res["psmbpp"] = psmbpp(T, _need(prio, "prioritized rows"), BudgetSpec(int(rs), 1), tol)
        elif w == "topk":
            R = read_matrix_csv(_need(opts.get("ranks"), "--ranks")).astype(np.int64)
            cap = opts.get("cap") or meta.get("rho_t") or T.shape[1]
            res[f"top{int(opts['k'])}_percent"] = topk_coverage(T, R, int(opts["k"]), int(cap), tol)
            res["topk_denominator"] = "sum over rows of min(cap, #columns with rank <= k)"
        elif w == "prf":
            p, r, f = precision_recall_f1(T, read_pairs_csv(_need(opts.get("truth"), "--truth")), tol)
            res.update({"precision": p, "recall": r, "f1": f})
        else:
            raise UsageError(f"unknown metric {w!r}")
    text = dumps_json(res)
    if opts.get("out"):
        Path(opts["out"]).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _need(value, what):
    if value is None:
        raise UsageError(f"metric needs {what}")
    return value


def cmd_oracle(opts: dict) -> int:
    from .oracle import global_oracle

    C = read_matrix_csv(opts["cost"])
    ab = _marginals(opts, *C.shape)
    budget = BudgetSpec(int(opts["rho_s"]), int(opts["rho_t"]))
    p = ObjectiveParams(float(opts["gamma"]), float(opts["q"]))
    plan, val = global_oracle(C, ab, budget, p)
    if opts.get("out"):
        write_matrix_csv(opts["out"], plan.values)
    if opts.get("report"):
        write_json(opts["report"], {"objective_G": val, "plan": plan.values, "gamma": p.gamma, "q": p.q,
                                    "rho_s": budget.rho_s, "rho_t": budget.rho_t})
    print(f"objective_G: {val!r}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "generate": cmd_generate, "evaluate": cmd_evaluate,
            "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = ns.command
    try:
        opts = resolve_options(command, ns)
        logging.basicConfig(level=opts.get("log_level") or "WARNING", format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[command](opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, FileFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BudgetOTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
