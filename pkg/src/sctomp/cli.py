"""Command-line front end for the two-stage planner.

Subcommands::

    sctomp spline --corridor C.json [--criterion energy] --out DIR
    sctomp plan   --corridor C.json --model M.json --spline S.json --out DIR
    sctomp plan   --corridor C.json --model M.json --full --out DIR
    sctomp verify --corridor C.json --model M.json --spline S.json --trajectory T.csv
    sctomp full   --corridor C.json --model M.json [--criteria a,b,c] --out DIR

Exit codes: 0 success, 1 input error, 2 stage-1 failure, 3 stage-2 failure,
4 verification failure. Outputs contain no timings, so identical arguments
give identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .corridor import load_corridor
from .errors import (
    CorridorError,
    CorridorParseError,
    PlannerError,
    RegularityError,
    SetupError,
    SplineOptimizationError,
)
from .models import load_model
from .ocp import (
    TranscriptionConfig,
    load_trajectory,
    plot_data,
    solve_min_time,
    verify_trajectory,
)
from .spline import load_spline, save_spline, spline_functionals
from .spline_opt import CRITERIA, SplineConfig, coefficient_ledger, optimize_spline

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_STAGE1 = 2
EXIT_STAGE2 = 3
EXIT_VERIFY = 4

log = logging.getLogger("sctomp")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest(args, criterion=None) -> dict:
    """Run manifest echoed into every output document."""
    doc = {
        "corridor": args.corridor,
        "model": getattr(args, "model", None),
        "criterion": criterion or args.criterion,
        "nodes": args.nodes,
        "seed": args.seed,
    }
    if getattr(args, "spline", None):
        doc["spline"] = args.spline
    return doc


def _read_corridor(path):
    try:
        return load_corridor(path)
    except CorridorParseError as exc:
        raise CliError(f"corridor: {exc}", EXIT_INPUT) from None
    except CorridorError as exc:
        where = f" (region {exc.index})" if exc.index is not None else ""
        raise CliError(f"corridor rejected{where}: {exc}", EXIT_STAGE1) from None


def _read_model(path):
    if path is None:
        raise CliError("--model is required", EXIT_INPUT)
    try:
        return load_model(path)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise CliError(f"model config {path}: {exc}", EXIT_INPUT) from None


def _read_spline(path):
    try:
        return load_spline(path)
    except (OSError, ValueError, TypeError, KeyError, RegularityError) as exc:
        raise CliError(f"spline file {path}: {exc}", EXIT_INPUT) from None


def _run_spline(args, corridor, criterion: str, out: Path):
    config = SplineConfig(seed=args.seed)
    try:
        spline, free, report = optimize_spline(corridor, criterion, config)
    except (SplineOptimizationError, RegularityError) as exc:
        raise CliError(f"stage 1 failed: {exc}", EXIT_STAGE1) from None
    L, E, Et = spline_functionals(spline)
    dof = coefficient_ledger(corridor.m, True, corridor.goal_frame is not None, "constraint")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "spline.json"
    save_spline(spline, path, {
        "criterion": criterion,
        "free": free.tolist(),
        "functionals": {"arc_length": L, "energy": E, "twist": Et},
        "degrees_of_freedom": dof,
        "report": report.to_dict(),
        "manifest": _manifest(args, criterion),
    })
    print(f"[{criterion}] stage 1: m={spline.m} L={L:.6f} E={E:.6f} E_twist={Et:.6f} "
          f"dof={dof} -> {path}")
    return spline


def _active_summary(traj, model, tol=1e-4) -> dict:
    """Share of intervals where each input or path constraint sits at a bound."""
    lbu, ubu = model.input_bounds()
    U = traj.inputs
    out = {}
    for i, name in enumerate(model.input_names):
        hit = (np.abs(U[:, i] - lbu[i]) <= tol) | (np.abs(U[:, i] - ubu[i]) <= tol)
        out[name] = float(hit.mean())
    names = model.path_constraint_names
    if names:
        C = np.array([np.atleast_1d(np.asarray(model.path_constraints(x, u)))
                      for x, u in zip(traj.states[:-1], U)])
        for i, name in enumerate(names):
            out[name] = float((np.abs(C[:, i]) <= tol).mean())
    any_active = np.zeros(len(U), bool)
    for i in range(model.n_u):
        any_active |= (np.abs(U[:, i] - lbu[i]) <= tol) | (np.abs(U[:, i] - ubu[i]) <= tol)
    if names:
        any_active |= np.any(np.abs(C) <= tol, axis=1)
    out["any"] = float(any_active.mean())
    return out


def _run_plan(args, corridor, setup, spline, criterion, out: Path):
    config = TranscriptionConfig(nodes_per_segment=args.nodes)
    try:
        traj = solve_min_time(setup.model, spline, corridor, setup.x0, None, config,
                              setup.terminal_mask, setup.xf)
    except SetupError as exc:
        raise CliError(f"stage 2 setup: {exc}", EXIT_INPUT) from None
    except PlannerError as exc:
        node = getattr(exc, "node", None)
        report = getattr(exc, "report", None)
        msg = f"stage 2 failed: {exc}"
        if node is not None:
            msg += f" (node {node})"
        if report is not None:
            msg += "\n" + json.dumps(report.to_dict(), sort_keys=True)
        raise CliError(msg, EXIT_STAGE2) from None
    active = _active_summary(traj, setup.model)
    traj.meta["manifest"] = _manifest(args, criterion)
    traj.meta["model_setup"] = setup.to_dict()
    traj.meta["active_fraction"] = active
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "trajectory.csv"
    traj.save(csv_path)
    if args.plot_data:
        _dump(out / "plot_data.json", plot_data(traj, setup.model, spline))
    busiest = max((k for k in active if k != "any"), key=lambda k: active[k])
    print(f"[{criterion}] stage 2: total_time={traj.total_time:.6f} s, "
          f"saturated intervals {active['any']:.0%} (most: {busiest} {active[busiest]:.0%}) "
          f"-> {csv_path}")
    return traj


def _verify(corridor, setup, spline, traj_path) -> list[str]:
    try:
        traj = load_trajectory(traj_path, setup.model.n_x)
    except (OSError, ValueError) as exc:
        raise CliError(f"trajectory {traj_path}: {exc}", EXIT_INPUT) from None
    tol = traj.meta.get("config", {}).get("terminal_tol", TranscriptionConfig.terminal_tol)
    return verify_trajectory(traj, setup.model, spline, corridor, terminal_tol=tol)


def cmd_spline(args) -> int:
    corridor = _read_corridor(args.corridor)
    _run_spline(args, corridor, args.criterion, Path(args.out))
    return EXIT_OK


def cmd_plan(args) -> int:
    corridor = _read_corridor(args.corridor)
    setup = _read_model(args.model)
    out = Path(args.out)
    if args.full:
        spline = _run_spline(args, corridor, args.criterion, out)
    elif args.spline:
        spline = _read_spline(args.spline)
    else:
        raise CliError("plan needs --spline or --full", EXIT_INPUT)
    _run_plan(args, corridor, setup, spline, args.criterion, out)
    return EXIT_OK


def cmd_verify(args) -> int:
    corridor = _read_corridor(args.corridor)
    setup = _read_model(args.model)
    if not args.spline or not args.trajectory:
        raise CliError("verify needs --spline and --trajectory", EXIT_INPUT)
    fails = _verify(corridor, setup, _read_spline(args.spline), args.trajectory)
    if fails:
        for f in fails:
            print(f"FAIL {f}")
        return EXIT_VERIFY
    print("all trajectory checks passed")
    return EXIT_OK


def _full_one(args, corridor, setup, criterion, out: Path):
    spline = _run_spline(args, corridor, criterion, out)
    traj = _run_plan(args, corridor, setup, spline, criterion, out)
    fails = _verify(corridor, setup, spline, out / "trajectory.csv")
    if fails:
        raise CliError("verification failed:\n" + "\n".join(fails), EXIT_VERIFY)
    return traj.total_time


def cmd_full(args) -> int:
    corridor = _read_corridor(args.corridor)
    setup = _read_model(args.model)
    out = Path(args.out)
    if not args.criteria:
        _full_one(args, corridor, setup, args.criterion, out)
        return EXIT_OK
    criteria = [c.strip() for c in args.criteria.split(",") if c.strip()]
    bad = [c for c in criteria if c not in CRITERIA]
    if bad or not criteria:
        raise CliError(f"unknown criteria {bad}; choose from {CRITERIA}", EXIT_INPUT)
    with ThreadPoolExecutor(max_workers=len(criteria)) as pool:
        futures = [pool.submit(_full_one, args, corridor, setup, c, out / c) for c in criteria]
    errors = []
    times = {}
    for c, fut in zip(criteria, futures):
        try:
            times[c] = fut.result()
        except CliError as exc:
            errors.append((c, exc))
    _dump(out / "summary.json", {"manifest": _manifest(args), "total_time": times,
                                 "failed": [c for c, _ in errors]})
    for c, exc in errors:
        print(f"[{c}] {exc}", file=sys.stderr)
    if errors:
        return max(exc.code for _, exc in errors)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--corridor", required=True, help="corridor JSON file")
    common.add_argument("--model", help="model config JSON file")
    common.add_argument("--criterion", choices=CRITERIA, default="arc_length",
                        help="stage-1 objective (default: arc_length)")
    common.add_argument("--nodes", type=int, default=25, help="sections per spline segment")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed of the stage-1 jitter")
    common.add_argument("--spline", help="spline JSON file from 'sctomp spline'")
    common.add_argument("--plot-data", action="store_true", help="also write plot_data.json")
    common.add_argument("--full", action="store_true", help="plan: run stage 1 first")
    common.add_argument("--criteria", help="full: comma-separated criteria, run in parallel")
    common.add_argument("--trajectory", help="verify: trajectory CSV")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    parser = argparse.ArgumentParser(prog="sctomp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (
        ("spline", cmd_spline, "stage 1: optimize a PH spline in the corridor"),
        ("plan", cmd_plan, "stage 2: minimum-time trajectory along a spline"),
        ("verify", cmd_verify, "re-check a trajectory against its spline and corridor"),
        ("full", cmd_full, "stage 1, stage 2 and verification"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.nodes < 2:
        print("error: --nodes must be at least 2", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
