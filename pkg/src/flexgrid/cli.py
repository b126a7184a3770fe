"""flexgrid command line.

Exit codes: 0 success, 2 input error, 3 power-flow failure, 4 violations
remain after correction, 5 optimizer infeasible.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .fors import ForFormatError, ForValidationError, load_for, segment_2d, segment_3d
from .grid import GridFormatError, GridValidationError, load_grid
from .hull import DegenerateHullError, for_hull, half_spaces
from .opman import METHODS, DispatchResult, correct, detect, displacement, robustness_sweep
from .optimize import Limits
from .powerflow import PowerFlowError, solve_power_flow
from .scenario import (
    Scenario,
    ScenarioError,
    config_to_dict,
    load_fors,
    load_scenario,
    reference_scenario,
    write_scenario,
)

EXIT_OK, EXIT_INPUT, EXIT_PF, EXIT_VIOLATIONS, EXIT_INFEASIBLE = 0, 2, 3, 4, 5
INPUT_ERRORS = (
    GridFormatError, GridValidationError, ForFormatError, ForValidationError,
    ScenarioError, DegenerateHullError, OSError,
)
STATUS_EXIT = {
    "success": EXIT_OK, "violations": EXIT_VIOLATIONS, "not-member": EXIT_VIOLATIONS,
    "infeasible": EXIT_INFEASIBLE, "pf-diverged": EXIT_PF,
}

log = logging.getLogger("flexgrid")


class InputError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def config_hash(payload: dict) -> str:
    """sha256 of canonical JSON: sorted keys, no whitespace, shortest float repr."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def _manifest(out: Path, command: str, inputs: dict, payload: dict, times: dict, status: int) -> None:
    write_json(out / "manifest.json", {
        "command": command,
        "inputs": {k: {"path": v, "sha256": file_digest(v)} for k, v in sorted(inputs.items())},
        "config_hash": config_hash(payload),
        "tool_version": tool_version(),
        "wall_times": times,
        "exit_status": status,
    })


# -- scenario assembly -------------------------------------------------------


def scenario_from_args(args) -> Scenario:
    if getattr(args, "scenario", None):
        sc = load_scenario(args.scenario)
    elif getattr(args, "grid", None):
        grid = load_grid(args.grid)
        fors, paths = load_fors(args.fors) if getattr(args, "fors", None) else ({}, {})
        sc = Scenario(grid, fors, Limits.from_grid(grid), inputs={"grid": str(args.grid), **paths})
    else:
        raise InputError("need --scenario FILE or --grid FILE")
    if getattr(args, "method", None):
        sc = replace(sc, method=args.method)
    if getattr(args, "max_iters", None) is not None:
        if args.max_iters < 0:
            raise InputError("--max-iters must be >= 0")
        sc = replace(sc, config=replace(sc.config, max_iters=args.max_iters))
    _cross_check(sc)
    return sc


def _cross_check(sc: Scenario) -> None:
    for i in sorted(sc.fors):
        if not 0 <= i < sc.grid.n_buses:
            raise InputError(f"FOR for bus {i}: bus does not exist in the grid")
        if i == sc.grid.slack:
            raise InputError(f"FOR for bus {i}: bus is the slack")
    missing = [i for i in sc.grid.flexible if i not in sc.fors]
    if missing:
        raise InputError(f"bus(es) {missing} flagged flexible but have no FOR")


def _payload(sc: Scenario) -> dict:
    return {
        "grid": sc.grid.to_dict(),
        "fors": {str(i): f.to_dict() for i, f in sorted(sc.fors.items())},
        "limits": sc.limits.to_dict(),
        "method": sc.method,
        "config": config_to_dict(sc.config),
    }


# -- artifacts ----------------------------------------------------------------


def _bus_rows(sc: Scenario, v_init, v_opt=None):
    rows = []
    for i in range(sc.grid.n_buses):
        lo, hi = sc.limits.vmin[i], sc.limits.vmax[i]
        tol = sc.config.v_tol

        def flag(v):
            return "VIOLATION" if v < lo - tol or v > hi + tol else "ok"

        row = [i, float(v_init[i])]
        if v_opt is not None:
            row.append(float(v_opt[i]))
        row += [lo, hi, flag(v_init[i])]
        if v_opt is not None:
            row.append(flag(v_opt[i]))
        rows.append(row)
    return rows


def _branch_rows(sc: Scenario, st_init, st_opt=None):
    rows = []
    tol = sc.config.i_tol
    r0 = st_init.branch_max() / sc.limits.imax
    r1 = st_opt.branch_max() / sc.limits.imax if st_opt is not None else None
    for b in range(sc.grid.n_branches):
        row = [b, float(r0[b])]
        if r1 is not None:
            row.append(float(r1[b]))
        row.append("VIOLATION" if r0[b] > 1 + tol else "ok")
        if r1 is not None:
            row.append("VIOLATION" if r1[b] > 1 + tol else "ok")
        rows.append(row)
    return rows


def write_dispatch_artifacts(out: Path, sc: Scenario, res: DispatchResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", res.to_dict())
    if res.initial_state is not None:
        fin = res.final_state
        write_csv(out / "buses.csv", ["id", "v_init", "v_opt", "vmin", "vmax", "status_init", "status_opt"],
                  _bus_rows(sc, res.initial_state.v, fin.v))
        write_csv(out / "branches.csv", ["id", "ratio_init", "ratio_opt", "status_init", "status_opt"],
                  _branch_rows(sc, res.initial_state, fin))
    rows = []
    for i in sorted(sc.fors):
        dp, dq = res.applied.get(i, (0.0, 0.0))
        p, q, v = res.points.get(i, (*sc.fors[i].op0[:2], float("nan")))
        rows.append([i, dp, dq, p, q, v, res.membership.get(i, False)])
    write_csv(out / "dispatch.csv", ["bus", "dp", "dq", "p_final", "q_final", "v_final", "member"], rows)


def write_geometry(out: Path, sc: Scenario) -> None:
    g = out / "geometry"
    g.mkdir(parents=True, exist_ok=True)
    for i, f in sorted(sc.fors.items()):
        if sc.method == "convex":
            hull = for_hull(f)
            write_json(g / f"hull_{i}.json", {**hull.to_dict(), "half_spaces": half_spaces(hull, i).to_dict()})
        elif sc.method == "milp3d":
            write_json(g / f"segments_{i}.json", segment_3d(f, sc.config.k_max, sc.config.l_max).to_dict())
        else:
            write_json(g / f"segments_{i}.json", segment_2d(f, sc.config.k_max).to_dict())


# -- commands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    ok = True
    for path in args.paths or []:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            ok = False
            continue
        loader = load_for if isinstance(data, dict) and "slices" in data else (
            load_scenario if isinstance(data, dict) and "fors" in data else load_grid)
        try:
            loader(path)
            print(f"{path}: ok")
        except INPUT_ERRORS as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            ok = False
    if args.grid or args.scenario:
        try:
            sc = scenario_from_args(args)
            print(f"{args.scenario or args.grid}: ok ({sc.grid.n_buses} buses, {len(sc.fors)} FORs)")
        except (*INPUT_ERRORS, InputError) as exc:
            print(f"{args.scenario or args.grid}: {exc}", file=sys.stderr)
            ok = False
    elif args.fors:
        try:
            fors, _ = load_fors(args.fors)
            print(f"{args.fors}: ok ({len(fors)} FORs)")
        except INPUT_ERRORS as exc:
            print(f"{args.fors}: {exc}", file=sys.stderr)
            ok = False
    if not (args.paths or args.grid or args.scenario or args.fors):
        print("validate: nothing to check (give paths, --grid, --fors or --scenario)", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if ok else EXIT_INPUT


def cmd_powerflow(args) -> int:
    t0 = time.perf_counter()
    sc = scenario_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        state = solve_power_flow(sc.grid)
    except PowerFlowError as exc:
        print(f"power flow failed: {exc} (mismatch {exc.mismatch:.3e})", file=sys.stderr)
        _manifest(out, "powerflow", sc.inputs, _payload(sc), {"total": time.perf_counter() - t0}, EXIT_PF)
        return EXIT_PF
    rep = detect(state, sc.limits, sc.config.v_tol, sc.config.i_tol)
    write_csv(out / "buses.csv", ["id", "v_init", "vmin", "vmax", "status_init"], _bus_rows(sc, state.v))
    write_csv(out / "branches.csv", ["id", "ratio_init", "status_init"], _branch_rows(sc, state))
    write_json(out / "report.json", {"iterations": state.iterations, "mismatch": state.mismatch,
                                     "violations": rep.to_dict()})
    print(f"converged in {state.iterations} iterations, mismatch {state.mismatch:.2e}")
    for x in rep.voltage:
        print(f"  bus {x.bus}: v={x.v:.4f} beyond {x.bound:.3f} by {x.margin:.4f}")
    for x in rep.current:
        print(f"  branch {x.branch}: loading {x.ratio:.3f}")
    _manifest(out, "powerflow", sc.inputs, _payload(sc), {"total": time.perf_counter() - t0}, EXIT_OK)
    return EXIT_OK


def _print_result(res: DispatchResult) -> None:
    print(f"{res.method}: {res.status} after {res.iterations} round(s)"
          + (f" - {res.message}" if res.message else ""))
    n0 = len(res.initial_report.voltage) + len(res.initial_report.current)
    n1 = len(res.final_report.voltage) + len(res.final_report.current)
    print(f"  violations: {n0} before, {n1} after")
    for i, (dp, dq) in sorted(res.applied.items()):
        print(f"  bus {i}: dP={dp:+.5f} dQ={dq:+.5f} pu member={res.membership.get(i)}")


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    sc = scenario_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = correct(sc.grid, sc.fors, sc.limits, sc.method, sc.config)
    write_dispatch_artifacts(out, sc, res)
    write_geometry(out, sc)
    code = STATUS_EXIT.get(res.status, EXIT_INFEASIBLE)
    _print_result(res)
    _manifest(out, "solve", sc.inputs, _payload(sc), {**res.wall_times, "command": time.perf_counter() - t0}, code)
    return code


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    sc = scenario_from_args(args)
    bus = args.bus if args.bus is not None else (sc.sweep.bus if sc.sweep else None)
    levels = args.levels if args.levels else (list(sc.sweep.q_levels_mvar) if sc.sweep else None)
    if bus is None or not levels:
        raise InputError("sweep needs a sweep block in the scenario or --bus and --levels")
    if not 0 <= bus < sc.grid.n_buses:
        raise InputError(f"sweep bus {bus} does not exist")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = robustness_sweep(sc.grid, sc.fors, sc.limits, sc.method, bus, levels, sc.config)
    try:
        v_base = float(solve_power_flow(sc.grid).v[bus])
    except PowerFlowError:
        v_base = float("nan")
    rows = []
    for k, (level, res) in enumerate(zip(levels, results)):
        d = out / f"level_{k:02d}"
        write_dispatch_artifacts(d, sc, res)
        dv = float(res.initial_state.v[bus]) - v_base if res.initial_state is not None else float("nan")
        disp = displacement(res, sc.fors) if res.points else float("nan")
        rows.append([level, d.name, res.iterations, res.status, res.success, disp, dv])
        print(f"level {level:+g} Mvar: {res.status}, {res.iterations} round(s), displacement {disp:.4f}")
    write_csv(out / "summary.csv",
              ["level_mvar", "dir", "iterations", "status", "success", "displacement", "dv_pre"], rows)
    terminated = all(r.status in STATUS_EXIT for r in results)
    code = EXIT_OK if terminated else EXIT_INFEASIBLE
    payload = {**_payload(sc), "sweep": {"bus": bus, "levels": list(levels)}}
    _manifest(out, "sweep", sc.inputs, payload, {"total": time.perf_counter() - t0}, code)
    return code


def cmd_synth(args) -> int:
    sc = reference_scenario(args.seed)
    if args.method:
        sc = replace(sc, method=args.method)
    path = write_scenario(sc, args.out)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexgrid", description="FOR-based corrective grid operation")
    sub = ap.add_subparsers(dest="command", required=True)

    def inputs(p, out=True):
        p.add_argument("--grid", help="grid JSON")
        p.add_argument("--fors", help="directory of FOR JSON files")
        p.add_argument("--scenario", help="scenario JSON (overrides --grid/--fors)")
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--max-iters", type=int, dest="max_iters")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate", help="parse and check grid, FOR and scenario files")
    p.add_argument("paths", nargs="*")
    inputs(p, out=False)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("powerflow", help="run the AC power flow and flag violations")
    inputs(p)
    p.set_defaults(func=cmd_powerflow)
    p = sub.add_parser("solve", help="corrective dispatch with FOR flexibility")
    inputs(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", help="robustness sweep over reactive injections")
    inputs(p)
    p.add_argument("--bus", type=int)
    p.add_argument("--levels", type=float, nargs="+", help="injection levels in Mvar")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("synth", help="write the seeded 30-bus reference scenario")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("FLEXGRID_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (*INPUT_ERRORS, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PowerFlowError as exc:
        print(f"power flow failed: {exc}", file=sys.stderr)
        return EXIT_PF


if __name__ == "__main__":
    sys.exit(main())
