"""Corrective operational management: detect limit violations, procure FOR
flexibility through one of the three formulations, apply it and verify the
result with the nonlinear power flow, re-linearising each round."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .fors import PqvFor, contains, segment_2d, segment_3d
from .grid import GridModel
from .hull import for_hull, half_spaces
from .optimize import (
    Costs,
    Limits,
    Margins,
    ModelBuildError,
    build_convex_lp,
    build_milp_2d,
    build_milp_3d,
    extract_deltas,
    solve_lp,
    solve_milp,
)
from .optimize.lp import SimplexError
from .powerflow import PowerFlowError, PowerFlowState, sensitivities, solve_power_flow

log = logging.getLogger(__name__)

Method = Literal["milp2d", "milp3d", "convex"]
METHODS = ("milp2d", "milp3d", "convex")


@dataclass(frozen=True)
class VoltageViolation:
    bus: int
    v: float
    bound: float
    margin: float  # distance beyond the bound, > 0


@dataclass(frozen=True)
class CurrentViolation:
    branch: int
    ratio: float  # i / imax


@dataclass(frozen=True)
class ViolationReport:
    voltage: tuple[VoltageViolation, ...] = ()
    current: tuple[CurrentViolation, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.voltage and not self.current

    def to_dict(self) -> dict:
        return {
            "voltage": [vars(x) for x in self.voltage],
            "current": [vars(x) for x in self.current],
        }


def detect(state: PowerFlowState, limits: Limits, v_tol: float = 1e-4, i_tol: float = 1e-3) -> ViolationReport:
    """Every limit breach beyond tolerance, most severe first."""
    volts = []
    for i, v in enumerate(state.v):
        if v > limits.vmax[i] + v_tol:
            volts.append(VoltageViolation(i, float(v), float(limits.vmax[i]), float(v - limits.vmax[i])))
        elif v < limits.vmin[i] - v_tol:
            volts.append(VoltageViolation(i, float(v), float(limits.vmin[i]), float(limits.vmin[i] - v)))
    volts.sort(key=lambda x: (-x.margin, x.bus))
    ratios = state.branch_max() / limits.imax
    cur = [CurrentViolation(b, float(r)) for b, r in enumerate(ratios) if r > 1.0 + i_tol]
    cur.sort(key=lambda x: (-x.ratio, x.branch))
    return ViolationReport(tuple(volts), tuple(cur))


@dataclass(frozen=True)
class CorrectionConfig:
    max_iters: int = 5
    v_tol: float = 1e-4
    i_tol: float = 1e-3
    member_tol: float = 1e-6
    k_max: int = 2
    l_max: int = 3
    hull_scale: float = 1.0  # underestimation factor applied to every hull
    shrink_step: float = 0.8  # extra hull shrink for a bus that left its FOR
    costs: Costs = Costs()
    margins: Margins = Margins()
    node_limit: int = 100_000


@dataclass
class DispatchResult:
    method: str
    status: str  # success | violations | not-member | infeasible | pf-diverged
    iterations: int
    applied: dict[int, tuple[float, float]]
    initial_state: PowerFlowState | None
    final_state: PowerFlowState | None
    initial_report: ViolationReport
    final_report: ViolationReport
    membership: dict[int, bool]
    points: dict[int, tuple[float, float, float]]  # final absolute FOR operating points
    objectives: list[float] = field(default_factory=list)
    selections: list[dict[str, int]] = field(default_factory=list)  # MILP binaries per round
    wall_times: dict[str, float] = field(default_factory=dict)
    message: str = ""

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self, include_times: bool = False) -> dict:
        def st(s):
            if s is None:
                return None
            return {
                "v": s.v.tolist(), "delta": s.delta.tolist(), "branch_i": s.branch_i.tolist(),
                "mismatch": s.mismatch, "iterations": s.iterations,
            }

        out = {
            "method": self.method,
            "status": self.status,
            "message": self.message,
            "iterations": self.iterations,
            "applied": {str(k): list(v) for k, v in sorted(self.applied.items())},
            "membership": {str(k): v for k, v in sorted(self.membership.items())},
            "points": {str(k): list(v) for k, v in sorted(self.points.items())},
            "objectives": self.objectives,
            "selections": self.selections,
            "initial_report": self.initial_report.to_dict(),
            "final_report": self.final_report.to_dict(),
            "initial_state": st(self.initial_state),
            "final_state": st(self.final_state),
        }
        if include_times:
            out["wall_times"] = self.wall_times
        return out


def membership(
    fors: dict[int, PqvFor], points: dict[int, tuple[float, float]], state: PowerFlowState, method: str, tol: float
) -> dict[int, bool]:
    out = {}
    for i, f in sorted(fors.items()):
        p, q = points[i]
        if method == "milp2d":
            # 2D procurement ignores the voltage axis; check against the slice it used
            out[i] = bool(f.nearest_slice(f.op0[2]).contains(p, q, tol))
            continue
        try:
            out[i] = bool(contains(f, p, q, float(state.v[i]), tol))
        except ValueError:
            out[i] = False
    return out


def prepare_geometry(fors: dict[int, PqvFor], method: str, config: CorrectionConfig) -> dict:
    if method == "milp2d":
        return {i: segment_2d(f, config.k_max) for i, f in fors.items()}
    if method == "milp3d":
        return {i: segment_3d(f, config.k_max, config.l_max) for i, f in fors.items()}
    if method == "convex":
        return {i: half_spaces(for_hull(f), bus_id=i) for i, f in fors.items()}
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def correct(
    grid: GridModel,
    fors: dict[int, PqvFor],
    limits: Limits,
    method: Method,
    config: CorrectionConfig = CorrectionConfig(),
    geometry: dict | None = None,
) -> DispatchResult:
    """Iterate power flow -> detect -> optimise -> apply until clean or ``max_iters`` rounds."""
    times = {"geometry": 0.0, "powerflow": 0.0, "build": 0.0, "solve": 0.0}
    t_start = time.perf_counter()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    t0 = time.perf_counter()
    geo = geometry if geometry is not None else prepare_geometry(fors, method, config)
    times["geometry"] += time.perf_counter() - t0
    flex = sorted(fors)
    points = {i: (fors[i].op0[0], fors[i].op0[1]) for i in flex}
    applied = {i: (0.0, 0.0) for i in flex}
    scale = {i: config.hull_scale for i in flex}

    def run_pf(g):
        t = time.perf_counter()
        try:
            return solve_power_flow(g)
        finally:
            times["powerflow"] += time.perf_counter() - t

    empty = ViolationReport()
    result = DispatchResult(method, "success", 0, applied, None, None, empty, empty, {}, {})
    try:
        state = run_pf(grid)
    except PowerFlowError as exc:
        result.status, result.message = "pf-diverged", str(exc)
        result.wall_times = {**times, "total": time.perf_counter() - t_start}
        return result
    result.initial_state = state
    result.initial_report = detect(state, limits, config.v_tol, config.i_tol)
    cur = grid
    it = 0
    while True:
        report = detect(state, limits, config.v_tol, config.i_tol)
        member = membership(fors, points, state, method, config.member_tol)
        result.final_state, result.final_report, result.membership = state, report, member
        if report.empty and all(member.values()):
            result.status = "success"
            break
        if it >= config.max_iters:
            result.status = "violations" if not report.empty else "not-member"
            result.message = f"not corrected after {it} rounds"
            break
        it += 1
        log.info("%s round %d: %d voltage, %d current violations, non-members %s", method, it,
                 len(report.voltage), len(report.current), [i for i, ok in member.items() if not ok])
        t0 = time.perf_counter()
        sens = sensitivities(cur, state)
        kw = dict(points=points, flexible=cur.flexible, margins=config.margins)
        try:
            if method == "convex":
                for i, ok in member.items():
                    if not ok:
                        scale[i] *= config.shrink_step
                hs = {
                    i: geo[i].scaled((*fors[i].op0[:2], fors[i].op0[2]), scale[i]) if scale[i] != 1.0 else geo[i]
                    for i in flex
                }
                model = build_convex_lp(sens, state, hs, limits, config.costs, **kw)
            elif method == "milp3d":
                model = build_milp_3d(sens, state, geo, limits, config.costs, **kw)
            else:
                model = build_milp_2d(sens, state, geo, limits, config.costs, **kw)
        except ModelBuildError as exc:
            result.status, result.message = "infeasible", f"model build failed: {exc}"
            break
        times["build"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            sol = solve_lp(model) if method == "convex" else solve_milp(model, node_limit=config.node_limit)
        except SimplexError as exc:
            sol = None
            result.message = f"numerical breakdown: {exc}"
        times["solve"] += time.perf_counter() - t0
        if sol is None or sol.status not in ("optimal", "node-limit") or sol.x is None:
            result.status = "infeasible"
            if sol is not None:
                result.message = f"optimizer status {sol.status} in round {it}" + _diagnose(
                    model, sens, state, limits, config, method, geo, points, kw
                )
            break
        result.objectives.append(sol.objective)
        if sol.binaries:
            result.selections.append(dict(sol.binaries))
        deltas = extract_deltas(sol, flex)
        p, q = np.array([b.p0 for b in cur.buses]), np.array([b.q0 for b in cur.buses])
        for i, (dp, dq, _) in deltas.items():
            p[i] += dp
            q[i] += dq
            points[i] = (points[i][0] + dp, points[i][1] + dq)
            applied[i] = (applied[i][0] + dp, applied[i][1] + dq)
        cur = cur.with_injections(p, q)
        try:
            state = run_pf(cur)
        except PowerFlowError as exc:
            result.status, result.message = "pf-diverged", f"after round {it}: {exc}"
            break
    result.iterations = it
    result.applied = applied
    result.points = {i: (points[i][0], points[i][1], float(result.final_state.v[i])) for i in flex}
    result.wall_times = {**times, "total": time.perf_counter() - t_start}
    return result


def _diagnose(model, sens, state, limits, config, method, geo, points, kw) -> str:
    """Name the constraint family that makes the round infeasible."""
    relaxed = {}
    # without current limits
    big = Limits(limits.vmin, limits.vmax, np.full_like(limits.imax, 1e6))
    wide = Limits(np.full_like(limits.vmin, 0.0), np.full_like(limits.vmax, 10.0), limits.imax)
    for name, lim in (("current limits", big), ("voltage limits", wide)):
        try:
            if method == "convex":
                sol = solve_lp(build_convex_lp(sens, state, geo, lim, config.costs, **kw))
            elif method == "milp3d":
                sol = solve_milp(build_milp_3d(sens, state, geo, lim, config.costs, **kw), node_limit=200)
            else:
                sol = solve_milp(build_milp_2d(sens, state, geo, lim, config.costs, **kw), node_limit=200)
            relaxed[name] = sol.x is not None
        except Exception:  # diagnostics must never mask the original failure
            relaxed[name] = False
    culprits = [k for k, ok in relaxed.items() if ok]
    return f"; feasible when relaxing: {', '.join(culprits)}" if culprits else "; FOR constraints infeasible"


def robustness_sweep(
    grid: GridModel,
    fors: dict[int, PqvFor],
    limits: Limits,
    method: Method,
    bus: int,
    q_levels: list[float],
    config: CorrectionConfig = CorrectionConfig(),
) -> list[DispatchResult]:
    """Re-run ``correct`` with extra reactive injection at ``bus``; levels in Mvar."""
    if not 0 <= bus < grid.n_buses:
        raise ValueError(f"bus {bus} does not exist")
    geo = prepare_geometry(fors, method, config)
    out = []
    for level in q_levels:
        if not np.isfinite(level):
            raise ValueError(f"non-finite sweep level {level}")
        g = grid.with_bus(bus, q0=grid.buses[bus].q0 + level / grid.s_base)
        try:
            res = correct(g, fors, limits, method, config, geometry=geo)
        except Exception as exc:  # one failing level must not stop the sweep
            empty = ViolationReport()
            res = DispatchResult(method, "error", 0, {}, None, None, empty, empty, {}, {}, message=str(exc))
        out.append(res)
    return out


def displacement(result: DispatchResult, fors: dict[int, PqvFor]) -> float:
    """Euclidean norm of all FOR operating-point moves in (p, q, v)."""
    tot = 0.0
    for i, (p, q, v) in result.points.items():
        p0, q0, v0 = fors[i].op0
        v_init = result.initial_state.v[i] if result.initial_state is not None else v0
        tot += (p - p0) ** 2 + (q - q0) ** 2 + (v - v_init) ** 2
    return float(np.sqrt(tot))
