"""Scenario files and the synthetic 30-bus reference scenario.

A scenario JSON looks like::

    {
      "grid": "grid.json",
      "fors": "fors/"            # directory of FOR files, or {"16": "fors/for_16.json", ...}
      "method": "convex",
      "limits": {"vmin": 0.95, "vmax": {"3": 1.06}, "imax": {"12": 1.5}},
      "costs": {"p": 1.0, "q": 0.0, "p_bus": {"16": 2.0}},
      "config": {"max_iters": 5, "k_max": 2, "l_max": 3},
      "sweep": {"bus": 3, "q_levels_mvar": [-50, -100, -150, -200]}
    }

Relative paths resolve against the scenario file's directory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .fors import PqvFor, load_for, save_for, synth_for
from .grid import GridModel, load_grid, save_grid, synth_grid
from .opman import METHODS, CorrectionConfig, detect
from .optimize import Costs, Limits, Margins
from .powerflow import solve_power_flow


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    bus: int
    q_levels_mvar: tuple[float, ...]


@dataclass
class Scenario:
    grid: GridModel
    fors: dict[int, PqvFor]
    limits: Limits
    method: str = "convex"
    config: CorrectionConfig = CorrectionConfig()
    sweep: SweepSpec | None = None
    inputs: dict[str, str] = field(default_factory=dict)  # resolved input paths, for manifests


def load_fors(source, base: Path = Path(".")) -> tuple[dict[int, PqvFor], dict[str, str]]:
    """FORs from a directory of ``*.json`` files or a ``{bus: path}`` mapping."""
    if isinstance(source, (str, Path)):
        d = Path(base, source)
        if not d.is_dir():
            raise FileNotFoundError(f"FOR directory {d} does not exist")
        paths = sorted(d.glob("*.json"))
    elif isinstance(source, dict):
        paths = [Path(base, p) for _, p in sorted(source.items(), key=lambda kv: int(kv[0]))]
    else:
        raise ScenarioError("'fors' must be a directory or a {bus: path} mapping")
    fors = {}
    for p in paths:
        f = load_for(p)
        if f.bus_id in fors:
            raise ScenarioError(f"{p}: second FOR for bus {f.bus_id}")
        fors[f.bus_id] = f
    if isinstance(source, dict):
        for k, p in source.items():
            if int(k) not in fors:
                raise ScenarioError(f"{p}: FOR file is for another bus than {k}")
    return fors, {f"for_{k}": str(p) for k, p in zip(sorted(fors), paths)}


def _per_item(value, n: int, default: np.ndarray, what: str) -> np.ndarray:
    out = default.copy()
    if value is None:
        return out
    if isinstance(value, (int, float)):
        out[:] = float(value)
        return out
    if isinstance(value, dict):
        for k, v in value.items():
            if not 0 <= int(k) < n:
                raise ScenarioError(f"limits.{what}: index {k} out of range")
            out[int(k)] = float(v)
        return out
    raise ScenarioError(f"limits.{what}: expected a number or an {{index: value}} mapping")


def limits_with_overrides(grid: GridModel, overrides: dict | None) -> Limits:
    base = Limits.from_grid(grid)
    o = overrides or {}
    unknown = set(o) - {"vmin", "vmax", "imax"}
    if unknown:
        raise ScenarioError(f"limits: unknown key(s) {sorted(unknown)}")
    try:
        return Limits(
            _per_item(o.get("vmin"), grid.n_buses, base.vmin, "vmin"),
            _per_item(o.get("vmax"), grid.n_buses, base.vmax, "vmax"),
            _per_item(o.get("imax"), grid.n_branches, base.imax, "imax"),
        )
    except ValueError as exc:
        raise ScenarioError(f"limits: {exc}") from None


def config_from_dict(data: dict | None, costs: dict | None = None) -> CorrectionConfig:
    data = dict(data or {})
    known = {f for f in CorrectionConfig.__dataclass_fields__} - {"costs", "margins"}
    unknown = set(data) - known - {"margins"}
    if unknown:
        raise ScenarioError(f"config: unknown key(s) {sorted(unknown)}")
    margins = Margins(**data.pop("margins", {}))
    c = costs or {}
    cost = Costs(
        float(c.get("p", 1.0)), float(c.get("q", 0.0)),
        {int(k): float(v) for k, v in c.get("p_bus", {}).items()},
        {int(k): float(v) for k, v in c.get("q_bus", {}).items()},
    )
    return CorrectionConfig(**data, costs=cost, margins=margins)


def config_to_dict(cfg: CorrectionConfig) -> dict:
    d = asdict(cfg)
    d["costs"] = {
        "p": cfg.costs.p, "q": cfg.costs.q,
        "p_bus": {str(k): v for k, v in sorted(cfg.costs.p_bus.items())},
        "q_bus": {str(k): v for k, v in sorted(cfg.costs.q_bus.items())},
    }
    return d


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    for key in ("grid", "fors"):
        if key not in data:
            raise ScenarioError(f"{path}: missing '{key}'")
    base = path.parent
    grid_path = Path(base, data["grid"])
    grid = load_grid(grid_path)
    fors, for_paths = load_fors(data["fors"], base)
    method = data.get("method", "convex")
    if method not in METHODS:
        raise ScenarioError(f"{path}: method {method!r} not in {METHODS}")
    sweep = None
    if "sweep" in data:
        s = data["sweep"]
        try:
            sweep = SweepSpec(int(s["bus"]), tuple(float(x) for x in s["q_levels_mvar"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}: bad sweep block ({exc})") from None
    return Scenario(
        grid, fors, limits_with_overrides(grid, data.get("limits")), method,
        config_from_dict(data.get("config"), data.get("costs")), sweep,
        {"scenario": str(path), "grid": str(grid_path), **for_paths},
    )


# -- reference scenario ------------------------------------------------------

REF_SEED = 7
REF_BUSES = 30
SWEEP_LEVELS_MVAR = (-50.0, -100.0, -150.0, -200.0)


def reference_scenario(seed: int = REF_SEED) -> Scenario:
    """30-bus fixture with one congested branch and two low-voltage buses.

    Each flexible bus gets a notched PQV-FOR centred on its injection; the
    bus injection is set to the FOR operating point so both agree. Two
    non-flexible load buses are then loaded until their voltage falls below
    the lower band, and the rating of the most loaded branch is cut below its
    resulting current.
    """
    grid = synth_grid(REF_BUSES, seed)
    flex = grid.flexible
    state = solve_power_flow(grid)
    fors = {}
    for i in flex:
        b = grid.buses[i]
        f = synth_for(i, seed * 100 + i, p_center=b.p0, p_width=0.8, q_center=b.q0, q_span=1.2,
                      v0=float(state.v[i]))
        fors[i] = f
        grid = grid.with_bus(i, p0=f.op0[0], q0=f.op0[1])

    # two weak load buses, far from the slack, pushed below vmin
    state = solve_power_flow(grid)
    fixed = [i for i in range(1, grid.n_buses) if grid.buses[i].kind == "fixed"]
    weak = sorted(fixed, key=lambda i: (state.v[i], i))[:2]
    for i in weak:
        b = grid.buses[i]
        p0, q0 = (b.p0, b.q0) if b.p0 < 0 else (-0.2, -0.06)
        for scale in np.arange(1.0, 8.0, 0.1):
            g = grid.with_bus(i, p0=round(p0 * scale, 6), q0=round(q0 * scale, 6))
            if solve_power_flow(g).v[i] < 0.95 - 0.004:
                grid = g
                break
    state = solve_power_flow(grid)
    br = int(np.argmax(state.branch_max() / np.array([x.i_max for x in grid.branches])))
    grid = grid.with_branch(br, i_max=round(0.92 * float(state.branch_max()[br]), 6))
    state = solve_power_flow(grid)
    fors = {i: f.with_op0(f.op0[0], f.op0[1], float(state.v[i])) for i, f in fors.items()}
    limits = Limits.from_grid(grid)
    sweep_bus = _sweep_bus(grid)
    config = CorrectionConfig(costs=Costs(p=1.0, q=0.0))
    return Scenario(grid, fors, limits, "convex", config, SweepSpec(sweep_bus, SWEEP_LEVELS_MVAR))


def _sweep_bus(grid: GridModel) -> int:
    """Non-flexible bus with the stiffest coupling to the slack."""
    cand = {}
    for br in grid.branches:
        for a, b in ((br.from_bus, br.to_bus), (br.to_bus, br.from_bus)):
            if a == grid.slack and grid.buses[b].kind == "fixed":
                cand[b] = max(cand.get(b, 0.0), br.y_mag)
    return max(sorted(cand), key=lambda b: cand[b])


def write_scenario(sc: Scenario, out_dir: str | Path) -> Path:
    """Write grid, FORs and scenario.json into ``out_dir``; returns the scenario path."""
    out = Path(out_dir)
    (out / "fors").mkdir(parents=True, exist_ok=True)
    save_grid(sc.grid, out / "grid.json")
    for i, f in sorted(sc.fors.items()):
        save_for(f, out / "fors" / f"for_{i}.json")
    cfg = config_to_dict(sc.config)
    costs = cfg.pop("costs")
    data = {
        "grid": "grid.json",
        "fors": "fors",
        "method": sc.method,
        "limits": {k: {str(j): x for j, x in enumerate(v)} for k, v in sc.limits.to_dict().items()},
        "costs": costs,
        "config": cfg,
    }
    if sc.sweep is not None:
        data["sweep"] = {"bus": sc.sweep.bus, "q_levels_mvar": list(sc.sweep.q_levels_mvar)}
    path = out / "scenario.json"
    path.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    return path


def with_method(sc: Scenario, method: str) -> Scenario:
    return replace(sc, method=method)


def summary(sc: Scenario) -> dict:
    rep = detect(solve_power_flow(sc.grid), sc.limits, sc.config.v_tol, sc.config.i_tol)
    return {
        "flexible": sorted(sc.fors),
        "voltage_violations": [(x.bus, round(x.v, 4)) for x in rep.voltage],
        "current_violations": [(x.branch, round(x.ratio, 4)) for x in rep.current],
        "sweep_bus": sc.sweep.bus if sc.sweep else None,
    }
