"""HV grid model: buses, branches, admittance matrix and the JSON grid format.

All electrical quantities are per-unit on ``s_base`` (MVA). Injections use the
generator sign convention (net injection positive). Shunt elements are carried
as constant bus powers and never enter the admittance matrix.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

BusKind = Literal["slack", "flexible", "fixed"]
BUS_KINDS = ("slack", "flexible", "fixed")


class GridFormatError(ValueError):
    """Grid file could not be parsed."""


class GridValidationError(ValueError):
    """Grid parsed but violates a model invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind = "fixed"
    v0: float = 1.0
    delta0: float = 0.0
    p0: float = 0.0
    q0: float = 0.0
    vmin: float = 0.9
    vmax: float = 1.1
    shunt_p: float = 0.0
    shunt_q: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    y_mag: float
    theta: float
    i_max: float

    @property
    def y(self) -> complex:
        return complex(self.y_mag * np.cos(self.theta), self.y_mag * np.sin(self.theta))


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    s_base: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    @property
    def non_slack(self) -> np.ndarray:
        """Bus indices in order, slack removed."""
        s = self.slack
        return np.array([b.id for b in self.buses if b.id != s], dtype=int)

    @property
    def flexible(self) -> list[int]:
        return [b.id for b in self.buses if b.kind == "flexible"]

    def with_injections(self, p: np.ndarray, q: np.ndarray) -> GridModel:
        """Copy of the grid with bus injections replaced."""
        buses = [
            Bus(**{**asdict(b), "p0": float(p[b.id]), "q0": float(q[b.id])}) for b in self.buses
        ]
        return GridModel(buses, self.branches, self.s_base)

    def with_bus(self, bus_id: int, **changes) -> GridModel:
        buses = list(self.buses)
        buses[bus_id] = Bus(**{**asdict(buses[bus_id]), **changes})
        return GridModel(buses, self.branches, self.s_base)

    def with_branch(self, branch_id: int, **changes) -> GridModel:
        branches = list(self.branches)
        branches[branch_id] = Branch(**{**asdict(branches[branch_id]), **changes})
        return GridModel(self.buses, branches, self.s_base)

    def injections(self) -> tuple[np.ndarray, np.ndarray]:
        """Specified net injections including constant shunt powers."""
        p = np.array([b.p0 + b.shunt_p for b in self.buses])
        q = np.array([b.q0 + b.shunt_q for b in self.buses])
        return p, q

    def to_dict(self) -> dict:
        return {
            "s_base": self.s_base,
            "buses": [asdict(b) for b in self.buses],
            "branches": [asdict(br) for br in self.branches],
        }


def validate_grid(grid: GridModel) -> GridModel:
    ids = [b.id for b in grid.buses]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise GridValidationError(f"duplicate bus id {dup}")
    if ids != list(range(len(ids))):
        raise GridValidationError("bus ids must be contiguous 0..n-1 in file order")
    if len(ids) < 2:
        raise GridValidationError("grid needs at least 2 buses")
    for b in grid.buses:
        if b.kind not in BUS_KINDS:
            raise GridValidationError(f"bus {b.id}: unknown kind {b.kind!r}")
        if not b.vmin < b.vmax:
            raise GridValidationError(f"bus {b.id}: vmin < vmax violated")
    n_slack = sum(b.kind == "slack" for b in grid.buses)
    if n_slack != 1:
        raise GridValidationError(f"exactly one slack bus required, found {n_slack}")
    br_ids = [br.id for br in grid.branches]
    if br_ids != list(range(len(br_ids))):
        raise GridValidationError("branch ids must be contiguous 0..m-1 in file order")
    for br in grid.branches:
        if br.from_bus not in range(len(ids)) or br.to_bus not in range(len(ids)):
            raise GridValidationError(f"branch {br.id}: endpoint does not resolve to a bus")
        if br.from_bus == br.to_bus:
            raise GridValidationError(f"branch {br.id}: from_bus == to_bus")
        if not br.y_mag > 0:
            raise GridValidationError(f"branch {br.id}: y_mag must be > 0")
        if not br.i_max > 0:
            raise GridValidationError(f"branch {br.id}: i_max must be > 0")
    unreached = set(ids) - _reachable(grid, grid.slack)
    if unreached:
        raise GridValidationError(f"grid is not connected; unreachable buses {sorted(unreached)}")
    return grid


def _reachable(grid: GridModel, start: int) -> set[int]:
    adj: dict[int, list[int]] = {b.id: [] for b in grid.buses}
    for br in grid.branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


def is_connected(grid: GridModel) -> bool:
    return len(_reachable(grid, grid.buses[0].id)) == grid.n_buses


def grid_from_dict(data: dict) -> GridModel:
    if not isinstance(data, dict):
        raise GridFormatError("top level must be an object")
    for key in ("s_base", "buses", "branches"):
        if key not in data:
            raise GridFormatError(f"missing top-level key {key!r}")
    buses = [_build(Bus, rec, f"buses[{k}]") for k, rec in enumerate(data["buses"])]
    branches = [_build(Branch, rec, f"branches[{k}]") for k, rec in enumerate(data["branches"])]
    try:
        s_base = float(data["s_base"])
    except (TypeError, ValueError) as exc:
        raise GridFormatError(f"s_base: {exc}") from None
    return validate_grid(GridModel(buses, branches, s_base))


def _build(cls, rec, where: str):
    if not isinstance(rec, dict):
        raise GridFormatError(f"{where}: expected an object")
    names = {f.name: f.type for f in cls.__dataclass_fields__.values()}
    unknown = set(rec) - set(names)
    if unknown:
        raise GridFormatError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in rec.items():
        try:
            if name in ("id", "from_bus", "to_bus"):
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError("expected integer")
                kwargs[name] = int(value)
            elif name == "kind":
                kwargs[name] = str(value)
            else:
                kwargs[name] = float(value)
        except (TypeError, ValueError) as exc:
            raise GridFormatError(f"{where}.{name}: {exc}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise GridFormatError(f"{where}: {exc}") from None


def load_grid(path: str | Path) -> GridModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridFormatError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return grid_from_dict(data)


def save_grid(grid: GridModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(grid.to_dict(), indent=1) + "\n", encoding="utf-8")


def admittance_matrix(grid: GridModel) -> np.ndarray:
    """Bus admittance matrix from branch series admittances only."""
    n = grid.n_buses
    Y = np.zeros((n, n), dtype=complex)
    for br in grid.branches:
        i, j, y = br.from_bus, br.to_bus, br.y
        Y[i, j] -= y
        Y[j, i] -= y
        Y[i, i] += y
        Y[j, j] += y
    return Y


@dataclass(frozen=True)
class Incidence:
    """Branch terminals: row ``2*b`` is the from-end of branch b, ``2*b+1`` the to-end."""

    branch: np.ndarray
    end: np.ndarray  # 0 = from (A), 1 = to (B)
    bus: np.ndarray
    other_bus: np.ndarray
    n_buses: int

    @property
    def n_terminals(self) -> int:
        return len(self.bus)

    def matrix(self) -> np.ndarray:
        """Terminal-by-bus 0/1 incidence matrix."""
        C = np.zeros((self.n_terminals, self.n_buses))
        C[np.arange(self.n_terminals), self.bus] = 1.0
        return C


def incidence(grid: GridModel) -> Incidence:
    m = grid.n_branches
    branch = np.repeat(np.arange(m), 2)
    end = np.tile([0, 1], m)
    fb = np.array([br.from_bus for br in grid.branches], dtype=int)
    tb = np.array([br.to_bus for br in grid.branches], dtype=int)
    bus = np.empty(2 * m, dtype=int)
    other = np.empty(2 * m, dtype=int)
    bus[0::2], bus[1::2] = fb, tb
    other[0::2], other[1::2] = tb, fb
    return Incidence(branch, end, bus, other, grid.n_buses)


def synth_grid(n_buses: int, seed: int, flexible_share: float = 0.2) -> GridModel:
    """Seeded ring-plus-chords HV grid with one slack bus standing in for the EHV supply.

    Bus 0 is the slack. Besides its two ring neighbours it couples to roughly
    every third bus of the ring, mimicking several EHV/HV substations fed from
    a common EHV node. Remaining buses carry aggregated loads or wind parks;
    about ``flexible_share`` of them are marked ``flexible`` (FOR buses).
    """
    if n_buses < 2:
        raise ValueError("n_buses must be >= 2")
    rng = np.random.default_rng(seed)
    buses = [Bus(0, "slack", v0=1.02, vmin=0.9, vmax=1.1)]
    n_flex = int(round(flexible_share * (n_buses - 1))) if n_buses > 3 else 0
    flex = set(rng.choice(np.arange(1, n_buses), size=n_flex, replace=False).tolist()) if n_flex else set()
    for i in range(1, n_buses):
        if rng.random() < 0.25 and i not in flex:
            p = rng.uniform(0.2, 0.6)  # wind park
            q = 0.0
        else:
            p = -rng.uniform(0.1, 0.5)
            q = 0.3 * p
        kind = "flexible" if i in flex else "fixed"
        buses.append(Bus(i, kind, v0=1.0, p0=round(p, 4), q0=round(q, 4), vmin=0.95, vmax=1.05))

    pairs: list[tuple[int, int]] = []
    if n_buses == 2:
        pairs.append((0, 1))
    else:
        pairs += [(i, i + 1) for i in range(n_buses - 1)]
        pairs.append((n_buses - 1, 0))
        if n_buses >= 6:
            step = max(3, n_buses // 3)
            pairs += [(0, k) for k in range(step, n_buses - 1, step) if (0, k) not in pairs]
            existing = {frozenset(p) for p in pairs}
            for _ in range(n_buses // 5):
                a, b = sorted(rng.choice(np.arange(1, n_buses), size=2, replace=False).tolist())
                if b - a > 1 and frozenset((a, b)) not in existing:
                    pairs.append((a, b))
                    existing.add(frozenset((a, b)))
    branches = []
    for k, (a, b) in enumerate(pairs):
        if a == 0 and n_buses > 2:
            x = rng.uniform(0.008, 0.015)  # EHV/HV coupling
        else:
            x = rng.uniform(0.02, 0.05)
        r = 0.25 * x
        z = complex(r, x)
        y = 1.0 / z
        branches.append(Branch(k, a, b, round(abs(y), 6), round(float(np.angle(y)), 6),
                               round(rng.uniform(2.0, 3.0), 3)))
    return validate_grid(GridModel(buses, branches, 100.0))
