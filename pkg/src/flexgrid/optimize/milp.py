"""Best-first branch and bound for LPs whose binaries come in SOS1 groups
(exactly one member of each group equals 1)."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lp import LpModel, Solution, solve_lp

NODE_LIMIT = 100_000
INT_TOL = 1e-6


@dataclass
class MilpModel:
    base: LpModel
    groups: dict[tuple, list[int]] = field(default_factory=dict)  # label -> binary var indices
    registry: dict[int, dict[str, list[int]]] = field(default_factory=dict)  # bus -> role -> var indices

    def add_group(self, label: tuple, names: list[str], costs=None) -> list[int]:
        """Declare binaries forming one SOS1 group, with its sum-to-one row."""
        costs = costs or [0.0] * len(names)
        idx = [self.base.add_var(nm, 0.0, 1.0, c) for nm, c in zip(names, costs)]
        self.base.add_row({j: 1.0 for j in idx}, "=", 1.0, f"sos1_{'_'.join(map(str, label))}")
        self.groups[label] = idx
        return idx

    def register(self, bus: int, role: str, idx: list[int] | int) -> None:
        self.registry.setdefault(bus, {}).setdefault(role, [])
        self.registry[bus][role] += [idx] if isinstance(idx, int) else list(idx)

    @property
    def binaries(self) -> list[int]:
        return [j for g in self.groups.values() for j in g]


def _fractional_group(model: MilpModel, x: np.ndarray):
    """Group with the largest fractionality (1 - largest member), or None if integral."""
    best, best_frac = None, INT_TOL
    for label, idx in model.groups.items():
        frac = 1.0 - float(np.max(x[idx]))
        if frac > best_frac:
            best, best_frac = label, frac
    return best


def solve_milp(model: MilpModel, node_limit: int = NODE_LIMIT, gap: float = 1e-6) -> Solution:
    base = model.base
    counter = itertools.count()
    root = solve_lp(base)
    nodes = 1
    if root.status in ("infeasible", "iteration-limit"):
        return Solution(root.status, names=list(base.names), nodes=nodes)
    if root.status == "unbounded":
        return Solution("unbounded", names=list(base.names), nodes=nodes)
    heap = [(root.objective, next(counter), frozenset(), root)]
    incumbent: Solution | None = None
    inc_obj = math.inf
    while heap:
        bound, _, fixed, sol = heapq.heappop(heap)
        if bound >= inc_obj - gap:
            continue
        label = _fractional_group(model, sol.x)
        if label is None:
            incumbent, inc_obj = sol, sol.objective
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, next(counter), fixed, sol))
            break
        idx = model.groups[label]
        positive = [k for k, j in enumerate(idx) if sol.x[j] > 1e-12]
        split = positive[len(positive) // 2 - 1]
        for zeroed in (idx[split + 1:], idx[: split + 1]):
            child_fixed = fixed | frozenset(zeroed)
            lp = base.copy()
            for j in child_fixed:
                lp.hi[j] = 0.0
            child = solve_lp(lp)
            nodes += 1
            if child.ok and child.objective < inc_obj - gap:
                heapq.heappush(heap, (child.objective, next(counter), child_fixed, child))
    if incumbent is None:
        status = "node-limit" if heap else "infeasible"
        return Solution(status, names=list(base.names), nodes=nodes)
    x = incumbent.x.copy()
    for j in model.binaries:
        x[j] = float(round(x[j]))
    open_bound = min((h[0] for h in heap), default=inc_obj)
    status = "optimal" if not heap or open_bound >= inc_obj - gap else "node-limit"
    return Solution(
        status, inc_obj, x, list(base.names),
        binaries={base.names[j]: int(x[j]) for j in model.binaries},
        iterations=incumbent.iterations, nodes=nodes, gap=max(0.0, inc_obj - open_bound),
    )
