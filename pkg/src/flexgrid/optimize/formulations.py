"""Corrective dispatch models on the linearised grid.

Every model carries the state deviations ``dp[i], dq[i], ddelta[i], dv[i]``
of all non-slack buses, tied together by the inverse-Jacobian sensitivities,
with voltage bands as bounds on ``dv`` and branch current limits as rows.
The FOR of each flexible bus then enters either as a segmented MILP block
(2D or 3D) or as half-space rows of its convex hull.

FOR geometry is absolute in (P, Q, V); ``points`` gives each flexible bus's
current absolute FOR operating point (p, q), and the bus voltage is read
from the power-flow state, so all segment constants are shifted by the
current point before they enter the rows.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from ..fors import SegmentedFor
from ..grid import GridModel
from ..hull import HalfSpaceSet
from ..powerflow import PowerFlowState, SensitivityBundle
from .lp import INF, LpModel
from .milp import MilpModel


class ModelBuildError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Limits:
    vmin: np.ndarray  # per bus
    vmax: np.ndarray
    imax: np.ndarray  # per branch

    def __post_init__(self):
        for name in ("vmin", "vmax", "imax"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.vmin >= self.vmax):
            raise ValueError("vmin < vmax violated")
        if np.any(self.imax <= 0):
            raise ValueError("imax must be > 0")

    @classmethod
    def from_grid(cls, grid: GridModel) -> Limits:
        return cls(
            [b.vmin for b in grid.buses], [b.vmax for b in grid.buses], [br.i_max for br in grid.branches]
        )

    def to_dict(self) -> dict:
        return {"vmin": self.vmin.tolist(), "vmax": self.vmax.tolist(), "imax": self.imax.tolist()}


@dataclass(frozen=True)
class Costs:
    """Linear prices on |dp| and |dq| per flexible bus (pu cost per pu)."""

    p: float = 1.0
    q: float = 0.0
    p_bus: Mapping[int, float] = field(default_factory=dict)
    q_bus: Mapping[int, float] = field(default_factory=dict)

    def p_of(self, bus: int) -> float:
        return float(self.p_bus.get(bus, self.p))

    def q_of(self, bus: int) -> float:
        return float(self.q_bus.get(bus, self.q))


@dataclass(frozen=True)
class Margins:
    """Tightening applied to the limits inside the linear model only."""

    v: float = 0.0  # pu
    i: float = 0.0  # fraction of imax


def state_var_names(i: int) -> tuple[str, str, str, str]:
    return f"dp[{i}]", f"dq[{i}]", f"ddelta[{i}]", f"dv[{i}]"


def _grid_core(
    model: LpModel,
    sens: SensitivityBundle,
    state: PowerFlowState,
    limits: Limits,
    costs: Costs,
    flexible: Iterable[int],
    margins: Margins,
) -> None:
    flex = set(flexible)
    ns = [int(i) for i in sens.non_slack]
    pos = {b: k for k, b in enumerate(ns)}
    missing = flex - set(ns)
    if missing:
        raise ModelBuildError(f"flexible bus(es) {sorted(missing)} are not non-slack buses of the sensitivity model")
    for i in ns:
        f = i in flex
        dp, dq, dd, dv = state_var_names(i)
        model.add_var(dp, -INF if f else 0.0, INF if f else 0.0)
        model.add_var(dq, -INF if f else 0.0, INF if f else 0.0)
        model.add_var(dd, -INF, INF)
        lo = limits.vmin[i] + margins.v - state.v[i]
        hi = limits.vmax[i] - margins.v - state.v[i]
        if lo > hi:
            lo = hi = 0.5 * (lo + hi)
        model.add_var(dv, lo, hi)
    # |dp| and |dq| prices through positive/negative parts
    for i in sorted(flex):
        for var, price in (("dp", costs.p_of(i)), ("dq", costs.q_of(i))):
            if price > 0:
                jp = model.add_var(f"{var}_pos[{i}]", 0.0, INF, price)
                jn = model.add_var(f"{var}_neg[{i}]", 0.0, INF, price)
                model.add_row({model.index(f"{var}[{i}]"): 1.0, jp: -1.0, jn: 1.0}, "=", 0.0, f"{var}_split[{i}]")
    fcols = [pos[i] for i in sorted(flex)]
    fbus = sorted(flex)
    for k, i in enumerate(ns):
        for var, Sp, Sq in (("ddelta", sens.ddelta_dp, sens.ddelta_dq), ("dv", sens.dv_dp, sens.dv_dq)):
            row = {model.index(f"{var}[{i}]"): 1.0}
            for c, j in zip(fcols, fbus):
                row[model.index(f"dp[{j}]")] = -Sp[k, c]
                row[model.index(f"dq[{j}]")] = -Sq[k, c]
            model.add_row(row, "=", 0.0, f"sens_{var}[{i}]")
    # one current row per branch at its more loaded terminal
    n_br = len(limits.imax)
    for b in range(n_br):
        t = 2 * b if state.branch_i[2 * b] >= state.branch_i[2 * b + 1] else 2 * b + 1
        row = {}
        for k, i in enumerate(ns):
            a_d, a_v = sens.di_ddelta[t, k], sens.di_dv[t, k]
            if a_d:
                row[model.index(f"ddelta[{i}]")] = a_d
            if a_v:
                row[model.index(f"dv[{i}]")] = a_v
        rhs = limits.imax[b] * (1.0 - margins.i) - state.branch_i[t]
        if row:
            model.add_row(row, "<=", rhs, f"imax[{b}]")


def _check_flexible(flexible, available, what):
    if flexible is None:
        return
    missing = set(flexible) - set(available)
    if missing:
        raise ModelBuildError(f"bus(es) {sorted(missing)} flagged flexible but have no {what}")


def build_milp_2d(
    sens: SensitivityBundle,
    state: PowerFlowState,
    segmented: Mapping[int, SegmentedFor],
    limits: Limits,
    costs: Costs,
    points: Mapping[int, tuple[float, float]],
    flexible: Iterable[int] | None = None,
    margins: Margins = Margins(),
) -> MilpModel:
    _check_flexible(flexible, segmented, "FOR segmentation")
    lp = LpModel()
    _grid_core(lp, sens, state, limits, costs, segmented.keys(), margins)
    milp = MilpModel(lp)
    for i in sorted(segmented):
        seg = segmented[i]
        if seg.dims != 2:
            raise ModelBuildError(f"bus {i}: expected a 2D segmentation")
        p_cur, q_cur = points[i]
        K = len(seg.segments)
        x = milp.add_group(("p", i), [f"x_p[{i},{k}]" for k in range(K)])
        d = [lp.add_var(f"dp_seg[{i},{k}]", 0.0, s.dp_max) for k, s in enumerate(seg.segments)]
        jp, jq = lp.index(f"dp[{i}]"), lp.index(f"dq[{i}]")
        row5 = {jp: 1.0}
        row9 = {jq: 1.0}
        row10 = {jq: 1.0}
        for k, s in enumerate(seg.segments):
            lp.add_row({d[k]: 1.0, x[k]: -s.dp_max}, "<=", 0.0, f"pseg_max[{i},{k}]")
            row5[d[k]] = -1.0
            row5[x[k]] = -(s.p_c_min - p_cur)
            row9[d[k]] = -s.m_up
            row9[x[k]] = -(s.q_c_init_up - q_cur)
            row10[d[k]] = -s.m_lo
            row10[x[k]] = -(s.q_c_init_lo - q_cur)
        lp.add_row(row5, "=", 0.0, f"p_seg[{i}]")
        lp.add_row(row9, "<=", 0.0, f"q_up[{i}]")
        lp.add_row(row10, ">=", 0.0, f"q_lo[{i}]")
        milp.register(i, "x_p", x)
        milp.register(i, "dp_seg", d)
    return milp


def build_milp_3d(
    sens: SensitivityBundle,
    state: PowerFlowState,
    segmented: Mapping[int, SegmentedFor],
    limits: Limits,
    costs: Costs,
    points: Mapping[int, tuple[float, float]],
    flexible: Iterable[int] | None = None,
    margins: Margins = Margins(),
) -> MilpModel:
    _check_flexible(flexible, segmented, "FOR segmentation")
    lp = LpModel()
    _grid_core(lp, sens, state, limits, costs, segmented.keys(), margins)
    milp = MilpModel(lp)
    for i in sorted(segmented):
        seg = segmented[i]
        if seg.dims != 3:
            raise ModelBuildError(f"bus {i}: expected a 3D segmentation")
        p_cur, q_cur = points[i]
        v_cur = float(state.v[i])
        K, L = seg.k_count, seg.l_count
        grid = {(s.ki, s.li): s for s in seg.segments}
        big_m = seg.c_max + abs(q_cur)
        jp, jq, jv = lp.index(f"dp[{i}]"), lp.index(f"dq[{i}]"), lp.index(f"dv[{i}]")

        xk = milp.add_group(("p", i), [f"x_p[{i},{k}]" for k in range(K)])
        xl = milp.add_group(("v", i), [f"x_v[{i},{l}]" for l in range(L)])
        dpk = [lp.add_var(f"dp_seg[{i},{k}]", 0.0, grid[k, 0].dp_max) for k in range(K)]
        dvl = [lp.add_var(f"dv_seg[{i},{l}]", 0.0, grid[0, l].dv_max) for l in range(L)]
        dqk = [lp.add_var(f"dq_seg[{i},{k}]", -big_m, big_m) for k in range(K)]

        row5 = {jp: 1.0}
        for k in range(K):
            s = grid[k, 0]
            lp.add_row({dpk[k]: 1.0, xk[k]: -s.dp_max}, "<=", 0.0, f"pseg_max[{i},{k}]")
            row5[dpk[k]] = -1.0
            row5[xk[k]] = -(s.p_c_min - p_cur)
        lp.add_row(row5, "=", 0.0, f"p_seg[{i}]")

        row13 = {jv: 1.0}  # ties the sensitivity dv to the voltage segmentation
        for l in range(L):
            s = grid[0, l]
            lp.add_row({dvl[l]: 1.0, xl[l]: -s.dv_max}, "<=", 0.0, f"vseg_max[{i},{l}]")
            row13[dvl[l]] = -1.0
            row13[xl[l]] = -(s.v_c_min - v_cur)
        lp.add_row(row13, "=", 0.0, f"v_seg[{i}]")

        row20 = {jq: 1.0}
        for k in range(K):
            up = {dqk[k]: 1.0, xk[k]: big_m}
            lo = {dqk[k]: 1.0, xk[k]: -big_m}
            for l in range(L):
                s = grid[k, l]
                up[dvl[l]] = -s.m_up
                up[xl[l]] = -(s.q_c_init_up - q_cur)
                lo[dvl[l]] = -s.m_lo
                lo[xl[l]] = -(s.q_c_init_lo - q_cur)
            # Q faces of the selected (k, l) box; relaxed by big-M when x_p[k] = 0
            lp.add_row(up, "<=", big_m, f"q_up[{i},{k}]")
            lp.add_row(lo, ">=", -big_m, f"q_lo[{i},{k}]")
            lp.add_row({dqk[k]: 1.0, xk[k]: -big_m}, "<=", 0.0, f"q_act_up[{i},{k}]")
            lp.add_row({dqk[k]: 1.0, xk[k]: big_m}, ">=", 0.0, f"q_act_lo[{i},{k}]")
            row20[dqk[k]] = -1.0
        lp.add_row(row20, "=", 0.0, f"q_sum[{i}]")
        milp.register(i, "x_p", xk)
        milp.register(i, "x_v", xl)
        milp.register(i, "dp_seg", dpk)
        milp.register(i, "dv_seg", dvl)
        milp.register(i, "dq_seg", dqk)
    return milp


def build_convex_lp(
    sens: SensitivityBundle,
    state: PowerFlowState,
    halfspaces: Mapping[int, HalfSpaceSet],
    limits: Limits,
    costs: Costs,
    points: Mapping[int, tuple[float, float]],
    flexible: Iterable[int] | None = None,
    margins: Margins = Margins(),
) -> LpModel:
    _check_flexible(flexible, halfspaces, "half-space set")
    lp = LpModel()
    _grid_core(lp, sens, state, limits, costs, halfspaces.keys(), margins)
    for i in sorted(halfspaces):
        hs = halfspaces[i]
        if len(hs) == 0:
            raise ModelBuildError(f"bus {i}: empty half-space set")
        x_cur = np.array([points[i][0], points[i][1], state.v[i]])
        jp, jq, jv = lp.index(f"dp[{i}]"), lp.index(f"dq[{i}]"), lp.index(f"dv[{i}]")
        for t, (n1, n2, n3, d) in enumerate(hs.rows):
            lp.add_row({jp: n1, jq: n2, jv: n3}, "<=", float(d - hs.rows[t, :3] @ x_cur), f"hull[{i},{t}]")
    return lp


def extract_deltas(sol, buses: Iterable[int]) -> dict[int, tuple[float, float, float]]:
    """Per-bus (dp, dq, dv) from an optimal solution."""
    out = {}
    for i in buses:
        dp, dq, _, dv = state_var_names(i)
        out[i] = (sol.value(dp), sol.value(dq), sol.value(dv))
    return out
