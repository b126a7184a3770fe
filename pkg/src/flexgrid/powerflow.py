"""Newton-Raphson AC power flow and the linear sensitivities built on its Jacobian.

All non-slack buses are PQ buses. The state vector of the Newton iteration is
``[delta_ns, v_ns]`` over the non-slack buses in index order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridModel, admittance_matrix, incidence

TOLERANCE = 1e-8
MAX_ITER = 25


class PowerFlowError(RuntimeError):
    def __init__(self, message: str, mismatch: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


@dataclass(frozen=True)
class PowerFlowState:
    v: np.ndarray
    delta: np.ndarray
    branch_i: np.ndarray  # per terminal, ordered as grid.incidence
    mismatch: float
    iterations: int
    p: np.ndarray  # specified net injections used for the solve
    q: np.ndarray

    def branch_max(self) -> np.ndarray:
        """Per-branch binding current: max over the two terminals."""
        return self.branch_i.reshape(-1, 2).max(axis=1)


@dataclass(frozen=True)
class SensitivityBundle:
    non_slack: np.ndarray
    dv_dp: np.ndarray
    dv_dq: np.ndarray
    ddelta_dp: np.ndarray
    ddelta_dq: np.ndarray
    di_ddelta: np.ndarray  # terminals x non-slack buses
    di_dv: np.ndarray

    @property
    def n(self) -> int:
        return len(self.non_slack)


def bus_power(Y: np.ndarray, v: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    V = v * np.exp(1j * delta)
    S = V * np.conj(Y @ V)
    return S.real, S.imag


def terminal_currents(grid: GridModel, v: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Current magnitude at every branch terminal (series branches: both ends equal)."""
    inc = incidence(grid)
    V = v * np.exp(1j * delta)
    y = np.array([br.y for br in grid.branches])
    y_t = np.repeat(y, 2)
    return np.abs(y_t * (V[inc.bus] - V[inc.other_bus]))


def _jacobian_full(Y: np.ndarray, v: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """d(p, q)/d(delta, v) over all buses (2n x 2n)."""
    V = v * np.exp(1j * delta)
    I = Y @ V
    diagV = np.diag(V)
    dS_dd = 1j * diagV @ np.conj(np.diag(I) - Y @ diagV)
    Vn = np.exp(1j * delta)
    dS_dv = diagV @ np.conj(Y @ np.diag(Vn)) + np.conj(np.diag(I)) @ np.diag(Vn)
    return np.block([[dS_dd.real, dS_dv.real], [dS_dd.imag, dS_dv.imag]])


def _reduce(J: np.ndarray, ns: np.ndarray, n: int) -> np.ndarray:
    idx = np.concatenate([ns, ns + n])
    return J[np.ix_(idx, idx)]


def solve_power_flow(
    grid: GridModel,
    dp: np.ndarray | None = None,
    dq: np.ndarray | None = None,
    slack_v: float | None = None,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITER,
) -> PowerFlowState:
    """Solve the AC power flow from a flat start.

    ``dp``/``dq`` are optional per-bus injection overrides added to the
    grid's specified injections.
    """
    n = grid.n_buses
    s = grid.slack
    if slack_v is None:
        slack_v = grid.buses[s].v0
    if not 0.5 < slack_v < 1.5:
        raise ValueError(f"slack_v={slack_v} outside the (0.5, 1.5) pu sanity band")
    p_spec, q_spec = grid.injections()
    if dp is not None:
        p_spec = p_spec + np.asarray(dp, dtype=float)
    if dq is not None:
        q_spec = q_spec + np.asarray(dq, dtype=float)
    Y = admittance_matrix(grid)
    ns = grid.non_slack
    v = np.full(n, float(slack_v))
    delta = np.zeros(n)
    delta[s] = grid.buses[s].delta0

    it = 0
    while True:
        p, q = bus_power(Y, v, delta)
        f = np.concatenate([p[ns] - p_spec[ns], q[ns] - q_spec[ns]])
        mis = float(np.max(np.abs(f))) if f.size else 0.0
        if not np.isfinite(mis):
            raise PowerFlowError("power flow diverged (non-finite mismatch)", mis, it)
        if mis <= tol:
            break
        if it >= max_iter:
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations (mismatch {mis:.3e} pu)", mis, it
            )
        J = _reduce(_jacobian_full(Y, v, delta), ns, n)
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise PowerFlowError("singular Jacobian", mis, it) from None
        k = len(ns)
        delta[ns] += dx[:k]
        v[ns] += dx[k:]
        it += 1
        if np.any(v[ns] <= 0):
            raise PowerFlowError("power flow diverged (non-positive voltage)", mis, it)
    return PowerFlowState(
        v=v, delta=delta, branch_i=terminal_currents(grid, v, delta),
        mismatch=mis, iterations=it, p=p_spec, q=q_spec,
    )


def jacobian(grid: GridModel, state: PowerFlowState) -> np.ndarray:
    """Reduced Jacobian d(p, q)/d(delta, v) over non-slack buses at ``state``."""
    return _reduce(_jacobian_full(admittance_matrix(grid), state.v, state.delta), grid.non_slack, grid.n_buses)


def current_sensitivity_tt(grid: GridModel, state: PowerFlowState) -> tuple[np.ndarray, np.ndarray]:
    """Terminal-to-terminal sensitivities ID_TT and IU_TT.

    Entry (t, t') is d|i_t| / d(angle or magnitude) of the voltage at terminal
    t'; only the two terminals of the same branch are coupled.
    """
    inc = incidence(grid)
    T = inc.n_terminals
    ID = np.zeros((T, T))
    IU = np.zeros((T, T))
    v, d = state.v, state.delta
    for b, br in enumerate(grid.branches):
        for own in (0, 1):
            t, o = 2 * b + own, 2 * b + 1 - own
            i, j = inc.bus[t], inc.bus[o]
            mag = np.abs(v[i] * np.exp(1j * d[i]) - v[j] * np.exp(1j * d[j]))
            if mag < 1e-12:
                # |i| is not differentiable at zero current; use the zero subgradient
                continue
            k = br.y_mag / mag
            sin_ij, cos_ij = np.sin(d[i] - d[j]), np.cos(d[i] - d[j])
            ID[t, t] = k * v[i] * v[j] * sin_ij
            ID[t, o] = -k * v[i] * v[j] * sin_ij
            IU[t, t] = k * (v[i] - v[j] * cos_ij)
            IU[t, o] = k * (v[j] - v[i] * cos_ij)
    return ID, IU


def sensitivities(grid: GridModel, state: PowerFlowState) -> SensitivityBundle:
    ns = grid.non_slack
    k = len(ns)
    J = jacobian(grid, state)
    try:
        Jinv = np.linalg.inv(J)
    except np.linalg.LinAlgError:
        raise PowerFlowError("singular Jacobian") from None
    ID, IU = current_sensitivity_tt(grid, state)
    C = incidence(grid).matrix()[:, ns]
    return SensitivityBundle(
        non_slack=ns,
        ddelta_dp=Jinv[:k, :k],
        ddelta_dq=Jinv[:k, k:],
        dv_dp=Jinv[k:, :k],
        dv_dq=Jinv[k:, k:],
        di_ddelta=ID @ C,
        di_dv=IU @ C,
    )


def predict(sens: SensitivityBundle, dp: np.ndarray, dq: np.ndarray):
    """Linear response (d_delta, d_v, d_i) to non-slack injection changes."""
    dp = np.asarray(dp, dtype=float)
    dq = np.asarray(dq, dtype=float)
    if dp.shape != (sens.n,) or dq.shape != (sens.n,):
        raise ValueError(f"expected vectors of length {sens.n}, got {dp.shape} and {dq.shape}")
    ddelta = sens.ddelta_dp @ dp + sens.ddelta_dq @ dq
    dv = sens.dv_dp @ dp + sens.dv_dq @ dq
    di = sens.di_ddelta @ ddelta + sens.di_dv @ dv
    return ddelta, dv, di
