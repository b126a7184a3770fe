import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fsolve

from flexgrid.grid import admittance_matrix, synth_grid
from flexgrid.powerflow import (
    PowerFlowError,
    bus_power,
    current_sensitivity_tt,
    predict,
    sensitivities,
    solve_power_flow,
)

from conftest import two_bus


def test_two_bus_matches_fsolve():
    g = two_bus(p=-0.8, q=-0.3)
    st_ = solve_power_flow(g)
    Y = admittance_matrix(g)

    def mismatch(x):
        v = np.array([1.0, x[1]])
        d = np.array([0.0, x[0]])
        p, q = bus_power(Y, v, d)
        return [p[1] + 0.8, q[1] + 0.3]

    d1, v1 = fsolve(mismatch, [0.0, 1.0], xtol=1e-13)
    assert st_.v[1] == pytest.approx(v1, abs=1e-9)
    assert st_.delta[1] == pytest.approx(d1, abs=1e-9)
    assert st_.mismatch < 1e-8


def test_branch_current_is_ohms_law():
    g = two_bus(p=-0.6, q=-0.1)
    s = solve_power_flow(g)
    V = s.v * np.exp(1j * s.delta)
    i = abs(g.branches[0].y * (V[0] - V[1]))
    assert s.branch_i[0] == pytest.approx(i, rel=1e-12)
    assert s.branch_i[1] == pytest.approx(i, rel=1e-12)  # series-only branch


def test_divergence_is_reported():
    with pytest.raises(PowerFlowError) as exc:
        solve_power_flow(two_bus(p=-12.0, q=-6.0))
    assert exc.value.mismatch > 0


def test_slack_voltage_range():
    with pytest.raises(ValueError):
        solve_power_flow(two_bus(), slack_v=2.0)


def test_predict_dimension_check():
    g = synth_grid(6, 0)
    sens = sensitivities(g, solve_power_flow(g))
    with pytest.raises(ValueError):
        predict(sens, np.zeros(3), np.zeros(5))


def test_current_sensitivity_zero_current_subgradient():
    g = two_bus(p=0.0, q=0.0)
    s = solve_power_flow(g)
    ID, IU = current_sensitivity_tt(g, s)
    assert np.all(np.isfinite(ID)) and np.all(np.isfinite(IU))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 5000), n=st.integers(3, 10))
def test_linear_prediction_is_first_order(seed, n):
    g = synth_grid(n, seed)
    s0 = solve_power_flow(g)
    sens = sensitivities(g, s0)
    rng = np.random.default_rng(seed)
    direction_p = rng.normal(size=sens.n)
    direction_q = rng.normal(size=sens.n)
    errs = []
    for h in (1e-2, 5e-3):
        dp, dq = h * direction_p, h * direction_q
        full_p, full_q = np.zeros(n), np.zeros(n)
        full_p[sens.non_slack] = dp
        full_q[sens.non_slack] = dq
        s1 = solve_power_flow(g, full_p, full_q)
        _, dv, _ = predict(sens, dp, dq)
        errs.append(np.max(np.abs(s1.v[sens.non_slack] - s0.v[sens.non_slack] - dv)))
    # second-order remainder: halving the step quarters the error
    assert errs[1] <= errs[0] / 3 + 1e-12


def test_flat_start_identity():
    g = two_bus(p=0.0, q=0.0)
    s = solve_power_flow(g)
    assert s.iterations == 0 and s.v[1] == 1.0 and s.delta[1] == 0.0


def test_two_bus_fixed_point_oracle():
    # lossless line y = 10 /-90deg, injection S1 = -0.1: iterate V1 = V0 + conj(S1) / (conj(V1) * y)
    g = two_bus(p=-0.1, q=0.0, x=0.1, r=0.0)
    y, S1 = 1 / 0.1j, -0.1 + 0j
    V1 = 1.0 + 0j
    for _ in range(200):
        V1 = 1.0 + np.conj(S1) / (np.conj(V1) * y)
    s = solve_power_flow(g)
    assert s.v[1] < 1.0
    assert s.v[1] == pytest.approx(abs(V1), abs=1e-9)
    assert s.delta[1] == pytest.approx(np.angle(V1), abs=1e-9)


def test_far_beyond_loadability():
    with pytest.raises(PowerFlowError):
        solve_power_flow(two_bus(p=-100.0, q=0.0))


def test_dq_dv_positive_at_flat_start():
    from flexgrid.powerflow import jacobian

    g = two_bus(p=0.0, q=0.0)
    J = jacobian(g, solve_power_flow(g))
    assert J[1, 1] > 0  # dq1/dv1


def test_small_dq_prediction_two_bus():
    g = two_bus()
    s0 = solve_power_flow(g)
    sens = sensitivities(g, s0)
    _, dv, _ = predict(sens, np.zeros(1), np.array([0.01]))
    s1 = solve_power_flow(g, dq=np.array([0.0, 0.01]))
    assert dv[0] == pytest.approx(s1.v[1] - s0.v[1], abs=1e-4)


def test_predict_is_linear():
    g = synth_grid(12, 4)
    sens = sensitivities(g, solve_power_flow(g))
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 2, sens.n))
    pa, pb, pab = predict(sens, *a), predict(sens, *b), predict(sens, *(a + b))
    for x, y, z in zip(pa, pb, pab):
        assert np.allclose(x + y, z, rtol=0, atol=1e-12)
    assert all(np.all(x == 0) for x in predict(sens, np.zeros(sens.n), np.zeros(sens.n)))


def test_local_sensitivity_dominates_remote():
    g = synth_grid(30, 7)
    sens = sensitivities(g, solve_power_flow(g))
    slack_adj = [br.to_bus for br in g.branches if br.from_bus == 0][0]
    k = int(np.flatnonzero(sens.non_slack == slack_adj)[0])
    remote = int(np.argmin(sens.dv_dq[k]))  # weakest coupling
    assert abs(sens.dv_dq[k, remote]) < abs(sens.dv_dq[k, k])


def test_branch_current_prediction_30_bus():
    g = synth_grid(30, 7)
    s0 = solve_power_flow(g)
    sens = sensitivities(g, s0)
    dp = np.zeros(sens.n)
    dp[10] = 0.05
    _, _, di = predict(sens, dp, np.zeros(sens.n))
    full = np.zeros(g.n_buses)
    full[sens.non_slack[10]] = 0.05
    actual = solve_power_flow(g, dp=full).branch_i - s0.branch_i
    big = np.abs(actual) > 0.1 * np.max(np.abs(actual))
    assert np.all(np.abs(di[big] - actual[big]) <= 0.05 * np.abs(actual[big]))
