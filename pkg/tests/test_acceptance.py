"""Acceptance criteria, one test per criterion.

Each test prints a single ``AC-n PASS|FAIL`` line with the measured values
and asserts the pinned tolerance and runtime budget. Run with ``-s`` or look
at the printed summary in the ``-v`` output.
"""

import itertools
import json
import time

import numpy as np
import pytest
from scipy.spatial import Delaunay

from flexgrid.cli import main
from flexgrid.fors import contains, polyhedral_volume, segment_2d, segment_3d, segment_points, synth_for
from flexgrid.grid import admittance_matrix, load_grid, synth_grid
from flexgrid.hull import convex_hull, for_hull, half_spaces, over_approximation
from flexgrid.opman import detect, robustness_sweep
from flexgrid.optimize import build_convex_lp, build_milp_2d, build_milp_3d, solve_lp, solve_milp
from flexgrid.powerflow import bus_power, jacobian, sensitivities, solve_power_flow, terminal_currents
from flexgrid.scenario import load_scenario, write_scenario

from oracles import enumerate_milp, small_instance


def verdict(n, ok, detail, capsys):
    with capsys.disabled():
        print(f"\nAC-{n} {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# -- 1 ---------------------------------------------------------------------------


def test_ac1_sensitivities_match_finite_differences(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        n = 3 + seed % 8  # 3..10 buses
        g = synth_grid(n, 100 + seed)
        st = solve_power_flow(g, tol=1e-13)
        Y = admittance_matrix(g)
        ns = g.non_slack
        k = len(ns)
        x0 = np.concatenate([st.delta[ns], st.v[ns]])

        def pq(x):
            d, v = st.delta.copy(), st.v.copy()
            d[ns], v[ns] = x[:k], x[k:]
            p, q = bus_power(Y, v, d)
            return np.concatenate([p[ns], q[ns]])

        def cur(x):
            d, v = st.delta.copy(), st.v.copy()
            d[ns], v[ns] = x[:k], x[k:]
            return terminal_currents(g, v, d)

        h = 1e-6
        J_fd = np.column_stack([(pq(x0 + h * e) - pq(x0 - h * e)) / (2 * h) for e in np.eye(2 * k)])
        worst = max(worst, rel_err(jacobian(g, st), J_fd))
        sens = sensitivities(g, st)
        # |i| curves sharply on lightly loaded branches, so the current block needs a finer step
        h = 1e-8
        I_fd = np.column_stack([(cur(x0 + h * e) - cur(x0 - h * e)) / (2 * h) for e in np.eye(2 * k)])
        worst = max(worst, rel_err(np.hstack([sens.di_ddelta, sens.di_dv]), I_fd))
        # inverse-Jacobian sensitivities against re-solved power flows
        h = 1e-4
        cols = []
        for j in range(2 * k):
            dp, dq = np.zeros(n), np.zeros(n)
            (dp if j < k else dq)[ns[j % k]] = h
            up = solve_power_flow(g, dp, dq, tol=1e-12)
            dn = solve_power_flow(g, -dp, -dq, tol=1e-12)
            cols.append(np.concatenate([up.delta[ns] - dn.delta[ns], up.v[ns] - dn.v[ns]]) / (2 * h))
        S = np.block([[sens.ddelta_dp, sens.ddelta_dq], [sens.dv_dp, sens.dv_dq]])
        worst = max(worst, rel_err(S, np.column_stack(cols)))
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-6 and dt < 10, f"max relative error {worst:.2e} (tol 1e-6), {dt:.2f} s (< 10 s)", capsys)


# -- 2 ---------------------------------------------------------------------------


def test_ac2_segmentation_soundness(capsys):
    t0 = time.perf_counter()
    samples = escapes = 0
    for seed in range(10):
        f = synth_for(seed, 1000 + seed, 7)
        assert all(not s.is_convex() for s in f.slices)
        seg2 = segment_2d(f, 4)
        for pts in segment_points(seg2, 20):
            ok = contains(f, pts[:, 0], pts[:, 1], seg2.v_slack)
            samples += len(ok)
            escapes += int(np.sum(~ok))
        for pts in segment_points(segment_3d(f, 2, 3), 20):
            for v in np.unique(pts[:, 2]):
                m = pts[:, 2] == v
                ok = contains(f, pts[m, 0], pts[m, 1], v)
                samples += len(ok)
                escapes += int(np.sum(~ok))
    dt = time.perf_counter() - t0
    verdict(2, escapes == 0 and samples >= 10_000 and dt < 30,
            f"{escapes} escapes over {samples} samples, {dt:.2f} s (< 30 s)", capsys)


# -- 3 ---------------------------------------------------------------------------


def test_ac3_milp_equals_enumeration(capsys):
    t0 = time.perf_counter()
    worst, cases, mismatched = 0.0, 0, []
    for seed in range(6):
        for n_for in (1, 2):
            g, st, sens, fors, lim, costs, pts = small_instance(seed, n_for)
            models = [build_milp_2d(sens, st, {i: segment_2d(f, k) for i, f in fors.items()}, lim, costs, pts)
                      for k in (2, 4)]
            models += [build_milp_3d(sens, st, {i: segment_3d(f, k, l) for i, f in fors.items()}, lim, costs, pts)
                       for k, l in ((1, 2), (2, 4))]
            for m in models:
                sol = solve_milp(m)
                best = enumerate_milp(m)
                cases += 1
                if best is None or sol.x is None:
                    if (best is None) != (sol.x is None):
                        mismatched.append((seed, n_for))
                    continue
                worst = max(worst, abs(sol.objective - best))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and not mismatched and dt < 60
    verdict(3, ok, f"{cases} instances, max |obj - enum| {worst:.2e} (tol 1e-6), "
                   f"status mismatches {mismatched}, {dt:.2f} s (< 60 s)", capsys)


# -- 4 ---------------------------------------------------------------------------


def test_ac4_hull_correctness(capsys, ref):
    cube = convex_hull(list(itertools.product([0.0, 1.0], repeat=3)))
    cube_ok = abs(cube.volume - 1.0) <= 1e-12 and len(half_spaces(cube)) == 6
    rng = np.random.default_rng(4)
    disagree = 0
    for trial in range(10):
        pts = rng.normal(size=(int(rng.integers(10, 200)), 3))
        hs = half_spaces(convex_hull(pts))
        probes = rng.normal(scale=1.3, size=(1000, 3))
        ours = hs.contains(probes, tol=0.0)
        oracle = Delaunay(pts).find_simplex(probes) >= 0
        near = np.abs(hs.violation(probes)) < 1e-9
        disagree += int(np.sum(ours[~near] != oracle[~near]))
    fors = [synth_for(s, 2000 + s, 7) for s in range(20)] + list(ref.fors.values())
    over = [over_approximation(f, for_hull(f)) for f in fors]
    vol_ok = all(for_hull(f).volume >= polyhedral_volume(f) for f in fors)
    ok = cube_ok and disagree == 0 and vol_ok
    verdict(4, ok, f"cube volume {cube.volume!r} rows {len(half_spaces(cube))}, membership disagreements "
                   f"{disagree}/10000, hull >= stack on {len(fors)} FORs (over-approx {min(over):.2f}-"
                   f"{max(over):.2f} %; published 2.45 % not asserted)", capsys)


# -- 5, 6, 7: end-to-end runs through the CLI --------------------------------------


@pytest.fixture(scope="module")
def runs(ref, tmp_path_factory):
    d = tmp_path_factory.mktemp("accept")
    scen = write_scenario(ref, d / "scenario")
    out = {}
    for method in ("convex", "milp3d"):
        t0 = time.perf_counter()
        code = main(["solve", "--scenario", str(scen), "--method", method, "--out", str(d / method)])
        out[method] = (code, time.perf_counter() - t0, d / method)
    return scen, out


def check_clean(scen, out_dir):
    """Independent re-verification: apply the reported deltas, re-run the power flow, check limits."""
    sc = load_scenario(scen)
    rep = json.loads((out_dir / "report.json").read_text())
    grid = load_grid(scen.parent / "grid.json")
    p = np.array([b.p0 for b in grid.buses])
    q = np.array([b.q0 for b in grid.buses])
    for i, (dp, dq) in rep["applied"].items():
        p[int(i)] += dp
        q[int(i)] += dq
    st = solve_power_flow(grid.with_injections(p, q))
    v_ok = bool(np.all(st.v >= sc.limits.vmin - 1e-4) and np.all(st.v <= sc.limits.vmax + 1e-4))
    ratio = float(np.max(st.branch_max() / sc.limits.imax))
    members = all(
        contains(f, f.op0[0] + rep["applied"][str(i)][0], f.op0[1] + rep["applied"][str(i)][1], float(st.v[i]), 1e-6)
        for i, f in sc.fors.items()
    )
    return v_ok, ratio, members, rep


def test_ac5_convex_end_to_end(capsys, ref, runs):
    scen, out = runs
    code, dt, d = out["convex"]
    init = detect(solve_power_flow(ref.grid), ref.limits)
    v_ok, ratio, members, rep = check_clean(scen, d)
    ok = (code == 0 and v_ok and ratio <= 1 + 1e-3 and members and dt < 60
          and len(init.current) >= 1 and len(init.voltage) >= 2)
    verdict(5, ok, f"exit {code}, {len(init.voltage)} voltage + {len(init.current)} thermal violations before, "
                   f"voltages ok {v_ok}, max ratio {ratio:.4f}, members {members}, "
                   f"{rep['iterations']} rounds, {dt:.2f} s (< 60 s)", capsys)


def test_ac6_milp3d_end_to_end(capsys, runs):
    scen, out = runs
    code, dt, d = out["milp3d"]
    v_ok, ratio, members, rep = check_clean(scen, d)
    sos_ok = bool(rep["selections"])
    for sel in rep["selections"]:
        for i in rep["applied"]:
            for role in ("x_p", "x_v"):
                sos_ok &= sum(x for name, x in sel.items() if name.startswith(f"{role}[{i},")) == 1
    ok = code == 0 and v_ok and ratio <= 1 + 1e-3 and members and sos_ok and dt < 900
    verdict(6, ok, f"exit {code}, voltages ok {v_ok}, max ratio {ratio:.4f}, members {members}, "
                   f"one-hot x_p/x_v {sos_ok}, {rep['iterations']} rounds, {dt:.2f} s (< 900 s)", capsys)


def test_ac7_runtime_ordering(capsys, runs):
    _, out = runs
    t_cvx, t_milp = out["convex"][1], out["milp3d"][1]
    verdict(7, t_cvx <= t_milp / 5, f"convex {t_cvx:.2f} s vs milp3d {t_milp:.2f} s, "
                                    f"ratio {t_milp / t_cvx:.1f} (need >= 5)", capsys)


# -- 8 ---------------------------------------------------------------------------


def test_ac8_robustness_sweep(capsys, ref):
    levels = [-50.0, -100.0, -150.0, -200.0]
    bus = ref.sweep.bus
    res = robustness_sweep(ref.grid, ref.fors, ref.limits, "convex", bus, levels, ref.config)
    v_base = solve_power_flow(ref.grid).v[bus]
    dv = [abs(r.initial_state.v[bus] - v_base) for r in res]
    monotone = all(b > a for a, b in zip(dv, dv[1:]))
    clean = all(r.success and all(r.membership.values()) for r in res)
    verdict(8, monotone and clean, f"bus {bus}, statuses {[r.status for r in res]}, "
                                   f"pre-correction |dv| {[round(float(x), 5) for x in dv]}", capsys)


# -- 9 ---------------------------------------------------------------------------


def test_ac9_relaxation_dominance(capsys, ref, runs):
    pairs = []
    for seed in range(12):
        g, st, sens, fors, lim, costs, pts = small_instance(seed, 1 + seed % 2)
        hs = {i: half_spaces(for_hull(f), i) for i, f in fors.items()}
        cvx = solve_lp(build_convex_lp(sens, st, hs, lim, costs, pts))
        mil = solve_milp(build_milp_3d(sens, st, {i: segment_3d(f, 2, 3) for i, f in fors.items()}, lim, costs, pts))
        if cvx.ok and mil.ok:
            pairs.append((f"small-{seed}", cvx.objective, mil.objective))
    # reference scenario: the first round of both runs shares the same linearisation point and costs
    _, out = runs
    first = {m: json.loads((out[m][2] / "report.json").read_text())["objectives"][0] for m in out}
    pairs.append(("reference", first["convex"], first["milp3d"]))
    bad = [p for p in pairs if p[1] > p[2] + 1e-9]
    verdict(9, not bad and len(pairs) >= 5,
            f"{len(pairs)} scenarios, convex <= milp3d on all but {bad}", capsys)
