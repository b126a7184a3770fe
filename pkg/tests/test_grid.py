import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexgrid.grid import (
    Branch,
    Bus,
    GridFormatError,
    GridModel,
    GridValidationError,
    admittance_matrix,
    grid_from_dict,
    incidence,
    is_connected,
    load_grid,
    save_grid,
    synth_grid,
    validate_grid,
)

from conftest import two_bus


def test_two_bus_is_valid():
    g = validate_grid(two_bus())
    assert g.slack == 0 and g.n_buses == 2 and list(g.non_slack) == [1]


def test_duplicate_bus_id():
    g = GridModel([Bus(0, "slack"), Bus(0)], [])
    with pytest.raises(GridValidationError, match="duplicate bus id 0"):
        validate_grid(g)


def test_exactly_one_slack():
    g = GridModel([Bus(0, "slack"), Bus(1, "slack")], [Branch(0, 0, 1, 10.0, -1.4, 1.0)])
    with pytest.raises(GridValidationError, match="slack"):
        validate_grid(g)


def test_disconnected_bus():
    g = GridModel([Bus(0, "slack"), Bus(1), Bus(2)], [Branch(0, 0, 1, 10.0, -1.4, 1.0)])
    assert not is_connected(g)
    with pytest.raises(GridValidationError, match="connected"):
        validate_grid(g)


@pytest.mark.parametrize("field,value", [("y_mag", 0.0), ("i_max", -1.0), ("to_bus", 7), ("to_bus", 0)])
def test_bad_branch(field, value):
    br = dict(id=0, from_bus=0, to_bus=1, y_mag=10.0, theta=-1.4, i_max=1.0)
    br[field] = value
    g = GridModel([Bus(0, "slack"), Bus(1)], [Branch(**br)])
    with pytest.raises(GridValidationError):
        validate_grid(g)


def test_vmin_below_vmax():
    g = GridModel([Bus(0, "slack"), Bus(1, vmin=1.1, vmax=1.0)], [Branch(0, 0, 1, 10.0, -1.4, 1.0)])
    with pytest.raises(GridValidationError, match="vmin"):
        validate_grid(g)


def test_format_errors_name_the_field():
    data = two_bus().to_dict()
    data["buses"][1]["p0"] = "lots"
    with pytest.raises(GridFormatError, match=r"buses\[1\]\.p0"):
        grid_from_dict(data)
    data = two_bus().to_dict()
    del data["branches"]
    with pytest.raises(GridFormatError, match="branches"):
        grid_from_dict(data)


def test_json_round_trip(tmp_path):
    g = synth_grid(12, 3)
    save_grid(g, tmp_path / "g.json")
    h = load_grid(tmp_path / "g.json")
    assert h.to_dict() == g.to_dict()
    assert json.loads((tmp_path / "g.json").read_text())["s_base"] == 100.0


def test_admittance_rows_sum_to_zero():
    # series-only model: no shunt charging, so every row sums to zero
    Y = admittance_matrix(synth_grid(15, 2))
    assert np.allclose(Y, Y.T)
    assert np.allclose(Y.sum(axis=1), 0.0, atol=1e-9)


def test_incidence_layout():
    g = synth_grid(8, 1)
    inc = incidence(g)
    A = inc.matrix()
    assert A.shape == (2 * g.n_branches, g.n_buses)
    for b, br in enumerate(g.branches):
        assert A[2 * b, br.from_bus] == 1 and A[2 * b + 1, br.to_bus] == 1
    assert np.all(A.sum(axis=1) == 1)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 10_000))
def test_synth_grid_is_valid(n, seed):
    g = synth_grid(n, seed)
    assert is_connected(g)
    assert g.n_buses == n
    assert all(0 < br.i_max for br in g.branches)


def test_single_branch_admittance():
    y = 10.0 * np.exp(-1j * np.pi / 2)
    g = GridModel([Bus(0, "slack"), Bus(1)], [Branch(0, 0, 1, 10.0, -np.pi / 2, 1.0)])
    Y = admittance_matrix(g)
    assert Y[0, 0] == pytest.approx(y) and Y[0, 1] == pytest.approx(-y)


def test_parallel_branches_have_distinct_terminals():
    g = GridModel([Bus(0, "slack"), Bus(1)], [Branch(0, 0, 1, 10.0, -1.4, 1.0), Branch(1, 0, 1, 5.0, -1.4, 1.0)])
    inc = incidence(g)
    assert inc.n_terminals == 4
    assert admittance_matrix(g)[0, 1] == pytest.approx(-(g.branches[0].y + g.branches[1].y))


def test_synth_is_deterministic(tmp_path):
    assert synth_grid(30, 7).to_dict() == synth_grid(30, 7).to_dict()
    g = synth_grid(2, 1)
    save_grid(g, tmp_path / "g.json")
    assert load_grid(tmp_path / "g.json") == g
    assert sum(b.kind == "slack" for b in synth_grid(30, 7).buses) == 1
