import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, Delaunay

from flexgrid.fors import ForSlice, PqvFor, polyhedral_volume, synth_for
from flexgrid.hull import (
    DegenerateHullError,
    convex_hull,
    facet_half_space,
    for_hull,
    for_point_cloud,
    half_spaces,
    over_approximation,
)

CUBE = np.array(list(itertools.product([0.0, 1.0], repeat=3)))


def test_cube():
    h = convex_hull(CUBE)
    assert len(h.facets) == 12
    assert h.volume == pytest.approx(1.0, abs=1e-12)
    hs = half_spaces(h)
    assert len(hs) == 6
    assert np.allclose(np.sort(np.abs(hs.rows[:, :3]).sum(axis=1)), 1.0)


def test_tetrahedron():
    h = convex_hull([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert len(h.facets) == 4
    assert h.volume == pytest.approx(1 / 6, abs=1e-15)


def test_facet_orientation_by_hand():
    A, B, C = (0, 0, 0), (1, 0, 0), (0, 1, 0)
    # AB x BC = (0, 0, 1); a centroid below keeps z <= 0
    assert np.allclose(facet_half_space(A, B, C, (0.2, 0.2, -1.0)), [0, 0, 1, 0])
    # a centroid above flips the row to -z <= 0
    assert np.allclose(facet_half_space(A, B, C, (0.2, 0.2, 1.0)), [0, 0, -1, 0])


def test_degenerate_inputs():
    with pytest.raises(DegenerateHullError) as exc:
        convex_hull([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 0]])
    assert exc.value.rank == 2
    with pytest.raises(DegenerateHullError):
        convex_hull([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]])


def test_ball_against_scipy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 3))
    x *= (rng.uniform(size=500) ** (1 / 3) / np.linalg.norm(x, axis=1))[:, None]
    h = convex_hull(x)
    ref = ConvexHull(x)
    assert h.volume == pytest.approx(ref.volume, rel=1e-12)
    assert set(map(tuple, h.vertices)) == set(map(tuple, x[ref.vertices]))
    hs = half_spaces(h)
    assert np.all(hs.violation(x) <= 1e-9)
    V, E, F = len(h.vertices), h.n_edges(), len(h.facets)
    assert V - E + F == 2


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 80))
def test_membership_equivalence(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(n, 3))
    h = convex_hull(pts)
    hs = half_spaces(h)
    probes = rng.uniform(-1.2, 1.2, size=(1000, 3))
    ours = hs.contains(probes, tol=0.0)
    oracle = Delaunay(pts).find_simplex(probes) >= 0
    near = np.abs(hs.violation(probes)) < 1e-9
    assert np.array_equal(ours[~near], oracle[~near])


def test_hull_is_idempotent():
    h = for_hull(synth_for(3, 1, 7))
    h2 = convex_hull(h.vertices)
    assert np.array_equal(h2.vertices, h.vertices)
    assert h2.volume == pytest.approx(h.volume, abs=1e-12)


def test_for_hull_contains_every_slice_vertex():
    f = synth_for(3, 1, 7)
    hs = half_spaces(for_hull(f))
    assert np.all(hs.contains(for_point_cloud(f)))
    assert hs.violation(for_hull(f).centroid)[0] < 0


def test_over_approximation_sign():
    f = synth_for(3, 1, 7)
    assert over_approximation(f, for_hull(f)) > 0
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    prism = PqvFor(0, [ForSlice(0.95, sq), ForSlice(1.05, sq)], (0.5, 0.5, 1.0))
    assert over_approximation(prism, for_hull(prism)) == pytest.approx(0.0, abs=1e-6)


def test_scaled_shrinks_towards_center():
    hs = half_spaces(convex_hull(CUBE))
    small = hs.scaled((0.5, 0.5, 0.5), 0.5)
    assert small.contains([[0.3, 0.3, 0.3]])[0]
    assert not small.contains([[0.2, 0.5, 0.5]])[0]


def test_hull_contains_every_segment():
    from flexgrid.fors import segment_3d, segment_points

    f = synth_for(6, 3, 7)
    hs = half_spaces(for_hull(f))
    for pts in segment_points(segment_3d(f, 2, 3), 8):
        assert np.all(hs.contains(pts, tol=1e-9))
