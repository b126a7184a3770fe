"""3D convex hull (quickhull) of FOR point clouds and its half-space form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fors import PqvFor, polyhedral_volume


class DegenerateHullError(ValueError):
    def __init__(self, message: str, rank: int):
        super().__init__(message)
        self.rank = rank


@dataclass(frozen=True, eq=False)
class TriangulatedHull:
    vertices: np.ndarray  # (nv, 3)
    facets: np.ndarray  # (nf, 3) vertex indices, counter-clockwise seen from outside
    volume: float

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def n_edges(self) -> int:
        edges = {frozenset(e) for f in self.facets for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0]))}
        return len(edges)

    def to_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "facets": self.facets.tolist(),
            "volume": self.volume,
        }


@dataclass(frozen=True, eq=False)
class HalfSpaceSet:
    """Rows (n1, n2, n3, d) meaning n . x <= d, with unit normals."""

    rows: np.ndarray
    bus_id: int = -1

    def __len__(self) -> int:
        return len(self.rows)

    def violation(self, x) -> np.ndarray:
        """max_k (n_k . x - d_k) for each point; <= 0 means inside."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.max(x @ self.rows[:, :3].T - self.rows[:, 3], axis=1)

    def contains(self, x, tol: float = 1e-9) -> np.ndarray:
        return self.violation(x) <= tol

    def scaled(self, center, factor: float) -> HalfSpaceSet:
        """Polytope shrunk (factor < 1) towards ``center`` by homothety."""
        n = self.rows[:, :3]
        nc = n @ np.asarray(center, dtype=float)
        d = nc + factor * (self.rows[:, 3] - nc)
        return HalfSpaceSet(np.column_stack([n, d]), self.bus_id)

    def to_dict(self) -> dict:
        return {"bus_id": self.bus_id, "rows": self.rows.tolist()}


def _plane(P: np.ndarray, a: int, b: int, c: int):
    n = np.cross(P[b] - P[a], P[c] - P[b])
    nn = np.linalg.norm(n)
    return n / nn if nn > 0 else n, nn


def convex_hull(points) -> TriangulatedHull:
    """Quickhull with deterministic ordering: points are deduplicated and sorted
    lexicographically, ties always resolve to the lowest index."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 3), axis=0)
    if len(pts) < 4:
        raise DegenerateHullError(f"need at least 4 distinct points, got {len(pts)}", len(pts) - 1)
    scale = float(np.max(np.ptp(pts, axis=0)))
    rank = int(np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-9 * max(scale, 1e-300)))
    if rank < 3:
        raise DegenerateHullError(f"points are degenerate (affine rank {rank})", rank)
    eps = 1e-10 * scale

    i0 = 0
    i1 = int(np.argmax(np.linalg.norm(pts - pts[i0], axis=1)))
    u = (pts[i1] - pts[i0]) / np.linalg.norm(pts[i1] - pts[i0])
    rel = pts - pts[i0]
    i2 = int(np.argmax(np.linalg.norm(rel - np.outer(rel @ u, u), axis=1)))
    nrm = np.cross(pts[i1] - pts[i0], pts[i2] - pts[i0])
    i3 = int(np.argmax(np.abs(rel @ nrm)))
    inner = pts[[i0, i1, i2, i3]].mean(axis=0)

    facets: dict[int, list] = {}  # id -> [verts, normal, offset, outside]
    edge_of: dict[tuple[int, int], int] = {}
    next_id = [0]

    def add(a, b, c):
        n, _ = _plane(pts, a, b, c)
        if n @ (inner - pts[a]) > 0:
            a, b = b, a
            n = -n
        fid = next_id[0]
        next_id[0] += 1
        facets[fid] = [(a, b, c), n, float(n @ pts[a]), []]
        for e in ((a, b), (b, c), (c, a)):
            edge_of[e] = fid
        return fid

    for tri in ((i0, i1, i2), (i0, i1, i3), (i0, i2, i3), (i1, i2, i3)):
        add(*tri)

    def assign(candidates, fids):
        for k in candidates:
            for fid in fids:
                f = facets[fid]
                if f[1] @ pts[k] - f[2] > eps:
                    f[3].append(k)
                    break

    simplex = {i0, i1, i2, i3}
    assign([k for k in range(len(pts)) if k not in simplex], sorted(facets))

    while True:
        work = next((fid for fid in sorted(facets) if facets[fid][3]), None)
        if work is None:
            break
        f = facets[work]
        dists = [f[1] @ pts[k] - f[2] for k in f[3]]
        eye = f[3][int(np.argmax(dists))]
        # visible region by flood fill from the working facet
        visible = {work}
        stack = [work]
        while stack:
            fid = stack.pop()
            a, b, c = facets[fid][0]
            for x, y in ((a, b), (b, c), (c, a)):
                nb = edge_of[(y, x)]
                if nb not in visible and facets[nb][1] @ pts[eye] - facets[nb][2] > eps:
                    visible.add(nb)
                    stack.append(nb)
        horizon = []
        orphans = []
        for fid in sorted(visible):
            a, b, c = facets[fid][0]
            for x, y in ((a, b), (b, c), (c, a)):
                if edge_of[(y, x)] not in visible:
                    horizon.append((x, y))
            orphans.extend(facets[fid][3])
        for fid in visible:
            a, b, c = facets[fid][0]
            for e in ((a, b), (b, c), (c, a)):
                if edge_of.get(e) == fid:
                    del edge_of[e]
            del facets[fid]
        new = []
        for x, y in horizon:
            fid = next_id[0]
            next_id[0] += 1
            n, _ = _plane(pts, x, y, eye)
            facets[fid] = [(x, y, eye), n, float(n @ pts[x]), []]
            for e in ((x, y), (y, eye), (eye, x)):
                edge_of[e] = fid
            new.append(fid)
        assign(sorted(set(orphans) - {eye}), new)

    tris = [facets[fid][0] for fid in sorted(facets)]
    used = sorted({v for t in tris for v in t})
    remap = {v: k for k, v in enumerate(used)}
    verts = pts[used]
    canon = []
    for a, b, c in tris:
        t = [remap[a], remap[b], remap[c]]
        r = int(np.argmin(t))
        canon.append(tuple(t[r:] + t[:r]))
    canon.sort()
    F = np.array(canon, dtype=int)
    cen = verts.mean(axis=0)
    A, B, C = verts[F[:, 0]] - cen, verts[F[:, 1]] - cen, verts[F[:, 2]] - cen
    volume = float(np.sum(np.einsum("ij,ij->i", A, np.cross(B, C))) / 6.0)
    return TriangulatedHull(verts, F, volume)


def facet_half_space(A, B, C, interior) -> np.ndarray:
    """Row (n1, n2, n3, d) of the plane through A, B, C with normal AB x BC,
    oriented so that ``interior`` satisfies n . x <= d."""
    A, B, C = (np.asarray(x, dtype=float) for x in (A, B, C))
    n = np.cross(B - A, C - B)
    if not np.linalg.norm(n) > 0:
        raise ValueError("zero-area facet")
    d = float(n @ A)
    if n @ np.asarray(interior, dtype=float) > d:
        n, d = -n, -d
    return np.array([*n, d])


def half_spaces(hull: TriangulatedHull, bus_id: int = -1, dedup_tol: float = 1e-9) -> HalfSpaceSet:
    V = hull.vertices
    cen = hull.centroid
    scale = float(np.max(np.ptp(V, axis=0)))
    rows = []
    for a, b, c in hull.facets:
        n = np.cross(V[b] - V[a], V[c] - V[b])
        nn = np.linalg.norm(n)
        if not nn > 1e-14 * scale * scale:
            raise ValueError(f"zero-area facet ({a}, {b}, {c})")
        r = facet_half_space(V[a], V[b], V[c], cen)
        rows.append(r / nn)
    rows = np.array(rows)
    keep: list[np.ndarray] = []
    for r in rows:
        if not any(np.max(np.abs(r - k)) <= dedup_tol for k in keep):
            keep.append(r)
    return HalfSpaceSet(np.array(keep), bus_id)


def for_point_cloud(f: PqvFor) -> np.ndarray:
    """All slice vertices as (p, q, v) points."""
    return np.vstack([
        np.column_stack([s.polygon, np.full(len(s.polygon), s.v_slack)]) for s in f.slices
    ])


def for_hull(f: PqvFor) -> TriangulatedHull:
    return convex_hull(for_point_cloud(f))


def over_approximation(f: PqvFor, hull: TriangulatedHull) -> float:
    """Hull volume in excess of the FOR stack volume, in percent."""
    vol = polyhedral_volume(f)
    if not vol > 0:
        raise ValueError("FOR volume is zero")
    return 100.0 * (hull.volume - vol) / vol
