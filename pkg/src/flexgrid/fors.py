"""Feasible operating regions (FORs): voltage-indexed PQ polygon stacks,
their convex piecewise segmentation, membership and volume.

FOR polygons must be x-monotone in P: every vertical line meets the polygon
in a single interval. The region at one slice is then described by a lower
and an upper Q chain over its P extent. Between two slices the region is
interpolated vertex-wise: boundary samples are matched by their normalised
position along the P extent and moved linearly in V.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

V_RANGE = (0.94, 1.06)
TOL = 1e-9


class ForFormatError(ValueError):
    """FOR file could not be parsed."""


class ForValidationError(ValueError):
    """FOR violates a geometric invariant."""


class SegmentationError(ValueError):
    def __init__(self, message: str, deficit: float):
        super().__init__(message)
        self.deficit = deficit


def _chains(poly: np.ndarray):
    """Split a CCW x-monotone polygon into lower and upper chains with increasing P."""
    n = len(poly)
    if n < 3:
        raise ForValidationError("polygon needs at least 3 vertices")
    x, y = poly[:, 0], poly[:, 1]
    area2 = float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    if area2 <= 0:
        raise ForValidationError("polygon must be counter-clockwise with positive area")
    pmin, pmax = x.min(), x.max()
    left = [k for k in range(n) if x[k] == pmin]
    right = [k for k in range(n) if x[k] == pmax]
    start_lo = min(left, key=lambda k: y[k])
    end_up = max(left, key=lambda k: y[k])
    end_lo = min(right, key=lambda k: y[k])
    start_up = max(right, key=lambda k: y[k])

    def walk(a, b):
        idx = [a]
        while idx[-1] != b:
            idx.append((idx[-1] + 1) % n)
            if len(idx) > n:
                raise ForValidationError("polygon is not x-monotone")
        return idx

    lo = walk(start_lo, end_lo)
    up = walk(start_up, end_up)[::-1]
    for name, ch in (("lower", lo), ("upper", up)):
        if np.any(np.diff(x[ch]) <= 0):
            raise ForValidationError(f"polygon is not x-monotone ({name} chain doubles back)")
    # every vertex belongs to one chain, or sits on a vertical end edge
    covered = set(lo) | set(up) | set(left) | set(right)
    if len(covered) != n:
        raise ForValidationError("polygon is not x-monotone")
    plo, qlo, pup, qup = x[lo], y[lo], x[up], y[up]
    ps = np.union1d(plo, pup)
    if np.any(np.interp(ps, plo, qlo) > np.interp(ps, pup, qup) + TOL):
        raise ForValidationError("polygon is not simple (lower chain crosses upper chain)")
    return plo, qlo, pup, qup


@dataclass(frozen=True, eq=False)
class ForSlice:
    v_slack: float
    polygon: np.ndarray
    p_lo: np.ndarray = field(init=False, repr=False)
    q_lo: np.ndarray = field(init=False, repr=False)
    p_up: np.ndarray = field(init=False, repr=False)
    q_up: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "polygon", poly)
        plo, qlo, pup, qup = _chains(poly)
        object.__setattr__(self, "p_lo", plo)
        object.__setattr__(self, "q_lo", qlo)
        object.__setattr__(self, "p_up", pup)
        object.__setattr__(self, "q_up", qup)

    @property
    def pmin(self) -> float:
        return float(self.p_lo[0])

    @property
    def pmax(self) -> float:
        return float(self.p_lo[-1])

    @property
    def width(self) -> float:
        return self.pmax - self.pmin

    def lower(self, p):
        return np.interp(p, self.p_lo, self.q_lo)

    def upper(self, p):
        return np.interp(p, self.p_up, self.q_up)

    def breakpoints(self) -> np.ndarray:
        return np.union1d(self.p_lo, self.p_up)

    def area(self) -> float:
        x, y = self.polygon[:, 0], self.polygon[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def is_convex(self) -> bool:
        d = np.roll(self.polygon, -1, axis=0) - self.polygon
        cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
        return bool(np.all(cross >= -1e-12))

    def contains(self, p, q, tol: float = TOL):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        pc = np.clip(p, self.pmin, self.pmax)
        inside_p = (p >= self.pmin - tol) & (p <= self.pmax + tol)
        return inside_p & (q >= self.lower(pc) - tol) & (q <= self.upper(pc) + tol)


@dataclass(frozen=True, eq=False)
class PqvFor:
    bus_id: int
    slices: tuple[ForSlice, ...]
    op0: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        object.__setattr__(self, "op0", tuple(float(x) for x in self.op0))

    @property
    def voltages(self) -> np.ndarray:
        return np.array([s.v_slack for s in self.slices])

    @property
    def dims(self) -> int:
        return 2 if len(self.slices) == 1 else 3

    def nearest_slice(self, v: float) -> ForSlice:
        return self.slices[int(np.argmin(np.abs(self.voltages - v)))]

    def max_abs_q(self) -> float:
        return max(float(np.max(np.abs(s.polygon[:, 1]))) for s in self.slices)

    def _bracket(self, v: float) -> tuple[int, float]:
        vs = self.voltages
        if len(vs) == 1:
            return 0, 0.0
        if v < vs[0] - TOL or v > vs[-1] + TOL:
            raise ValueError(f"v={v:.6f} outside the FOR slice range [{vs[0]}, {vs[-1]}]")
        j = int(np.clip(np.searchsorted(vs, v, side="right") - 1, 0, len(vs) - 2))
        t = float(np.clip((v - vs[j]) / (vs[j + 1] - vs[j]), 0.0, 1.0))
        return j, t

    def p_extent(self, v: float) -> tuple[float, float]:
        j, t = self._bracket(v)
        a = self.slices[j]
        if t == 0.0:
            return a.pmin, a.pmax
        b = self.slices[j + 1]
        return (1 - t) * a.pmin + t * b.pmin, (1 - t) * a.pmax + t * b.pmax

    def section(self, v: float, p):
        """Lower and upper Q bound of the interpolated region at voltage v for each p.

        p is clipped to the P extent at v; callers check the extent separately.
        """
        p = np.asarray(p, dtype=float)
        j, t = self._bracket(v)
        a = self.slices[j]
        if t == 0.0:
            pc = np.clip(p, a.pmin, a.pmax)
            return a.lower(pc), a.upper(pc)
        b = self.slices[j + 1]
        pmin, pmax = self.p_extent(v)
        w = pmax - pmin
        s = np.clip((p - pmin) / w, 0.0, 1.0) if w > 0 else np.zeros_like(p)
        pa = a.pmin + s * a.width
        pb = b.pmin + s * b.width
        lo = (1 - t) * a.lower(pa) + t * b.lower(pb)
        hi = (1 - t) * a.upper(pa) + t * b.upper(pb)
        return lo, hi

    def section_breakpoints(self, v: float) -> np.ndarray:
        """P positions where the interpolated section at v may change slope."""
        j, t = self._bracket(v)
        a = self.slices[j]
        if t == 0.0:
            return a.breakpoints()
        b = self.slices[j + 1]
        pmin, pmax = self.p_extent(v)
        w = pmax - pmin
        out = []
        for sl in (a, b):
            if sl.width > 0:
                out.append(pmin + (sl.breakpoints() - sl.pmin) / sl.width * w)
        return np.unique(np.concatenate(out))

    def section_area(self, v: float) -> float:
        ps = self.section_breakpoints(v)
        lo, hi = self.section(v, ps)
        return float(np.trapezoid(hi - lo, ps))

    def to_dict(self) -> dict:
        p, q, v = self.op0
        return {
            "bus_id": self.bus_id,
            "op0": {"p": p, "q": q, "v": v},
            "slices": [
                {"v_slack": s.v_slack, "polygon": s.polygon.tolist()} for s in self.slices
            ],
        }

    def with_op0(self, p: float, q: float, v: float) -> PqvFor:
        return PqvFor(self.bus_id, self.slices, (p, q, v))


def contains(f: PqvFor, p, q, v: float, tol: float = TOL):
    """Membership of (p, q) in the FOR region interpolated at voltage v.

    Vectorised over p and q; v is a scalar. Raises ValueError when v is outside
    the slice range (a single-slice FOR accepts any v in the nominal band).
    """
    if len(f.slices) == 1 and not V_RANGE[0] - TOL <= v <= V_RANGE[1] + TOL:
        raise ValueError(f"v={v:.6f} outside [{V_RANGE[0]}, {V_RANGE[1]}]")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pmin, pmax = f.p_extent(v)
    lo, hi = f.section(v, p)
    out = (p >= pmin - tol) & (p <= pmax + tol) & (q >= lo - tol) & (q <= hi + tol)
    return bool(out) if out.ndim == 0 else out


def validate_for(f: PqvFor, v_range: tuple[float, float] = V_RANGE) -> PqvFor:
    vs = f.voltages
    if len(vs) == 0:
        raise ForValidationError("FOR has no slices")
    for k in range(1, len(vs)):
        if not vs[k] > vs[k - 1]:
            raise ForValidationError(
                f"slice {k}: v_slack {vs[k]} not strictly increasing (previous {vs[k - 1]})"
            )
    for k, v in enumerate(vs):
        if not v_range[0] - TOL <= v <= v_range[1] + TOL:
            raise ForValidationError(f"slice {k}: v_slack {v} outside [{v_range[0]}, {v_range[1]}]")
    p0, q0, v0 = f.op0
    near = f.nearest_slice(v0)
    if not near.contains(p0, q0):
        raise ForValidationError(
            f"op0 ({p0}, {q0}) is not inside the slice at v_slack={near.v_slack} nearest v0={v0}"
        )
    return f


def for_from_dict(data: dict) -> PqvFor:
    try:
        bus_id = data["bus_id"]
        if isinstance(bus_id, bool) or int(bus_id) != bus_id:
            raise ForFormatError("bus_id: expected integer")
        op = data["op0"]
        op0 = (float(op["p"]), float(op["q"]), float(op["v"]))
        raw = data["slices"]
        if not isinstance(raw, list):
            raise ForFormatError("slices: expected a list")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ForFormatError):
            raise
        raise ForFormatError(f"missing or malformed field: {exc}") from None
    slices = []
    for k, rec in enumerate(raw):
        try:
            v = float(rec["v_slack"])
            poly = np.array(rec["polygon"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ForFormatError(f"slices[{k}]: {exc}") from None
        if poly.ndim != 2 or poly.shape[1] != 2:
            raise ForFormatError(f"slices[{k}].polygon: expected a list of [p, q] pairs")
        try:
            slices.append(ForSlice(v, poly))
        except ForValidationError as exc:
            raise ForValidationError(f"slices[{k}] (v_slack={v}): {exc}") from None
    return validate_for(PqvFor(int(bus_id), slices, op0))


def load_for(path: str | Path) -> PqvFor:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ForFormatError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return for_from_dict(data)


def save_for(f: PqvFor, path: str | Path) -> None:
    Path(path).write_text(json.dumps(f.to_dict()) + "\n", encoding="utf-8")


def synth_for(
    bus_id: int,
    seed: int,
    n_slices: int = 7,
    p_center: float = 0.0,
    p_width: float = 0.5,
    q_center: float = 0.0,
    q_span: float = 0.6,
    v0: float = 1.0,
    n_points: int = 13,
) -> PqvFor:
    """Seeded notched FOR stack.

    Each slice has a V-shaped notch in its upper (capacitive) edge and a bump
    in its lower edge, so every polygon is non-convex. The capacitive extent at
    low P shrinks as the slack voltage rises.
    """
    if n_slices < 1:
        raise ValueError("n_slices must be >= 1")
    rng = np.random.default_rng(seed)
    shrink = rng.uniform(0.45, 0.6)
    lift = rng.uniform(0.15, 0.3)
    up_c, up_w, up_d = rng.uniform(0.55, 0.75), rng.uniform(0.1, 0.16), rng.uniform(0.15, 0.25)
    lo_c, lo_w, lo_d = rng.uniform(0.25, 0.45), rng.uniform(0.1, 0.16), rng.uniform(0.12, 0.2)
    q_up, q_lo = 0.5 * q_span, 0.5 * q_span

    s = np.linspace(0.0, 1.0, n_points)
    s_up = np.union1d(s[(s < up_c - up_w) | (s > up_c + up_w)], [up_c - up_w, up_c, up_c + up_w])
    s_lo = np.union1d(s[(s < lo_c - lo_w) | (s > lo_c + lo_w)], [lo_c - lo_w, lo_c, lo_c + lo_w])

    def tri(x, c, w):
        return np.clip(1.0 - np.abs(x - c) / w, 0.0, None)

    def upper(x, t):
        base = q_up * (1.0 - shrink * t * (1.0 - x)) * (1.0 - 0.15 * (2 * x - 1) ** 2)
        return q_center + base - up_d * q_up * tri(x, up_c, up_w)

    def lower(x, t):
        base = q_lo * (1.0 - lift * (1.0 - t) * x) * (1.0 - 0.15 * (2 * x - 1) ** 2)
        return q_center - base + lo_d * q_lo * tri(x, lo_c, lo_w)

    vs = [1.0] if n_slices == 1 else list(np.round(np.linspace(V_RANGE[0], V_RANGE[1], n_slices), 10))
    pmin = p_center - 0.5 * p_width
    slices = []
    for v in vs:
        t = (v - V_RANGE[0]) / (V_RANGE[1] - V_RANGE[0])
        lo_pts = np.column_stack([pmin + s_lo * p_width, lower(s_lo, t)])
        up_pts = np.column_stack([pmin + s_up * p_width, upper(s_up, t)])[::-1]
        slices.append(ForSlice(float(v), np.round(np.vstack([lo_pts, up_pts]), 12)))
    # op0 at mid-P, midway inside the band common to all slices
    f = PqvFor(bus_id, slices, (p_center, 0.0, v0))
    his = [sl.upper(p_center) for sl in slices]
    los = [sl.lower(p_center) for sl in slices]
    q0 = 0.5 * (max(los) + min(his))
    return validate_for(f.with_op0(p_center, float(q0), v0))


# -- segmentation -----------------------------------------------------------


@dataclass(frozen=True)
class Segment2D:
    ki: int
    p_c_min: float  # absolute P at the segment's left edge
    dp_max: float
    m_up: float
    m_lo: float
    q_c_init_up: float  # absolute Q of the edges at p_c_min
    q_c_init_lo: float

    def q_bounds(self, p):
        dp = np.asarray(p) - self.p_c_min
        return self.q_c_init_lo + self.m_lo * dp, self.q_c_init_up + self.m_up * dp


@dataclass(frozen=True)
class Segment3D:
    ki: int
    p_c_min: float
    dp_max: float
    li: int
    v_c_min: float
    dv_max: float
    m_up: float  # dQ/dV of the faces
    m_lo: float
    q_c_init_up: float  # absolute Q of the faces at v_c_min
    q_c_init_lo: float

    def q_bounds(self, v):
        dv = np.asarray(v) - self.v_c_min
        return self.q_c_init_lo + self.m_lo * dv, self.q_c_init_up + self.m_up * dv


@dataclass(frozen=True)
class SegmentedFor:
    bus_id: int
    dims: int
    segments: tuple
    c_max: float
    k_count: int
    l_count: int = 1
    v_slack: float | None = None  # slice voltage for a 2D segmentation

    def find(self, p: float, q: float, v: float | None = None, tol: float = 1e-7) -> list[int]:
        """Indices of segments containing the point."""
        hits = []
        for k, seg in enumerate(self.segments):
            if not seg.p_c_min - tol <= p <= seg.p_c_min + seg.dp_max + tol:
                continue
            if self.dims == 2:
                lo, hi = seg.q_bounds(p)
            else:
                if not seg.v_c_min - tol <= v <= seg.v_c_min + seg.dv_max + tol:
                    continue
                lo, hi = seg.q_bounds(v)
            if lo - tol <= q <= hi + tol:
                hits.append(k)
        return hits

    def to_dict(self) -> dict:
        return {
            "bus_id": self.bus_id,
            "dims": self.dims,
            "c_max": self.c_max,
            "k_count": self.k_count,
            "l_count": self.l_count,
            "segments": [s.__dict__ for s in self.segments],
        }


def _sign_changes(px: np.ndarray, qy: np.ndarray) -> list[float]:
    slopes = np.diff(qy) / np.diff(px)
    out, last = [], 0.0
    for k, m in enumerate(slopes):
        sg = np.sign(m) if abs(m) > 1e-12 else 0.0
        if sg != 0:
            if last != 0 and sg != last:
                out.append(float(px[k]))
            last = sg
    return out


def _breakpoints(pmin: float, pmax: float, forced: list[float], count: int) -> np.ndarray:
    """Segment edges: slope sign changes first, then bisect the widest piece."""
    inner = sorted({x for x in forced if pmin + 1e-9 < x < pmax - 1e-9})
    if len(inner) + 1 > count:
        return np.linspace(pmin, pmax, count + 1)
    edges = [pmin, *inner, pmax]
    while len(edges) - 1 < count:
        widths = np.diff(edges)
        k = int(np.argmax(widths))
        edges.insert(k + 1, 0.5 * (edges[k] + edges[k + 1]))
    return np.array(edges)


def _inscribed_line(x: np.ndarray, g: np.ndarray, below: bool) -> tuple[float, float]:
    """Line through the end values of g, shifted so it stays below (or above) g at every knot.

    Returns (value at x[0], slope). Exact whenever g is linear between knots
    (or concave/convex in the matching direction).
    """
    slope = (g[-1] - g[0]) / (x[-1] - x[0])
    line = g[0] + slope * (x - x[0])
    if below:
        shift = max(0.0, float(np.max(line - g)))
        return float(g[0] - shift), float(slope)
    shift = max(0.0, float(np.max(g - line)))
    return float(g[0] + shift), float(slope)


def _as_slice(obj) -> tuple[int, ForSlice, float]:
    if isinstance(obj, PqvFor):
        sl = obj.nearest_slice(obj.op0[2])
        return obj.bus_id, sl, 2.0 * obj.max_abs_q()
    if isinstance(obj, ForSlice):
        return -1, obj, 2.0 * float(np.max(np.abs(obj.polygon[:, 1])))
    raise TypeError("expected PqvFor or ForSlice")


def segment_2d(for_or_slice, k_max: int) -> SegmentedFor:
    """Trapezoidal convex segments inscribed in one FOR slice.

    A PqvFor argument is segmented at the slice nearest its op0 voltage.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    bus_id, sl, c_max = _as_slice(for_or_slice)
    forced = _sign_changes(sl.p_up, sl.q_up) + _sign_changes(sl.p_lo, sl.q_lo)
    edges = _breakpoints(sl.pmin, sl.pmax, forced, k_max)
    bps = sl.breakpoints()
    segs, worst = [], 0.0
    for k in range(len(edges) - 1):
        a, b = edges[k], edges[k + 1]
        knots = np.concatenate([[a], bps[(bps > a) & (bps < b)], [b]])
        up0, m_up = _inscribed_line(knots, sl.upper(knots), below=True)
        lo0, m_lo = _inscribed_line(knots, sl.lower(knots), below=False)
        w = b - a
        deficit = max(lo0 - up0, (lo0 + m_lo * w) - (up0 + m_up * w))
        worst = max(worst, deficit)
        segs.append(Segment2D(k, float(a), float(w), m_up, m_lo, up0, lo0))
    if worst > TOL:
        raise SegmentationError(
            f"k_max={k_max} too small: inscribed segment edges cross by {worst:.3e} pu", worst
        )
    return SegmentedFor(bus_id, 2, tuple(segs), c_max, len(segs), 1, sl.v_slack)


def segment_3d(f: PqvFor, k_max: int, l_max: int, v_subdiv: int = 8) -> SegmentedFor:
    """(P, V) grid of box segments with Q faces linear in V only.

    P is split into ``2 * k_max`` pieces over the P range common to all
    slices; V into ``l_max`` equal pieces over the slice range. Each face takes
    the tightest Q bound over the box's P extent, so boxes stay inside the FOR.
    """
    if len(f.slices) < 2:
        raise ValueError("segment_3d needs at least 2 slices")
    if k_max < 1 or l_max < 1:
        raise ValueError("k_max and l_max must be >= 1")
    pmin = max(s.pmin for s in f.slices)
    pmax = min(s.pmax for s in f.slices)
    if not pmax > pmin:
        raise SegmentationError("slices share no common P range", pmin - pmax)
    forced = []
    for s in f.slices:
        forced += _sign_changes(s.p_up, s.q_up) + _sign_changes(s.p_lo, s.q_lo)
    p_edges = _breakpoints(pmin, pmax, forced, 2 * k_max)
    vs = f.voltages
    v_edges = np.linspace(vs[0], vs[-1], l_max + 1)

    def extreme(v, a, b):
        bps = f.section_breakpoints(v)
        ps = np.concatenate([[a], bps[(bps > a) & (bps < b)], [b]])
        lo, hi = f.section(v, ps)
        return float(np.max(lo)), float(np.min(hi))

    segs, worst = [], 0.0
    for k in range(len(p_edges) - 1):
        a, b = p_edges[k], p_edges[k + 1]
        for li in range(l_max):
            va, vb = v_edges[li], v_edges[li + 1]
            knots = np.union1d(np.linspace(va, vb, v_subdiv + 1), vs[(vs > va) & (vs < vb)])
            ext = np.array([extreme(v, a, b) for v in knots])
            up0, m_up = _inscribed_line(knots, ext[:, 1], below=True)
            lo0, m_lo = _inscribed_line(knots, ext[:, 0], below=False)
            h = vb - va
            deficit = max(lo0 - up0, (lo0 + m_lo * h) - (up0 + m_up * h))
            worst = max(worst, deficit)
            segs.append(Segment3D(k, float(a), float(b - a), li, float(va), float(h), m_up, m_lo, up0, lo0))
    if worst > TOL:
        raise SegmentationError(
            f"k_max={k_max}, l_max={l_max} too small: inscribed faces cross by {worst:.3e} pu", worst
        )
    return SegmentedFor(f.bus_id, 3, tuple(segs), 2.0 * f.max_abs_q(), len(p_edges) - 1, l_max)


def segment_points(seg: SegmentedFor, n: int = 20) -> list[np.ndarray]:
    """Regular sample grid inside each segment: rows (p, q) for 2D, (p, q, v) for 3D."""
    out = []
    u = np.linspace(0.0, 1.0, n)
    for s in seg.segments:
        ps = s.p_c_min + u * s.dp_max
        if seg.dims == 2:
            P, U = np.meshgrid(ps, u, indexing="ij")
            lo, hi = s.q_bounds(P)
            out.append(np.column_stack([P.ravel(), (lo + U * (hi - lo)).ravel()]))
        else:
            vs = s.v_c_min + u * s.dv_max
            m = max(4, n // 2)
            w = np.linspace(0.0, 1.0, m)
            P, V, W = np.meshgrid(ps, vs, w, indexing="ij")
            lo, hi = s.q_bounds(V)
            out.append(np.column_stack([P.ravel(), (lo + W * (hi - lo)).ravel(), V.ravel()]))
    return out


def polyhedral_volume(obj) -> float:
    """Volume in pu^3 of a 3D FOR stack (prismatoid rule per slab) or of its box segments."""
    if isinstance(obj, SegmentedFor):
        if obj.dims != 3:
            raise ValueError("volume needs a 3D segmentation")
        total = 0.0
        for s in obj.segments:
            lo_a, hi_a = s.q_bounds(s.v_c_min)
            lo_b, hi_b = s.q_bounds(s.v_c_min + s.dv_max)
            total += s.dp_max * s.dv_max * 0.5 * ((hi_a - lo_a) + (hi_b - lo_b))
        return float(total)
    if len(obj.slices) < 2:
        raise ValueError("volume needs at least 2 slices")
    vs = obj.voltages
    if not vs[-1] - vs[0] > 0:
        raise ValueError("degenerate (zero-height) FOR stack")
    total = 0.0
    for j in range(len(vs) - 1):
        h = vs[j + 1] - vs[j]
        a0 = obj.slices[j].area()
        a1 = obj.slices[j + 1].area()
        am = obj.section_area(0.5 * (vs[j] + vs[j + 1]))
        total += h / 6.0 * (a0 + 4.0 * am + a1)
    return float(total)
