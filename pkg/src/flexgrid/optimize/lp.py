"""Linear programs and a dense bounded-variable revised simplex.

Pricing is Dantzig (most negative reduced cost); after a run of degenerate
pivots the solver falls back to Bland's rule until it makes progress again.
The basis inverse is kept explicitly, updated by eta pivots and refactored
periodically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INF = math.inf
SENSES = ("<=", "=", ">=")


class SimplexError(RuntimeError):
    """Numerical breakdown inside the simplex iterations."""


@dataclass
class LpModel:
    names: list[str] = field(default_factory=list)
    lo: list[float] = field(default_factory=list)
    hi: list[float] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)
    rows: list[dict[int, float]] = field(default_factory=list)
    senses: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: str, lo: float = 0.0, hi: float = INF, cost: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        if lo > hi:
            raise ValueError(f"variable {name!r}: lo={lo} > hi={hi}")
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.cost.append(float(cost))
        return self._index[name]

    def index(self, name: str) -> int:
        return self._index[name]

    def add_row(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        row = {}
        for j, a in coeffs.items():
            if not 0 <= j < self.n_vars:
                raise ValueError(f"row {name!r} references undeclared variable {j}")
            if a != 0.0:
                row[int(j)] = row.get(int(j), 0.0) + float(a)
        self.rows.append(row)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.rows) - 1}")
        return len(self.rows) - 1

    def dense(self) -> np.ndarray:
        A = np.zeros((self.n_rows, self.n_vars))
        for i, row in enumerate(self.rows):
            for j, a in row.items():
                A[i, j] = a
        return A

    def copy(self) -> LpModel:
        return LpModel(
            list(self.names), list(self.lo), list(self.hi), list(self.cost),
            [dict(r) for r in self.rows], list(self.senses), list(self.rhs),
            list(self.row_names), dict(self._index),
        )

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of a candidate point."""
        x = np.asarray(x, dtype=float)
        worst = float(np.max(np.maximum(np.array(self.lo) - x, x - np.array(self.hi)), initial=0.0))
        if self.n_rows:
            ax = self.dense() @ x
            for i, s in enumerate(self.senses):
                r = ax[i] - self.rhs[i]
                worst = max(worst, r if s == "<=" else -r if s == ">=" else abs(r))
        return worst

    def to_lp_format(self) -> str:
        """CPLEX LP text for cross-checking with external solvers."""

        def expr(coeffs):
            terms = [f"{'+' if a >= 0 else '-'} {abs(a):.17g} {self.names[j]}" for j, a in sorted(coeffs.items())]
            return " ".join(terms) if terms else "0 " + self.names[0]

        op = {"<=": "<=", "=": "=", ">=": ">="}
        lines = ["Minimize", " obj: " + expr({j: c for j, c in enumerate(self.cost) if c})]
        lines.append("Subject To")
        for i, row in enumerate(self.rows):
            lines.append(f" {self.row_names[i]}: {expr(row)} {op[self.senses[i]]} {self.rhs[i]:.17g}")
        lines.append("Bounds")
        for j, name in enumerate(self.names):
            lo = "-inf" if self.lo[j] == -INF else f"{self.lo[j]:.17g}"
            hi = "+inf" if self.hi[j] == INF else f"{self.hi[j]:.17g}"
            lines.append(f" {lo} <= {name} <= {hi}")
        return "\n".join(lines)


@dataclass
class Solution:
    status: str  # optimal | infeasible | unbounded | iteration-limit | node-limit
    objective: float = math.nan
    x: np.ndarray | None = None
    names: list[str] | None = None
    binaries: dict[str, int] = field(default_factory=dict)
    iterations: int = 0
    nodes: int = 0
    gap: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, name: str) -> float:
        return float(self.x[self.names.index(name)])

    def values(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.x)))


class _Result:
    def __init__(self, status, iterations):
        self.status = status
        self.iterations = iterations


def _simplex(A, b, c, lo, hi, basis, x, max_iter, refactor=40, tol=1e-9):
    """Primal bounded simplex from a primal-feasible basis; updates basis and x in place."""
    m, N = A.shape
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    Binv = None
    degenerate = 0
    bland = False
    it = 0
    while True:
        if Binv is None or it % refactor == 0:
            try:
                Binv = np.linalg.inv(A[:, basis])
            except np.linalg.LinAlgError:
                raise SimplexError(f"singular basis at iteration {it}") from None
            nb = ~is_basic
            x[basis] = Binv @ (b - A[:, nb] @ x[nb])
        y = c[basis] @ Binv
        d = c - y @ A
        d[is_basic] = 0.0
        nonbasic = ~is_basic
        inc = nonbasic & (x < hi - tol) & (d < -tol)
        dec = nonbasic & (x > lo + tol) & (d > tol)
        elig = inc | dec
        if not elig.any():
            return _Result("optimal", it)
        if it >= max_iter:
            return _Result("iteration-limit", it)
        if bland:
            j = int(np.flatnonzero(elig)[0])
        else:
            j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
        dirn = 1.0 if inc[j] else -1.0
        w = Binv @ A[:, j]
        rate = -dirn * w  # change of x_B per unit step
        xb = x[basis]
        lob, hib = lo[basis], hi[basis]
        ratios = np.full(m, INF)
        neg = rate < -tol
        pos = rate > tol
        ratios[neg] = (xb[neg] - lob[neg]) / -rate[neg]
        ratios[pos] = (hib[pos] - xb[pos]) / rate[pos]
        ratios = np.maximum(ratios, 0.0)
        t_min = float(ratios.min()) if m else INF
        flip = hi[j] - lo[j]
        if t_min == INF and flip == INF:
            return _Result("unbounded", it)
        it += 1
        if flip <= t_min:
            x[j] += dirn * flip
            x[basis] = xb + rate * flip
            degenerate = 0
            bland = False
            continue
        ties = np.flatnonzero(ratios <= t_min + 1e-12)
        if bland:
            r = int(ties[np.argmin(np.asarray(basis)[ties])])
        else:
            r = int(ties[np.argmax(np.abs(w[ties]))])
        t = t_min
        x[basis] = xb + rate * t
        x[j] += dirn * t
        leave = basis[r]
        x[leave] = lob[r] if rate[r] < 0 else hib[r]
        is_basic[leave] = False
        is_basic[j] = True
        basis[r] = j
        piv = w[r]
        if abs(piv) < 1e-11:
            raise SimplexError(f"pivot {piv:.3e} too small (entering {j}, leaving {leave}, iteration {it})")
        row = Binv[r] / piv
        Binv -= np.outer(w, row)
        Binv[r] = row
        if t <= 1e-12:
            degenerate += 1
            if degenerate > 25:
                bland = True
        else:
            degenerate = 0
            bland = False


def solve_lp(model: LpModel, max_iter: int | None = None) -> Solution:
    n = model.n_vars
    m = model.n_rows
    A0 = model.dense()
    b = np.array(model.rhs, dtype=float)
    lo0 = np.array(model.lo, dtype=float)
    hi0 = np.array(model.hi, dtype=float)
    c0 = np.array(model.cost, dtype=float)
    if np.any(lo0 > hi0):
        return Solution("infeasible", names=list(model.names))
    if max_iter is None:
        max_iter = 50 * (n + m) + 1000

    ineq = [i for i, s in enumerate(model.senses) if s != "="]
    S = np.zeros((m, len(ineq)))
    for k, i in enumerate(ineq):
        S[i, k] = 1.0 if model.senses[i] == "<=" else -1.0
    x0 = np.where(np.isfinite(lo0), lo0, np.where(np.isfinite(hi0), hi0, 0.0))
    r = b - A0 @ x0
    slack_val = np.zeros(len(ineq))
    basis = [-1] * m
    art_rows, art_sign = [], []
    for k, i in enumerate(ineq):
        v = r[i] / S[i, k]
        if v >= 0:
            slack_val[k] = v
            basis[i] = n + k
    for i in range(m):
        if basis[i] < 0:
            art_rows.append(i)
            art_sign.append(1.0 if r[i] >= 0 else -1.0)
    na = len(art_rows)
    Art = np.zeros((m, na))
    for k, (i, sg) in enumerate(zip(art_rows, art_sign)):
        Art[i, k] = sg
        basis[i] = n + len(ineq) + k
    A = np.hstack([A0, S, Art])
    lo = np.concatenate([lo0, np.zeros(len(ineq) + na)])
    hi = np.concatenate([hi0, np.full(len(ineq), INF), np.full(na, INF)])
    x = np.concatenate([x0, slack_val, np.abs(r[art_rows]) if na else np.zeros(0)])
    art = slice(n + len(ineq), n + len(ineq) + na)
    feas_tol = 1e-9 * max(1.0, float(np.max(np.abs(b), initial=0.0)))

    iters = 0
    if na:
        c1 = np.zeros(A.shape[1])
        c1[art] = 1.0
        res = _simplex(A, b, c1, lo, hi, basis, x, max_iter)
        iters += res.iterations
        if res.status == "iteration-limit":
            return Solution("iteration-limit", names=list(model.names), iterations=iters)
        if float(np.sum(x[art])) > feas_tol:
            return Solution("infeasible", names=list(model.names), iterations=iters)
        hi[art] = 0.0
        x[art] = 0.0
    c = np.concatenate([c0, np.zeros(len(ineq) + na)])
    res = _simplex(A, b, c, lo, hi, basis, x, max_iter - iters)
    iters += res.iterations
    if res.status != "optimal":
        return Solution(res.status, names=list(model.names), iterations=iters)
    xs = x[:n].copy()
    return Solution("optimal", float(c0 @ xs), xs, list(model.names), iterations=iters)
