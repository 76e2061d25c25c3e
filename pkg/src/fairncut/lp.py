"""Linear programs with certified solutions, and the fair-assignment LP.

Two backends sit behind ``solve_lp``: HiGHS (via scipy) for real sizes and
a dense bounded-variable primal simplex with Bland's rule for small
problems. Both results pass through the same certificate: a dual point is
built from row multipliers, and the reported gap is the relative
difference between primal and dual objectives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import BadShape
from .fairness import FairnessBounds
from .graph import GroupAssignment

LE, GE, EQ = "<=", ">=", "="


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpProblem:
    """min c^T x  s.t.  rows of A related to rhs by sense, lo <= x <= hi."""

    c: np.ndarray
    A: sp.csr_array
    sense: np.ndarray          # array of "<=", ">=", "="
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    names: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_array(self.A, dtype=float)
        self.sense = np.asarray(self.sense, dtype=object)
        self.rhs = np.asarray(self.rhs, dtype=float)
        nv = self.c.size
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (nv,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (nv,)).copy()
        if self.A.shape != (self.rhs.size, nv):
            raise BadShape(f"constraint matrix is {self.A.shape}, expected {(self.rhs.size, nv)}")
        if self.sense.size != self.rhs.size or not set(self.sense.tolist()) <= {LE, GE, EQ}:
            raise BadShape("one sense in {'<=', '>=', '='} required per row")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise BadShape("all variable bounds must be finite")
        if np.any(self.lo > self.hi):
            raise BadShape("lower bound exceeds upper bound")

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.rhs.size

    def row_counts(self) -> dict:
        return {s: int(np.sum(self.sense == s)) for s in (LE, GE, EQ)}

    def residual(self, x) -> float:
        """Largest absolute row or bound violation at x."""
        Ax = self.A @ x
        viol = np.zeros(self.num_rows)
        le, ge, eq = self.sense == LE, self.sense == GE, self.sense == EQ
        viol[le] = np.maximum(Ax[le] - self.rhs[le], 0)
        viol[ge] = np.maximum(self.rhs[ge] - Ax[ge], 0)
        viol[eq] = np.abs(Ax[eq] - self.rhs[eq])
        bound = np.maximum(np.maximum(self.lo - x, x - self.hi), 0)
        return float(max(viol.max(initial=0.0), bound.max(initial=0.0)))


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    gap: float = float("nan")
    residual: float = float("nan")
    duals: np.ndarray | None = None
    witness: list = field(default_factory=list)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def certify(p: LpProblem, x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(objective, dual bound, relative gap) for primal x and row duals y.

    Row duals are projected onto their sign cone first (y <= 0 on "<=",
    y >= 0 on ">="), and reduced costs are absorbed by the finite bounds,
    so the dual bound is valid for any y.
    """
    y = np.array(y, dtype=float)
    y[p.sense == LE] = np.minimum(y[p.sense == LE], 0)
    y[p.sense == GE] = np.maximum(y[p.sense == GE], 0)
    r = p.c - p.A.T @ y
    dual = float(p.rhs @ y + p.lo @ np.maximum(r, 0) + p.hi @ np.minimum(r, 0))
    primal = float(p.c @ x)
    return primal, dual, abs(primal - dual) / max(1.0, abs(primal))


def solve_lp(p: LpProblem, method: str = "highs", max_iter: int = 100_000) -> LpSolution:
    """Solve ``p``; Optimal results carry their residual and certified gap."""
    if method == "highs":
        return _solve_highs(p, max_iter)
    if method == "simplex":
        return _solve_simplex(p, max_iter)
    raise ValueError(f"unknown LP method {method!r}")


def _split(p: LpProblem):
    le, ge, eq = p.sense == LE, p.sense == GE, p.sense == EQ
    ub_rows = np.flatnonzero(le | ge)
    sign = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags_array(sign) @ p.A[ub_rows] if ub_rows.size else None
    b_ub = sign * p.rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = p.A[eq_rows] if eq_rows.size else None
    b_eq = p.rhs[eq_rows] if eq_rows.size else None
    return ub_rows, sign, A_ub, b_ub, eq_rows, A_eq, b_eq


def _solve_highs(p: LpProblem, max_iter: int) -> LpSolution:
    ub_rows, sign, A_ub, b_ub, eq_rows, A_eq, b_eq = _split(p)
    res = linprog(p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([p.lo, p.hi]), method="highs",
                  options={"presolve": True, "maxiter": max_iter,
                           "primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 1:
        return LpSolution(LpStatus.ITERATION_LIMIT, iterations=int(res.nit))
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE, witness=infeasibility_witness(p),
                          iterations=int(res.nit))
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    y = np.zeros(p.num_rows)
    if ub_rows.size:
        y[ub_rows] = sign * res.ineqlin.marginals
    if eq_rows.size:
        y[eq_rows] = res.eqlin.marginals
    return _finish(p, np.asarray(res.x), y, int(res.nit))


def _finish(p, x, y, nit):
    obj, _, gap = certify(p, x, y)
    return LpSolution(LpStatus.OPTIMAL, x=x, objective=obj, gap=gap,
                      residual=p.residual(x), duals=y, iterations=nit)


def infeasibility_witness(p: LpProblem) -> list:
    """Rows that stay violated when every row is given an elastic slack.

    The slack-minimizing LP is always feasible; the rows whose slack is
    positive at its optimum form the witness.
    """
    nr, nv = p.num_rows, p.num_vars
    # x, s_plus, s_minus  with  A x + s_plus - s_minus (sense) rhs
    A = sp.hstack([p.A, sp.eye_array(nr), -sp.eye_array(nr)]).tocsr()
    c = np.concatenate([np.zeros(nv), np.ones(2 * nr)])
    big = float(np.abs(p.rhs).sum() + abs(p.A).sum() * np.abs(np.concatenate([p.lo, p.hi])).max() + 1)
    elastic = LpProblem(c, A, p.sense, p.rhs,
                        np.concatenate([p.lo, np.zeros(2 * nr)]),
                        np.concatenate([p.hi, np.full(2 * nr, big)]))
    sol = _solve_highs(elastic, 100_000)
    slack = sol.x[nv:nv + nr] + sol.x[nv + nr:]
    return np.flatnonzero(slack > 1e-9).tolist()


# -- dense bounded-variable simplex ------------------------------------------

def _solve_simplex(p: LpProblem, max_iter: int, tol: float = 1e-9) -> LpSolution:
    """Two-phase primal simplex on a dense tableau; Bland's rule throughout.

    Rows become equalities with bounded slacks, variables are shifted to
    [0, u], rows are sign-normalized to b >= 0 and an artificial identity
    gives the starting basis. Phase 2 pins artificials to [0, 0].
    """
    A = p.A.toarray()
    nr, nv = A.shape
    le, ge = p.sense == LE, p.sense == GE
    slack_cols = np.flatnonzero(le | ge)
    S = np.zeros((nr, slack_cols.size))
    S[slack_cols, np.arange(slack_cols.size)] = np.where(le[slack_cols], 1.0, -1.0)
    big = np.inf
    A_full = np.hstack([A, S])
    lo = np.concatenate([p.lo, np.zeros(slack_cols.size)])
    up = np.concatenate([p.hi, np.full(slack_cols.size, big)]) - lo
    b = p.rhs - A_full @ lo
    flip = np.where(b < 0, -1.0, 1.0)
    A_full *= flip[:, None]
    b = b * flip
    ns = A_full.shape[1]
    tab = np.hstack([A_full, np.eye(nr)])
    up = np.concatenate([up, np.full(nr, big)])
    basis = np.arange(ns, ns + nr)
    at_upper = np.zeros(ns + nr, dtype=bool)
    xb = b.copy()

    c1 = np.concatenate([np.zeros(ns), np.ones(nr)])
    it, ok = _simplex_phase(tab, xb, basis, at_upper, up, c1, max_iter, tol)
    if not ok:
        return LpSolution(LpStatus.ITERATION_LIMIT, iterations=it)
    if xb[basis >= ns].sum() > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        return LpSolution(LpStatus.INFEASIBLE, witness=infeasibility_witness(p), iterations=it)
    up[ns:] = 0.0
    c2 = np.concatenate([p.c, np.zeros(ns - nv + nr)])
    it2, ok = _simplex_phase(tab, xb, basis, at_upper, up, c2, max_iter - it, tol)
    it += it2
    if not ok:
        return LpSolution(LpStatus.ITERATION_LIMIT, iterations=it)
    z = np.where(at_upper, up, 0.0)
    z[basis] = xb
    x = z[:nv] + lo[:nv]
    # artificial columns hold B^{-1}; undo the row flips for the duals
    y = (c2[basis] @ tab[:, ns:]) * flip
    return _finish(p, x, y, it)


def _simplex_phase(tab, xb, basis, at_upper, up, cost, max_iter, tol):
    nr, ncol = tab.shape
    for it in range(max_iter):
        d = cost - cost[basis] @ tab
        d[basis] = 0.0
        candidates = np.flatnonzero(((~at_upper) & (d < -tol) & (up > 0))
                                    | (at_upper & (d > tol)))
        if candidates.size == 0:
            return it, True
        j = candidates[0]
        col = tab[:, j]
        direction = -1.0 if at_upper[j] else 1.0
        # basic values move by -t * direction * col
        move = direction * col
        t_best, leave, leave_to_upper = up[j], -1, False
        for i in range(nr):
            if move[i] > tol:
                t = xb[i] / move[i]
                to_upper = False
            elif move[i] < -tol and np.isfinite(up[basis[i]]):
                t = (up[basis[i]] - xb[i]) / -move[i]
                to_upper = True
            else:
                continue
            if t < t_best - tol or (abs(t - t_best) <= tol and leave >= 0
                                    and basis[i] < basis[leave]):
                t_best, leave, leave_to_upper = t, i, to_upper
        if not np.isfinite(t_best):
            raise RuntimeError("unbounded direction in a box-bounded LP")
        t_best = max(t_best, 0.0)
        xb -= t_best * move
        if leave < 0:
            at_upper[j] = not at_upper[j]
            continue
        entering_value = (up[j] - t_best) if at_upper[j] else t_best
        old = basis[leave]
        at_upper[old] = leave_to_upper
        piv = tab[leave, j]
        tab[leave] /= piv
        others = np.arange(nr) != leave
        tab[others] -= np.outer(tab[others, j], tab[leave])
        xb[leave] = entering_value
        basis[leave] = j
        at_upper[j] = False
    return max_iter, False


# -- fair assignment LP -------------------------------------------------------

def build_lp1(C: np.ndarray, ga: GroupAssignment, fb: FairnessBounds) -> LpProblem:
    """Fractional fair assignment of n points to k centers.

    Variable S[i, l] lives at index i * k + l with bounds [0, 1]. Rows, in
    order: n assignment equalities, k cluster-mass rows (>= 1), then for
    every (c, l) an upper-share row  sum_{V_c} S_il - alpha_c sum_i S_il <= 0
    followed by the lower-share rows with beta_c (>= 0).
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise BadShape("cost matrix must be 2-D")
    n, k = C.shape
    if ga.n != n or fb.m != ga.m:
        raise BadShape("cost matrix, groups and bounds disagree in size")
    if n < k:
        raise BadShape(f"need n >= k, got n={n}, k={k}")
    m = ga.m
    var = np.arange(n * k).reshape(n, k)

    rows = [np.repeat(np.arange(n), k)]
    cols = [var.ravel()]
    vals = [np.ones(n * k)]
    r0 = n
    rows.append(r0 + np.tile(np.arange(k), n))
    cols.append(var.ravel())
    vals.append(np.ones(n * k))
    r0 += k
    in_group = ga.indicator()  # n x m
    for bounds, base in ((fb.alpha, r0), (fb.beta, r0 + m * k)):
        # row (base + c*k + l) has coefficient [phi(i) == c] - bound_c on S[i, l]
        coef = in_group - bounds[None, :]                    # n x m
        ii, cc, ll = np.meshgrid(np.arange(n), np.arange(m), np.arange(k), indexing="ij")
        rows.append((base + cc * k + ll).ravel())
        cols.append(var[ii, ll].ravel())
        vals.append(coef[ii, cc].ravel())
    A = sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                     shape=(n + k + 2 * m * k, n * k))
    A.eliminate_zeros()
    sense = np.array([EQ] * n + [GE] * k + [LE] * (m * k) + [GE] * (m * k), dtype=object)
    rhs = np.concatenate([np.ones(n), np.ones(k), np.zeros(2 * m * k)])
    return LpProblem(C.ravel(), A, sense, rhs, 0.0, 1.0)


def to_lp_text(p: LpProblem) -> str:
    """CPLEX-LP rendering for cross-checking with external solvers."""
    names = p.names or [f"x{j}" for j in range(p.num_vars)]

    def expr(coefs, idx):
        terms = []
        for a, j in zip(coefs, idx):
            terms.append(f"{'+' if a >= 0 else '-'} {abs(a):.17g} {names[j]}")
        return " ".join(terms) if terms else "0"

    lines = ["\\ generated by fairncut", "Minimize", " obj: " + expr(p.c, range(p.num_vars)),
             "Subject To"]
    for r in range(p.num_rows):
        lo, hi = p.A.indptr[r], p.A.indptr[r + 1]
        lines.append(f" r{r}: {expr(p.A.data[lo:hi], p.A.indices[lo:hi])} "
                     f"{p.sense[r]} {p.rhs[r]:.17g}")
    lines.append("Bounds")
    for j in range(p.num_vars):
        lines.append(f" {p.lo[j]:.17g} <= {names[j]} <= {p.hi[j]:.17g}")
    lines.append("End")
    return "\n".join(lines) + "\n"
