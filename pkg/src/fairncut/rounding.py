"""Fair rounding of a node embedding into a strictly fair k-partition.

Lloyd-style loop: seed centers with k-means++, assign points to centers
(fair LP, or nearest center in the scalable mode), choose the closest
fair group-count matrix, repair the assignment with the cheapest Ncut
moves, then recompute centers. The best-Ncut fair partition is kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.spatial.distance import cdist

from .errors import BadShape, EmptyCandidateSet, Ip2Infeasible
from .fairness import FairnessBounds, counts_are_fair, is_fair
from .graph import (Graph, GroupAssignment, PartitionState, apply_move, ncut,
                    ncut_deltas)
from .lp import build_lp1, solve_lp

log = logging.getLogger(__name__)

LP_SCALE_LIMIT = 100_000   # n * k above which "auto" mode rounds by nearest center


@dataclass(frozen=True)
class RoundingConfig:
    T0: int = 100              # Lloyd iterations after k-means++ seeding
    n_init: int = 10           # independent k-means++ runs; lowest inertia wins
    T3: int = 10               # outer rounding iterations
    eps3: float = 1e-4         # total center movement tolerance
    mode: str = "auto"         # "lp", "kr" (nearest center) or "auto"
    ip2_exact_limit: int = 20  # exact IP2 when m * k <= this
    ip2_restarts: int = 10
    reassign_order: str = "lex"  # or "greedy"
    lp_method: str = "highs"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("lp", "kr", "auto"):
            raise ValueError(f"unknown rounding mode {self.mode!r}")
        if self.reassign_order not in ("lex", "greedy"):
            raise ValueError(f"unknown reassignment order {self.reassign_order!r}")
        if min(self.T0, self.T3, self.n_init, self.ip2_restarts) < 1 or self.eps3 <= 0:
            raise ValueError("rounding parameters must be positive")

    def resolved_mode(self, n: int, k: int) -> str:
        if self.mode != "auto":
            return self.mode
        return "lp" if n * k <= LP_SCALE_LIMIT else "kr"


@dataclass
class CenterSet:
    Q: np.ndarray
    iteration: int = 0


@dataclass
class ReassignmentPlan:
    N: np.ndarray
    N_target: np.ndarray
    method: str = "exact"

    @property
    def Delta(self) -> np.ndarray:
        return self.N_target - self.N

    @property
    def objective(self) -> int:
        return int(np.abs(self.Delta).sum())

    @property
    def moves(self) -> int:
        return int(np.maximum(self.Delta, 0).sum())


@dataclass
class RoundingResult:
    partition: PartitionState
    ncut: float
    mode: str
    iterations: int
    moves: int                 # reassignment moves in the iteration that produced the best partition
    trace: list = field(default_factory=list)


# -- centers and assignments ---------------------------------------------------

def kmeanspp_init(H: np.ndarray, k: int, seed=0, max_iter: int = 100,
                  n_init: int = 1) -> CenterSet:
    """D^2-weighted seeding followed by at most ``max_iter`` Lloyd steps.

    With ``n_init > 1`` the whole procedure is repeated from independent
    seeds and the centers with the smallest inertia are kept.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if n < k:
        raise BadShape(f"need at least k={k} points, got {n}")
    best = None
    for child in _seed_sequence(seed).spawn(n_init):
        Q, it = _kmeans_once(H, k, np.random.default_rng(child), max_iter)
        inertia = float(np.sum((H - Q[nearest_assignment(H, Q)]) ** 2))
        if best is None or inertia < best[0]:
            best = (inertia, Q, it)
    return CenterSet(best[1], best[2])


def _seed_sequence(seed):
    """Fresh SeedSequence, so spawning never depends on earlier spawns of ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)


def _kmeans_once(H, k, rng, max_iter):
    n = H.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((H - H[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((H - H[nxt]) ** 2, axis=1))
    Q = H[chosen].copy()
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        new = nearest_assignment(H, Q)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        Q = _centers(H, labels, Q)
    return Q, it


def _centers(H, labels, previous):
    k = previous.shape[0]
    sizes = np.bincount(labels, minlength=k)
    sums = np.zeros_like(previous)
    np.add.at(sums, labels, H)
    Q = previous.copy()
    filled = sizes > 0
    Q[filled] = sums[filled] / sizes[filled, None]
    return Q


def cost_matrix(H: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """C[i, l] = ||h_i - q_l||_2."""
    H, Q = np.atleast_2d(H), np.atleast_2d(Q)
    if H.shape[1] != Q.shape[1]:
        raise BadShape("points and centers have different dimensions")
    return cdist(H, Q)


def nearest_assignment(H, Q) -> np.ndarray:
    # argmin keeps the first (lowest-index) center on ties
    return np.argmin(cost_matrix(H, Q), axis=1)


def fractional_fair_assignment(H, Q, ga: GroupAssignment, fb: FairnessBounds,
                               lp_method: str = "highs") -> np.ndarray:
    """Optimal fractional fair assignment S* (n x k) of points to centers."""
    C = cost_matrix(H, Q)
    sol = solve_lp(build_lp1(C, ga, fb), method=lp_method)
    if not sol.optimal:
        raise RuntimeError(f"fair assignment LP ended with status {sol.status.value}")
    return sol.x.reshape(C.shape)


def round_assignment(S: np.ndarray) -> np.ndarray:
    """Row-wise argmax, ties to the lowest cluster index."""
    return np.argmax(np.asarray(S), axis=1)


# -- minimal reassignment target -----------------------------------------------

def solve_ip2(N, fb: FairnessBounds, exact_limit: int = 20, seed=0,
              restarts: int = 10, method: str | None = None) -> ReassignmentPlan:
    """Fair group-count matrix N' closest to N in L1 with row sums preserved.

    Uses an exact integer program when m * k <= ``exact_limit`` (or
    ``method="exact"``), otherwise seeded hill-climbing over cluster sizes,
    falling back to the exact program if no fair matrix is found.
    """
    N = np.array(N, dtype=np.int64)   # copy: callers often pass live partition counts
    m, k = N.shape
    if np.any(N.sum(axis=0) < 1):
        raise BadShape("every cluster of N must be nonempty")
    if counts_are_fair(N, fb):
        return ReassignmentPlan(N, N.copy(), "identity")
    if method is None:
        method = "exact" if m * k <= exact_limit else "hill"
    if method == "hill":
        target = _ip2_hill_climb(N, fb, seed, restarts)
        if target is not None:
            return ReassignmentPlan(N, target, "hill")
        method = "exact"
    if method != "exact":
        raise ValueError(f"unknown IP2 method {method!r}")
    return ReassignmentPlan(N, _ip2_exact(N, fb), "exact")


def _ip2_exact(N, fb):
    """Branch-and-bound on the integer program with integral coefficients.

    Each bound a/b turns n'_cl vs a/b * n'_l into the integer row
    b n'_cl - a n'_l, so any integral point HiGHS accepts is exactly fair.
    """
    m, k = N.shape
    nv = m * k
    idx = np.arange(nv).reshape(m, k)
    rows, lo, hi = [], [], []

    def add(coefs, lb, ub):
        row = np.zeros(2 * nv)
        for j, a in coefs:
            row[j] += a
        rows.append(row)
        lo.append(lb)
        hi.append(ub)

    for c in range(m):
        add([(idx[c, l], 1) for l in range(k)], N[c].sum(), N[c].sum())
    for l in range(k):
        add([(idx[c, l], 1) for c in range(m)], 1, np.inf)
        for c in range(m):
            b = fb.beta_exact[c]
            a = fb.alpha_exact[c]
            col = [(idx[c2, l], -b.numerator) for c2 in range(m)] + [(idx[c, l], b.denominator)]
            add(col, 0, np.inf)
            col = [(idx[c2, l], a.numerator) for c2 in range(m)] + [(idx[c, l], -a.denominator)]
            add(col, 0, np.inf)
    for j, val in enumerate(N.ravel()):
        add([(nv + j, 1), (j, -1)], -val, np.inf)
        add([(nv + j, 1), (j, 1)], val, np.inf)
    total = int(N.sum())
    cost = np.concatenate([np.zeros(nv), np.ones(nv)])
    res = milp(cost, constraints=LinearConstraint(np.array(rows), lo, hi),
               integrality=np.ones(2 * nv),
               bounds=Bounds(np.zeros(2 * nv), np.full(2 * nv, total)))
    if res.status == 2 or res.x is None:
        raise Ip2Infeasible()
    if res.status != 0:
        raise RuntimeError(f"IP2 solver failed: {res.message}")
    target = np.rint(res.x[:nv]).astype(np.int64).reshape(m, k)
    if not counts_are_fair(target, fb) or not np.array_equal(target.sum(1), N.sum(1)):
        raise RuntimeError("IP2 solution failed the exact fairness check")
    return target


def _share_limits(fb, total):
    """Integer per-group count limits for every cluster size 0..total.

    lo[c, s] = ceil(beta_c s) and hi[c, s] = floor(alpha_c s), exactly.
    """
    sizes = np.arange(total + 1, dtype=np.int64)
    lo = np.array([-(-b.numerator * sizes // b.denominator) for b in fb.beta_exact])
    hi = np.array([a.numerator * sizes // a.denominator for a in fb.alpha_exact])
    return lo, hi


class _Transport:
    """Closest matrix to N with the row sums of N and given column sums.

    Share limits are elastic, so every size vector gets a score
    (violation units, L1 distance, matrix). The constraint matrix is a
    transportation matrix plus identity blocks, so LP vertices are integral.
    """

    def __init__(self, N, lo, hi):
        m, k = N.shape
        nv = m * k
        self.N, self.lo, self.hi = N, lo, hi
        eye = sp.identity(nv, format="csr")
        zero = sp.csr_array((nv, nv))
        rowsum = sp.kron(sp.identity(m), np.ones((1, k)))
        colsum = sp.kron(np.ones((1, m)), sp.identity(k))
        # variables: X, d+, d-, under, over
        self.A_eq = sp.vstack([
            sp.hstack([rowsum, sp.csr_array((m, 4 * nv))]),
            sp.hstack([colsum, sp.csr_array((k, 4 * nv))]),
            sp.hstack([eye, -eye, eye, zero, zero]),
        ]).tocsr()
        self.A_ub = sp.vstack([
            sp.hstack([-eye, zero, zero, -eye, zero]),
            sp.hstack([eye, zero, zero, zero, -eye]),
        ]).tocsr()
        penalty = 2 * int(N.sum()) + 1
        self.cost = np.concatenate([np.zeros(nv), np.ones(2 * nv), np.full(2 * nv, penalty)])
        self.cache = {}

    def __call__(self, sizes):
        key = tuple(int(s) for s in sizes)
        if key not in self.cache:
            self.cache[key] = self._solve(np.asarray(key))
        return self.cache[key]

    def _solve(self, sizes):
        N, lo, hi = self.N, self.lo, self.hi
        b_eq = np.concatenate([N.sum(axis=1), sizes, N.ravel()])
        b_ub = np.concatenate([-lo[:, sizes].ravel(), hi[:, sizes].ravel()])
        res = linprog(self.cost, A_ub=self.A_ub, b_ub=b_ub, A_eq=self.A_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        if res.status != 0:
            raise RuntimeError(f"transport subproblem failed: {res.message}")
        X = np.rint(res.x[:N.size]).astype(np.int64).reshape(N.shape)
        return int(_violation(X, lo, hi).sum()), int(np.abs(X - N).sum()), X


def _violation(X, lo, hi):
    """Per-column count units outside the integer share limits; empty columns cost m + 1."""
    sizes = X.sum(axis=0)
    v = (np.maximum(lo[:, sizes] - X, 0) + np.maximum(X - hi[:, sizes], 0)).sum(axis=0)
    return np.where(sizes == 0, X.shape[0] + 1, v)


def _transfer_descent(X, N, lo, hi, penalty):
    """Steepest descent over unit transfers on L1 distance + penalty * violation.

    All m * k * k transfers are scored at once: removing one member of group
    c from cluster l only changes column l, adding it to l2 only column l2.
    """
    m, k = X.shape
    eye = np.eye(m, dtype=np.int64)
    total = lo.shape[1] - 1
    while True:
        sizes = X.sum(axis=0)
        v = _violation(X, lo, hi)
        # cols[l, c, :] is column l with one member of group c removed (or added)
        minus = X.T[:, None, :] - eye[None]
        plus = X.T[:, None, :] + eye[None]
        s_minus = np.maximum(sizes - 1, 0)
        s_plus = np.minimum(sizes + 1, total)
        lo_m, hi_m = lo[:, s_minus].T[:, None, :], hi[:, s_minus].T[:, None, :]
        lo_p, hi_p = lo[:, s_plus].T[:, None, :], hi[:, s_plus].T[:, None, :]
        v_out = (np.maximum(lo_m - minus, 0) + np.maximum(minus - hi_m, 0)).sum(axis=2)
        v_out = np.where((sizes - 1 == 0)[:, None], m + 1, v_out).T       # (c, l)
        v_in = (np.maximum(lo_p - plus, 0) + np.maximum(plus - hi_p, 0)).sum(axis=2).T
        dist = np.abs(X - N)
        d_out = np.abs(X - 1 - N) - dist
        d_in = np.abs(X + 1 - N) - dist
        gain = (d_out[:, :, None] + d_in[:, None, :]
                + penalty * (v_out[:, :, None] - v[None, :, None]
                             + v_in[:, None, :] - v[None, None, :]))
        gain[X == 0] = np.iinfo(np.int64).max                  # nothing to move
        idx = np.arange(k)
        gain[:, idx, idx] = np.iinfo(np.int64).max             # l == l2
        c, l, l2 = np.unravel_index(np.argmin(gain), gain.shape)
        if gain[c, l, l2] >= 0:
            return X
        X = X.copy()
        X[c, l] -= 1
        X[c, l2] += 1


def _size_infeasibility(C, rows, lo, hi):
    """Integer distance of each size vector (rows of C) from necessary fairness conditions.

    Each column must fit its share limits (sum lo <= size <= sum hi) and each
    group total must fit the limits summed over clusters.
    """
    L, U = lo[:, C], hi[:, C]                                 # (m, candidates, k)
    col = np.maximum(L.sum(0) - C, 0) + np.maximum(C - U.sum(0), 0)
    row = np.maximum(L.sum(2) - rows[:, None], 0) + np.maximum(rows[:, None] - U.sum(2), 0)
    return col.sum(1) + row.sum(0) + (C < 1).sum(1) * (len(rows) + 1)


def _size_moves(sizes):
    """All size vectors reached by moving d >= 1 units between two clusters."""
    k = sizes.size
    cands = [np.empty((0, k), dtype=np.int64)]
    for l in range(k):
        d = np.arange(1, sizes[l])
        for l2 in range(k):
            if l2 != l and d.size:
                C = np.repeat(sizes[None], d.size, axis=0)
                C[:, l] -= d
                C[:, l2] += d
                cands.append(C)
    return np.vstack(cands)


def _repair_sizes(sizes, rows, lo, hi):
    """Steepest descent of the size infeasibility over ``_size_moves``."""
    inf = int(_size_infeasibility(sizes[None], rows, lo, hi)[0])
    while inf:
        C = _size_moves(sizes)
        if not len(C):
            break
        scores = _size_infeasibility(C, rows, lo, hi)
        j = int(np.argmin(scores))
        if scores[j] >= inf:
            break
        sizes, inf = C[j], int(scores[j])
    return sizes, inf


def _distance_bound(N, C, rows, lo, hi):
    """Lower bound on the transport distance for each size vector in C.

    Relaxing to one column (or one row) at a time is solvable exactly:
    clip N into the integer limits, then close the remaining gap to the
    required sum at unit cost. The larger of the two relaxations is kept.
    """
    L, U = lo[:, C], hi[:, C]                                 # (m, candidates, k)
    Nb = N[:, None, :]
    clip = np.clip(Nb, L, U)
    moved = np.abs(clip - Nb)
    by_col = moved.sum(axis=(0, 2)) + np.abs(clip.sum(axis=0) - C).sum(axis=1)
    by_row = moved.sum(axis=(0, 2)) + np.abs(clip.sum(axis=2) - rows[:, None]).sum(axis=0)
    return np.maximum(by_col, by_row)


def _size_descent(sizes, transport, rows, lo, hi):
    """Steepest descent of the exact transport distance over ``_size_moves``.

    Candidates failing the necessary conditions are skipped; the rest are
    solved in order of a lower bound on their distance (size change, and
    each entry's distance to its integer interval) until the bound reaches
    the best distance seen.
    """
    N = transport.N
    cur = transport(sizes)
    while True:
        C = _size_moves(sizes)
        C = C[_size_infeasibility(C, rows, lo, hi) == 0]
        if not len(C):
            return cur
        bound = _distance_bound(N, C, rows, lo, hi)
        nxt = None
        for j in np.argsort(bound, kind="stable"):
            if bound[j] >= (nxt[1][1] if nxt else cur[1]):
                break
            sc = transport(C[j])
            if sc[0] == 0 and sc[1] < (nxt[1][1] if nxt else cur[1]):
                nxt = (C[j], sc)
        if nxt is None:
            return cur
        sizes, cur = nxt


def _ip2_hill_climb(N, fb, seed, restarts):
    """Seeded local search for IP2; None if no fair matrix is found.

    Even restarts run steepest descent over unit transfers (restart 0 from
    N, later ones from N scrambled by random transfers); a result that is
    still unfair has its cluster sizes repaired against necessary fairness
    conditions. Odd restarts start directly from random cluster sizes.
    Either way the matrix is re-solved exactly for its cluster sizes, then
    polished by moving units of size between pairs of clusters.
    """
    m, k = N.shape
    total = int(N.sum())
    if total < k:
        return None
    rows = N.sum(axis=1)
    lo, hi = _share_limits(fb, total)
    transport = _Transport(N, lo, hi)
    penalty = 2 * total + 1
    rng = np.random.default_rng(seed)
    best = None
    for r in range(restarts):
        if r % 2:
            cuts = np.sort(rng.choice(np.arange(1, total), size=k - 1, replace=False))
            sizes = np.diff(np.concatenate([[0], cuts, [total]]))
        else:
            X = N.copy()
            for _ in range(int(rng.integers(1, total + 1)) if r else 0):
                c, l, l2 = rng.integers(m), rng.integers(k), rng.integers(k)
                if X[c, l] > 0:
                    X[c, l] -= 1
                    X[c, l2] += 1
            X = _transfer_descent(X, N, lo, hi, penalty)
            sizes = X.sum(axis=0)
        sizes, inf = _repair_sizes(sizes, rows, lo, hi)
        if inf or transport(sizes)[0]:
            continue
        viol, dist, X = _size_descent(sizes, transport, rows, lo, hi)
        if viol == 0 and counts_are_fair(X, fb) and (best is None or dist < best[0]):
            best = (dist, X)
    return None if best is None else best[1]


# -- reassignment ----------------------------------------------------------------

def _pick_triple(Delta, sizes, order, g, p, ga):
    m, k = Delta.shape
    triples = [(c, l, l2) for c in range(m) for l in range(k) if Delta[c, l] < 0
               for l2 in range(k) if Delta[c, l2] > 0]
    safe = [t for t in triples if sizes[t[1]] > 1]
    pool = safe or triples
    if order == "lex":
        return pool[0], None
    best = None
    for c, l, l2 in pool:
        cand = np.flatnonzero((p.labels == l) & (ga.phi == c))
        if cand.size == 0:
            continue
        d = ncut_deltas(g, p, cand, l, l2)
        j = int(np.argmin(d))
        if best is None or d[j] < best[0]:
            best = (d[j], (c, l, l2), int(cand[j]))
    if best is None:
        return pool[0], None
    return best[1], best[2]


def reassign_to_fair(g: Graph, p: PartitionState, ga: GroupAssignment,
                     plan: ReassignmentPlan, order: str = "lex") -> int:
    """Apply the plan in place with cheapest-delta moves; returns the move count.

    Triples (c, l, l') with Delta[c, l] < 0 < Delta[c, l'] are taken in
    lexicographic order (or, with ``order="greedy"``, the triple whose best
    candidate has the smallest delta). Moves that would empty their source
    cluster are deferred while any other triple is available.
    """
    if p.group_counts is None or not np.array_equal(p.group_counts, plan.N):
        raise ValueError("plan was not built from this partition's group counts")
    Delta = plan.Delta.copy()
    moves = 0
    while np.any(Delta != 0):
        (c, l, l2), node = _pick_triple(Delta, p.sizes, order, g, p, ga)
        if node is None:
            cand = np.flatnonzero((p.labels == l) & (ga.phi == c))
            if cand.size == 0:
                raise EmptyCandidateSet(f"no node of group {c} left in cluster {l}")
            node = int(cand[np.argmin(ncut_deltas(g, p, cand, l, l2))])
        apply_move(p, g, node, l2, allow_empty=True)
        Delta[c, l] += 1
        Delta[c, l2] -= 1
        moves += 1
    return moves


def _fill_empty_clusters(g, p):
    """Move the cheapest node into each empty cluster (sources keep >= 1 node)."""
    while np.any(p.sizes == 0):
        e = int(np.flatnonzero(p.sizes == 0)[0])
        best = None
        for l in np.flatnonzero(p.sizes > 1):
            cand = p.members(l)
            d = ncut_deltas(g, p, cand, l, e)
            j = int(np.argmin(d))
            if best is None or d[j] < best[0]:
                best = (d[j], int(cand[j]))
        if best is None:
            raise BadShape("not enough nodes to fill every cluster")
        apply_move(p, g, best[1], e, allow_empty=True)


# -- main loop -------------------------------------------------------------------

def fair_rounding(g: Graph, H: np.ndarray, ga: GroupAssignment, fb: FairnessBounds,
                  cfg: RoundingConfig = RoundingConfig()) -> RoundingResult:
    """Return the lowest-Ncut strictly fair partition found by the rounding loop."""
    H = np.asarray(H, dtype=float)
    n, k = H.shape[0], H.shape[1]
    if n != g.n or ga.n != n:
        raise BadShape("embedding, graph and groups disagree on n")
    if n < k:
        raise BadShape(f"need n >= k, got n={n}, k={k}")
    mode = cfg.resolved_mode(n, k)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.T3 + 1)
    centers = kmeanspp_init(H, k, seeds[0], cfg.T0, cfg.n_init)
    Q = centers.Q
    best = None
    trace = []
    t = 0
    while True:
        t += 1
        if mode == "lp":
            labels = round_assignment(fractional_fair_assignment(H, Q, ga, fb, cfg.lp_method))
        else:
            labels = nearest_assignment(H, Q)
        p = PartitionState.from_labels(g, labels, k, ga, allow_empty=True)
        _fill_empty_clusters(g, p)
        plan = solve_ip2(p.group_counts, fb, cfg.ip2_exact_limit,
                         seed=seeds[t], restarts=cfg.ip2_restarts)
        moves = reassign_to_fair(g, p, ga, plan, cfg.reassign_order)
        if not is_fair(p, ga, fb):
            raise AssertionError("reassignment produced an unfair partition")
        value = ncut(g, p)
        if best is None or value < best[0]:
            best = (value, p, moves)
        Q_new = _centers(H, p.labels, Q)
        drift = float(np.linalg.norm(Q_new - Q, axis=1).sum())
        trace.append({"iteration": t, "ncut": value, "moves": moves,
                      "ip2_objective": plan.objective, "ip2_method": plan.method,
                      "drift": drift})
        log.debug("rounding %d: ncut %.6f moves %d drift %.2e", t, value, moves, drift)
        Q = Q_new
        if drift <= cfg.eps3 or t >= cfg.T3:
            break
    return RoundingResult(best[1], best[0], mode, t, best[2], trace)
