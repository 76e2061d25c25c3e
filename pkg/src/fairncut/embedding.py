"""Fair spectral embedding on the Stiefel manifold.

Minimizes trace(T^T D^{-1/2} L D^{-1/2} T) over T^T T = I_k subject to the
linear fairness constraints P(T) >= 0. The constraints enter through an
augmented Lagrangian; each subproblem is solved by curvilinear search
along the Cayley transform with Barzilai-Borwein steps and a nonmonotone
line search. The returned embedding is H = D^{-1/2} T.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadShape, NotConverged, SingularUpdate
from .fairness import ConstraintOperator, FairnessBounds, fairness_violation
from .graph import Graph, GroupAssignment

log = logging.getLogger(__name__)

TAU_MIN, TAU_MAX = 1e-10, 1e2
TAU_UNDERFLOW = 1e-15
COND_LIMIT = 1e14
ORTHO_DRIFT = 1e-8
NONMONOTONE_WINDOW = 10
SUFFICIENT_DECREASE = 1e-4
BACKTRACK = 0.2
MAX_BACKTRACKS = 10


@dataclass(frozen=True)
class EmbeddingConfig:
    T1: int = 100          # outer (multiplier) iterations
    T2: int = 2000         # inner Stiefel iterations per subproblem
    eps1: float = 1e-6     # fairness-violation tolerance
    eps2: float = 1e-3     # Riemannian gradient-norm tolerance
    tau0: float = 1e-3
    mu0: float = 1.0
    xi: float = 4.0
    seed: int = 0
    use_smw: bool = True

    def __post_init__(self):
        if min(self.T1, self.T2) < 1:
            raise ValueError("iteration caps must be positive")
        if min(self.eps1, self.eps2, self.tau0, self.mu0) <= 0:
            raise ValueError("tolerances, tau0 and mu0 must be positive")
        if self.xi <= 1:
            raise ValueError("xi must exceed 1")


@dataclass
class EmbeddingState:
    T: np.ndarray
    Lambda: np.ndarray
    mu: float
    tau: float
    outer_iter: int = 0
    inner_iter: int = 0


@dataclass
class EmbeddingResult:
    H: np.ndarray
    T: np.ndarray
    violation: float
    objective: float          # trace term at the returned T
    converged: bool
    outer_iters: int
    inner_iters: int
    state: EmbeddingState | None = None
    trace: list = field(default_factory=list)


def init_orthonormal(n: int, k: int, seed) -> np.ndarray:
    """Seeded n x k matrix with orthonormal columns (QR of a Gaussian draw)."""
    if not 1 <= k <= n:
        raise BadShape(f"need 1 <= k <= n, got n={n}, k={k}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    # fix column signs so the factorization is unique
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def rho(p, lam, mu):
    """Penalty/multiplier term for one inequality constraint p >= 0."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    active = p - lam / mu <= 0
    return np.where(active, -lam * p + 0.5 * mu * p * p, -lam * lam / (2 * mu))


def rho_grad(p, lam, mu):
    """d rho / d p."""
    active = p - lam / mu <= 0
    return np.where(active, -lam + mu * p, 0.0)


def _evaluate(g: Graph, co: ConstraintOperator | None, T, Lam, mu):
    """Objective, Euclidean gradient, trace term and penalty matrix at T."""
    LT = g.normalized_laplacian_matvec(T)
    trace = float(np.sum(T * LT))
    G = 2.0 * LT
    if co is None:
        return trace, G, trace, None
    P = co.forward(T)
    f = trace + float(rho(P, Lam, mu).sum())
    G += co.adjoint(rho_grad(P, Lam, mu))
    return f, G, trace, P


def augmented_objective(g: Graph, co: ConstraintOperator | None, st: EmbeddingState) -> float:
    return _evaluate(g, co, st.T, st.Lambda, st.mu)[0]


def gradient(g: Graph, co: ConstraintOperator | None, st: EmbeddingState) -> np.ndarray:
    """Euclidean gradient of the augmented objective with respect to T."""
    return _evaluate(g, co, st.T, st.Lambda, st.mu)[1]


def riemannian_gradient(T, G):
    """G - T G^T T, the gradient under the canonical Stiefel metric."""
    return G - T @ (G.T @ T)


def stiefel_update(T: np.ndarray, G: np.ndarray, tau: float, method: str = "smw") -> np.ndarray:
    """One Cayley step T' = (I + tau/2 W)^{-1} (I - tau/2 W) T, W = G T^T - T G^T.

    ``smw`` solves only the 2k x 2k system (I + tau/2 Y^T X) with X = [G, T],
    Y = [T, -G]; ``cayley`` forms the n x n system and is meant as a reference.
    """
    n, k = T.shape
    if method == "cayley":
        W = G @ T.T - T @ G.T
        lhs = np.eye(n) + 0.5 * tau * W
        _check_conditioning(lhs)
        return np.linalg.solve(lhs, T - 0.5 * tau * (W @ T))
    if method != "smw":
        raise ValueError(f"unknown update method {method!r}")
    X = np.hstack([G, T])
    Y = np.hstack([T, -G])
    return _smw_step(T, X, Y.T @ X, Y.T @ T, tau)


def _smw_step(T, X, YtX, YtT, tau):
    small = np.eye(YtX.shape[0]) + 0.5 * tau * YtX
    _check_conditioning(small)
    return T - tau * (X @ np.linalg.solve(small, YtT))


def _check_conditioning(A):
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > COND_LIMIT:
        raise SingularUpdate("Cayley system is numerically singular")


def bb_step(s, y, tau_min: float = TAU_MIN, tau_max: float = TAU_MAX,
            odd: bool = True, previous: float | None = None) -> float:
    """Alternating Barzilai-Borwein step size.

    Odd iterations use <s,s>/|<s,y>|, even ones |<s,y>|/<y,y>. Degenerate
    inner products fall back to ``previous``.
    """
    s = np.ravel(s)
    y = np.ravel(y)
    sy = abs(float(s @ y))
    if odd:
        num, den = float(s @ s), sy
    else:
        num, den = sy, float(y @ y)
    if sy == 0 or den == 0 or not np.isfinite(num / den):
        return previous if previous is not None else tau_min
    return float(min(max(num / den, tau_min), tau_max))


def _orthogonality_error(T):
    return float(np.linalg.norm(T.T @ T - np.eye(T.shape[1])))


def _reorthonormalize(T):
    Q, R = np.linalg.qr(T)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def solve_subproblem(g: Graph, co: ConstraintOperator | None, st: EmbeddingState,
                     cfg: EmbeddingConfig, trace: list | None = None) -> EmbeddingState:
    """Minimize the augmented objective over the Stiefel manifold for fixed multipliers.

    Stops when the Riemannian gradient norm drops to ``cfg.eps2`` or after
    ``cfg.T2`` iterations, and returns the lowest-objective iterate seen.
    """
    T = st.T
    Lam, mu = st.Lambda, st.mu
    f, G, tr, _ = _evaluate(g, co, T, Lam, mu)
    dt = riemannian_gradient(T, G)
    tau = st.tau
    window = deque([f], maxlen=NONMONOTONE_WINDOW)
    best_f, best_T = f, T
    method = "smw" if cfg.use_smw else "cayley"
    it = 0
    for it in range(1, cfg.T2 + 1):
        if np.linalg.norm(dt) <= cfg.eps2:
            it -= 1
            break
        X = np.hstack([G, T])
        Y = np.hstack([T, -G])
        YtX = Y.T @ X
        YtT = Y.T @ T
        # directional derivative along the Cayley curve is -||W||_F^2 / 2
        slope = 0.5 * float(np.trace((X.T @ X) @ (Y.T @ Y)))
        ref = max(window)
        for nls in range(MAX_BACKTRACKS + 1):
            try:
                if method == "smw":
                    Tn = _smw_step(T, X, YtX, YtT, tau)
                else:
                    Tn = stiefel_update(T, G, tau, "cayley")
            except SingularUpdate:
                tau *= 0.5
                if tau < TAU_UNDERFLOW:
                    raise
                continue
            fn, Gn, trn, _ = _evaluate(g, co, Tn, Lam, mu)
            if fn <= ref - SUFFICIENT_DECREASE * tau * slope or nls == MAX_BACKTRACKS:
                break
            tau *= BACKTRACK
        if _orthogonality_error(Tn) > ORTHO_DRIFT:
            log.debug("re-orthonormalizing after drift %.2e", _orthogonality_error(Tn))
            Tn = _reorthonormalize(Tn)
            fn, Gn, trn, _ = _evaluate(g, co, Tn, Lam, mu)
        dtn = riemannian_gradient(Tn, Gn)
        s = Tn - T
        yv = dtn - dt
        tau = bb_step(s, yv, TAU_MIN, TAU_MAX, odd=bool(it % 2), previous=tau)
        T, f, G, dt, tr = Tn, fn, Gn, dtn, trn
        window.append(f)
        if f < best_f:
            best_f, best_T = f, T
        if trace is not None:
            trace.append({"outer": st.outer_iter, "inner": it, "objective": f,
                          "trace": tr, "tau": tau, "grad_norm": float(np.linalg.norm(dt)),
                          "ortho_error": _orthogonality_error(T)})
    return replace(st, T=best_T, tau=tau, inner_iter=st.inner_iter + it)


def fair_spectral_embedding(g: Graph, ga: GroupAssignment, fb: FairnessBounds, k: int,
                            cfg: EmbeddingConfig = EmbeddingConfig(), T0=None,
                            strict: bool = True, trace: list | None = None) -> EmbeddingResult:
    """Augmented-Lagrangian outer loop around ``solve_subproblem``.

    Multipliers follow Lambda <- max(Lambda - mu P(T), 0) and mu <- xi mu.
    The loop stops once the fairness violation is at most ``cfg.eps1``. If
    that never happens within ``cfg.T1`` rounds the iterate with the smallest
    violation (ties broken by trace) is used and, with ``strict``,
    ``NotConverged`` is raised carrying it.

    Vacuous bounds (sigma = 1) drop the constraints entirely and solve the
    plain spectral problem.
    """
    if k < 2:
        raise BadShape("k must be at least 2")
    T = init_orthonormal(g.n, k, cfg.seed) if T0 is None else np.array(T0, dtype=float)
    if T.shape != (g.n, k):
        raise BadShape(f"initial T must be {g.n} x {k}")
    co = ConstraintOperator(g, ga, fb)
    Lam = np.zeros((ga.m, 2 * k))
    st = EmbeddingState(T, Lam, cfg.mu0, cfg.tau0)

    if fb.vacuous:
        st = solve_subproblem(g, None, st, cfg, trace)
        viol = fairness_violation(co.forward(st.T))
        return _result(g, st, st, viol, True, 1, trace)

    best = None
    converged = False
    t = 0
    for t in range(1, cfg.T1 + 1):
        st = replace(st, outer_iter=t, tau=cfg.tau0)
        st = solve_subproblem(g, co, st, cfg, trace)
        P = co.forward(st.T)
        st = replace(st, Lambda=np.maximum(st.Lambda - st.mu * P, 0.0), mu=st.mu * cfg.xi)
        viol = fairness_violation(P)
        tr = float(np.sum(st.T * g.normalized_laplacian_matvec(st.T)))
        if best is None or (viol, tr) < (best[0], best[1]):
            best = (viol, tr, st)
        log.debug("outer %d: violation %.3e trace %.6f mu %.3g", t, viol, tr, st.mu)
        if viol <= cfg.eps1:
            converged = True
            break
    res = _result(g, best[2], st, best[0], converged, t, trace)
    if strict and not converged:
        raise NotConverged(res.H, res.violation, state=res, trace=res.trace)
    return res


def _result(g, chosen, final, viol, converged, outer, trace):
    T = chosen.T
    return EmbeddingResult(
        H=g.inv_sqrt_degrees[:, None] * T, T=T, violation=viol,
        objective=float(np.sum(T * g.normalized_laplacian_matvec(T))),
        converged=converged, outer_iters=outer, inner_iters=final.inner_iter,
        state=final, trace=trace if trace is not None else [],
    )
