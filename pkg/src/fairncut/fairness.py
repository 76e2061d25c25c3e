"""Range-based proportional fairness: bounds, constraint operator, checks.

A partition is fair when every group's share of every cluster lies in
[beta_c, alpha_c]. Bounds are held both as floats (for the continuous
optimizer) and as exact fractions (for the integral fairness gate).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GroupAssignment, PartitionState

MODES = ("ratio", "additive")


def as_fraction(x) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float.

    Floats go through their shortest repr, so ``0.2`` becomes ``1/5``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        return Fraction(repr(float(x)))
    return Fraction(str(x).strip())


@dataclass(frozen=True)
class FairnessBounds:
    """Per-group lower (beta) and upper (alpha) share bounds."""

    alpha_exact: tuple
    beta_exact: tuple
    sigma: Fraction | None = None
    mode: str = "ratio"

    def __post_init__(self):
        if len(self.alpha_exact) != len(self.beta_exact):
            raise ValueError("alpha and beta must have the same length")
        for a, b in zip(self.alpha_exact, self.beta_exact):
            if not (0 <= b <= a <= 1):
                raise ValueError(f"need 0 <= beta <= alpha <= 1, got beta={b}, alpha={a}")

    @property
    def m(self) -> int:
        return len(self.alpha_exact)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([float(a) for a in self.alpha_exact])

    @property
    def beta(self) -> np.ndarray:
        return np.array([float(b) for b in self.beta_exact])

    @property
    def vacuous(self) -> bool:
        """True when every share in [0, 1] is allowed."""
        return all(a == 1 for a in self.alpha_exact) and all(b == 0 for b in self.beta_exact)


def bounds_from_sigma(ga: GroupAssignment, sigma, mode: str = "ratio") -> FairnessBounds:
    """Bounds parameterized by a looseness ``sigma`` in [0, 1].

    ``ratio``:    alpha_c = min(r_c / (1 - sigma), 1), beta_c = r_c (1 - sigma)
    ``additive``: beta_c = r_c (1 - sigma), alpha_c = beta_c + sigma

    At sigma = 1 the ratio form is taken at its limit alpha_c = 1.
    """
    s = as_fraction(sigma)
    if not 0 <= s <= 1:
        raise ValueError(f"sigma must lie in [0, 1], got {sigma}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    n = ga.n
    alpha, beta = [], []
    for cnt in ga.counts.tolist():
        r = Fraction(cnt, n)
        b = r * (1 - s)
        if mode == "ratio":
            a = Fraction(1) if s == 1 else min(r / (1 - s), Fraction(1))
        else:
            a = b + s
        alpha.append(a)
        beta.append(b)
    return FairnessBounds(tuple(alpha), tuple(beta), s, mode)


class ConstraintOperator:
    """Apply (A - M)^T D^{-1/2} and (M - B)^T D^{-1/2} and their adjoints.

    A and B are rank one (rows alpha^T, beta^T) and M is one-hot, so each
    product costs O(n k) without forming any n x m matrix.
    """

    def __init__(self, g: Graph, ga: GroupAssignment, fb: FairnessBounds):
        if ga.n != g.n:
            raise ValueError("group assignment size does not match graph")
        if fb.m != ga.m:
            raise ValueError("bounds and group assignment disagree on m")
        self.n, self.m = g.n, ga.m
        self.phi = ga.phi
        self.alpha = fb.alpha
        self.beta = fb.beta
        self.scale = g.inv_sqrt_degrees
        self._groups = sp.csr_array(
            (np.ones(g.n), (ga.phi, np.arange(g.n))), shape=(ga.m, g.n))

    def forward(self, T: np.ndarray) -> np.ndarray:
        """P(T) = [(A-M)^T D^{-1/2} T, (M-B)^T D^{-1/2} T], shape m x 2k."""
        U = self.scale[:, None] * T
        total = U.sum(axis=0)
        by_group = self._groups @ U
        upper = self.alpha[:, None] * total[None, :] - by_group
        lower = by_group - self.beta[:, None] * total[None, :]
        return np.hstack([upper, lower])

    def adjoint(self, R: np.ndarray) -> np.ndarray:
        """A' R[:, :k] + B' R[:, k:] for an m x 2k matrix R; shape n x k."""
        k = R.shape[1] // 2
        Ra, Rb = R[:, :k], R[:, k:]
        shared = self.alpha @ Ra - self.beta @ Rb
        per_node = (Rb - Ra)[self.phi]
        return self.scale[:, None] * (shared[None, :] + per_node)

    def dense_matrices(self):
        """Explicit (A-M)^T D^{-1/2} and (M-B)^T D^{-1/2}; tests only."""
        M = np.zeros((self.n, self.m))
        M[np.arange(self.n), self.phi] = 1.0
        A = np.tile(self.alpha, (self.n, 1))
        B = np.tile(self.beta, (self.n, 1))
        Dm = np.diag(self.scale)
        return (A - M).T @ Dm, (M - B).T @ Dm


def penalty_matrix(co: ConstraintOperator, T: np.ndarray) -> np.ndarray:
    return co.forward(T)


def fairness_violation(P: np.ndarray) -> float:
    """Frobenius norm of the negative part of P."""
    return float(np.linalg.norm(np.minimum(P, 0.0)))


def counts_are_fair(N, fb: FairnessBounds) -> bool:
    """Exact check of beta_c |C_l| <= n_cl <= alpha_c |C_l| on an m x k count matrix."""
    N = np.asarray(N)
    sizes = N.sum(axis=0)
    if np.any(sizes == 0):
        return False
    for c in range(N.shape[0]):
        a, b = fb.alpha_exact[c], fb.beta_exact[c]
        for l in range(N.shape[1]):
            ncl, size = int(N[c, l]), int(sizes[l])
            # cross-multiplied against each bound's own denominator
            if ncl * b.denominator < b.numerator * size:
                return False
            if ncl * a.denominator > a.numerator * size:
                return False
    return True


def is_fair(p: PartitionState, ga: GroupAssignment, fb: FairnessBounds) -> bool:
    N = p.group_counts
    if N is None:
        N = np.bincount(ga.phi * p.k + p.labels, minlength=ga.m * p.k).reshape(ga.m, p.k)
    return counts_are_fair(N, fb)
