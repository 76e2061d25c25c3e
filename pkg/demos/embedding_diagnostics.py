"""Watch the fair embedding converge.

Prints, per multiplier round, the fairness violation of the relaxed
embedding and its trace objective next to the unconstrained floor (the
sum of the k smallest eigenvalues of the normalized Laplacian). The
constrained trace sits above the floor; the gap is the relaxed price of
fairness.

    python3 demos/embedding_diagnostics.py
"""

from fractions import Fraction

import numpy as np
import scipy.sparse.linalg as sla

from fairncut.bench import SbmConfig, sbm_generate
from fairncut.embedding import EmbeddingConfig, fair_spectral_embedding
from fairncut.fairness import ConstraintOperator, bounds_from_sigma, fairness_violation

k = 5
g, ga, _ = sbm_generate(SbmConfig(seed=0))
floor = sla.eigsh(sla.LinearOperator((g.n, g.n), matvec=g.normalized_laplacian_matvec),
                  k=k, which="SA")[0].sum()
print(f"unconstrained floor: {floor:.6f}")

fb = bounds_from_sigma(ga, Fraction(1, 5))
co = ConstraintOperator(g, ga, fb)
trace = []
res = fair_spectral_embedding(g, ga, fb, k, EmbeddingConfig(), strict=False, trace=trace)

# the last inner step of each round carries that round's numbers
for outer in sorted({t["outer"] for t in trace}):
    last = [t for t in trace if t["outer"] == outer][-1]
    print(f"round {outer:>3}: inner steps {last['inner']:>5}  trace {last['trace']:.6f}  "
          f"|grad| {last['grad_norm']:.1e}  step {last['tau']:.1e}")

print(f"converged {res.converged}, violation {res.violation:.2e}, trace {res.objective:.6f}")
print(f"violation recomputed from T: {fairness_violation(co.forward(res.T)):.2e}")
print(f"orthonormality error: {np.linalg.norm(res.T.T @ res.T - np.eye(k)):.1e}")
