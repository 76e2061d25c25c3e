"""Round a toy embedding step by step.

Twelve points sit in two tight blobs and each blob is dominated by one
group. The steps:

1. k-means++ finds the blob centers.
2. The fair assignment LP mixes the groups.
3. Row-wise rounding of its solution gives a hard assignment.
4. The closest fair count matrix (IP2) says which group members must
   change cluster.
5. The repair moves make the partition fair.

    python3 demos/lp_rounding.py
"""

from fractions import Fraction

import numpy as np

from fairncut import build_graph, is_fair, ncut
from fairncut.fairness import bounds_from_sigma
from fairncut.graph import GroupAssignment, PartitionState
from fairncut.rounding import (cost_matrix, fractional_fair_assignment, kmeanspp_init,
                               reassign_to_fair, round_assignment, solve_ip2)

rng = np.random.default_rng(0)
H = np.vstack([rng.normal(0, 0.1, (6, 2)), rng.normal(3, 0.1, (6, 2))])
ga = GroupAssignment.from_labels([0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0])
# two dense blocks joined by a single edge
edges = [(i, j) for b in (0, 6) for i in range(b, b + 6) for j in range(i + 1, b + 6)] + [(5, 6)]
g = build_graph(edges)
fb = bounds_from_sigma(ga, Fraction(1, 5))
print("group share bounds per cluster:",
      [f"[{b}, {a}]" for a, b in zip(fb.alpha_exact, fb.beta_exact)])

Q = kmeanspp_init(H, 2, seed=0).Q
print("centers:\n", np.round(Q, 3))

S = fractional_fair_assignment(H, Q, ga, fb)
print("fractional assignment (rows = points):\n", np.round(S, 3) + 0.0)
print("LP cost:", round(float((S * cost_matrix(H, Q)).sum()), 4))

p = PartitionState.from_labels(g, round_assignment(S), 2, ga)
print("rounded group counts:\n", p.group_counts, " fair:", is_fair(p, ga, fb))

plan = solve_ip2(p.group_counts, fb)
print("closest fair counts:\n", plan.N_target, f" ({plan.moves} moves via {plan.method})")

moves = reassign_to_fair(g, p, ga, plan)
print(f"after {moves} moves: labels {p.labels.tolist()}, fair {is_fair(p, ga, fb)}, "
      f"ncut {ncut(g, p):.4f}")
