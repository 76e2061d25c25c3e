"""Fair normalized-cut graph partitioning.

A two-phase method: a spectral embedding on the Stiefel manifold steered
towards group-proportional clusters by an augmented Lagrangian, followed by
a rounding loop that returns a partition meeting the fairness bounds exactly.
"""

from .bench import (RunReport, SbmConfig, emit_report, grid_search, parse_report, run_fnm,
                    sbm_generate)
from .embedding import EmbeddingConfig, EmbeddingResult, fair_spectral_embedding
from .errors import (AllCellsFailed, BadShape, DisconnectedAfterRetries, EmptyCandidateSet,
                     EmptyCluster, FairNcutError, GraphError, GroupError, Ip2Infeasible,
                     IsolatedNode, NegativeWeight, NotConverged, PartitionError, SelfLoop,
                     SingularUpdate, WouldEmptyCluster, WrongSource)
from .fairness import (ConstraintOperator, FairnessBounds, bounds_from_sigma, counts_are_fair,
                       fairness_violation, is_fair)
from .graph import (Graph, GroupAssignment, PartitionState, apply_move, balance, build_graph,
                    count_balance, ncut, ncut_delta, read_edge_list, read_groups)
from .lp import LpProblem, LpSolution, LpStatus, build_lp1, solve_lp
from .rounding import (RoundingConfig, RoundingResult, fair_rounding, kmeanspp_init, solve_ip2)

__all__ = [name for name in dir() if not name.startswith("_")]
