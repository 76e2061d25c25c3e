"""Exception hierarchy shared by all fairncut modules."""


class FairNcutError(Exception):
    """Base class for every error raised by this package."""


class GraphError(FairNcutError, ValueError):
    pass


class IsolatedNode(GraphError):
    def __init__(self, node):
        super().__init__(f"node {node} has zero degree")
        self.node = node


class SelfLoop(GraphError):
    def __init__(self, node):
        super().__init__(f"self-loop on node {node}")
        self.node = node


class NegativeWeight(GraphError):
    pass


class GroupError(FairNcutError, ValueError):
    pass


class PartitionError(FairNcutError, ValueError):
    pass


class EmptyCluster(PartitionError):
    def __init__(self, cluster):
        super().__init__(f"cluster {cluster} is empty")
        self.cluster = cluster


class WrongSource(PartitionError):
    pass


class WouldEmptyCluster(PartitionError):
    def __init__(self, cluster):
        super().__init__(f"move would leave cluster {cluster} empty")
        self.cluster = cluster


class BadShape(FairNcutError, ValueError):
    pass


class SingularUpdate(FairNcutError, ArithmeticError):
    """The 2k x 2k Cayley/SMW system is numerically singular."""


class NotConverged(FairNcutError):
    """Fairness violation never reached the tolerance.

    Carries the best embedding found so callers may proceed with it.
    """

    def __init__(self, H, violation, state=None, trace=None):
        super().__init__(f"embedding did not converge (violation={violation:.3e})")
        self.H = H
        self.violation = violation
        self.state = state
        self.trace = trace


class Ip2Infeasible(FairNcutError):
    def __init__(self, msg="no fair group-count matrix exists; try a larger sigma"):
        super().__init__(msg)


class EmptyCandidateSet(FairNcutError, AssertionError):
    pass


class DisconnectedAfterRetries(FairNcutError):
    pass


class AllCellsFailed(FairNcutError):
    def __init__(self, failures):
        super().__init__(f"all {len(failures)} grid cells failed")
        self.failures = failures
