"""Exception types raised across the toolkit."""


class GraspMemError(Exception):
    """Base class for every error this package raises on purpose."""


class DegenerateCloud(GraspMemError):
    """Cloud has no usable spatial extent (e.g. all points identical)."""


class DimMismatch(GraspMemError):
    """Feature or embedding dimensions disagree between two inputs."""


class IoError(GraspMemError):
    """A file is missing, unreadable, or not in the expected binary layout."""


class ManifestCorrupt(GraspMemError):
    """A store manifest fails schema validation or cannot be parsed."""


class DegenerateHand(GraspMemError):
    """Hand segments do not define a gripper (e.g. thumb on finger centroid)."""


class ZeroVector(GraspMemError):
    """Cosine similarity requested for a vector with (near-)zero norm."""


class EmptyMemory(GraspMemError):
    """No memory instance survives the exclusion filter."""


class RankDeficient(GraspMemError):
    """Requested more principal components than the data supports.

    Carries ``achievable_rank`` so callers can refit at the rank the data has.
    """

    def __init__(self, message: str, achievable_rank: int):
        super().__init__(message)
        self.achievable_rank = achievable_rank


class NoOverlap(GraspMemError):
    """No transformed point landed within the distance threshold."""


class AllCandidatesRejected(GraspMemError):
    """Every refined alignment candidate failed the final re-scoring."""


class EmptyCandidates(GraspMemError):
    """Grasp selection called with an empty candidate list."""


class NoPositives(GraspMemError):
    """Average precision is undefined without at least one positive label."""
