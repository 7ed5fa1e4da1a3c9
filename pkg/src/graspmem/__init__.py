"""Training-free task-oriented grasp transfer.

Retrieve a stored object-task grasp example from a feature-annotated
memory, align the memory object's point cloud to the scene object with a
hybrid geometric+feature registration, then transfer the grasp and
re-score it against the scene's candidate grasps.
"""

from .alignment import (
    AlignmentConfig,
    AlignmentResult,
    ScoredCandidate,
    align,
    align_detailed,
    candidate_cost,
    chamfer_distance,
    coarse_align,
    combined_reconstruction_loss,
    estimate_scale,
    euler_grid,
    icp_refine,
)
from .errors import (
    AllCandidatesRejected,
    DegenerateCloud,
    DegenerateHand,
    DimMismatch,
    EmptyCandidates,
    EmptyMemory,
    GraspMemError,
    IoError,
    ManifestCorrupt,
    NoOverlap,
    NoPositives,
    RankDeficient,
    ZeroVector,
)
from .evaluation import (
    EvalReport,
    LabeledGrasp,
    LabeledGraspSet,
    average_precision,
    evaluate_pipeline,
    random_baseline,
)
from .geometry import (
    FeatureCloud,
    GraspPose,
    NeighborIndex,
    SimTransform,
    apply_transform,
    bbox_diagonal,
    centroid,
    covariance_eigen,
    global_descriptor,
)
from .io import read_embedding, read_fcld, write_embedding, write_fcld
from .memory import HandSegments, MemoryInstance, gripper_from_hand, ingest, load_store
from .pca import PcaModel, fit_pca, project, visualization_projection
from .retrieval import (
    SceneQuery,
    cosine_similarity,
    exclude_objects,
    exclude_tasks,
    joint_score,
    retrieve,
    retrieve_top_k,
)
from .transfer import (
    CandidateGrasp,
    ScoredGrasp,
    TransferConfig,
    select_grasp,
    task_compatibility,
    transfer_grasp,
)

__version__ = "0.1.0"
