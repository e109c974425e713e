from .energies import (
    FlowModel,
    FrameObservation,
    LandmarkModel,
    TrackerState,
    TrackingWeights,
    energy_fea,
    energy_flow,
    fea_residuals,
    flow_residuals,
    total_energy,
)
from .pose import check_landmark_geometry, estimate_pose
from .shooting import quadratic_l1_objective, shooting_l1_box, soft_threshold
from .tracker import (
    N_ALTERNATIONS,
    initial_state,
    solve_weights_shooting,
    track_frame,
    track_sequence,
)

__all__ = [
    "FlowModel", "FrameObservation", "LandmarkModel", "TrackerState",
    "TrackingWeights", "energy_fea", "energy_flow", "fea_residuals",
    "flow_residuals", "total_energy", "check_landmark_geometry", "estimate_pose",
    "quadratic_l1_objective", "shooting_l1_box", "soft_threshold",
    "N_ALTERNATIONS", "initial_state", "solve_weights_shooting", "track_frame",
    "track_sequence",
]
