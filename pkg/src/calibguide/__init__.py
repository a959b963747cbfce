"""Interactive camera-calibration toolkit: pose guidance, Zhang-style
calibration, convergence monitoring, and a synthetic evaluation harness."""

from .calibrate import (
    CalibrationResult,
    DegenerateConfigurationError,
    FrameObservation,
    InsufficientDataError,
    bootstrap_single_frame,
    covariance,
    estimate_homography,
    index_of_dispersion,
    init_intrinsics,
    pose_from_homography,
    refine,
)
from .geometry import (
    DISTORTION_INDICES,
    N_INTRINSICS,
    PARAM_NAMES,
    PINHOLE_INDICES,
    BoardGeometry,
    BoardPose,
    DistortionMap,
    IntrinsicParams,
    ProjectionError,
    distortion_magnitude_map,
    project_points,
    projection_jacobian,
)
from .poses import (
    MapExhaustedError,
    PlacementError,
    PoseConfig,
    SingularityReport,
    TargetGroup,
    TargetPose,
    VisitedMask,
    check_singularities,
    distortion_target,
    init_targets,
    pinhole_target,
    subdivision_fraction,
)
from .session import (
    FrameVerdict,
    Phase,
    RejectReason,
    SessionConfig,
    SessionState,
    convergence_step,
    jaccard_overlap,
    submit_frame,
)
from .synth import (
    GroundTruthCamera,
    TestSet,
    default_real_camera,
    estimation_error,
    greedy_compact,
    make_test_set,
    match_overlay_pose,
    render_observation,
    run_correlation_experiment,
    run_guided_session,
    sample_camera,
)

__version__ = "0.1.0"
