"""Vehicle pose estimation from roof-mounted fiducial tags.

A calibrated roadside camera observes square tags mounted flat on a
vehicle roof. This package detects the tags in images, estimates the
vehicle's horizontal pose (x, y, heading) with a family of solvers that
exploit the known mounting height to different degrees, and ships a
synthetic intersection scenario for benchmarking accuracy against
distance.
"""

from .errors import (
    BehindCamera,
    ConfigError,
    DegenerateConfiguration,
    EmptySector,
    ImageTooSmall,
    NegativeDepth,
    NonFiniteResidual,
    NotARotation,
    RayParallelToPlane,
    RooftagError,
    TagBehindCamera,
)
from .geometry import (
    CameraModel,
    RigidTransform,
    backproject_to_height,
    dlt_homography,
    project,
    project_points,
    rot_from_vec,
    vec_from_rot,
)
from .pgm import read_pgm, write_pgm
from .codebook import TagCodebook, default_codebook, load_codebook, save_codebook
from .detection import DetectionParams, TagDetection, detect_tags, detection_overlay
from .pose import (
    PoseEstimate,
    SolverSettings,
    TagLayout,
    estimate_basic,
    estimate_hard,
    estimate_soft,
    make_layout,
)
from .simulate import (
    SOLVER_NAMES,
    GroundTruthSample,
    ScenarioConfig,
    SolverResult,
    TrialRecord,
    load_scenario,
    observe_corners,
    read_trials,
    render_frame,
    rsu_cameras,
    run_trials,
    sample_poses,
    write_trials,
)
from .stats import DistanceBinStats, SolverBinStats, bin_by_distance, emit_report

__version__ = "0.1.0"
