"""Playable-environment engine.

Deterministic, fully-analytic counterpart of a learned interactive video
model: compositional volumetric rendering of bounded radiance fields,
camera-relative discrete-action dynamics, the associated losses and metrics,
planar field calibration, and a session service for interactive play.
"""

from .action import (
    ActionDistribution,
    ActionModel,
    EnvironmentState,
    LossComponents,
    LossWeights,
    PoseBank,
    delta_loss,
    dynamics_step,
    extract_delta,
    fit_action_space,
    gumbel_softmax_sample,
    infer_action,
    mutual_information_loss,
    rollout,
    state_reconstruction_loss,
    total_loss,
    valid_prefix,
)
from .calibration import (
    CalibrationResult,
    FieldModel,
    Homography,
    Intrinsics,
    apply_homography,
    calibrate_from_field,
    decompose_homography,
    estimate_homography,
    interpolate_cameras,
    sequence_quality_filter,
    tennis_court_field,
)
from .errors import DomainError, EngineError, NoIntersectionError, SceneValidationError
from .fields import (
    BendDescriptor,
    CheckerPlaneField,
    RadianceSample,
    SphereBackgroundField,
    StyleResponse,
    UniformBoxField,
    VoxelGridField,
    bend,
    encoding_anneal_weights,
    positional_encoding,
    sample_field,
    style_modulate,
)
from .geometry import (
    BoundingVolume,
    CameraModel,
    Detection,
    Ray,
    camera_relative_to_world,
    intersect_aabb,
    look_at,
    pixel_ray,
    project_point,
    project_to_ground,
)
from .metrics import add_metric, delta_acc, delta_mse, mdr, warp_eval
from .renderer import (
    FeatureMap,
    ObjectSpec,
    Scene,
    compose_and_render_ray,
    frame_hash,
    integrate,
    ray_budget,
    render_feature_map,
    render_image,
    sample_object_ray,
    write_png,
)
from .scene import RenderConfig, SceneDescription, load_scene, scene_from_json, view_camera
from .session import ActionCommand, Session, create_session, run_script, step

__version__ = "0.1.0"
