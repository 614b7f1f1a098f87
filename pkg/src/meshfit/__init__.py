"""Body-aware template mesh deformation via per-face Jacobian optimization."""

from .mesh import TriMesh, load_mesh, write_mesh
from .gradient import FaceGradientOperator, build_gradient_operator, face_jacobians
from .sampling import SurfaceSampleSet, sample_surface
from .body import BodySpec, build_body, signed_distance
from .body_losses import (
    BodyLossParams,
    body_loss,
    contact_loss,
    eval_metrics,
    penetration_loss,
)
from .poisson import (
    DeformationState,
    JacobianField,
    PoissonSystem,
    assemble_system,
    backprop_to_jacobians,
    field_regularizer,
    init_identity_field,
    solve_deformation,
)
from .silhouette import (
    Camera,
    CameraSet,
    default_camera_set,
    image_l1_loss,
    render_silhouette,
    render_views,
)
from .guidance import (
    GuidanceParams,
    GuidanceTarget,
    chamfer_loss,
    guidance_loss,
    register_guidance_term,
)
from .optimize import (
    ObjectiveConfig,
    OptimizationError,
    RunRecord,
    adam_step,
    finite_difference_check,
    run_optimization,
    run_two_stage,
    total_loss_and_grad,
)
from .config import ConfigError, RunSetup, load_config

__version__ = "0.1.0"

__all__ = [
    "TriMesh",
    "load_mesh",
    "write_mesh",
    "FaceGradientOperator",
    "build_gradient_operator",
    "face_jacobians",
    "SurfaceSampleSet",
    "sample_surface",
    "JacobianField",
    "PoissonSystem",
    "DeformationState",
    "assemble_system",
    "solve_deformation",
    "backprop_to_jacobians",
    "field_regularizer",
    "init_identity_field",
    "BodySpec",
    "build_body",
    "signed_distance",
    "BodyLossParams",
    "body_loss",
    "contact_loss",
    "penetration_loss",
    "eval_metrics",
    "Camera",
    "CameraSet",
    "default_camera_set",
    "render_silhouette",
    "render_views",
    "image_l1_loss",
    "GuidanceParams",
    "GuidanceTarget",
    "chamfer_loss",
    "guidance_loss",
    "register_guidance_term",
    "ObjectiveConfig",
    "OptimizationError",
    "RunRecord",
    "adam_step",
    "total_loss_and_grad",
    "run_optimization",
    "run_two_stage",
    "finite_difference_check",
    "ConfigError",
    "RunSetup",
    "load_config",
]
