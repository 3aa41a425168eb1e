"""Gaussian scene representation, projection, and differentiable compositing."""
from .backend import ACTIVE_BACKEND, get_backend
from .cloud import (
    Camera,
    CheckpointError,
    Gaussian,
    GaussianCloud,
    load_class_ids,
    load_cloud,
    logit,
    save_class_ids,
    save_cloud,
    sigmoid,
)
from .project import (
    CULLED,
    CUTOFF_SIGMA,
    EIGENVALUE_FLOOR,
    Culled,
    Projected2DGaussian,
    project_cloud,
    project_gaussian,
)
from .gradcheck import check_gradients
from .render import (
    DEFAULT_Q_CUTOFF,
    DEFAULT_T_STOP,
    ParamGrads,
    RenderError,
    RenderOutput,
    depth_tv_loss,
    render,
    render_backward,
)

__all__ = [
    "ACTIVE_BACKEND", "get_backend", "Camera", "CheckpointError", "Gaussian",
    "GaussianCloud", "load_class_ids", "load_cloud", "logit", "save_class_ids",
    "save_cloud", "sigmoid", "CULLED", "Culled", "CUTOFF_SIGMA",
    "EIGENVALUE_FLOOR", "Projected2DGaussian", "project_cloud",
    "project_gaussian", "DEFAULT_Q_CUTOFF", "DEFAULT_T_STOP", "ParamGrads",
    "RenderError", "RenderOutput", "depth_tv_loss", "render", "render_backward",
    "check_gradients",
]
