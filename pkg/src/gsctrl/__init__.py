"""Learnable Gaussian control signals: surface-embedded UV Gaussian fields
splatted into multi-channel feature maps, with analytic gradients."""

import os

# prefer OpenMP over an outdated system TBB; must run before numba is imported
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

from .errors import GSError  # noqa: E402
from .field import EmbeddedGaussians, GaussianFieldUV, activate, embed, init_field  # noqa: E402
from .gradients import FieldGradient, backward, grad_check  # noqa: E402
from .splat import Camera, FeatureMap, project, render_bruteforce, render_tiled  # noqa: E402
from .surface import RigidPose, SurfaceModel, build_uv_mapping, deform, load_surface, surface_point  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "GSError", "EmbeddedGaussians", "GaussianFieldUV", "activate", "embed", "init_field",
    "FieldGradient", "backward", "grad_check", "Camera", "FeatureMap", "project",
    "render_bruteforce", "render_tiled", "RigidPose", "SurfaceModel", "build_uv_mapping",
    "deform", "load_surface", "surface_point",
]
