"""Small seeded scenes used by the gradient checker, the CLI and the tests."""

import math
from dataclasses import dataclass

import numpy as np

from .field import GaussianFieldUV, init_field, initial_scale
from .surface import SurfaceModel, build_uv_mapping, deform, load_demo_surface
from .splat import Camera
from .views import look_at_camera


@dataclass
class Scene:
    name: str
    field: GaussianFieldUV
    model: SurfaceModel
    mapping: object
    mesh: object
    cam: Camera


def scatter_surface(points, tri_size=1e-3):
    """Surface with one tiny triangle per point; texel k (row-major) maps to
    the centroid of triangle k, i.e. to ``points[k]``. Returns (model, resolution)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    res = max(1, math.ceil(math.sqrt(n)))
    spread = np.array([[-1.0, -1.0, 0.0], [2.0, -1.0, 0.0], [-1.0, 2.0, 0.0]]) * tri_size
    verts = (points[:, None, :] + spread[None]).reshape(-1, 3)
    faces = np.arange(3 * n, dtype=np.int64).reshape(n, 3)
    d = 0.2 / res
    uv = np.zeros((n, 3, 2))
    for k in range(n):
        i, j = divmod(k, res)
        c = np.array([(i + 0.5) / res, (j + 0.5) / res])
        uv[k] = [c + (-d, -d), c + (2 * d, -d), c + (-d, 2 * d)]
    model = SurfaceModel(
        template_vertices=verts,
        faces=faces,
        shape_basis=np.zeros((3 * n, 3, 0)),
        expr_basis=np.zeros((3 * n, 3, 0)),
        uv_coords=uv,
    )
    return model, res


def _scatter_scene(name, points, raw_feature, raw_opacity, raw_scale, cam):
    model, res = scatter_surface(points)
    n = points.shape[0]
    c = raw_feature.shape[1]
    field = GaussianFieldUV(np.zeros((res, res, c)), np.zeros((res, res)), np.zeros((res, res)))
    field.raw_feature.reshape(-1, c)[:n] = raw_feature
    field.raw_opacity.reshape(-1)[:n] = raw_opacity
    field.raw_scale.reshape(-1)[:n] = raw_scale
    mapping = build_uv_mapping(model, res)
    mesh = deform(model, np.zeros(0), np.zeros(0))
    return Scene(name, field, model, mapping, mesh, cam)


def axis_camera(width, height, focal):
    """Camera at the origin looking down +z."""
    return Camera(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, np.eye(3), np.zeros(3), width, height)


def random_scene(seed, n=5, width=16, height=16, channels=3):
    """``n`` Gaussians scattered in the frustum with 1.2 to 3.5 pixel footprints."""
    rng = np.random.default_rng(seed)
    cam = axis_camera(width, height, focal=float(max(width, height)) * 1.25)
    z = rng.uniform(2.0, 4.0, n)
    px = rng.uniform(0.1, 0.9, n) * (width - 1)
    py = rng.uniform(0.1, 0.9, n) * (height - 1)
    points = np.stack([(px - cam.cx) * z / cam.fx, (py - cam.cy) * z / cam.fy, z], axis=1)
    sigma_px = rng.uniform(1.2, 3.5, n)
    return _scatter_scene(
        f"random-{seed}-{n}",
        points,
        rng.normal(0.0, 0.7, (n, channels)),
        rng.normal(0.5, 1.0, n),
        np.log(sigma_px * z / cam.fx),
        cam,
    )


def occlusion_scene(channels=3):
    """A Gaussian clamped at alpha 0.9999 over its center pixel fully hides a
    small one directly behind it, whose 3-sigma disc covers only that pixel."""
    cam = axis_camera(9, 9, focal=10.0)
    points = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 3.0]])
    sigma_px = np.array([2.0, 0.3])
    return _scatter_scene(
        "occlusion",
        points,
        np.array([[0.4, -0.3, 0.2][:channels], [-0.5, 0.6, 0.1][:channels]]),
        np.array([10.0, 0.3]),  # sigmoid(10) = 0.99995 > clamp
        np.log(sigma_px * points[:, 2] / cam.fx),
        cam,
    )


def planted_scene(seed, resolution=12, image_size=32, channels=4):
    """Demo head with a seeded non-trivial field seen from a sampled view."""
    model = load_demo_surface()
    rng = np.random.default_rng(seed)
    field = init_field(resolution, channels, seed, initial_scale(model) * 4.0)
    field.raw_feature[:] = rng.normal(0.0, 0.8, field.raw_feature.shape)
    field.raw_opacity[:] = rng.normal(0.0, 0.8, field.raw_opacity.shape)
    field.raw_scale += rng.normal(0.0, 0.2, field.raw_scale.shape)
    mapping = build_uv_mapping(model, resolution)
    beta = rng.normal(0.0, 0.5, model.n_shape)
    psi = rng.normal(0.0, 0.5, model.n_expr)
    mesh = deform(model, beta, psi)
    cam = look_at_camera(yaw=rng.uniform(-40, 40), pitch=rng.uniform(-20, 30), image_size=image_size)
    return Scene(f"planted-{seed}", field, model, mapping, mesh, cam)


def fixture_scenes(seed=7):
    return [
        random_scene(seed, n=5),
        random_scene(seed + 1, n=12, width=20, height=14),
        occlusion_scene(),
        planted_scene(seed),
    ]
