"""Orbit camera sampling, cross-identity control maps, reprojection sweeps and
real/synthetic sample labels."""

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidRange
from .field import embed
from .formats import write_feature_map
from .splat import Camera, project, render_tiled
from .surface import deform

YAW_RANGE = (-60.0, 60.0)
PITCH_RANGE = (-30.0, 45.0)
DEFAULT_IMAGE_SIZE = 512
FOCAL_FACTOR = 1.2  # fx = fy = 1.2 * image size
DEFAULT_RADIUS = 3.6  # demo head spans ~80% of the frame height
VIEWS_PER_SUBJECT = 60


class LabelKind(enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


_TOKEN_IDS = {LabelKind.REAL: 0, LabelKind.SYNTHETIC: 1}


@dataclass(frozen=True)
class SampleLabel:
    kind: LabelKind

    @property
    def token_id(self):
        return _TOKEN_IDS[self.kind]

    @classmethod
    def parse(cls, value):
        return cls(LabelKind(value))


@dataclass(frozen=True)
class ViewSpec:
    yaw: float  # degrees, positive turns the camera toward +x
    pitch: float  # degrees, positive looks from above
    radius: float
    look_at: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidRange(f"radius must be positive, got {self.radius}")


def look_at_camera(yaw=0.0, pitch=0.0, radius=DEFAULT_RADIUS, look_at=(0.0, 0.0, 0.0),
                   image_size=DEFAULT_IMAGE_SIZE, focal=None):
    """Camera on a sphere around ``look_at`` with OpenCV axes (x right, y down, z forward)."""
    target = np.asarray(look_at, dtype=np.float64)
    ya, pa = math.radians(yaw), math.radians(pitch)
    center = target + radius * np.array([math.sin(ya) * math.cos(pa), math.sin(pa), math.cos(ya) * math.cos(pa)])
    forward = target - center
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    f = FOCAL_FACTOR * image_size if focal is None else focal
    return Camera(f, f, image_size / 2.0, image_size / 2.0, rotation, -rotation @ center, image_size, image_size)


def camera_from_view(view, image_size=DEFAULT_IMAGE_SIZE):
    return look_at_camera(view.yaw, view.pitch, view.radius, view.look_at, image_size)


def sample_view_specs(n=VIEWS_PER_SUBJECT, yaw_range=YAW_RANGE, pitch_range=PITCH_RANGE,
                      radius=DEFAULT_RADIUS, seed=0, look_at=(0.0, 0.0, 0.0)):
    if n < 0:
        raise InvalidRange(f"view count must be >= 0, got {n}")
    for name, (lo, hi) in (("yaw", yaw_range), ("pitch", pitch_range)):
        if not lo <= hi:
            raise InvalidRange(f"{name} range must satisfy low <= high, got ({lo}, {hi})")
    if not (-90.0 < pitch_range[0] and pitch_range[1] < 90.0):
        raise InvalidRange("pitch must stay inside (-90, 90) degrees")
    rng = np.random.default_rng(seed)
    yaws = rng.uniform(yaw_range[0], yaw_range[1], n)
    pitches = rng.uniform(pitch_range[0], pitch_range[1], n)
    return [ViewSpec(float(y), float(p), radius, tuple(look_at)) for y, p in zip(yaws, pitches)]


def sample_views(n=VIEWS_PER_SUBJECT, yaw_range=YAW_RANGE, pitch_range=PITCH_RANGE,
                 radius=DEFAULT_RADIUS, seed=0, look_at=(0.0, 0.0, 0.0), image_size=DEFAULT_IMAGE_SIZE):
    specs = sample_view_specs(n, yaw_range, pitch_range, radius, seed, look_at)
    return [camera_from_view(v, image_size) for v in specs]


def cross_identity_gaussians(field, model, mapping, beta_ref, psi, pose=None):
    """Gaussians on the reference identity's shape driven by ``psi`` and ``pose``."""
    return embed(field, deform(model, beta_ref, psi, pose), mapping)


def cross_identity_signal(field, model, mapping, beta_ref, psi, pose, cam):
    return render_tiled(cross_identity_gaussians(field, model, mapping, beta_ref, psi, pose), cam)


def _pinhole(cam, world):
    p = cam.world_to_camera(world)
    return cam.fx * p[:, 0] / p[:, 2] + cam.cx, cam.fy * p[:, 1] / p[:, 2] + cam.cy, p[:, 2]


def reprojection_error(g, cameras, intrinsics_error=0.0):
    """Max pixel distance between a Gaussian center lifted from one view's
    pixel + depth into another view and its direct projection there.

    ``intrinsics_error`` scales the focal lengths used for lifting; a nonzero
    value simulates a miscalibrated projection.
    """
    lifted = []
    for cam in cameras:
        proj = project(g, cam)
        fx = cam.fx * (1.0 + intrinsics_error)
        fy = cam.fy * (1.0 + intrinsics_error)
        z = proj.depth
        p = np.stack([(proj.center[:, 0] - cam.cx) * z / fx, (proj.center[:, 1] - cam.cy) * z / fy, z], axis=1)
        lifted.append((proj.index, (p - cam.translation) @ cam.rotation))
    worst = 0.0
    for a, (idx, world) in enumerate(lifted):
        for b, cam in enumerate(cameras):
            if a == b or not idx.size:
                continue
            u_direct, v_direct, z_direct = _pinhole(cam, g.positions[idx])
            if intrinsics_error == 0.0 and cam.to_dict() == cameras[a].to_dict():
                # transfer between identical views is the identity map
                u_lift, v_lift = u_direct, v_direct
            else:
                u_lift, v_lift, _ = _pinhole(cam, world)
            ok = z_direct > cam.near
            if ok.any():
                err = np.hypot(u_lift[ok] - u_direct[ok], v_lift[ok] - v_direct[ok])
                worst = max(worst, float(err.max()))
    return worst


def consistency_sweep(field, model, mapping, beta, psi, pose=None, n_views=VIEWS_PER_SUBJECT, seed=0,
                      image_size=256, cameras=None, intrinsics_error=0.0, tol=1e-6, render=True):
    """Render a set of views and check Gaussian-center reprojection between every pair."""
    if cameras is None:
        if n_views < 2:
            raise InvalidRange(f"a sweep needs at least 2 views, got {n_views}")
        cameras = sample_views(n_views, seed=seed, image_size=image_size)
    elif len(cameras) < 2:
        raise InvalidRange(f"a sweep needs at least 2 views, got {len(cameras)}")
    g = embed(field, deform(model, beta, psi, pose), mapping)
    coverage = []
    if render:
        coverage = [float(np.mean(render_tiled(g, cam).alpha > 0.5)) for cam in cameras]
    err = reprojection_error(g, cameras, intrinsics_error)
    return {
        "n_views": len(cameras),
        "n_gaussians": len(g),
        "max_reproj_err": err,
        "tolerance": tol,
        "alpha_coverage": coverage,
        "pass": bool(err < tol),
    }


def write_dataset(field, model, mapping, out_dir, n=VIEWS_PER_SUBJECT, seed=0, subject_id=0,
                  label=LabelKind.SYNTHETIC, beta=None, psi=None, image_size=128, manifest=None):
    """Render ``n`` sampled views of one subject and append JSON-lines records."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Path(manifest) if manifest is not None else out_dir / "manifest.jsonl"
    beta = np.zeros(model.n_shape) if beta is None else beta
    psi = np.zeros(model.n_expr) if psi is None else psi
    g = embed(field, deform(model, beta, psi), mapping)
    tag = SampleLabel(LabelKind(label))
    records = []
    for k, view in enumerate(sample_view_specs(n, seed=seed)):
        cam = camera_from_view(view, image_size)
        path = out_dir / f"subject{subject_id:05d}_view{k:03d}.gsfm"
        write_feature_map(render_tiled(g, cam), path)
        records.append({
            "subject_id": subject_id,
            "view": {"yaw": view.yaw, "pitch": view.pitch, "radius": view.radius},
            "camera": cam.to_dict(),
            "label": tag.kind.value,
            "token_id": tag.token_id,
            "feature_map_path": str(path),
        })
    with open(manifest, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return records


__all__ = [
    "LabelKind", "SampleLabel", "ViewSpec", "look_at_camera", "camera_from_view", "sample_views",
    "sample_view_specs", "cross_identity_signal", "consistency_sweep", "reprojection_error", "write_dataset",
]
