"""Pinhole projection and depth-sorted alpha blending of isotropic Gaussians.

A world Gaussian of scale ``s`` at camera depth ``z`` becomes an isotropic
pixel Gaussian with standard deviation ``s * fx / z``; its footprint is
``opacity * exp(-d^2 / (2 sigma^2))``, i.e. ``s`` is a standard deviation,
not a variance.
"""

import logging
import os
from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels
from .errors import InvalidDimension
from .surface import rigid_transform

log = logging.getLogger(__name__)

ANISOTROPY_WARN = 0.05


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # world-to-camera
    translation: np.ndarray
    width: int
    height: int
    near: float = 0.01

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidDimension("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidDimension("image size must be at least 1x1")
        if not self.near > 0:
            raise InvalidDimension("near plane must be positive")
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidDimension("camera needs a 3x3 rotation and 3-vector translation")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9:
            raise InvalidDimension("camera rotation must be orthonormal")

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
            "width": self.width, "height": self.height, "near": self.near,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            rotation=np.array(d["rotation"], dtype=np.float64),
            translation=np.array(d["translation"], dtype=np.float64),
            width=int(d["width"]), height=int(d["height"]), near=float(d.get("near", 0.01)),
        )

    def world_to_camera(self, points):
        return rigid_transform(self.rotation, self.translation, points)

    @property
    def center(self):
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class FeatureMap:
    values: np.ndarray  # (H, W, C)
    alpha: np.ndarray  # (H, W)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def channels(self):
        return self.values.shape[2]


@dataclass(frozen=True)
class Projection:
    """Surviving Gaussians after culling, in input order."""

    index: np.ndarray  # source Gaussian index
    center: np.ndarray  # (K, 2) pixel coordinates
    depth: np.ndarray
    sigma: np.ndarray  # pixel standard deviation

    def __len__(self):
        return self.index.shape[0]

    def depth_order(self):
        """Positions into this projection sorted by depth, ties by source index."""
        return np.lexsort((self.index, self.depth))


def project(g, cam):
    p = cam.world_to_camera(g.positions)
    z = p[:, 2]
    front = z > cam.near
    idx = np.flatnonzero(front)
    z = z[idx]
    u = cam.fx * p[idx, 0] / z + cam.cx
    v = cam.fy * p[idx, 1] / z + cam.cy
    sigma = g.scales[idx] * cam.fx / z
    r = _kernels.CUTOFF_SIGMAS * sigma
    visible = (u + r >= 0) & (u - r <= cam.width - 1) & (v + r >= 0) & (v - r <= cam.height - 1) & (sigma > 0)
    return Projection(
        index=idx[visible],
        center=np.stack([u[visible], v[visible]], axis=1),
        depth=z[visible],
        sigma=sigma[visible],
    )


def set_threads(n=None):
    """Cap kernel parallelism; ``None`` reads GSPLAT_THREADS or uses every core."""
    if n is None:
        n = int(os.environ.get("GSPLAT_THREADS", 0)) or numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def _check_anisotropy(cam):
    if abs(cam.fx - cam.fy) / cam.fx > ANISOTROPY_WARN:
        log.warning("fx=%g and fy=%g differ by more than %d%%; isotropic footprints will be inaccurate",
                    cam.fx, cam.fy, int(ANISOTROPY_WARN * 100))


def pack_gaussians(g, proj, dtype=np.float64):
    """Kernel inputs indexed by position in ``proj``: rows of
    ``[u, v, sigma, opacity]`` and the matching feature rows."""
    gp = np.empty((len(proj), 4), dtype=dtype)
    gp[:, :2] = proj.center
    gp[:, 2] = proj.sigma
    gp[:, 3] = g.opacities[proj.index]
    return gp, np.ascontiguousarray(g.features[proj.index], dtype=dtype)


def render_bruteforce(g, cam):
    """Reference renderer: every pixel walks the globally depth-sorted list."""
    _check_anisotropy(cam)
    proj = project(g, cam)
    values = np.zeros((cam.height, cam.width, g.features.shape[1]))
    alpha = np.zeros((cam.height, cam.width))
    if len(proj):
        gp, feat = pack_gaussians(g, proj)
        _kernels.render_all(proj.depth_order(), gp, feat, cam.width, cam.height, values, alpha)
    return FeatureMap(values=values, alpha=alpha)


@dataclass(frozen=True)
class RenderContext:
    """Forward-pass state reused by the backward pass."""

    proj: Projection
    tile_size: int
    tile_start: np.ndarray
    entries: np.ndarray
    gp: np.ndarray
    feat: np.ndarray
    t_final: np.ndarray  # (H, W) transmittance left after blending
    stop: np.ndarray  # (H, W) bin position after the last processed Gaussian


def rasterize(g, cam, tile_size=16, dtype=np.float64):
    """Tiled forward pass returning ``(FeatureMap, RenderContext)``."""
    _check_anisotropy(cam)
    if tile_size < 1:
        raise InvalidDimension("tile_size must be >= 1")
    dtype = np.dtype(dtype)
    proj = project(g, cam)
    h, w = cam.height, cam.width
    values = np.zeros((h, w, g.features.shape[1]), dtype=dtype)
    alpha = np.zeros((h, w), dtype=dtype)
    t_final = np.ones((h, w), dtype=dtype)
    stop = np.zeros((h, w), dtype=np.int64)
    gp, feat = pack_gaussians(g, proj, dtype)
    if len(proj):
        tile_start, entries = _kernels.bin_gaussians(proj.depth_order(), gp, w, h, tile_size)
        _kernels.render_tiles(tile_start, entries, gp, feat, w, h, tile_size, values, alpha, t_final, stop)
    else:
        tile_start, entries = np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    ctx = RenderContext(proj, tile_size, tile_start, entries, gp, feat, t_final, stop)
    return FeatureMap(values=values, alpha=alpha), ctx


def render_tiled(g, cam, tile_size=16, dtype=np.float64):
    """Tiled renderer. In float64 it reproduces ``render_bruteforce`` exactly;
    ``dtype=np.float32`` blends in single precision."""
    return rasterize(g, cam, tile_size, dtype)[0]


render = render_tiled
