"""Learnable UV-space Gaussian field and its embedding onto a deformed surface."""

from dataclasses import dataclass

import numpy as np

from . import formats
from .errors import InvalidDimension, MalformedContainer, ResolutionMismatch
from .surface import surface_points

FIELD_MAGIC = b"GSFD0001"

DEFAULT_RESOLUTION = 256
DEFAULT_CHANNELS = 8
FEATURE_INIT_RANGE = 0.1
SCALE_FACTOR = 0.7  # initial world scale, relative to the template's median edge length


@dataclass
class GaussianFieldUV:
    """Unconstrained per-texel parameters. Mutated in place by the optimizer."""

    raw_feature: np.ndarray  # (res, res, C)
    raw_opacity: np.ndarray  # (res, res)
    raw_scale: np.ndarray  # (res, res)

    def __post_init__(self):
        f = self.raw_feature
        if f.ndim != 3 or f.shape[0] != f.shape[1] or f.shape[0] < 1 or f.shape[2] < 1:
            raise InvalidDimension(f"raw_feature must be (res, res, C), got {f.shape}")
        res = f.shape[0]
        for name in ("raw_opacity", "raw_scale"):
            if getattr(self, name).shape != (res, res):
                raise InvalidDimension(f"{name} must be ({res}, {res}), got {getattr(self, name).shape}")

    @property
    def resolution(self):
        return self.raw_feature.shape[0]

    @property
    def channels(self):
        return self.raw_feature.shape[2]

    def params(self):
        return {"raw_feature": self.raw_feature, "raw_opacity": self.raw_opacity, "raw_scale": self.raw_scale}

    def copy(self):
        return GaussianFieldUV(self.raw_feature.copy(), self.raw_opacity.copy(), self.raw_scale.copy())

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.params().values())


@dataclass(frozen=True)
class EmbeddedGaussians:
    positions: np.ndarray  # (N, 3)
    scales: np.ndarray  # (N,)
    opacities: np.ndarray  # (N,)
    features: np.ndarray  # (N, C)
    source_texel: np.ndarray  # (N,) flat texel index

    def __len__(self):
        return self.positions.shape[0]

    @property
    def channels(self):
        return self.features.shape[1]


def initial_scale(model):
    return SCALE_FACTOR * model.median_edge_length()


def init_field(resolution=DEFAULT_RESOLUTION, channels=DEFAULT_CHANNELS, seed=0, scale=1.0):
    """Seeded field: features ~ U(-0.1, 0.1), opacity 0.5, world scale ``scale``."""
    if resolution < 1 or channels < 1:
        raise InvalidDimension(f"resolution and channels must be >= 1, got {resolution}, {channels}")
    if not scale > 0:
        raise InvalidDimension(f"initial scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    return GaussianFieldUV(
        raw_feature=rng.uniform(-FEATURE_INIT_RANGE, FEATURE_INIT_RANGE, size=(resolution, resolution, channels)),
        raw_opacity=np.zeros((resolution, resolution)),
        raw_scale=np.full((resolution, resolution), np.log(scale)),
    )


def sigmoid(x):
    # both branches stay finite for any finite x
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activate(field, texel):
    """Activated ``(feature, opacity, scale)`` of texel ``(i, j)``."""
    i, j = texel
    return (
        np.tanh(field.raw_feature[i, j]),
        float(sigmoid(field.raw_opacity[i, j])),
        float(np.exp(field.raw_scale[i, j])),
    )


def embed(field, mesh, mapping):
    if mapping.resolution != field.resolution:
        raise ResolutionMismatch(f"mapping resolution {mapping.resolution} != field resolution {field.resolution}")
    texels = mapping.mapped_texels()
    c = field.channels
    return EmbeddedGaussians(
        positions=surface_points(mesh, mapping, texels),
        scales=np.exp(field.raw_scale.ravel()[texels]),
        opacities=sigmoid(field.raw_opacity.ravel()[texels]),
        features=np.tanh(field.raw_feature.reshape(-1, c)[texels]),
        source_texel=texels,
    )


def save_field(field, path):
    formats.write_container(
        path,
        FIELD_MAGIC,
        {"resolution": field.resolution, "channels": field.channels},
        [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in field.params().values()],
    )


def load_field(path):
    header, payload = formats.read_container(path, FIELD_MAGIC)
    res = formats.header_int(header, "resolution", 1)
    c = formats.header_int(header, "channels", 1)
    formats.check_payload_size(payload, 8 * res * res * (c + 2))
    feat, opa, scale = formats.split_blocks(payload, [("<f8", (res, res, c)), ("<f8", (res, res)), ("<f8", (res, res))])
    for name, block in (("raw_feature", feat), ("raw_opacity", opa), ("raw_scale", scale)):
        if not np.all(np.isfinite(block)):
            raise MalformedContainer(name, "non-finite values")
    return GaussianFieldUV(feat.astype(np.float64), opa.astype(np.float64), scale.astype(np.float64))
