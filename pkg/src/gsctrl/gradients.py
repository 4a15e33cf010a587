"""Analytic backward pass of embed + render, and a finite-difference checker."""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidDimension, ShapeMismatch
from .field import embed
from .splat import rasterize, render_tiled

PARAM_KINDS = ("raw_feature", "raw_opacity", "raw_scale")


@dataclass
class FieldGradient:
    d_raw_feature: np.ndarray
    d_raw_opacity: np.ndarray
    d_raw_scale: np.ndarray

    def as_dict(self):
        return {"raw_feature": self.d_raw_feature, "raw_opacity": self.d_raw_opacity, "raw_scale": self.d_raw_scale}


def gaussian_grads(g, cam, upstream, tile_size=16, ctx=None):
    """Gradient of sum(upstream * values) w.r.t. each Gaussian's activated
    (feature, opacity, pixel sigma). Returns ``(proj, grads)`` where row k of
    ``grads`` belongs to ``proj.index[k]``.

    ``ctx`` is the context from ``rasterize(g, cam)``; without it the forward
    pass is recomputed.
    """
    c = g.features.shape[1]
    if upstream.shape != (cam.height, cam.width, c):
        raise ShapeMismatch(f"upstream must be {(cam.height, cam.width, c)}, got {upstream.shape}")
    if ctx is None:
        _, ctx = rasterize(g, cam, tile_size)
    if not len(ctx.proj):
        return ctx.proj, np.zeros((0, c + 2))
    slots = np.zeros((ctx.entries.shape[0], c + 2))
    up = np.ascontiguousarray(upstream, dtype=np.float64)
    _kernels.backward_tiles(ctx.tile_start, ctx.entries, ctx.gp, ctx.feat, cam.width, cam.height, ctx.tile_size,
                            ctx.t_final, ctx.stop, up, slots)
    return ctx.proj, _kernels.reduce_slots(ctx.entries, slots, len(ctx.proj))


def backward(g, cam, upstream, field, tile_size=16, ctx=None):
    """Gradient of ``sum(upstream * render(g, cam).values)`` w.r.t. the raw field.

    ``g`` must be ``embed(field, mesh, mapping)`` for some mesh; positions are
    not differentiated.
    """
    res, c = field.resolution, field.channels
    upstream = np.asarray(upstream)
    if upstream.shape != (cam.height, cam.width, c):
        raise ShapeMismatch(f"upstream must be {(cam.height, cam.width, c)}, got {upstream.shape}")
    proj, grads = gaussian_grads(g, cam, upstream, tile_size, ctx)
    d_feat = np.zeros((res * res, c))
    d_opa = np.zeros(res * res)
    d_scale = np.zeros(res * res)
    if len(proj):
        idx = proj.index
        texel = g.source_texel[idx]
        f = g.features[idx]
        o = g.opacities[idx]
        # tanh' = 1 - f^2, sigmoid' = o (1 - o), d sigma / d raw_scale = sigma
        d_feat[texel] = grads[:, :c] * (1.0 - f * f)
        d_opa[texel] = grads[:, c] * o * (1.0 - o)
        d_scale[texel] = grads[:, c + 1] * proj.sigma
    return FieldGradient(d_feat.reshape(res, res, c), d_opa.reshape(res, res), d_scale.reshape(res, res))


def weighted_loss(fmap, upstream):
    """Exactly rounded sum(upstream * values), so finite differences only see
    the pixels a perturbation actually touches."""
    return math.fsum((upstream * fmap.values).ravel().tolist())


def relative_error(analytic, numeric, floor=0.0):
    """|a - n| / max(|a|, |n|, floor), with 0/0 read as agreement."""
    denom = max(abs(analytic), abs(numeric), floor)
    return 0.0 if denom == 0.0 else abs(analytic - numeric) / denom


def central_difference(loss, field, kind, flat, h):
    """Return (central difference, L(x + h), L(x - h)); ``field`` is restored."""
    arr = field.params()[kind].reshape(-1)
    x0 = arr[flat]
    try:
        arr[flat] = x0 + h
        lp = loss(field)
        arr[flat] = x0 - h
        lm = loss(field)
    finally:
        arr[flat] = x0
    return (lp - lm) / (2.0 * h), lp, lm


def grad_check(field, mesh, mapping, cam, seed=0, h=1e-5, upstream=None, max_params=10_000, tol=1e-4,
               floor_rel=1e-6, jump_tol=1e-6, max_nonsmooth_frac=0.01, tile_size=16):
    """Compare ``backward`` against central differences on every raw parameter
    (or a seeded subsample when there are more than ``max_params``).

    The loss is ``sum(upstream * values)`` with ``upstream`` defaulting to a
    seeded standard-normal tensor. Relative errors use
    ``max(|a|, |n|, floor_rel * max|a|)`` as denominator, so gradients far
    below the scene's scale are compared on an absolute basis.

    The renderer is only piecewise smooth (3-sigma cutoff, transmittance
    early-out, alpha clamp). A parameter whose second difference exceeds
    ``jump_tol`` sits on such a seam; it is counted in ``nonsmooth`` and left
    out of ``max_rel_err``. The check fails if more than
    ``max_nonsmooth_frac`` of the checked parameters are seams.
    """
    if not h > 0:
        raise InvalidDimension(f"finite-difference step must be positive, got {h}")
    rng = np.random.default_rng(seed)
    if upstream is None:
        upstream = rng.standard_normal((cam.height, cam.width, field.channels))
    analytic = backward(embed(field, mesh, mapping), cam, upstream, field, tile_size).as_dict()
    floor = floor_rel * max(float(np.abs(a).max()) for a in analytic.values())

    params = []
    for kind in PARAM_KINDS:
        params += [(kind, i) for i in range(analytic[kind].size)]
    if len(params) > max_params:
        pick = np.sort(rng.choice(len(params), size=max_params, replace=False))
        params = [params[i] for i in pick]

    def loss(f):
        return weighted_loss(render_tiled(embed(f, mesh, mapping), cam, tile_size), upstream)

    work = field.copy()
    l0 = loss(work)
    res, c = field.resolution, field.channels
    max_err, worst, nonsmooth = 0.0, None, 0
    for kind, flat in params:
        numeric, lp, lm = central_difference(loss, work, kind, flat, h)
        if abs(lp - 2.0 * l0 + lm) > jump_tol:
            nonsmooth += 1
            continue
        a = float(analytic[kind].reshape(-1)[flat])
        err = relative_error(a, numeric, floor)
        if worst is None or err > max_err:
            texel_flat = flat // c if kind == "raw_feature" else flat
            worst = {
                "texel": [int(texel_flat // res), int(texel_flat % res)],
                "kind": kind,
                "channel": int(flat % c) if kind == "raw_feature" else None,
                "analytic": a,
                "numeric": numeric,
            }
            max_err = max(err, max_err)
    return {
        "max_rel_err": max_err,
        "worst_param": worst,
        "checked": len(params),
        "nonsmooth": nonsmooth,
        "h": h,
        "pass": bool(max_err < tol and nonsmooth <= max_nonsmooth_frac * len(params)),
    }
