"""Adam-style optimizer and the two desk-scale learning experiments.

``fit_direct`` regresses rendered feature maps onto targets. ``fit_proxy``
never sees a feature-map target: a per-pixel linear decoder turns the map
into RGB and only the RGB error is minimized, so any structure the field
picks up comes through the decoder.
"""

import csv
import json
import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .field import embed, init_field, initial_scale, save_field
from .gradients import backward
from .splat import Camera, rasterize, render_tiled
from .surface import build_uv_mapping, deform, load_demo_surface
from .views import sample_views

log = logging.getLogger(__name__)

FIT_TILE = 8  # small maps: fewer wasted disc tests per pixel than 16


@dataclass
class OptimState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = dc_field(default_factory=dict)
    v: dict = dc_field(default_factory=dict)

    def hyperparameters(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}


def opt_step(params, grads, state):
    """One bias-corrected adaptive-moment update, in place. Returns (params, state)."""
    for k, p in params.items():
        if k not in grads or np.shape(grads[k]) != np.shape(p):
            raise ShapeMismatch(f"{k}: gradient shape {np.shape(grads.get(k))} != parameter shape {np.shape(p)}")
        if k in state.m and state.m[k].shape != np.shape(p):
            raise ShapeMismatch(f"{k}: optimizer moments shaped {state.m[k].shape}, parameter {np.shape(p)}")
    state.step_count += 1
    bc1 = 1.0 - state.beta1**state.step_count
    bc2 = 1.0 - state.beta2**state.step_count
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if k not in state.m:
            state.m[k] = np.zeros_like(p, dtype=np.float64)
            state.v[k] = np.zeros_like(p, dtype=np.float64)
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


@dataclass
class ProxyDecoder:
    """Per-pixel linear map from (feature, 1) to RGB."""

    weights: np.ndarray  # (3, C + 1)

    @property
    def channels(self):
        return self.weights.shape[1] - 1

    @classmethod
    def zeros(cls, channels):
        return cls(np.zeros((3, channels + 1)))

    @classmethod
    def random(cls, channels, seed, std=0.1):
        return cls(np.random.default_rng(seed).normal(0.0, std, (3, channels + 1)))

    def __call__(self, values):
        w = self.weights
        return values @ w[:, :-1].T + w[:, -1]


def _as_list(x, n):
    return list(x) if isinstance(x, (list, tuple)) else [x] * n


def _check_finite(field, it):
    if not field.is_finite():
        raise FloatingPointError(f"non-finite field parameters after iteration {it}")


def direct_loss_and_grad(field, mapping, meshes, cameras, targets):
    n = len(cameras)
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in field.params().items()}
    for mesh, cam, target in zip(meshes, cameras, targets):
        g = embed(field, mesh, mapping)
        fmap, ctx = rasterize(g, cam, FIT_TILE)
        diff = fmap.values - target.values
        total += float(np.mean(diff * diff)) / n
        fg = backward(g, cam, 2.0 * diff / (diff.size * n), field, FIT_TILE, ctx=ctx)
        for k, d in zip(grads, (fg.d_raw_feature, fg.d_raw_opacity, fg.d_raw_scale)):
            grads[k] += d
    return total, grads


def fit_direct(field, mapping, meshes, cameras, targets, iters, state=None, checkpoint=None):
    """Minimize the camera-averaged MSE between rendered and target maps.

    Returns the loss trace: the loss before each of the ``iters`` updates,
    followed by the loss of the final field.
    """
    if len(targets) != len(cameras):
        raise ShapeMismatch(f"{len(targets)} targets for {len(cameras)} cameras")
    for cam, t in zip(cameras, targets):
        if t.values.shape != (cam.height, cam.width, field.channels):
            raise ShapeMismatch(f"target shape {t.values.shape} does not match camera {(cam.height, cam.width)}")
    meshes = _as_list(meshes, len(cameras))
    state = state or OptimState()
    trace = []
    for it in range(iters):
        loss, grads = direct_loss_and_grad(field, mapping, meshes, cameras, targets)
        trace.append(loss)
        opt_step(field.params(), grads, state)
        _check_finite(field, it)
    trace.append(direct_loss_and_grad(field, mapping, meshes, cameras, targets)[0])
    if checkpoint is not None:
        save_field(field, checkpoint)
    return trace


def proxy_loss_and_grad(field, decoder, mapping, meshes, cameras, targets_rgb):
    n = len(cameras)
    c = field.channels
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in field.params().items()}
    d_dec = np.zeros_like(decoder.weights)
    w = decoder.weights
    for mesh, cam, target in zip(meshes, cameras, targets_rgb):
        g = embed(field, mesh, mapping)
        fmap, ctx = rasterize(g, cam, FIT_TILE)
        values = fmap.values
        diff = decoder(values) - target
        total += float(np.mean(diff * diff)) / n
        d_rgb = 2.0 * diff / (diff.size * n)
        flat_rgb = d_rgb.reshape(-1, 3)
        d_dec[:, :c] += flat_rgb.T @ values.reshape(-1, c)
        d_dec[:, c] += flat_rgb.sum(axis=0)
        fg = backward(g, cam, d_rgb @ w[:, :c], field, FIT_TILE, ctx=ctx)
        for k, d in zip(grads, (fg.d_raw_feature, fg.d_raw_opacity, fg.d_raw_scale)):
            grads[k] += d
    return total, grads, d_dec


def fit_proxy(field, decoder, mapping, meshes, cameras, targets_rgb, iters, state=None, checkpoint=None):
    """Jointly fit field and decoder on RGB error only. Returns the loss trace
    (``iters`` pre-update losses plus the final one)."""
    if decoder.channels != field.channels:
        raise ShapeMismatch(f"decoder expects {decoder.channels} channels, field has {field.channels}")
    if len(targets_rgb) != len(cameras):
        raise ShapeMismatch(f"{len(targets_rgb)} targets for {len(cameras)} cameras")
    for cam, t in zip(cameras, targets_rgb):
        if np.shape(t) != (cam.height, cam.width, 3):
            raise ShapeMismatch(f"RGB target shape {np.shape(t)} does not match camera {(cam.height, cam.width)}")
    meshes = _as_list(meshes, len(cameras))
    state = state or OptimState()
    trace = []
    for it in range(iters):
        loss, grads, d_dec = proxy_loss_and_grad(field, decoder, mapping, meshes, cameras, targets_rgb)
        trace.append(loss)
        params = dict(field.params(), decoder=decoder.weights)
        opt_step(params, dict(grads, decoder=d_dec), state)
        _check_finite(field, it)
        if not np.all(np.isfinite(decoder.weights)):
            raise FloatingPointError(f"non-finite decoder weights after iteration {it}")
    trace.append(proxy_loss_and_grad(field, decoder, mapping, meshes, cameras, targets_rgb)[0])
    if checkpoint is not None:
        save_field(field, checkpoint)
    return trace


def channel_variance(fmaps):
    """Mean over channels of the per-channel pixel variance, averaged over maps."""
    return float(np.mean([np.mean(np.var(f.values.reshape(-1, f.channels), axis=0)) for f in fmaps]))


# -- experiments ---------------------------------------------------------------

DEFAULT_EXPERIMENT = {
    "uv_resolution": 64,
    "channels": 8,
    "image_size": 64,
    "n_views": 8,
    "view_seed": 3,
    "hidden_seed": 11,
    "init_seed": 5,
    "decoder_seed": 13,
    "map_seed": 17,
    "iterations": 1500,
    "optimizer": {"lr": 1e-2, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
    "min_reduction": 100.0,
    "min_variance_gain": 10.0,
    "psi": None,
}


def planted_field(model, resolution, channels, seed):
    """Hidden ground-truth field: default opacity and scale, features tanh(N(0, 1))."""
    field = init_field(resolution, channels, seed, initial_scale(model))
    field.raw_feature[:] = np.random.default_rng(seed).normal(0.0, 1.0, field.raw_feature.shape)
    return field


def _setup(cfg):
    model = load_demo_surface()
    mapping = build_uv_mapping(model, cfg["uv_resolution"])
    if cfg.get("cameras"):
        cameras = [Camera.from_dict(c) for c in cfg["cameras"]]
    else:
        cameras = sample_views(cfg["n_views"], seed=cfg["view_seed"], image_size=cfg["image_size"])
    psis = cfg.get("psi") or [[0.0] * model.n_expr]
    psis = [np.asarray(p, dtype=np.float64) for p in psis]
    # views cycle through the listed expressions
    meshes = [deform(model, np.zeros(model.n_shape), psis[k % len(psis)]) for k in range(len(cameras))]
    return model, mapping, cameras, meshes


def run_direct(cfg=None, checkpoint=None):
    """Planted-field recovery: targets come from a hidden field, the fit starts
    from a differently seeded one."""
    cfg = dict(DEFAULT_EXPERIMENT, **(cfg or {}))
    model, mapping, cameras, meshes = _setup(cfg)
    hidden = planted_field(model, cfg["uv_resolution"], cfg["channels"], cfg["hidden_seed"])
    targets = [render_tiled(embed(hidden, m, mapping), c) for m, c in zip(meshes, cameras)]
    field = init_field(cfg["uv_resolution"], cfg["channels"], cfg["init_seed"], initial_scale(model))
    state = OptimState(**cfg["optimizer"])
    trace = fit_direct(field, mapping, meshes, cameras, targets, cfg["iterations"], state, checkpoint)
    reduction = trace[0] / trace[-1] if trace[-1] > 0 else float("inf")
    return {
        "mode": "direct",
        "initial_loss": trace[0],
        "final_loss": trace[-1],
        "reduction": reduction,
        "pass": bool(reduction >= cfg["min_reduction"]),
        "cameras": [c.to_dict() for c in cameras],
    }, trace, field


def run_proxy(cfg=None, checkpoint=None):
    """Indirect supervision: RGB targets are a fixed random linear map of a
    hidden field's render; the fitted field only ever sees RGB error."""
    cfg = dict(DEFAULT_EXPERIMENT, **(cfg or {}))
    model, mapping, cameras, meshes = _setup(cfg)
    c = cfg["channels"]
    hidden = planted_field(model, cfg["uv_resolution"], c, cfg["hidden_seed"])
    rgb_map = ProxyDecoder.random(c, cfg["map_seed"], std=1.0)
    targets = [rgb_map(render_tiled(embed(hidden, m, mapping), cam).values) for m, cam in zip(meshes, cameras)]
    field = init_field(cfg["uv_resolution"], c, cfg["init_seed"], initial_scale(model))
    decoder = ProxyDecoder.random(c, cfg["decoder_seed"])

    def maps():
        return [render_tiled(embed(field, m, mapping), cam) for m, cam in zip(meshes, cameras)]

    var0 = channel_variance(maps())
    state = OptimState(**cfg["optimizer"])
    trace = fit_proxy(field, decoder, mapping, meshes, cameras, targets, cfg["iterations"], state, checkpoint)
    var1 = channel_variance(maps())
    reduction = trace[0] / trace[-1] if trace[-1] > 0 else float("inf")
    gain = var1 / var0 if var0 > 0 else float("inf")
    return {
        "mode": "proxy",
        "initial_loss": trace[0],
        "final_loss": trace[-1],
        "reduction": reduction,
        "initial_channel_variance": var0,
        "final_channel_variance": var1,
        "variance_gain": gain,
        "decoder": decoder.weights.tolist(),
        "pass": bool(reduction >= cfg["min_reduction"] and gain >= cfg["min_variance_gain"]),
        "cameras": [cam.to_dict() for cam in cameras],
    }, trace, field


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "loss"])
        for i, loss in enumerate(trace):
            w.writerow([i, repr(float(loss))])


def run_manifest(manifest_path, mode=None):
    """Run the experiment described by a JSON manifest.

    Relative output paths resolve against the manifest's directory. Every
    setting that was used, including the sampled cameras, is written to
    ``<manifest stem>.resolved.json`` so the run can be repeated exactly.
    """
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    mode = mode or spec.get("mode", "direct")
    if mode not in ("direct", "proxy"):
        raise ValueError(f"mode must be 'direct' or 'proxy', got {mode!r}")
    base = manifest_path.parent
    trace_path = base / spec.get("loss_trace", f"{mode}_loss.csv")
    ckpt_path = base / spec.get("checkpoint", f"{mode}_field.gsfd")
    report_path = base / spec.get("report", f"{mode}_report.json")
    cfg = {k: spec[k] for k in DEFAULT_EXPERIMENT if k in spec}
    if "cameras" in spec:
        cfg["cameras"] = spec["cameras"]
    runner = run_direct if mode == "direct" else run_proxy
    report, trace, _ = runner(cfg, checkpoint=ckpt_path)
    write_trace(trace, trace_path)
    resolved = dict(DEFAULT_EXPERIMENT, **cfg)
    resolved.update(mode=mode, cameras=report.pop("cameras"), loss_trace=str(trace_path.relative_to(base)),
                    checkpoint=str(ckpt_path.relative_to(base)), report=str(report_path.relative_to(base)))
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
    manifest_path.with_suffix(".resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))
    return report
