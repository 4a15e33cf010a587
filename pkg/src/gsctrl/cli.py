"""Batch command-line front end.

Exit codes: 0 success, 1 a check failed, 2 usage or input error. Every
command prints one ``key=value`` summary line on stdout.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("gsctrl")


class UsageError(Exception):
    pass


def _summary(**kv):
    def fmt(v):
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, float):
            return repr(v)
        return str(v)

    print(" ".join(f"{k}={fmt(v)}" for k, v in kv.items()), flush=True)


def _load_json_arg(text, name):
    """Inline JSON, or a path to a JSON file."""
    if text is None:
        return None
    if os.path.isfile(text):
        text = Path(text).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--{name}: not a JSON value or readable file: {exc}") from None


def _vector(text, name, length):
    value = _load_json_arg(text, name)
    if value is None:
        return np.zeros(length)
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape[0] != length:
        raise UsageError(f"--{name}: expected {length} coefficients, got {arr.shape[0]}")
    return arr


def _pose(text):
    from .surface import RigidPose

    value = _load_json_arg(text, "pose")
    if value is None:
        return RigidPose.identity()
    try:
        return RigidPose(np.asarray(value["rotation"], dtype=np.float64),
                         np.asarray(value["translation"], dtype=np.float64))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"--pose: expected {{'rotation': 3x3, 'translation': [x, y, z]}}: {exc}") from None


def _camera(text):
    from .splat import Camera
    from .views import DEFAULT_IMAGE_SIZE, DEFAULT_RADIUS, look_at_camera

    value = _load_json_arg(text, "camera")
    if value is None:
        raise UsageError("--camera is required")
    if not isinstance(value, dict):
        raise UsageError("--camera: expected a JSON object")
    try:
        if "fx" in value:
            return Camera.from_dict(value)
        return look_at_camera(
            yaw=float(value.get("yaw", 0.0)),
            pitch=float(value.get("pitch", 0.0)),
            radius=float(value.get("radius", DEFAULT_RADIUS)),
            image_size=int(value.get("image_size", DEFAULT_IMAGE_SIZE)),
        )
    except (KeyError, TypeError) as exc:
        raise UsageError(f"--camera: missing or invalid entry: {exc}") from None


def _surface(path):
    from .surface import DEMO_ASSET, load_surface

    return load_surface(path or DEMO_ASSET)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands -------------------------------------------------------------------


def cmd_build_uv(args):
    from .surface import build_uv_mapping, save_uv_mapping

    if args.resolution < 1:
        raise UsageError("resolution must be ≥ 1")
    model = _surface(args.surface)
    mapping = build_uv_mapping(model, args.resolution)
    save_uv_mapping(mapping, args.out)
    log.info("mapped %d of %d texels", mapping.num_mapped, args.resolution**2)
    _summary(out=args.out, resolution=args.resolution, mapped_texels=mapping.num_mapped)
    return 0


def cmd_render(args):
    from .field import embed, load_field
    from .formats import export_channel_image, write_feature_map
    from .splat import render_bruteforce, render_tiled
    from .surface import build_uv_mapping, deform, load_uv_mapping

    model = _surface(args.surface)
    field = load_field(args.field)
    mapping = load_uv_mapping(args.mapping) if args.mapping else build_uv_mapping(model, field.resolution)
    beta = _vector(args.beta, "beta", model.n_shape)
    psi = _vector(args.psi, "psi", model.n_expr)
    mesh = deform(model, beta, psi, _pose(args.pose))
    cam = _camera(args.camera)
    if mapping.resolution != field.resolution:
        raise UsageError(f"--mapping: resolution {mapping.resolution} does not match field resolution {field.resolution}")
    g = embed(field, mesh, mapping)
    if args.oracle:
        fmap = render_bruteforce(g, cam)
    else:
        fmap = render_tiled(g, cam, args.tile_size, np.float32 if args.float32 else np.float64)
    write_feature_map(fmap, args.out)
    pngs = []
    if args.png_channels:
        try:
            channels = [int(c) for c in args.png_channels.split(",") if c.strip()]
        except ValueError:
            raise UsageError(f"--png-channels: expected comma-separated integers, got {args.png_channels!r}") from None
        stem = Path(args.out).with_suffix("")
        for c in channels:
            pngs.append(export_channel_image(fmap, c, f"{stem}_ch{c}.png"))
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    _summary(out=args.out, gaussians=len(g), width=cam.width, height=cam.height, channels=field.channels,
             renderer="bruteforce" if args.oracle else "tiled", sha256=digest, pngs=len(pngs))
    return 0


def cmd_gradcheck(args):
    from .gradients import grad_check
    from .scenes import fixture_scenes

    if not args.h > 0:
        raise UsageError("--h must be positive")
    reports = []
    for sc in fixture_scenes(args.seed):
        r = grad_check(sc.field, sc.mesh, sc.mapping, sc.cam, seed=args.seed, h=args.h)
        r["scene"] = sc.name
        reports.append(r)
        log.info("%s: max_rel_err=%.3g nonsmooth=%d pass=%s", sc.name, r["max_rel_err"], r["nonsmooth"], r["pass"])
    worst = max(reports, key=lambda r: r["max_rel_err"])
    ok = all(r["pass"] for r in reports)
    report = {
        "max_rel_err": worst["max_rel_err"],
        "worst_param": dict(worst["worst_param"] or {}, scene=worst["scene"]),
        "checked": sum(r["checked"] for r in reports),
        "pass": ok,
        "scenes": reports,
    }
    _write_json(args.report, report)
    _summary(scenes=len(reports), checked=report["checked"], max_rel_err=report["max_rel_err"],
             nonsmooth=sum(r["nonsmooth"] for r in reports), report=args.report, **{"pass": ok})
    return 0 if ok else 1


def cmd_fit(args):
    from .fit import run_manifest

    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"--manifest: no such file: {path}")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"--manifest: invalid JSON: {exc}") from None
    if not isinstance(spec, dict):
        raise UsageError("--manifest: expected a JSON object")
    if args.mode and spec.get("mode", args.mode) != args.mode:
        raise UsageError(f"--mode {args.mode} conflicts with manifest mode {spec['mode']!r}")
    report = run_manifest(path, mode=args.mode)
    _summary(mode=report["mode"], initial_loss=report["initial_loss"], final_loss=report["final_loss"],
             reduction=report["reduction"], **{"pass": report["pass"]})
    return 0 if report["pass"] else 1


def cmd_synth_views(args):
    from .field import init_field, initial_scale, load_field
    from .surface import build_uv_mapping
    from .views import write_dataset

    if args.n < 0:
        raise UsageError("--n must be >= 0")
    model = _surface(args.surface)
    field = load_field(args.field) if args.field else init_field(args.uv_resolution, 8, args.seed, initial_scale(model))
    mapping = build_uv_mapping(model, field.resolution)
    out_manifest = Path(args.out_manifest)
    out_dir = Path(args.out_dir) if args.out_dir else out_manifest.with_suffix("")
    records = write_dataset(field, model, mapping, out_dir, n=args.n, seed=args.seed, subject_id=args.subject_id,
                            label=args.label, image_size=args.image_size, manifest=out_manifest)
    yaws = [r["view"]["yaw"] for r in records] or [0.0]
    pitches = [r["view"]["pitch"] for r in records] or [0.0]
    _summary(records=len(records), manifest=out_manifest, label=args.label, yaw_min=min(yaws), yaw_max=max(yaws),
             pitch_min=min(pitches), pitch_max=max(pitches))
    return 0


def cmd_sweep(args):
    from .field import init_field, initial_scale
    from .surface import build_uv_mapping
    from .views import consistency_sweep, sample_views

    if args.n_views < 2:
        raise UsageError("--n-views must be >= 2")
    model = _surface(args.surface)
    field = init_field(args.uv_resolution, 8, args.seed, initial_scale(model))
    mapping = build_uv_mapping(model, args.uv_resolution)
    cameras = None
    if args.identical:
        cameras = sample_views(1, seed=args.seed, image_size=args.image_size) * args.n_views
    report = consistency_sweep(
        field, model, mapping, np.zeros(model.n_shape), np.zeros(model.n_expr), None, n_views=args.n_views,
        seed=args.seed, image_size=args.image_size, cameras=cameras, intrinsics_error=args.intrinsics_error,
    )
    _write_json(args.report, report)
    _summary(n_views=report["n_views"], max_reproj_err=report["max_reproj_err"],
             min_coverage=min(report["alpha_coverage"]), report=args.report, **{"pass": report["pass"]})
    return 0 if report["pass"] else 1


def build_parser():
    p = argparse.ArgumentParser(prog="gsctrl", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help="cap kernel threads (default: GSPLAT_THREADS or all cores)")
    p.add_argument("--log-level", default="WARNING", help="logging level for stderr (default: WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-uv", help="precompute the texel-to-triangle UV lookup")
    s.add_argument("--surface", help="surface container (default: demo head)")
    s.add_argument("--resolution", type=int, required=True, help="texels per side")
    s.add_argument("--out", required=True, help="output mapping file")
    s.set_defaults(func=cmd_build_uv)

    s = sub.add_parser("render", help="splat a field into a feature map")
    s.add_argument("--surface", help="surface container (default: demo head)")
    s.add_argument("--field", required=True, help="field checkpoint")
    s.add_argument("--mapping", help="UV mapping file (default: built from the surface)")
    s.add_argument("--beta", help="shape coefficients: JSON list or file (default: zeros)")
    s.add_argument("--psi", help="expression coefficients: JSON list or file (default: zeros)")
    s.add_argument("--pose", help='rigid pose JSON {"rotation": 3x3, "translation": 3} or file (default: identity)')
    s.add_argument("--camera", required=True,
                   help="camera JSON or file: full intrinsics/extrinsics, or {yaw, pitch, radius, image_size}")
    s.add_argument("--out", required=True, help="output feature map file")
    s.add_argument("--png-channels", help="comma-separated channels to export as 8-bit PNGs")
    s.add_argument("--oracle", action="store_true", help="use the brute-force renderer")
    s.add_argument("--tile-size", type=int, default=16, help="tile edge in pixels (default: 16)")
    s.add_argument("--float32", action="store_true", help="blend in single precision")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("gradcheck", help="finite-difference check of the backward pass on fixture scenes")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--h", type=float, default=1e-5, help="finite-difference step (default: 1e-5)")
    s.add_argument("--report", default="gradcheck_report.json")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("fit", help="run a fitting experiment described by a manifest")
    s.add_argument("--mode", choices=["direct", "proxy"])
    s.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("synth-views", help="render a labelled multi-view dataset for one subject")
    s.add_argument("--n", type=int, default=60, help="views per subject (default: 60)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-manifest", required=True, help="JSON-lines dataset manifest")
    s.add_argument("--out-dir", help="feature map directory (default: next to the manifest)")
    s.add_argument("--surface", help="surface container (default: demo head)")
    s.add_argument("--field", help="field checkpoint (default: seeded initial field)")
    s.add_argument("--uv-resolution", type=int, default=64)
    s.add_argument("--image-size", type=int, default=128)
    s.add_argument("--subject-id", type=int, default=0)
    s.add_argument("--label", choices=["real", "synthetic"], default="synthetic")
    s.set_defaults(func=cmd_synth_views)

    s = sub.add_parser("sweep", help="multi-view reprojection consistency check")
    s.add_argument("--n-views", type=int, default=60)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--identical", action="store_true", help="repeat one camera n times")
    s.add_argument("--intrinsics-error", type=float, default=0.0,
                   help="relative focal-length error when lifting pixels (negative control)")
    s.add_argument("--surface", help="surface container (default: demo head)")
    s.add_argument("--uv-resolution", type=int, default=64)
    s.add_argument("--image-size", type=int, default=256)
    s.add_argument("--report", default="sweep_report.json")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    from .errors import GSError
    from .splat import set_threads

    try:
        set_threads(args.threads)
        return args.func(args)
    except (UsageError, GSError, ValueError, OSError) as exc:
        print(f"gsctrl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
