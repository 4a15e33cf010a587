"""Tiled versus brute-force render timing on the full demo configuration.

    python -m gsctrl.bench --out benchmarks/render_benchmark.json
"""

import argparse
import json
import os
import platform
import time

import numba
import numpy as np

from .field import embed, init_field, initial_scale
from .splat import render_bruteforce, render_tiled
from .surface import build_uv_mapping, deform, load_demo_surface
from .views import look_at_camera


def run_benchmark(uv_resolution=256, image_size=512, channels=8, repeats=3, seed=0):
    model = load_demo_surface()
    mapping = build_uv_mapping(model, uv_resolution)
    field = init_field(uv_resolution, channels, seed, initial_scale(model))
    g = embed(field, deform(model, np.zeros(model.n_shape), np.zeros(model.n_expr)), mapping)
    cam = look_at_camera(image_size=image_size)

    # compile outside the timed region
    small = look_at_camera(image_size=8)
    render_tiled(g, small)
    render_bruteforce(g, small)

    tiled_times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        tiled = render_tiled(g, cam)
        tiled_times.append(time.perf_counter() - t0)
    t0 = time.perf_counter()
    brute = render_bruteforce(g, cam)
    brute_time = time.perf_counter() - t0
    max_diff = float(max(np.abs(tiled.values - brute.values).max(), np.abs(tiled.alpha - brute.alpha).max()))
    return {
        "n_gaussians": len(g),
        "image": [image_size, image_size, channels],
        "tiled_seconds": min(tiled_times),
        "tiled_runs": tiled_times,
        "bruteforce_seconds": brute_time,
        "speedup": brute_time / min(tiled_times),
        "max_abs_diff": max_diff,
        "alpha_coverage": float(np.mean(tiled.alpha > 0.5)),
        "machine": {
            "platform": platform.platform(),
            "processor": platform.processor() or platform.machine(),
            "cpu_count": os.cpu_count(),
            "numba_threads": numba.get_num_threads(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": numba.__version__,
        },
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="benchmarks/render_benchmark.json")
    p.add_argument("--uv-resolution", type=int, default=256)
    p.add_argument("--image-size", type=int, default=512)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)
    report = run_benchmark(args.uv_resolution, args.image_size, repeats=args.repeats)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"tiled={report['tiled_seconds']:.3f}s bruteforce={report['bruteforce_seconds']:.2f}s "
          f"speedup={report['speedup']:.1f}x max_abs_diff={report['max_abs_diff']:.3g}")


if __name__ == "__main__":
    main()
