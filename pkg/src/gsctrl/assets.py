"""Procedural demo head asset.

The head is a level-4 icosphere (2562 vertices, 5120 faces) stretched into an
ellipsoid, with four shape and four expression blendshapes built from smooth
localized displacement fields. The UV atlas packs face pairs into a 64 x 40
grid of cells, each split along its diagonal, so every texel of a square
grid lands on some face.

Run ``python -m gsctrl.assets [out]`` to regenerate the shipped file.
"""

import sys

import numpy as np

from .surface import DEMO_ASSET, SurfaceModel, save_surface

HEAD_RADII = np.array([0.9, 1.2, 1.0])
ATLAS_COLS = 64
ATLAS_ROWS = 40


def icosphere(level):
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def _bump(points, center, width):
    d2 = np.sum((points - center) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * width**2))


def blendshapes(unit):
    """Shape and expression bases on the unit sphere ``unit`` (V, 3)."""
    x, y, z = unit[:, 0], unit[:, 1], unit[:, 2]
    nv = unit.shape[0]
    zeros = np.zeros(nv)
    shape = np.zeros((nv, 3, 4))
    shape[:, :, 0] = np.stack([0.25 * x, zeros, zeros], 1)  # width
    shape[:, :, 1] = np.stack([zeros, 0.25 * y, zeros], 1)  # height
    shape[:, :, 2] = np.stack([zeros, zeros, 0.25 * z], 1)  # depth
    chin = _bump(unit, np.array([0.0, -0.8, 0.6]), 0.35)
    shape[:, :, 3] = np.stack([zeros, -0.2 * chin, 0.1 * chin], 1)

    expr = np.zeros((nv, 3, 4))
    jaw = _bump(unit, np.array([0.0, -0.55, 0.83]), 0.3)
    expr[:, :, 0] = np.stack([zeros, -0.25 * jaw, zeros], 1)  # mouth open
    left = _bump(unit, np.array([0.4, -0.35, 0.85]), 0.18)
    right = _bump(unit, np.array([-0.4, -0.35, 0.85]), 0.18)
    expr[:, :, 1] = np.stack([0.08 * (left - right), 0.12 * (left + right), zeros], 1)  # smile
    brow = _bump(unit, np.array([0.0, 0.35, 0.94]), 0.3)
    expr[:, :, 2] = np.stack([zeros, 0.15 * brow, 0.03 * brow], 1)  # brow raise
    cheeks = _bump(unit, np.array([0.6, -0.2, 0.77]), 0.22) + _bump(unit, np.array([-0.6, -0.2, 0.77]), 0.22)
    expr[:, :, 3] = 0.12 * cheeks[:, None] * unit  # cheek puff along the normal
    return shape * HEAD_RADII[None, :, None], expr * HEAD_RADII[None, :, None]


def packed_atlas(num_faces, cols=ATLAS_COLS, rows=ATLAS_ROWS):
    """Per-face-corner UVs: faces 2k and 2k+1 split cell k along its diagonal."""
    if num_faces > 2 * cols * rows:
        raise ValueError("atlas grid too small for the face count")
    uv = np.zeros((num_faces, 3, 2))
    for f in range(num_faces):
        k, half = divmod(f, 2)
        row, col = divmod(k, cols)
        u0, u1 = col / cols, (col + 1) / cols
        v0, v1 = row / rows, (row + 1) / rows
        if half == 0:
            uv[f] = [(u0, v0), (u1, v0), (u0, v1)]
        else:
            uv[f] = [(u1, v1), (u0, v1), (u1, v0)]
    return np.clip(uv, 0.0, 1.0)


def build_demo_head():
    unit, faces = icosphere(4)
    shape, expr = blendshapes(unit)
    return SurfaceModel(
        template_vertices=unit * HEAD_RADII,
        faces=faces,
        shape_basis=shape,
        expr_basis=expr,
        uv_coords=packed_atlas(faces.shape[0]),
    )


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = argv[0] if argv else DEMO_ASSET
    save_surface(build_demo_head(), out)
    print(out)


if __name__ == "__main__":
    main()
