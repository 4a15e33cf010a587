"""Numba kernels for the forward blend and its adjoint.

Both renderers call ``_blend_pixel`` on a depth-sorted candidate list, so a
pixel sees the same Gaussians in the same order and the brute-force and tiled
outputs agree bit for bit. Pixel (row y, column x) is sampled at (x, y).

Per-Gaussian records are packed as rows of ``gp``:
``[u, v, sigma, opacity]`` (pixel center, pixel standard deviation, opacity).
"""

import math

import numpy as np
from numba import njit, prange

ALPHA_MAX = 0.9999
T_MIN = 1e-4
CUTOFF_SIGMAS = 3.0


@njit(cache=True, inline="always")
def _alpha(px, py, gp, m):
    """Return (alpha, unclamped alpha, squared distance); alpha is 0 outside the 3-sigma disc."""
    dx = px - gp[m, 0]
    dy = py - gp[m, 1]
    d2 = dx * dx + dy * dy
    s2 = gp[m, 2] * gp[m, 2]
    if d2 > CUTOFF_SIGMAS * CUTOFF_SIGMAS * s2:
        return 0.0, 0.0, d2
    a = gp[m, 3] * math.exp(-d2 / (2.0 * s2))
    return min(a, ALPHA_MAX), a, d2


@njit(cache=True, inline="always")
def _blend_pixel(px, py, ids, start, stop, gp, feat, out):
    """Front-to-back blend of ``ids[start:stop]`` into ``out``.

    Returns (final transmittance, position after the last Gaussian processed).
    """
    t = 1.0
    c_count = feat.shape[1]
    k = start
    while k < stop:
        m = ids[k]
        k += 1
        a, _, _ = _alpha(px, py, gp, m)
        if a == 0.0:
            continue
        w = a * t
        for c in range(c_count):
            out[c] += feat[m, c] * w
        t = t * (1.0 - a)
        if t < T_MIN:
            break
    return t, k


@njit(cache=True, parallel=True)
def render_all(order, gp, feat, width, height, values, alpha):
    """Brute force: every pixel walks the full depth-sorted list."""
    n = order.shape[0]
    for y in prange(height):
        for x in range(width):
            t, _ = _blend_pixel(float(x), float(y), order, 0, n, gp, feat, values[y, x])
            alpha[y, x] = 1.0 - t


@njit(cache=True)
def bin_gaussians(order, gp, width, height, tile):
    """Assign sorted Gaussians to every tile their 3-sigma box touches.

    Returns (tile_start, entries). Entries of tile k are
    ``entries[tile_start[k]:tile_start[k+1]]`` in global depth order.
    """
    tx_count = (width + tile - 1) // tile
    ty_count = (height + tile - 1) // tile
    n = order.shape[0]
    rect = np.empty((n, 4), dtype=np.int64)
    counts = np.zeros(tx_count * ty_count + 1, dtype=np.int64)
    for k in range(n):
        m = order[k]
        r = CUTOFF_SIGMAS * gp[m, 2]
        # one extra pixel of margin keeps the box conservative under rounding
        x0 = max(int(math.floor(gp[m, 0] - r)) - 1, 0)
        x1 = min(int(math.ceil(gp[m, 0] + r)) + 1, width - 1)
        y0 = max(int(math.floor(gp[m, 1] - r)) - 1, 0)
        y1 = min(int(math.ceil(gp[m, 1] + r)) + 1, height - 1)
        if x0 > x1 or y0 > y1:
            rect[k, 0] = 1
            rect[k, 1] = 0
            rect[k, 2] = 1
            rect[k, 3] = 0
            continue
        rect[k, 0] = x0 // tile
        rect[k, 1] = x1 // tile
        rect[k, 2] = y0 // tile
        rect[k, 3] = y1 // tile
        for ty in range(rect[k, 2], rect[k, 3] + 1):
            for tx in range(rect[k, 0], rect[k, 1] + 1):
                counts[ty * tx_count + tx + 1] += 1
    for i in range(1, counts.shape[0]):
        counts[i] += counts[i - 1]
    entries = np.empty(counts[-1], dtype=np.int64)
    fill = counts[:-1].copy()
    for k in range(n):
        for ty in range(rect[k, 2], rect[k, 3] + 1):
            for tx in range(rect[k, 0], rect[k, 1] + 1):
                b = ty * tx_count + tx
                entries[fill[b]] = order[k]
                fill[b] += 1
    return counts, entries


@njit(cache=True, parallel=True)
def render_tiles(tile_start, entries, gp, feat, width, height, tile, values, alpha, t_final, stop):
    """Tiled forward pass. Also records each pixel's final transmittance and
    the bin position after its last processed Gaussian for the backward pass."""
    tx_count = (width + tile - 1) // tile
    n_tiles = tile_start.shape[0] - 1
    for b in prange(n_tiles):
        ty, tx = divmod(b, tx_count)
        s = tile_start[b]
        e = tile_start[b + 1]
        for y in range(ty * tile, min((ty + 1) * tile, height)):
            for x in range(tx * tile, min((tx + 1) * tile, width)):
                t, k = _blend_pixel(float(x), float(y), entries, s, e, gp, feat, values[y, x])
                alpha[y, x] = 1.0 - t
                t_final[y, x] = t
                stop[y, x] = k


@njit(cache=True, parallel=True)
def backward_tiles(tile_start, entries, gp, feat, width, height, tile, t_final, stop, upstream, slots):
    """Adjoint of ``render_tiles`` for the feature values.

    Walks each pixel's processed Gaussians back to front, recovering the
    transmittance in front of each from the stored final one. ``slots[e]``
    receives the gradient w.r.t. (feature[0..C-1], opacity, sigma) from the
    pixels of the tile owning bin entry ``e``; tiles write disjoint slots, so
    the result does not depend on scheduling.
    """
    tx_count = (width + tile - 1) // tile
    n_tiles = tile_start.shape[0] - 1
    c_count = feat.shape[1]
    for b in prange(n_tiles):
        ty, tx = divmod(b, tx_count)
        s = tile_start[b]
        behind = np.zeros(c_count)
        for y in range(ty * tile, min((ty + 1) * tile, height)):
            for x in range(tx * tile, min((tx + 1) * tile, width)):
                px = float(x)
                py = float(y)
                t = t_final[y, x]
                g = upstream[y, x]
                behind[:] = 0.0
                k = stop[y, x] - 1
                while k >= s:
                    m = entries[k]
                    a, a_raw, d2 = _alpha(px, py, gp, m)
                    if a != 0.0:
                        one_minus = 1.0 - a
                        t = t / one_minus  # transmittance in front of m
                        w = a * t
                        d_alpha = 0.0
                        for c in range(c_count):
                            slots[k, c] += g[c] * w
                            d_alpha += g[c] * (feat[m, c] * t - behind[c] / one_minus)
                            behind[c] += feat[m, c] * w
                        if a_raw < ALPHA_MAX:
                            sg = gp[m, 2]
                            slots[k, c_count] += d_alpha * a / gp[m, 3]
                            slots[k, c_count + 1] += d_alpha * a * d2 / (sg * sg * sg)
                    k -= 1


@njit(cache=True)
def reduce_slots(entries, slots, n):
    """Sum per-entry gradients into per-Gaussian rows in entry (tile) order."""
    out = np.zeros((n, slots.shape[1]))
    for k in range(entries.shape[0]):
        m = entries[k]
        for j in range(slots.shape[1]):
            out[m, j] += slots[k, j]
    return out
