"""Nearest-neighbor and bilinear resampling (half-pixel-center convention).

At identity size both kernels reproduce the input values exactly, and the
lerp form keeps constant inputs exactly constant.
"""

from __future__ import annotations

import numpy as np


def nearest_indices(src: int, dst: int) -> np.ndarray:
    idx = ((np.arange(dst, dtype=np.float64) + 0.5) * (src / dst)).astype(np.int64)
    return np.clip(idx, 0, src - 1)


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2D array; returns a fresh array."""
    ri = nearest_indices(arr.shape[0], out_h)
    ci = nearest_indices(arr.shape[1], out_w)
    return arr[np.ix_(ri, ci)]


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) or (H, W, C) float array."""
    h, w = arr.shape[:2]
    src_r = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    src_c = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    r0 = np.floor(src_r)
    c0 = np.floor(src_c)
    fr = src_r - r0
    fc = src_c - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    r1 = np.clip(r0 + 1, 0, h - 1)
    c1 = np.clip(c0 + 1, 0, w - 1)
    r0 = np.clip(r0, 0, h - 1)
    c0 = np.clip(c0, 0, w - 1)
    if arr.ndim == 3:
        fr = fr[:, None, None]
        fc = fc[None, :, None]
    else:
        fr = fr[:, None]
        fc = fc[None, :]
    tl = arr[np.ix_(r0, c0)]
    tr = arr[np.ix_(r0, c1)]
    bl = arr[np.ix_(r1, c0)]
    br = arr[np.ix_(r1, c1)]
    top = tl + (tr - tl) * fc
    bot = bl + (br - bl) * fc
    return top + (bot - top) * fr
