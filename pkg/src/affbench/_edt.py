"""Exact Euclidean distance transform with nearest-site tracking.

Three passes: per-row nearest-column sweep, lower-envelope-of-parabolas
column pass on squared distances (all integer-exact), and a site-resolution
pass that replaces the envelope's winner with the tied site of smallest
row-major index. Squared distances are integers throughout, so exactness
does not depend on float rounding; the envelope boundaries use float64 but
a misassigned boundary can only swap *tied* sites, which the third pass
fixes anyway.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _row_nearest(fg):
    """Per (row, col): distance to nearest foreground column within that row.

    Ties break toward the smaller column. Rows with no foreground get the
    sentinel distance w + 1.
    """
    h, w = fg.shape
    col_dist = np.full((h, w), w + 1, dtype=np.int64)
    col_site = np.full((h, w), -1, dtype=np.int64)
    for r in range(h):
        last = -1
        for c in range(w):
            if fg[r, c]:
                last = c
            if last >= 0:
                col_dist[r, c] = c - last
                col_site[r, c] = last
        last = -1
        for c in range(w - 1, -1, -1):
            if fg[r, c]:
                last = c
            # strict < keeps the left site on ties
            if last >= 0 and last - c < col_dist[r, c]:
                col_dist[r, c] = last - c
                col_site[r, c] = last
    return col_dist, col_site


@njit(cache=True, nogil=True)
def _column_envelope(col_dist, col_site):
    """Exact squared distances via the lower envelope of per-row parabolas."""
    h, w = col_dist.shape
    d2 = np.empty((h, w), dtype=np.int64)
    env_r = np.empty((h, w), dtype=np.int64)
    env_c = np.empty((h, w), dtype=np.int64)
    v = np.empty(h, dtype=np.int64)
    z = np.empty(h + 1, dtype=np.float64)
    for c in range(w):
        k = -1
        for r in range(h):
            cd = col_dist[r, c]
            if cd > w:
                continue
            fr = float(cd * cd + r * r)
            s = 0.0
            while k >= 0:
                vk = v[k]
                cdk = col_dist[vk, c]
                s = (fr - float(cdk * cdk + vk * vk)) / (2.0 * (r - vk))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            if k < 0:
                k = 0
                v[0] = r
                z[0] = -np.inf
            else:
                k += 1
                v[k] = r
                z[k] = s
            z[k + 1] = np.inf
        k = 0
        for r in range(h):
            while z[k + 1] < r:
                k += 1
            vr = v[k]
            cd = col_dist[vr, c]
            d2[r, c] = (r - vr) * (r - vr) + cd * cd
            env_r[r, c] = vr
            env_c[r, c] = col_site[vr, c]
    return d2, env_r, env_c


@njit(cache=True, nogil=True)
def _resolve_sites(col_dist, col_site, d2, env_r, env_c):
    """Replace each envelope winner by the tied site of smallest row-major index.

    A row rp holds a site at exact squared distance d2 iff its nearest-column
    distance cd satisfies cd*cd == d2 - (rp - r)^2 (anything closer would
    contradict minimality of d2). Scanning candidate rows upward from r - d
    and stopping at the envelope winner finds the smallest tied row; within
    a row, col_site already prefers the smaller column.
    """
    h, w = col_dist.shape
    nearest = np.empty((h, w), dtype=np.int64)
    for r in range(h):
        for c in range(w):
            k = d2[r, c]
            if k == 0:
                nearest[r, c] = r * w + c
                continue
            best_r = env_r[r, c]
            best_c = env_c[r, c]
            d = int(np.sqrt(float(k)))
            while d * d > k:
                d -= 1
            while (d + 1) * (d + 1) <= k:
                d += 1
            lo = r - d
            if lo < 0:
                lo = 0
            for rp in range(lo, best_r):
                dr = rp - r
                rem = k - dr * dr
                cd = col_dist[rp, c]
                if cd <= w and cd * cd == rem:
                    best_r = rp
                    best_c = col_site[rp, c]
                    break
            nearest[r, c] = best_r * w + best_c
    return nearest


def exact_distance_transform(fg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact EDT of a non-empty 2D binary foreground.

    Returns (delta, nearest): float64 distances (0 on foreground) and the
    flat row-major index of the nearest foreground pixel, ties broken by
    the smallest index.
    """
    fgu = np.ascontiguousarray(fg, dtype=np.uint8)
    col_dist, col_site = _row_nearest(fgu)
    d2, env_r, env_c = _column_envelope(col_dist, col_site)
    nearest = _resolve_sites(col_dist, col_site, d2, env_r, env_c)
    return np.sqrt(d2.astype(np.float64)), nearest
