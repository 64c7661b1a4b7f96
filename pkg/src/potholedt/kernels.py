"""Hot inner loops.

Each kernel exists twice: a plain-loop body compiled by numba, and a
vectorised numpy twin. The public name resolves to the numba build unless
``POTHOLEDT_DISABLE_NUMBA`` is set or numba is missing. Both twins are kept
importable (``*_numpy``, ``*_numba``) so tests and the benchmark can compare
them directly.
"""

import math

import numpy as np

from ._accel import BACKEND, jit_or_none

__all__ = [
    "BACKEND",
    "vdisp_counts",
    "label_8conn",
    "residual_ss",
]


# --------------------------------------------------------------------------
# v-disparity accumulation


def _vdisp_counts_loop(values, bin_width, n_cols):
    h, w = values.shape
    out = np.zeros((h, n_cols), dtype=np.int64)
    for v in range(h):
        for u in range(w):
            g = values[v, u]
            if not np.isfinite(g):
                continue
            b = math.floor(g / bin_width)
            if b < 0 or b >= n_cols:
                continue
            out[v, b] += 1
    return out


def vdisp_counts_numpy(values, bin_width, n_cols):
    h, w = values.shape
    finite = np.isfinite(values)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))[finite]
    bins = np.floor(values[finite] / bin_width)
    keep = (bins >= 0) & (bins < n_cols)
    flat = rows[keep] * n_cols + bins[keep].astype(np.int64)
    counts = np.bincount(flat, minlength=h * n_cols)
    return counts.reshape(h, n_cols).astype(np.int64)


vdisp_counts_numba = jit_or_none(_vdisp_counts_loop)


# --------------------------------------------------------------------------
# 8-connected labelling. Labels are 1..n in raster order of each component's
# first pixel; 0 is background.


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


_find_impl = jit_or_none(_find) or _find


def _label_loop(mask):
    h, w = mask.shape
    n = h * w
    parent = np.arange(n, dtype=np.int64)
    for v in range(h):
        for u in range(w):
            if not mask[v, u]:
                continue
            i = v * w + u
            # already-visited neighbours: W, NW, N, NE
            for dv, du in ((0, -1), (-1, -1), (-1, 0), (-1, 1)):
                vv = v + dv
                uu = u + du
                if vv < 0 or uu < 0 or uu >= w:
                    continue
                if not mask[vv, uu]:
                    continue
                a = _find_impl(parent, i)
                b = _find_impl(parent, vv * w + uu)
                if a < b:
                    parent[b] = a
                elif b < a:
                    parent[a] = b
    labels = np.zeros((h, w), dtype=np.int32)
    root_label = np.zeros(n, dtype=np.int32)
    nxt = 0
    for v in range(h):
        for u in range(w):
            if not mask[v, u]:
                continue
            r = _find_impl(parent, v * w + u)
            if root_label[r] == 0:
                nxt += 1
                root_label[r] = nxt
            labels[v, u] = root_label[r]
    return labels


label_8conn_numba = jit_or_none(_label_loop)


def label_8conn_numpy(mask):
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    big = np.int64(h * w + 1)
    # each foreground pixel starts with its own flat index; propagate minima
    lab = np.where(mask, np.arange(h * w, dtype=np.int64).reshape(h, w), big)
    shifts = [(dv, du) for dv in (-1, 0, 1) for du in (-1, 0, 1) if dv or du]
    while True:
        padded = np.pad(lab, 1, constant_values=big)
        best = lab.copy()
        for dv, du in shifts:
            nb = padded[1 + dv:1 + dv + h, 1 + du:1 + du + w]
            np.minimum(best, nb, out=best)
        best[~mask] = big
        # pointer jumping: a label is a pixel index, follow it
        flat = best.ravel()
        fg = flat < big
        jumped = flat.copy()
        jumped[fg] = flat[flat[fg]]
        best = jumped.reshape(h, w)
        if np.array_equal(best, lab):
            break
        lab = best
    labels = np.zeros((h, w), dtype=np.int32)
    if not mask.any():
        return labels
    roots = lab[mask]
    uniq, first = np.unique(roots, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(len(uniq), dtype=np.int32)
    remap[order] = np.arange(1, len(uniq) + 1, dtype=np.int32)
    labels[mask] = remap[np.searchsorted(uniq, roots)]
    return labels


# --------------------------------------------------------------------------
# Residual sum of squares of a centred 1-D regression g ~ slope * t, with
# t = cos * v - sin * u. Chunked so the numba sum keeps pairwise-like error.

_CHUNK = 1024


def _residual_ss_loop(gc, uc, vc, cos, sin, slope):
    n = gc.shape[0]
    total = 0.0
    start = 0
    while start < n:
        stop = min(start + _CHUNK, n)
        # four independent accumulators break the add dependency chain
        p0 = p1 = p2 = p3 = 0.0
        i = start
        while i + 4 <= stop:
            r0 = gc[i] - slope * (cos * vc[i] - sin * uc[i])
            r1 = gc[i + 1] - slope * (cos * vc[i + 1] - sin * uc[i + 1])
            r2 = gc[i + 2] - slope * (cos * vc[i + 2] - sin * uc[i + 2])
            r3 = gc[i + 3] - slope * (cos * vc[i + 3] - sin * uc[i + 3])
            p0 += r0 * r0
            p1 += r1 * r1
            p2 += r2 * r2
            p3 += r3 * r3
            i += 4
        while i < stop:
            r = gc[i] - slope * (cos * vc[i] - sin * uc[i])
            p0 += r * r
            i += 1
        total += (p0 + p1) + (p2 + p3)
        start = stop
    return total


def residual_ss_numpy(gc, uc, vc, cos, sin, slope):
    r = gc - slope * (cos * vc - sin * uc)
    return float(np.sum(r * r))


residual_ss_numba = jit_or_none(_residual_ss_loop)


vdisp_counts = vdisp_counts_numba or vdisp_counts_numpy
label_8conn = label_8conn_numba or label_8conn_numpy
residual_ss = residual_ss_numba or residual_ss_numpy
