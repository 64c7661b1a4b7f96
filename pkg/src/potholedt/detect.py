"""Otsu thresholding and 8-connected component filtering on transformed disparity.

Potholes are depressions, so after the transform they form the *lower*
class of the value histogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .disparity import DisparityImage, read_raw, write_image


class MaskFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Component:
    id: int
    area: int
    bbox: tuple  # (min_u, min_v, max_u, max_v), inclusive
    pixels: np.ndarray  # (area, 2) int array of (u, v)


def otsu_threshold(values, bins: int = 256) -> float:
    """Threshold maximising between-class variance over a ``bins``-bin histogram.

    Bins span ``[min, max]`` of the data; the result is the upper edge of the
    last bin in the lower class, so the lower class is ``values < threshold``.
    Ties go to the smallest threshold.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if x.size == 0:
        raise ValueError("no finite values")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise ValueError("constant input has no threshold")
    width = (hi - lo) / bins
    idx = np.clip(np.floor((x - lo) / width).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    centres = lo + (np.arange(bins) + 0.5) * width

    p = counts / counts.sum()
    w0 = np.cumsum(p)[:-1]
    m0 = np.cumsum(p * centres)[:-1]
    mt = float(np.sum(p * centres))
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mt * w0 - m0) ** 2 / (w0 * w1)
    sigma_b[~((w0 > 0) & (w1 > 0))] = -np.inf
    k = int(np.argmax(sigma_b))
    return lo + (k + 1) * width


def connected_components(mask) -> list[Component]:
    """8-connected components ordered by ``(min_v, min_u)`` of their boxes."""
    mask = np.ascontiguousarray(mask, dtype=bool)
    labels = kernels.label_8conn(mask)
    n = int(labels.max())
    if n == 0:
        return []
    vs, us = np.nonzero(labels)
    lab = labels[vs, us]
    order = np.argsort(lab, kind="stable")
    vs, us, lab = vs[order], us[order], lab[order]
    splits = np.searchsorted(lab, np.arange(1, n + 1))
    comps = []
    for i in range(n):
        start = splits[i]
        stop = splits[i + 1] if i + 1 < n else lab.size
        cu, cv = us[start:stop], vs[start:stop]
        bbox = (int(cu.min()), int(cv.min()), int(cu.max()), int(cv.max()))
        comps.append((bbox, np.column_stack([cu, cv])))
    # labels are numbered by first raster pixel, which breaks (min_v, min_u) ties
    comps.sort(key=lambda c: (c[0][1], c[0][0]))
    return [Component(i, len(px), bbox, px) for i, (bbox, px) in enumerate(comps)]


def remove_small(mask, min_area: int) -> np.ndarray:
    """Drop 8-connected components smaller than ``min_area`` pixels."""
    mask = np.ascontiguousarray(mask, dtype=bool)
    if min_area <= 1:
        return mask.copy()
    labels = kernels.label_8conn(mask)
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


def segment(tdisp: DisparityImage, min_area: int = 50, bins: int = 256) -> np.ndarray:
    """Pothole mask: valid pixels below the Otsu threshold, small blobs removed."""
    if min_area < 1:
        raise ValueError("min_area must be >= 1")
    valid = tdisp.valid
    vals = tdisp.values[valid]
    mask = np.zeros(tdisp.shape, dtype=bool)
    if vals.size == 0 or vals.min() == vals.max():
        return mask
    thr = otsu_threshold(vals, bins)
    with np.errstate(invalid="ignore"):
        mask = valid & (tdisp.values < thr)
    return remove_small(mask, min_area)


def save_mask(mask, path) -> None:
    """8-bit PNG, 0 background and 255 pothole."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    write_image(arr, path)


def load_mask(path) -> np.ndarray:
    """Any non-zero pixel is pothole."""
    try:
        raw, _ = read_raw(path)
    except ValueError as exc:
        raise MaskFormatError(str(exc)) from exc
    return raw > 0
