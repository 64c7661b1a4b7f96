"""Disparity images, raster I/O and the v-disparity histogram."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels

#: fixed-point scale of 16-bit disparity rasters (8 fractional bits)
DEFAULT_SCALE = 1.0 / 256.0


class DisparityFormatError(ValueError):
    """Raised when a raster cannot be read as a disparity image."""


@dataclass(frozen=True, eq=False)
class DisparityImage:
    """Dense disparity map, NaN marking invalid pixels.

    ``values`` has shape ``(height, width)``; row index is ``v``, column
    index is ``u``. Use :meth:`from_raw` for matcher output, where anything
    that is not a positive finite number means "no match".
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"disparity must be 2-D, got shape {vals.shape}")
        if vals.shape[0] < 2 or vals.shape[1] < 2:
            raise ValueError(f"disparity image must be at least 2x2, got {vals.shape}")
        vals[~np.isfinite(vals)] = np.nan
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_raw(cls, values) -> "DisparityImage":
        vals = np.array(values, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            vals[~(vals > 0)] = np.nan
        return cls(vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))


@dataclass(frozen=True, eq=False)
class VDisparityHistogram:
    counts: np.ndarray  # (rows, cols) int64
    bin_width: float

    @property
    def rows(self) -> int:
        return self.counts.shape[0]

    @property
    def cols(self) -> int:
        return self.counts.shape[1]

    def total(self) -> int:
        return int(self.counts.sum())


# --------------------------------------------------------------------------
# raster I/O


def read_raw(path) -> tuple[np.ndarray, int]:
    """Read a single-channel 8/16-bit raster; returns (raw ints, bit depth)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            raw = np.asarray(im)
    except (OSError, SyntaxError, ValueError) as exc:
        raise DisparityFormatError(f"{path}: unreadable raster ({exc})") from exc
    if mode == "L":
        depth = 8
    elif mode in ("I;16", "I;16B", "I;16L", "I"):
        depth = 16
        if raw.size and (raw.min() < 0 or raw.max() > 65535):
            raise DisparityFormatError(f"{path}: values outside the 16-bit range")
    else:
        raise DisparityFormatError(f"{path}: unsupported raster mode {mode!r}")
    if raw.ndim != 2:
        raise DisparityFormatError(f"{path}: expected a single-channel image")
    if raw.size == 0:
        raise DisparityFormatError(f"{path}: zero-area image")
    return raw.astype(np.int64), depth


def load_disparity(path, scale: float = DEFAULT_SCALE, offset: int = 0) -> DisparityImage:
    """Load a disparity raster: ``value = (raw - offset) * scale``, raw 0 invalid.

    ``offset`` is 1 for transformed-disparity rasters written by
    :func:`save_transformed`, whose valid values may be exactly zero.
    """
    raw, _ = read_raw(path)
    if raw.shape[0] < 2 or raw.shape[1] < 2:
        raise DisparityFormatError(f"{path}: image smaller than 2x2")
    vals = (raw - offset).astype(np.float64) * scale
    vals[raw == 0] = np.nan
    return DisparityImage(vals)


#: zlib level for PNG output; noisy disparity barely compresses, so favour speed
PNG_COMPRESS_LEVEL = 1


def write_image(arr: np.ndarray, path) -> None:
    """Save an integer array; PNG gets the fast compression level."""
    path = Path(path)
    im = Image.fromarray(arr)
    if path.suffix.lower() == ".png":
        im.save(path, compress_level=PNG_COMPRESS_LEVEL)
    else:
        im.save(path)


def _quantise(img: DisparityImage, scale: float, offset: int, bits: int) -> np.ndarray:
    top = (1 << bits) - 1
    raw = np.zeros(img.shape, dtype=np.int64)
    valid = img.valid
    q = np.rint(img.values[valid] / scale) + offset
    # valid pixels never map onto the invalid sentinel
    raw[valid] = np.clip(q, 1, top).astype(np.int64)
    return raw


def save_disparity(img: DisparityImage, path, scale: float = DEFAULT_SCALE,
                   offset: int = 0, bits: int = 16) -> None:
    """Write ``img`` as an 8- or 16-bit PNG/PGM; invalid pixels become raw 0.

    Values are rounded to the nearest raw step and clipped into range.
    """
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    raw = _quantise(img, scale, offset, bits)
    dtype = np.uint8 if bits == 8 else np.uint16
    write_image(raw.astype(dtype), path)


#: transformed rasters reserve raw 0 for "invalid", so they carry offset 1
TDISP_OFFSET = 1


def save_transformed(img: DisparityImage, path, scale: float = DEFAULT_SCALE) -> None:
    save_disparity(img, path, scale=scale, offset=TDISP_OFFSET)


def load_transformed(path, scale: float = DEFAULT_SCALE) -> DisparityImage:
    return load_disparity(path, scale=scale, offset=TDISP_OFFSET)


# --------------------------------------------------------------------------
# v-disparity


def v_disparity(img: DisparityImage, bin_width: float = 1.0,
                cols: int | None = None) -> VDisparityHistogram:
    """Per-row histogram of disparity; bin ``floor(g / bin_width)``.

    ``cols`` defaults to just enough bins for the largest valid value.
    Values at or beyond ``cols * bin_width`` (and negative values) are
    dropped rather than clamped into the edge bins.
    """
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    if cols is None:
        finite = img.values[img.valid]
        top = float(finite.max()) if finite.size else 0.0
        cols = max(int(np.floor(top / bin_width)) + 1, 1)
    if cols < 1:
        raise ValueError("cols must be >= 1")
    counts = kernels.vdisp_counts(np.ascontiguousarray(img.values), float(bin_width), int(cols))
    return VDisparityHistogram(counts=counts, bin_width=float(bin_width))


def save_vdisp_pgm(hist: VDisparityHistogram, path) -> None:
    """Counts scaled so the fullest bin is 255 (integer arithmetic)."""
    peak = int(hist.counts.max()) if hist.counts.size else 0
    if peak == 0:
        img = np.zeros(hist.counts.shape, dtype=np.uint8)
    else:
        img = (hist.counts * 255 // peak).astype(np.uint8)
    Image.fromarray(img).save(Path(path), format="PPM")


def save_vdisp_csv(hist: VDisparityHistogram, path) -> None:
    """Sparse ``v,g_bin,count`` rows for every non-empty bin."""
    vs, bins = np.nonzero(hist.counts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v", "g_bin", "count"])
        for v, b in zip(vs.tolist(), bins.tolist()):
            w.writerow([v, b, int(hist.counts[v, b])])
