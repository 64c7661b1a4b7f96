"""Evaluators for the adversarial domain-adaptation objective, and random
pothole ground-truth masks.

Expectations are batch means. Discriminator outputs are clamped to
``[EPS, 1 - EPS]`` before taking logs so every evaluator is total.

Random masks use numpy's ``PCG64`` bit generator seeded through
``SeedSequence``; the seed alone reproduces a mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-12


def _probs(p, name):
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError(f"{name} batch is empty")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} batch has non-finite entries")
    return np.clip(p, EPS, 1.0 - EPS)


def gan_loss(d_real, d_fake) -> float:
    """``mean(log D(real)) + mean(log(1 - D(fake)))``."""
    r = _probs(d_real, "d_real")
    f = _probs(d_fake, "d_fake")
    return math.fsum(np.log(r)) / r.size + math.fsum(np.log1p(-f)) / f.size


def _image_batch(batch, name):
    items = [np.asarray(b, dtype=np.float64) for b in batch] \
        if not isinstance(batch, np.ndarray) else list(np.asarray(batch, dtype=np.float64))
    if not items:
        raise ValueError(f"{name} batch is empty")
    shape = items[0].shape
    if any(it.shape != shape for it in items):
        raise ValueError(f"{name} batch items differ in shape")
    return items


def cycle_loss(original, reconstructed) -> float:
    """One direction of the cycle term: batch mean of per-image mean ``|diff|``."""
    a = _image_batch(original, "original")
    b = _image_batch(reconstructed, "reconstructed")
    if len(a) != len(b) or a[0].shape != b[0].shape:
        raise ValueError("original and reconstructed batches do not match in shape")
    per_image = [float(np.mean(np.abs(x - y))) for x, y in zip(a, b)]
    return math.fsum(per_image) / len(per_image)


def full_objective(terms) -> float:
    """Unweighted sum of the four GAN terms and two cycle terms."""
    terms = [float(t) for t in terms]
    if len(terms) != 6:
        raise ValueError(f"expected 6 loss components, got {len(terms)}")
    if not all(math.isfinite(t) for t in terms):
        raise ValueError("loss components must be finite")
    return math.fsum(terms)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ellipse:
    cu: float
    cv: float
    a: float  # semi-axis along the rotated u direction
    b: float
    angle: float  # radians

    def rho2(self, u, v):
        """Squared normalised radius; < 1 strictly inside."""
        du = np.asarray(u, dtype=np.float64) - self.cu
        dv = np.asarray(v, dtype=np.float64) - self.cv
        c, s = math.cos(self.angle), math.sin(self.angle)
        x = c * du + s * dv
        y = -s * du + c * dv
        return (x / self.a) ** 2 + (y / self.b) ** 2

    def raster(self, width: int, height: int) -> np.ndarray:
        v, u = np.mgrid[0:height, 0:width]
        return self.rho2(u, v) < 1.0


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def random_ellipses(width: int, height: int, rng, n_potholes=(1, 3),
                    axis_range=(10.0, 40.0)) -> list[Ellipse]:
    """Draw non-clipped ellipses: centres keep ``max(axis_range)`` from every edge."""
    n_lo, n_hi = int(n_potholes[0]), int(n_potholes[1])
    a_lo, a_hi = float(axis_range[0]), float(axis_range[1])
    if width < 1 or height < 1:
        raise ValueError("dimensions must be positive")
    if n_lo < 0 or n_hi < n_lo or not 0 < a_lo <= a_hi:
        raise ValueError("empty or invalid range")
    if n_hi > 0 and 2 * a_hi > min(width, height) - 1:
        raise ValueError(f"axis range up to {a_hi} does not fit a {width}x{height} frame")
    n = int(rng.integers(n_lo, n_hi + 1))
    out = []
    for _ in range(n):
        a = float(rng.uniform(a_lo, a_hi))
        b = float(rng.uniform(a_lo, a_hi))
        cu = float(rng.uniform(a_hi, width - 1 - a_hi))
        cv = float(rng.uniform(a_hi, height - 1 - a_hi))
        angle = float(rng.uniform(0.0, math.pi))
        out.append(Ellipse(cu, cv, a, b, angle))
    return out


def random_gt_mask(width: int, height: int, seed: int, n_potholes=(1, 3),
                   axis_range=(10.0, 40.0)) -> np.ndarray:
    """Union of random filled ellipses as a boolean ``(height, width)`` mask."""
    ellipses = random_ellipses(width, height, make_rng(seed), n_potholes, axis_range)
    mask = np.zeros((height, width), dtype=bool)
    for e in ellipses:
        mask |= e.raster(width, height)
    return mask
