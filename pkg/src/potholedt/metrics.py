"""Segmentation metrics and training-run bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def area(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionCounts":
        """Counts with prediction and ground truth exchanged."""
        return ConfusionCounts(self.tp, self.fn, self.fp, self.tn)


@dataclass(frozen=True)
class SegMetrics:
    fsc: float
    iou: float


@dataclass(frozen=True)
class ExperimentLog:
    """One training setup: augmented-set multiplier and convergence ratio."""

    lam: float
    iterations_to_converge: int
    delta: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def confusion(pred, gt) -> ConfusionCounts:
    """Pixel counts with pothole as the positive class."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, fp, fn, pred.size - tp - fp - fn)


def fsc_iou(c: ConfusionCounts) -> SegMetrics:
    """F-score and IoU; both are 1 when neither mask has a pothole pixel."""
    union = c.tp + c.fp + c.fn
    if union == 0:
        return SegMetrics(1.0, 1.0)
    return SegMetrics(2 * c.tp / (2 * c.tp + c.fp + c.fn), c.tp / union)


def mean_metrics(per_image) -> tuple[float, float]:
    """Unweighted per-image means ``(mFsc, mIoU)``."""
    per_image = list(per_image)
    if not per_image:
        raise ValueError("no metrics to average")
    n = len(per_image)
    return (math.fsum(m.fsc for m in per_image) / n,
            math.fsum(m.iou for m in per_image) / n)


def delta_ratio(aug_iterations: int, baseline_iterations: int) -> float:
    """Iterations to converge with the augmented set over the baseline's."""
    if baseline_iterations <= 0:
        raise ValueError("baseline iteration count must be positive")
    if aug_iterations < 0:
        raise ValueError("iteration count must be non-negative")
    return aug_iterations / baseline_iterations


def experiment_log(lam: float, aug_iterations: int, baseline_iterations: int) -> ExperimentLog:
    return ExperimentLog(lam, aug_iterations, delta_ratio(aug_iterations, baseline_iterations))
