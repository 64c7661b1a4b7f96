import numpy as np
import pytest
from hypothesis import given, strategies as st

from potholedt.metrics import (ConfusionCounts, SegMetrics, confusion, delta_ratio,
                               experiment_log, fsc_iou, mean_metrics)

counts = st.builds(ConfusionCounts, *[st.integers(0, 10_000)] * 4)


def test_confusion_hand_counts():
    pred = np.array([[1, 1, 0], [0, 0, 1]], bool)
    gt = np.array([[1, 0, 0], [1, 0, 1]], bool)
    c = confusion(pred, gt)
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 1, 1, 2)
    m = fsc_iou(c)
    assert m.iou == 0.5 and m.fsc == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        confusion(pred, gt[:, :2])


def test_empty_masks_score_one():
    assert fsc_iou(ConfusionCounts(0, 0, 0, 9)) == SegMetrics(1.0, 1.0)
    assert fsc_iou(ConfusionCounts(0, 3, 0, 9)) == SegMetrics(0.0, 0.0)
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


@given(counts)
def test_fsc_iou_identity(c):
    m = fsc_iou(c)
    assert abs(m.fsc - 2 * m.iou / (1 + m.iou)) <= 1e-12
    assert fsc_iou(c.swapped()) == m
    assert 0 <= m.iou <= m.fsc <= 1


def test_mean_metrics():
    ms = [SegMetrics(1.0, 1.0), SegMetrics(0.5, 0.25)]
    assert mean_metrics(ms) == (0.75, 0.625)
    with pytest.raises(ValueError):
        mean_metrics([])


def test_delta_and_log():
    assert delta_ratio(30, 40) == 0.75
    log = experiment_log(0.5, 30, 40)
    assert log.delta == 0.75 and log.lam == 0.5
    with pytest.raises(ValueError):
        delta_ratio(1, 0)
    with pytest.raises(ValueError):
        experiment_log(-1, 1, 1)
