import math

import numpy as np
import pytest
from hypothesis import settings

from potholedt.disparity import DisparityImage

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def plane(phi, varkappa, kappa, height, width):
    v = np.arange(height, dtype=np.float64)[:, None]
    u = np.arange(width, dtype=np.float64)[None, :]
    return varkappa * (math.cos(phi) * v - math.sin(phi) * u) + varkappa * kappa


@pytest.fixture
def plane_image():
    def make(phi=0.05, varkappa=1.5, kappa=40.0, height=48, width=64):
        return DisparityImage(plane(phi, varkappa, kappa, height, width))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance line; printed now and again in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
