import math

import numpy as np
import pytest
from hypothesis import settings

from rfmslam.dataset import NoiseSpec, SensorSpec
from rfmslam.simulator import simulate_measurements

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def arc_poses(n, step=0.5, turn=0.1, start=(0.0, 0.0, 0.0)):
    """Noise-free poses driving forward ``step`` and turning ``turn`` each step."""
    x, y, th = start
    out = [(x, y, th)]
    for _ in range(n - 1):
        x += step * math.cos(th)
        y += step * math.sin(th)
        th += turn
        out.append((x, y, th))
    out = np.array(out)
    out[:, 2] = np.pi - np.mod(np.pi - out[:, 2], 2 * np.pi)
    return out


SMALL_LANDMARKS = np.array([[3.0, 6.0], [8.0, -2.0], [-4.0, 3.0], [6.0, 5.0], [1.0, -5.0]])


def small_world(n_poses=10, alpha=1.0, beta=1.0, seed=0, landmarks=SMALL_LANDMARKS, turn=0.1):
    """A compact world where every pose sees every landmark."""
    poses = arc_poses(n_poses, turn=turn)
    return simulate_measurements(poses, landmarks, SensorSpec(), NoiseSpec(alpha, beta), seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(number, name, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
