import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from motioncopy.data_io import PoseKeypoints  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_pose(frame_index=0, overrides=None, conf=1.0):
    """18 detected joints on a loose grid, with optional {joint: (x, y[, c])} overrides."""
    joints = np.zeros((18, 3))
    joints[:, 0] = 10 + 5 * np.arange(18)
    joints[:, 1] = 20 + 3 * np.arange(18)
    joints[:, 2] = conf
    for j, val in (overrides or {}).items():
        joints[j, : len(val)] = val
    return PoseKeypoints(joints, frame_index)


@pytest.fixture(scope="session")
def synthetic_sequence():
    from motioncopy.fixtures import make_sequence

    return make_sequence()


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    from motioncopy.fixtures import write_fixture

    root = tmp_path_factory.mktemp("fixture")
    write_fixture(root)
    return root


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
