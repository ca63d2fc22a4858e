import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mpgame.measurement import build_mp_basis, build_tetrahedron, make_device  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def frame():
    return build_tetrahedron()


@pytest.fixture(scope="session")
def basis(frame):
    return build_mp_basis(frame)


@pytest.fixture(scope="session")
def device(basis):
    return make_device(basis)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
