import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pointnls.model import PRESETS  # noqa: E402
from pointnls.space import default_rmax, make_grid  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(PRESETS), ids=sorted(PRESETS))
def params(request):
    return PRESETS[request.param]


@pytest.fixture
def grid(params):
    return make_grid(default_rmax(params), 8000, 1e8, params.dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
