import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rais.datagen import default_benchmark  # noqa: E402
from rais.memory import StoredSample  # noqa: E402


@pytest.fixture(scope="session")
def benchmark():
    return default_benchmark(0)


def make_candidates(aux, scores, y=None, k=None):
    """StoredSample list from auxiliary labels and scores; ``y`` defaults to
    the class implied by ``aux`` and ``k``."""
    out = []
    for i, (a, s) in enumerate(zip(aux, scores)):
        label = y[i] if y is not None else int(a >= k // 2)
        out.append(StoredSample(np.array([float(i)]), label, int(a), float(s), 0, i))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
