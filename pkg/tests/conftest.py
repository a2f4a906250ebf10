import numpy as np
import pytest
from hypothesis import strategies as st

from ensaudit.data import LabeledPredictions

# (y, a, score) rows counted by hand in test_metrics
WORKED = [(1, 1, 0.9), (0, 1, 0.2), (1, 1, 0.4), (1, 0, 0.7), (0, 0, 0.6), (0, 0, 0.1)]


@pytest.fixture
def worked():
    y, a, s = map(np.array, zip(*WORKED))
    return s.astype(float), y, a


@pytest.fixture
def worked_data():
    y, a, s = map(np.array, zip(*WORKED))
    second = np.array([0.8, 0.35, 0.55, 0.45, 0.3, 0.05])
    return LabeledPredictions(
        tuple(f"k{i}" for i in range(6)), y, a, np.column_stack([s, second])
    )


def random_dataset(rng, k=None, n=None, grid=False) -> LabeledPredictions:
    """Random K x N dataset; ``grid`` rounds scores to two decimals to force ties."""
    k = k or int(rng.integers(1, 201))
    n = n or int(rng.integers(1, 9))
    scores = rng.random((k, n))
    if grid:
        scores = np.round(scores, 2)
    return LabeledPredictions(
        tuple(f"s{i}" for i in range(k)),
        rng.integers(0, 2, k),
        rng.integers(0, 2, k),
        scores,
    )


@st.composite
def datasets(draw, max_k=60, max_n=5, min_k=1):
    k = draw(st.integers(min_k, max_k))
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    grid = draw(st.booleans())
    return random_dataset(np.random.default_rng(seed), k, n, grid)



def pytest_terminal_summary(terminalreporter):
    from criteria_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
