import numpy as np
import pytest

from fcncd import SimConfig, generate
from fcncd.data import BlockType, ResponseDataset


def toy_config(**kw):
    base = dict(n_participants=2, n_dims=4, n_items=8, n_blocks=2, items_per_block=4, seed=0)
    base.update(kw)
    return SimConfig(**base)


@pytest.fixture
def toy_mole():
    """Two participants, four dimensions, two MOLE-4 blocks."""
    return generate(toy_config())[0]


@pytest.fixture
def small_mole():
    """Enough simulated data for short training runs."""
    return generate(toy_config(n_participants=40, n_items=32, n_blocks=8, seed=3))


@pytest.fixture
def rank3():
    """Two participants answering three RANK-3 blocks, written out by hand."""
    q = np.zeros((9, 3), dtype=int)
    q[np.arange(9), np.arange(9) % 3] = 1
    blocks = [[0, 1, 2], [3, 4, 5], [6, 7, 8]]
    records = [
        (0, 0, [3, 2, 1]), (0, 1, [1, 3, 2]), (0, 2, [2, 1, 3]),
        (1, 0, [1, 2, 3]), (1, 1, [2, 3, 1]), (1, 2, [3, 1, 2]),
    ]
    return ResponseDataset.from_q_matrix(q, blocks, BlockType.RANK, 2, records)


_criteria = {}


@pytest.fixture
def criterion():
    """Record an acceptance criterion's outcome for the end-of-run summary."""

    def record(number, passed, detail):
        _criteria[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
