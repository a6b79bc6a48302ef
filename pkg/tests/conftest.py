import numpy as np
import pytest

from mallows_lis.rng import GeometricStream

# criterion id -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture
def stream_factory():
    def make(q, seed=12345, stream_id=0):
        return GeometricStream(q, seed, stream_id)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(987654321)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"criterion {cid:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
