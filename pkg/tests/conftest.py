import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from grnlfa.factorization import FactorMatrices
from grnlfa.regularizer import CombinedGraph
from grnlfa.temporal_graph import SparseKnownSet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng: np.random.Generator, U: int, S: int, K: int, density: float = 0.5,
                    alpha: float = 0.0, theta: float = 0.5):
    """Random positive factors, a known set with >= 1 entry and a symmetric graph."""
    mask = rng.random((U, S)) < density
    mask[rng.integers(U), rng.integers(S)] = True
    i, j = np.nonzero(mask)
    known = SparseKnownSet(i, j, rng.random(len(i)) * 2, (U, S))
    f = FactorMatrices(rng.random((U, K)) + 0.05, rng.random((S, K)) + 0.05)
    W = np.triu(rng.random((S, S)) * (rng.random((S, S)) < 0.6), 1)
    W = W + W.T
    Wc = sp.csr_matrix(W)
    graph = CombinedGraph(Wc, np.asarray(W.sum(axis=1)).ravel(), theta, alpha)
    return f, known, graph, W


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def known_sets(draw, max_dim=6, min_entries=0):
    U = draw(st.integers(1, max_dim))
    S = draw(st.integers(1, max_dim))
    n = draw(st.integers(min_entries, U * S * 2))
    rows = draw(st.lists(st.integers(0, U - 1), min_size=n, max_size=n))
    cols = draw(st.lists(st.integers(0, S - 1), min_size=n, max_size=n))
    vals = draw(st.lists(st.floats(0, 10, allow_nan=False), min_size=n, max_size=n))
    return rows, cols, vals, (U, S)


# Acceptance verdicts, printed as one PASS/FAIL line per criterion after the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
