import numpy as np
import pytest

from hyperex.model import Model
from hyperex.perm import parse_permutation
from hyperex import relations

EX25_SIGMA = "(5 21)(8 10)(16 20)(3 12 22)(1 6 17 18 19 2 13 25 24 9 7 15 14 4 11 23)"
EX25_TILDE = "(5 10)(8 21)(16 20)(3 22 12)(1 9 17 18 19 4 13 25 24 6 7 15 14 2 11 23)"
EX25_R = frozenset({1, 2, 5, 6, 9, 12, 20, 22})
EX25_W = frozenset({3, 4, 8, 10, 14, 16, 19, 21, 24})
EX25_V = tuple(range(1, 26))


@pytest.fixture
def sigma25():
    return parse_permutation(EX25_SIGMA, EX25_V)


@pytest.fixture
def tilde25():
    return parse_permutation(EX25_TILDE, EX25_V)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def k4_delta():
    return relations.double_transposition_model(0.1)


@pytest.fixture
def k4_pairs():
    """4 vertices, one edge, double transpositions only."""
    return Model.build([1, 2, 3, 4], [[1, 2, 3, 4]], {(2, 2): 1.0})


@pytest.fixture
def cham_model():
    return relations.chameleon_model()


@pytest.fixture
def big_edge_model():
    return relations.big_edge_model()


@pytest.fixture
def two_triangles():
    return Model.build(range(1, 6), [(1, 2, 3), (3, 4, 5)], {(3,): 0.6, (2,): 0.4})


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
