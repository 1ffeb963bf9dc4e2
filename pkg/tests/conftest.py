import itertools

import numpy as np
import pytest


def best_support_bruteforce(A, B, K, candidates=None):
    """Support of size K (within ``candidates``) minimizing the LS residual, by enumeration."""
    cand = range(A.shape[1]) if candidates is None else candidates
    best, best_res = None, np.inf
    for S in itertools.combinations(sorted(cand), K):
        A_S = A[:, S]
        coef, *_ = np.linalg.lstsq(A_S, B, rcond=None)
        res = np.linalg.norm(B - A_S @ coef)
        if res < best_res:
            best, best_res = np.array(S), res
    return best


@pytest.fixture
def brute_support():
    return best_support_bruteforce


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
