import numpy as np
import pytest

from comptarget.core import Clause, ClauseUniverse, CovariateTable, RctDataset


def make_universe(*truths, labels=None):
    """Universe from raw truth vectors; labels default to A, B, C, ..."""
    labels = labels or [chr(ord("A") + j) for j in range(len(truths))]
    clauses = [Clause(j, lab, np.asarray(t, dtype=bool)) for j, (lab, t) in enumerate(zip(labels, truths))]
    return ClauseUniverse(clauses)


def make_data(W, Y, e=0.5, **covariates):
    n = len(W)
    table = CovariateTable.from_columns(covariates or {"x": np.zeros(n)}, {"x": "continuous"} if not covariates else None)
    return RctDataset.create(table, W, Y, e)


def random_universe(rng, n, k, density=None):
    truths = []
    for _ in range(k):
        p = density if density is not None else rng.uniform(0.1, 0.9)
        truths.append(rng.random(n) < p)
    return make_universe(*truths, labels=[f"c{j}" for j in range(k)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
