"""Shared heavyweight fixtures: Monte Carlo pseudo-truths are computed once
per session and reused by the unit and acceptance suites."""

import pytest

from lrboot import simlab as sl


@pytest.fixture(scope="session")
def sc1_probit_truth():
    """SC1 probit pseudo-truth at n=2000 with the full 10^4 replications."""
    return sl.pseudo_truth("SC1_probit", n=2000, reps=10_000, seed=42)


@pytest.fixture(scope="session")
def sc1_probit_truth_n500():
    return sl.pseudo_truth("SC1_probit", n=500, reps=3000, seed=42)


@pytest.fixture(scope="session")
def sc11_truth():
    return sl.pseudo_truth("SC11", n=2000, reps=10_000, seed=42)
