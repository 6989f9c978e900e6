import sys
import warnings

import numpy as np
import pytest

from catparc import GroupPenaltySpec, SimDesign, encode, one_vs_rest_all, simulate


@pytest.fixture(scope="session")
def small_family():
    """Latent-Gaussian alignment with 3 groups of 3 positions and its truth."""
    design = SimDesign(u=3, h=3, N=800, seed=11, r=0.6, quantiles=(0.25, 0.5, 0.75))
    return simulate(design)


@pytest.fixture(scope="session")
def small_cache(small_family):
    a, _ = small_family
    enc = encode(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cache = one_vs_rest_all(enc, GroupPenaltySpec())
    return cache


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
