import numpy as np
import pytest
from scipy.stats import ortho_group

from ikapprox.kernels import FiniteRankKernel


def random_spd(rng, n, floor=1e-3):
    R = rng.standard_normal((n, n))
    return R @ R.T + floor * np.eye(n)


def random_psd(rng, n, rank=None):
    R = rng.standard_normal((n, rank or n))
    return R @ R.T


def finite_rank_kernel(rng, d, r):
    U = ortho_group.rvs(d, random_state=int(rng.integers(2**31)))[:r]
    return FiniteRankKernel(rng.uniform(0.5, 2.0, size=r), U)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one "PASS/FAIL criterion: detail" line per acceptance criterion
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
