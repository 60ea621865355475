import pytest

from consfloor import (
    SolverConfig,
    invert,
    make_spec,
    solve_dual,
    solve_state_independent,
)
from consfloor.dual_solver import default_config

BASE = dict(r=0.03, mu=0.05, sigma=0.2, beta=0.1, p=0.5)


@pytest.fixture(scope="session")
def spec_merton():
    return make_spec(**BASE)


@pytest.fixture(scope="session")
def spec_homog():
    return make_spec(**BASE, k=0.2)


@pytest.fixture(scope="session")
def spec_si():
    """Fixed floor: k = 0, l = 1."""
    return make_spec(**BASE, k=0.0, l=1.0)


@pytest.fixture(scope="session")
def spec_nh():
    """Wealth-dependent floor: k = 0.02, l = 1."""
    return make_spec(**BASE, k=0.02, l=1.0)


@pytest.fixture(scope="session")
def si_sol(spec_si):
    return solve_state_independent(spec_si)


@pytest.fixture(scope="session")
def si_grid(spec_si):
    """The fixed-floor solve on the oracle-comparison grid."""
    return solve_dual(spec_si, SolverConfig(y_min=1e-3, y_max=1e3, n_nodes=4096))


@pytest.fixture(scope="session")
def si_table(spec_si, si_grid):
    return invert(spec_si, si_grid)


@pytest.fixture(scope="session")
def nh_grid(spec_nh):
    return solve_dual(spec_nh, default_config(spec_nh, span=1e3))


@pytest.fixture(scope="session")
def nh_table(spec_nh, nh_grid):
    return invert(spec_nh, nh_grid)
