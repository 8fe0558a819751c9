from __future__ import annotations

import pytest

from gmxb.contracts import GlwbContract, GlwbSpec, GmwbContract, GmwbSpec, PenaltySchedule
from gmxb.grid import default_grid, uniform_grid
from gmxb.model import MarketModel, constant_mortality, gompertz_makeham_table
from gmxb.stepper import StepperConfig


@pytest.fixture
def market():
    return MarketModel(sigma=0.20, r=0.04, alpha=0.015)


@pytest.fixture
def gmwb_market():
    return MarketModel(sigma=0.15, r=0.05, alpha=0.01)


@pytest.fixture
def coarse_grid():
    return default_grid(100.0, 0)


@pytest.fixture
def small_grid():
    return uniform_grid(200.0, 20)


@pytest.fixture
def fast_stepper():
    return StepperConfig(steps_per_year=10)


@pytest.fixture
def table1_penalties():
    return PenaltySchedule.from_mapping({1: 0.03, 2: 0.02, 3: 0.01, 4: 0.0})


@pytest.fixture
def table2_penalties():
    return PenaltySchedule.from_mapping(
        {1: 0.08, 2: 0.07, 3: 0.06, 4: 0.05, 5: 0.04, 6: 0.03, 7: 0.0}
    )


@pytest.fixture
def bundled_mortality():
    return gompertz_makeham_table()


@pytest.fixture
def short_glwb(table1_penalties):
    """Five-year GLWB where everybody dies at a constant rate of 0.2/year."""
    spec = GlwbSpec(delta=0.05, beta=0.06, penalties=table1_penalties,
                    ratchets=frozenset({3}), n_years=5, w0=100.0)
    return GlwbContract(spec, constant_mortality(0.2, 5.0))


@pytest.fixture
def table2_gmwb(table2_penalties):
    return GmwbContract(GmwbSpec(G=10.0, penalties=table2_penalties, n_years=10, w0=100.0))


@pytest.fixture
def short_gmwb(table2_penalties):
    return GmwbContract(GmwbSpec(G=10.0, penalties=table2_penalties, n_years=3, w0=100.0))
