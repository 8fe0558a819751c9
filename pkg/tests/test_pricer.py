from __future__ import annotations

import numpy as np
import pytest

from gmxb.contracts import GlwbContract, GlwbSpec, PenaltySchedule
from gmxb.errors import CertificationError, DomainError
from gmxb.exercise import DenseSearch, ExtremePoints
from gmxb.grid import MINUS, PLUS
from gmxb.model import constant_mortality, zero_mortality
from gmxb.pricer import convergence_study, price, terminal_surface
from gmxb.stepper import StepperConfig


@pytest.fixture
def zero_glwb():
    spec = GlwbSpec(delta=0.0, beta=0.0, penalties=PenaltySchedule(((0, 1.0),)),
                    ratchets=frozenset(), n_years=3, w0=100.0)
    return GlwbContract(spec, zero_mortality(3.0))


def test_zero_contract_is_worthless(zero_glwb, market, coarse_grid, fast_stepper):
    result = price(zero_glwb, market, coarse_grid, fast_stepper, DenseSearch(21))
    assert result.value_at_origin == 0.0
    assert np.all(result.surface(0, MINUS).values == 0.0)


def test_glwb_expiry_must_reach_cutoff(table1_penalties, market, coarse_grid, fast_stepper):
    spec = GlwbSpec(delta=0.05, beta=0.06, penalties=table1_penalties, ratchets=frozenset(),
                    n_years=3, w0=100.0)
    contract = GlwbContract(spec, constant_mortality(0.1, 10.0))
    with pytest.raises(DomainError):
        price(contract, market, coarse_grid, fast_stepper, DenseSearch(21))


def test_surfaces_and_maps_cover_every_anniversary(short_glwb, market, coarse_grid,
                                                   fast_stepper):
    result = price(short_glwb, market, coarse_grid, fast_stepper, DenseSearch(21))
    assert sorted(result.control_maps) == [0, 1, 2, 3, 4]
    for n in range(5):
        assert result.surface(n, PLUS).tag == f"{n}+"
        assert result.surface(n, MINUS).tag == f"{n}-"
    assert result.surface(5, MINUS).time == 5.0
    assert result.value_at_origin > 0.0


def test_exercise_never_lowers_value(short_glwb, market, coarse_grid, fast_stepper):
    result = price(short_glwb, market, coarse_grid, fast_stepper, DenseSearch(21))
    for n in range(5):
        # lam = 0 keeps x1 and never lowers x2, and V+ is monotone in x2
        minus = result.surface(n, MINUS).values
        plus = result.surface(n, PLUS).values
        assert np.all(minus >= plus - 1e-8 * (1.0 + np.abs(plus)))


def test_glwb_extreme_points_match_dense(short_glwb, market, coarse_grid, fast_stepper):
    dense = price(short_glwb, market, coarse_grid, fast_stepper, DenseSearch(41))
    extreme = price(short_glwb, market, coarse_grid, fast_stepper, ExtremePoints())
    assert extreme.value_at_origin == pytest.approx(dense.value_at_origin, rel=1e-5)


def test_gmwb_is_worth_at_least_immediate_surrender(short_gmwb, gmwb_market, coarse_grid,
                                                    fast_stepper):
    result = price(short_gmwb, gmwb_market, coarse_grid, fast_stepper, DenseSearch(51))
    assert result.value_at_origin >= 10.0 + 0.92 * 90.0 - 1e-9


def test_gmwb_extreme_points_refused(short_gmwb, gmwb_market, coarse_grid, fast_stepper):
    with pytest.raises(CertificationError):
        price(short_gmwb, gmwb_market, coarse_grid, fast_stepper, ExtremePoints())


def test_terminal_surface_boundary_row(short_gmwb, coarse_grid):
    s = terminal_surface(short_gmwb, coarse_grid)
    assert s.tag == "3-"
    assert np.all(s.values[-1, :] == coarse_grid.x1_max)


def test_retain_all_keeps_interior_surfaces(short_gmwb, gmwb_market, coarse_grid):
    cfg = StepperConfig(steps_per_year=4)
    result = price(short_gmwb, gmwb_market, coarse_grid, cfg, DenseSearch(11), retain_all=True)
    assert len(result.interior) == 3 * 3
    assert all(s.tag.startswith("t=") for s in result.interior)


def test_cm_diagnostics_cover_every_surface(short_gmwb, gmwb_market, coarse_grid, fast_stepper):
    result = price(short_gmwb, gmwb_market, coarse_grid, fast_stepper, DenseSearch(11),
                   check_cm=True)
    assert len(result.diagnostics) == 2 * 3 + 1


def test_missing_surface_raises(short_gmwb, gmwb_market, coarse_grid, fast_stepper):
    result = price(short_gmwb, gmwb_market, coarse_grid, fast_stepper, DenseSearch(11),
                   retain_surfaces=False)
    with pytest.raises(DomainError):
        result.surface(0, MINUS)


def test_convergence_study_rows(short_gmwb, gmwb_market):
    rows = convergence_study(short_gmwb, gmwb_market, StepperConfig(steps_per_year=5),
                             DenseSearch(11), 1)
    assert [row.level for row in rows] == [0, 1]
    assert rows[0].change is None
    assert rows[1].change == pytest.approx(rows[1].value - rows[0].value)
    assert rows[1].nodes == "129x129"
    assert rows[1].mode == "dense(p=21)"
