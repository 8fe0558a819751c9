from __future__ import annotations

import numpy as np
import pytest

from gmxb.contracts import GlwbContract, GlwbSpec, GmwbContract, GmwbSpec
from gmxb.diagnostics import homogeneity_check
from gmxb.errors import CertificationError, DomainError
from gmxb.exercise import (
    DenseSearch,
    ExtremePoints,
    apply_exercise,
    bang_bang_gap,
    candidate_occupancy,
    dense_partition,
    glwb_label,
)
from gmxb.grid import MINUS, PLUS, ValueSurface
from gmxb.model import zero_mortality


def plus_surface(grid, values, n):
    return ValueSurface(grid, values, float(n), PLUS, n)


def test_dense_partition_contains_endpoints_and_integers():
    points = dense_partition(0.0, 2.0, 201)
    assert points[0] == 0.0 and points[-1] == 2.0
    assert points[100] == 1.0
    assert len(points) == 201


def test_labels():
    assert glwb_label(0.0) == "nonwithdrawal"
    assert glwb_label(1.0) == "contract-rate"
    assert glwb_label(2.0) == "surrender"
    assert glwb_label(1.37) == "fractional"


def test_expects_plus_surface(short_glwb, small_grid):
    s = ValueSurface(small_grid, np.zeros(small_grid.shape), 1.0, MINUS, 1)
    with pytest.raises(DomainError):
        apply_exercise(s, short_glwb, 1, DenseSearch(11))


def test_zero_continuation_prefers_surrender(short_glwb, small_grid):
    # nothing is worth holding on to, so take everything now
    v_plus = plus_surface(small_grid, np.zeros(small_grid.shape), 1)
    v_minus, control = apply_exercise(v_plus, short_glwb, 1, DenseSearch(21))
    x1, x2 = small_grid.mesh()
    interior = (x1 > x2 * 0.05 + 1e-9) & (x2 > 0)
    assert np.all(control.lambda_star[interior] == 2.0)
    assert v_minus.tag == "1-"
    assert np.all(v_minus.values >= 0.0)


def test_value_is_maximum_over_candidates(short_glwb, small_grid):
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, 0.9 * x1 + 0.5 * x2, 2)
    v_minus, _ = apply_exercise(v_plus, short_glwb, 2, ExtremePoints())
    for lam in (0.0, 1.0, 2.0):
        y1, y2, cash = short_glwb.transition(x1, x2, 2, lam)
        y1, y2 = small_grid.clamp(y1, y2)
        assert np.all(v_minus.values >= v_plus.evaluate(y1, y2) + cash - 1e-9)


def test_glwb_dense_and_extreme_agree_on_linear_continuation(short_glwb, small_grid):
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, 0.8 * x1 + 0.7 * x2, 1)
    gap = bang_bang_gap(v_plus, short_glwb, 1, p=41)
    assert np.max(gap / (1.0 + np.abs(v_plus.values))) <= 1e-9


def test_ties_pick_smallest_action(short_glwb, small_grid):
    # at x1 = x2 = 0 every action gives the same value
    v_plus = plus_surface(small_grid, np.zeros(small_grid.shape), 1)
    _, control = apply_exercise(v_plus, short_glwb, 1, DenseSearch(21))
    assert control.lambda_star[0, 0] == 0.0


def test_gmwb_extreme_points_refused_when_uncertified(short_gmwb, small_grid):
    v_plus = plus_surface(small_grid, np.zeros(small_grid.shape), 1)
    with pytest.raises(CertificationError):
        apply_exercise(v_plus, short_gmwb, 1, ExtremePoints())


def test_gmwb_extreme_points_override(short_gmwb, small_grid):
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, np.maximum(x1, x2), 1)
    _, control = apply_exercise(v_plus, short_gmwb, 1, ExtremePoints(allow_uncertified=True))
    assert not control.certified


def test_gmwb_penalty_free_controls_are_candidates(table2_penalties, small_grid):
    contract = GmwbContract(GmwbSpec(G=10.0, penalties=table2_penalties, n_years=10, w0=100.0))
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, 0.95 * x1 + 0.9 * x2, 8)
    _, control = apply_exercise(v_plus, contract, 8, DenseSearch(101))
    assert candidate_occupancy(control, contract, 101) == 1.0


def test_histogram_counts_every_node(short_glwb, small_grid):
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, 0.9 * x1 + 0.6 * x2, 1)
    _, control = apply_exercise(v_plus, short_glwb, 1, DenseSearch(21))
    assert sum(control.histogram().values()) == small_grid.shape[0] * small_grid.shape[1]


def test_scaled_withdrawal(short_gmwb, small_grid):
    v_plus = plus_surface(small_grid, np.zeros(small_grid.shape), 2)
    _, control = apply_exercise(v_plus, short_gmwb, 2, DenseSearch(11))
    _, x2 = small_grid.mesh()
    assert np.allclose(control.scaled_withdrawal(), control.lambda_star * x2)


@pytest.fixture
def immortal_glwb(table1_penalties):
    spec = GlwbSpec(delta=0.05, beta=0.06, penalties=table1_penalties,
                    ratchets=frozenset(), n_years=5, w0=100.0)
    return GlwbContract(spec, zero_mortality(5.0))


def test_empty_account_takes_the_contract_rate(immortal_glwb, small_grid):
    v_plus = plus_surface(small_grid, np.zeros(small_grid.shape), 1)
    v_minus, control = apply_exercise(v_plus, immortal_glwb, 1, DenseSearch(21))
    i, j = small_grid.nearest_indices(np.array([0.0]), np.array([100.0]))
    assert v_minus.values[i[0], j[0]] == pytest.approx(5.0)
    assert control.lambda_star[i[0], j[0]] == 1.0


def test_homogeneous_continuation_is_bang_bang(immortal_glwb, small_grid):
    # convex, degree-one homogeneous, with a negative cross derivative that
    # bilinear reads would overshoot
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, np.hypot(x1, x2), 1)
    gap = bang_bang_gap(v_plus, immortal_glwb, 1, p=41)
    assert np.max(gap / (1.0 + np.abs(v_plus.values))) <= 1e-9
    _, control = apply_exercise(v_plus, immortal_glwb, 1, DenseSearch(41))
    assert candidate_occupancy(control, immortal_glwb, 41) == 1.0


def test_dense_value_grows_with_nested_partitions(short_glwb, small_grid):
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, np.sqrt(x1 * x2 + 1.0) + 0.3 * x1, 1)
    values = [apply_exercise(v_plus, short_glwb, 1, DenseSearch(p))[0].values
              for p in (11, 21, 41)]
    assert np.all(values[1] >= values[0] - 1e-12)
    assert np.all(values[2] >= values[1] - 1e-12)


def test_gmwb_empty_benefit_base_is_left_alone(short_gmwb, small_grid):
    x1, x2 = small_grid.mesh()
    v_plus = plus_surface(small_grid, np.maximum(x1, 0.9 * x2), 2)
    v_minus, control = apply_exercise(v_plus, short_gmwb, 2, DenseSearch(21))
    assert np.allclose(v_minus.values[:, 0], v_plus.values[:, 0])
    assert np.all(control.lambda_star[:, 0] == 0.0)


def test_penalized_gmwb_with_bent_continuation_beats_candidates(table2_gmwb, small_grid):
    # continuation drops steeply once the account falls below 150, so the
    # best withdrawal from (200, 100) at n = 6 is half the benefit base
    x1, _ = small_grid.mesh()
    v_plus = plus_surface(small_grid, -2.0 * np.maximum(150.0 - x1, 0.0), 6)
    gap = bang_bang_gap(v_plus, table2_gmwb, 6, p=101)
    i, j = small_grid.nearest_indices(np.array([200.0]), np.array([100.0]))
    assert gap[i[0], j[0]] == pytest.approx(38.8)
    _, control = apply_exercise(v_plus, table2_gmwb, 6, DenseSearch(101))
    assert control.lambda_star[i[0], j[0]] == pytest.approx(0.5)


def test_exercise_keeps_a_homogeneous_surface_homogeneous(immortal_glwb, coarse_grid):
    x1, x2 = coarse_grid.mesh()
    v_plus = plus_surface(coarse_grid, 0.9 * x1 + 0.5 * x2, 1)
    v_minus, _ = apply_exercise(v_plus, immortal_glwb, 1, DenseSearch(21))
    assert homogeneity_check(v_minus, 2.0) <= 1e-10
