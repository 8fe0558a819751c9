from __future__ import annotations

import numpy as np
import pytest

from gmxb.contracts import (
    GlwbContract,
    GlwbSpec,
    GmwbContract,
    GmwbSpec,
    PenaltySchedule,
    candidate_set,
    find_cash_convexity_violation,
    glwb_event,
    glwb_payoff,
    gmwb_event,
    gmwb_payoff,
)
from gmxb.errors import DomainError
from gmxb.model import ContractState, survival, zero_mortality


@pytest.fixture
def glwb_spec(table1_penalties):
    return GlwbSpec(delta=0.05, beta=0.06, penalties=table1_penalties,
                    ratchets=frozenset({3, 6}), n_years=57, w0=100.0)


@pytest.fixture
def gmwb_spec(table2_penalties):
    return GmwbSpec(G=10.0, penalties=table2_penalties, n_years=10, w0=100.0)


def test_penalty_schedule_is_a_step_function(table1_penalties):
    assert table1_penalties.rate(0) == 0.03
    assert table1_penalties.rate(1) == 0.03
    assert table1_penalties.rate(3) == 0.01
    assert table1_penalties.rate(40) == 0.0
    assert PenaltySchedule().rate(5) == 0.0


def test_penalty_rate_range():
    with pytest.raises(DomainError):
        PenaltySchedule.from_mapping({1: 1.5})


def test_glwb_nonwithdrawal_adds_bonus(glwb_spec, bundled_mortality):
    out = glwb_event(glwb_spec, bundled_mortality, ContractState(100, 100), 1, 0.0)
    assert out.new_state.x1 == 100.0
    assert out.new_state.x2 == pytest.approx(106.0)
    assert out.cash == 0.0


def test_glwb_nonwithdrawal_ratchets(glwb_spec, bundled_mortality):
    out = glwb_event(glwb_spec, bundled_mortality, ContractState(150, 100), 3, 0.0)
    assert out.new_state.x2 == pytest.approx(150.0)


def test_glwb_contract_rate_withdrawal(glwb_spec, bundled_mortality):
    out = glwb_event(glwb_spec, bundled_mortality, ContractState(100, 100), 1, 1.0)
    assert out.new_state.x1 == pytest.approx(95.0)
    assert out.new_state.x2 == pytest.approx(100.0)
    assert out.cash == pytest.approx(5.0 * survival(bundled_mortality, 1.0))


def test_glwb_surrender(glwb_spec):
    m = zero_mortality(57.0)
    out = glwb_event(glwb_spec, m, ContractState(100, 100), 1, 2.0)
    assert out.new_state == ContractState(0.0, 0.0)
    assert out.cash == pytest.approx(5.0 + 0.97 * 95.0)


def test_glwb_surrender_with_empty_account(glwb_spec):
    m = zero_mortality(57.0)
    out = glwb_event(glwb_spec, m, ContractState(0, 100), 4, 2.0)
    assert out.cash == pytest.approx(5.0)


def test_glwb_rejects_out_of_range_action(glwb_spec, bundled_mortality):
    with pytest.raises(DomainError):
        glwb_event(glwb_spec, bundled_mortality, ContractState(100, 100), 1, 2.5)


def test_glwb_payoff_is_zero():
    assert glwb_payoff(ContractState(123.0, 45.0)) == 0.0


def test_gmwb_free_withdrawal(gmwb_spec):
    out = gmwb_event(gmwb_spec, ContractState(100, 100), 1, 0.1)
    assert (out.new_state.x1, out.new_state.x2) == pytest.approx((90.0, 90.0))
    assert out.cash == pytest.approx(10.0)


def test_gmwb_excess_withdrawal_is_penalized(gmwb_spec):
    out = gmwb_event(gmwb_spec, ContractState(100, 100), 1, 1.0)
    assert out.new_state == ContractState(0.0, 0.0)
    assert out.cash == pytest.approx(10.0 + 0.92 * 90.0)


def test_gmwb_rejects_out_of_range_action(gmwb_spec):
    with pytest.raises(DomainError):
        gmwb_event(gmwb_spec, ContractState(100, 100), 1, 1.2)


def test_gmwb_payoff(gmwb_spec):
    assert gmwb_payoff(gmwb_spec, ContractState(50, 80)) == 80.0
    assert gmwb_payoff(gmwb_spec, ContractState(90, 80)) == 90.0


def test_glwb_candidates(glwb_spec, bundled_mortality):
    cs = candidate_set(GlwbContract(glwb_spec, bundled_mortality), ContractState(100, 100), 2)
    assert cs.actions == (0.0, 1.0, 2.0)
    assert cs.certified


def test_gmwb_candidates(gmwb_spec):
    contract = GmwbContract(gmwb_spec)
    cs = candidate_set(contract, ContractState(100, 50), 7)
    assert cs.actions == (0.0, pytest.approx(0.2), 1.0)
    assert cs.certified
    assert not candidate_set(contract, ContractState(100, 50), 3).certified


def test_gmwb_candidates_with_small_benefit(gmwb_spec):
    cs = candidate_set(GmwbContract(gmwb_spec), ContractState(100, 5), 8)
    assert cs.actions == (0.0, 1.0)


def test_vectorized_transition_matches_scalar(gmwb_spec):
    contract = GmwbContract(gmwb_spec)
    x1 = np.array([50.0, 100.0, 150.0])
    x2 = np.array([100.0, 20.0, 5.0])
    y1, y2, cash = contract.transition(x1, x2, 2, 0.5)
    for k in range(3):
        out = gmwb_event(gmwb_spec, ContractState(x1[k], x2[k]), 2, 0.5)
        assert (y1[k], y2[k], cash[k]) == pytest.approx(
            (out.new_state.x1, out.new_state.x2, out.cash))


def test_cash_convexity_violation_with_penalty(gmwb_spec):
    contract = GmwbContract(gmwb_spec)
    lattice = np.linspace(0.0, 200.0, 21)
    found = find_cash_convexity_violation(contract, 3, 1.0, lattice, lattice)
    assert found is not None
    a, b, mid = found
    assert mid.x2 == pytest.approx(0.5 * (a.x2 + b.x2))


def test_no_cash_convexity_violation_without_penalty(gmwb_spec):
    contract = GmwbContract(gmwb_spec)
    lattice = np.linspace(0.0, 200.0, 21)
    assert find_cash_convexity_violation(contract, 8, 1.0, lattice, lattice) is None


def test_no_cash_convexity_violation_without_contract_amount(table2_penalties):
    contract = GmwbContract(GmwbSpec(G=0.0, penalties=table2_penalties, n_years=10, w0=100.0))
    lattice = np.linspace(0.0, 200.0, 21)
    assert find_cash_convexity_violation(contract, 3, 1.0, lattice, lattice) is None


def test_glwb_surrender_states_lie_on_the_contract_rate_ray(glwb_spec, bundled_mortality):
    contract = GlwbContract(glwb_spec, bundled_mortality)
    x1 = np.array([300.0, 40.0, 0.0])
    x2 = np.array([100.0, 100.0, 50.0])
    lam = np.array([1.4, 1.4, 1.4])
    anchor, scale = contract.ray_anchor(lam)
    assert np.all(anchor == 1.0) and np.allclose(scale, 0.6)
    y1, y2, _ = contract.transition(x1, x2, 3, lam)
    a1, a2, _ = contract.transition(x1, x2, 3, anchor)
    assert np.allclose(y1, scale * a1) and np.allclose(y2, scale * a2)


def test_ray_anchor_leaves_other_actions_alone(glwb_spec, gmwb_spec, bundled_mortality):
    lam = np.array([0.0, 0.3, 1.0])
    anchor, scale = GlwbContract(glwb_spec, bundled_mortality).ray_anchor(lam)
    assert np.array_equal(anchor, lam) and np.all(scale == 1.0)
    anchor, scale = GmwbContract(gmwb_spec).ray_anchor(np.array([0.2, 1.0]))
    assert np.array_equal(anchor, [0.2, 1.0]) and np.all(scale == 1.0)
