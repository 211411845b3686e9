"""Fairness measures, matched pairs, and the counterfactual construction."""

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairmas.errors import LfOverlapsProtectedError, NotProtectedError
from fairmas.metrics import (
    Exact,
    MonteCarlo,
    cond_sp,
    count_fair,
    counterfactual_system,
    dem_par,
    matched_pairs,
)
from fairmas.model import AgentSpec, SystemSpec, validate_system
from fairmas.scenario import TrafficParams, build_traffic

from .generators import random_system
from .oracles import (
    oracle_cond_sp,
    oracle_count_fair,
    oracle_dem_par,
)


def with_attributes(spec: SystemSpec, rows) -> SystemSpec:
    agents = tuple(
        dataclasses.replace(agent, attributes=tuple(bits))
        for agent, bits in zip(spec.agents, rows)
    )
    return dataclasses.replace(spec, agents=agents)


def four_agent_system(rows, protected=(0,)) -> SystemSpec:
    """Agents share one null-only policy over two states; only their
    two-attribute assignments differ, which is all pair matching looks at."""
    import itertools

    from fairmas.model import TransitionEntry, TransitionSpec

    agents = tuple(
        AgentSpec(
            attributes=tuple(bits),
            actions=(0,),
            policy=((1.0,), (1.0,)),
            rewards=((0, 1, 1.0),),
        )
        for bits in rows
    )
    entries = tuple(
        TransitionEntry(state=s, joint=joint, dist=((0, 0.5), (1, 0.5)))
        for s in (0, 1)
        for joint in itertools.product((0,), repeat=len(rows))
    )
    return SystemSpec(
        num_states=2,
        start=0,
        actions=("null",),
        agents=agents,
        attribute_names=("shielded", "sturdy"),
        protected=protected,
        transition=TransitionSpec(entries=entries),
    )


# -- matched_pairs -----------------------------------------------------------


def test_matched_pairs_single_pair(twin_system):
    assert matched_pairs(twin_system, 0) == [(0, 1)]


def test_matched_pairs_with_legitimate_factor():
    spec = four_agent_system([(1, 1), (0, 1), (1, 0), (0, 0)])
    assert validate_system(spec) == []
    assert matched_pairs(spec, 0) == [(0, 1), (2, 3)]
    assert matched_pairs(spec, 0, (1,)) == [(0, 1)]


def test_matched_pairs_empty_without_counterpart():
    spec = four_agent_system([(1, 0), (1, 0)])
    assert matched_pairs(spec, 0) == []


def test_matched_pairs_rejects_protected_factor(twin_system):
    with pytest.raises(LfOverlapsProtectedError):
        matched_pairs(twin_system, 0, (0,))


# -- dem_par -----------------------------------------------------------------


def test_dem_par_twins_is_exactly_zero(twin_system):
    report = dem_par(twin_system, 0, horizon=4)
    assert report.measure == 0.0
    assert report.satisfied
    assert report.pairs[0].x == 0 and report.pairs[0].y == 1


def test_dem_par_zero_reward_system(twin_system):
    agents = tuple(
        dataclasses.replace(a, rewards=()) for a in twin_system.agents
    )
    spec = dataclasses.replace(twin_system, agents=agents)
    report = dem_par(spec, 0, horizon=3)
    assert report.measure == 0.0


def test_dem_par_no_pairs_vacuously_satisfied():
    spec = four_agent_system([(1, 0), (1, 0)])
    report = dem_par(spec, 0, horizon=2)
    assert report.measure == 0.0
    assert report.pairs == ()
    assert report.satisfied
    assert report.mean_contribution == 0.0


def test_dem_par_traffic_negative_and_matches_oracle(traffic_default):
    report = dem_par(traffic_default, 0, horizon=3)
    assert report.measure < 0.0
    assert report.measure == pytest.approx(
        oracle_dem_par(traffic_default, 0, 3), abs=1e-9
    )


def test_dem_par_not_protected_rejected(twin_system):
    with pytest.raises(NotProtectedError):
        dem_par(twin_system, 1, horizon=2)


def test_dem_par_measure_equals_sum_of_contributions(traffic_default):
    report = dem_par(traffic_default, 0, horizon=4)
    total = 0.0
    for pair in report.pairs:
        total += pair.contribution
    assert report.measure == total


# -- counterfactual_system ---------------------------------------------------


def test_counterfactual_flips_protected_column():
    spec = four_agent_system([(1, 0), (0, 1), (1, 1)])
    flipped = counterfactual_system(spec, 0)
    assert [a.attributes for a in flipped.agents] == [(0, 0), (1, 1), (0, 1)]


def test_counterfactual_is_involution():
    for seed in (0, 5, 9):
        spec = random_system(seed, attribute_sensitive=True)
        pr = spec.protected[0]
        assert counterfactual_system(counterfactual_system(spec, pr), pr) == spec


def test_counterfactual_preserves_everything_else(traffic_default):
    flipped = counterfactual_system(traffic_default, 0)
    assert flipped.transition == traffic_default.transition
    for before, after in zip(traffic_default.agents, flipped.agents):
        assert before.actions == after.actions
        assert before.policy == after.policy
        assert before.rewards == after.rewards
        assert before.attributes[1] == after.attributes[1]


# -- count_fair --------------------------------------------------------------


def test_count_fair_zero_on_attribute_insensitive_systems():
    for seed in (1, 3, 8):
        spec = random_system(seed, attribute_sensitive=False)
        report = count_fair(spec, spec.protected[0], horizon=3)
        assert report.measure == 0.0
        assert report.satisfied


def test_count_fair_empty_when_no_holder():
    spec = four_agent_system([(0, 0), (0, 1)])
    report = count_fair(spec, 0, horizon=2)
    assert report.measure == 0.0
    assert report.pairs == ()


def test_count_fair_traffic_matches_oracle(traffic_default):
    report = count_fair(traffic_default, 0, horizon=3)
    assert report.measure == pytest.approx(
        oracle_count_fair(traffic_default, 0, 3), abs=1e-9
    )
    assert report.pairs[0].x == report.pairs[0].y == 0


def test_count_fair_on_sensitive_random_systems_matches_oracle():
    for seed in (2, 6):
        spec = random_system(seed, attribute_sensitive=True)
        pr = spec.protected[0]
        report = count_fair(spec, pr, horizon=3)
        assert report.measure == pytest.approx(
            oracle_count_fair(spec, pr, 3), abs=1e-9
        )


# -- cond_sp -----------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_cond_sp_empty_factors_equals_dem_par(seed):
    spec = random_system(seed)
    pr = spec.protected[0]
    a = cond_sp(spec, pr, (), horizon=3)
    b = dem_par(spec, pr, horizon=3)
    assert a.measure == b.measure
    assert a.pairs == b.pairs
    assert a.satisfied == b.satisfied


def test_cond_sp_speed_tier_restricts_to_high_speed_pair():
    params = TrafficParams(
        corridor_length=1,
        cars=(("human", "high"), ("ai", "high"), ("human", "low"), ("ai", "low")),
    )
    spec = build_traffic(params)
    assert matched_pairs(spec, 0, (1,)) == [(0, 1)]
    report = cond_sp(spec, 0, (1,), horizon=2)
    assert report.measure == pytest.approx(oracle_cond_sp(spec, 0, (1,), 2), abs=1e-9)
    assert len(report.pairs) == 1


def test_cond_sp_no_qualifying_agents():
    spec = four_agent_system([(1, 0), (0, 0)])
    report = cond_sp(spec, 0, (1,), horizon=2)
    assert report.measure == 0.0
    assert report.pairs == ()


def test_cond_sp_rejects_protected_factor(twin_system):
    with pytest.raises(LfOverlapsProtectedError):
        cond_sp(twin_system, 0, (0,), horizon=2)


# -- scaling equivariance ----------------------------------------------------


def test_measures_scale_with_rewards(traffic_default):
    def scale(spec: SystemSpec, factor: float) -> SystemSpec:
        agents = tuple(
            dataclasses.replace(
                a, rewards=tuple((s, d, v * factor) for s, d, v in a.rewards)
            )
            for a in spec.agents
        )
        return dataclasses.replace(spec, agents=agents)

    base = dem_par(traffic_default, 0, horizon=3).measure
    assert dem_par(scale(traffic_default, 2.0), 0, horizon=3).measure == 2.0 * base
    assert dem_par(scale(traffic_default, 2.5), 0, horizon=3).measure == pytest.approx(
        2.5 * base, rel=1e-12
    )
    cf_base = count_fair(traffic_default, 0, horizon=3).measure
    assert (
        count_fair(scale(traffic_default, 2.0), 0, horizon=3).measure == 2.0 * cf_base
    )


# -- Monte Carlo method ------------------------------------------------------


def test_dem_par_mc_close_to_exact(traffic_default):
    exact = dem_par(traffic_default, 0, horizon=3)
    mc = dem_par(traffic_default, 0, horizon=3, method=MonteCarlo(40_000, seed=9))
    assert mc.std_error is not None and mc.std_error > 0.0
    assert abs(mc.measure - exact.measure) <= 4 * mc.std_error
    assert mc.ci_low <= mc.measure <= mc.ci_high


def test_dem_par_mc_deterministic(traffic_default):
    method = MonteCarlo(2000, seed=4)
    a = dem_par(traffic_default, 0, horizon=2, method=method)
    b = dem_par(traffic_default, 0, horizon=2, method=method)
    assert a == b


def test_count_fair_mc_common_random_numbers(traffic_default):
    exact = count_fair(traffic_default, 0, horizon=3)
    mc = count_fair(traffic_default, 0, horizon=3, method=MonteCarlo(40_000, seed=13))
    assert abs(mc.measure - exact.measure) <= 4 * mc.std_error
    a = count_fair(traffic_default, 0, horizon=2, method=MonteCarlo(1000, seed=8))
    b = count_fair(traffic_default, 0, horizon=2, method=MonteCarlo(1000, seed=8))
    assert a == b


def test_mc_verdict_accepts_interval_containing_zero(twin_system):
    report = dem_par(twin_system, 0, horizon=3, method=MonteCarlo(500, seed=2))
    assert report.satisfied  # twins: every per-run difference is exactly zero
    assert report.measure == 0.0


def test_exact_report_has_no_interval(twin_system):
    report = dem_par(twin_system, 0, horizon=2)
    assert report.std_error is None
    assert report.ci_low is None and report.ci_high is None
    assert isinstance(report.method, Exact)
