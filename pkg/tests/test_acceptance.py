"""Acceptance suite: one test per criterion, each printing a PASS line with
its runtime (visible with ``pytest -s`` or in verbose failure output).

Expected values marked as oracle-derived come from tests/oracles.py, either
computed inline on small systems or frozen in tests/golden/ for the
full-horizon traffic instances (regenerate with ``python -m tests.gen_goldens``).
"""

from __future__ import annotations

import json
import time

import pytest

from fairmas.cli import main
from fairmas.engine import (
    enumerate_runs,
    expected_reward_exact,
    expected_reward_mc,
)
from fairmas.metrics import cond_sp, count_fair, counterfactual_system, dem_par
from fairmas.model import AgentSpec, SystemSpec, TransitionEntry, TransitionSpec
from fairmas.optimize import (
    ConfigSpace,
    Objective,
    RealParam,
    evolutionary_search,
    grid_search,
    traffic_space,
)

from .conftest import GOLDEN_DIR, make_coin_system, make_twin_system
from .generators import random_system
from .oracles import brute_force_expected_reward

RANDOM_SEEDS = range(20)


class Timer:
    def __enter__(self):
        self.started = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.started
        return False


def report(criterion: int, label: str, timer: Timer, bound: float) -> None:
    print(f"ACCEPTANCE {criterion}: PASS - {label} ({timer.elapsed:.2f}s < {bound:.0f}s)")
    assert timer.elapsed < bound, f"criterion {criterion} exceeded {bound}s"


def test_criterion_1_normalization_suite():
    with Timer() as timer:
        for seed in RANDOM_SEEDS:
            spec = random_system(seed, attribute_sensitive=seed % 2 == 0)
            for horizon in (1, 2, 3, 4):
                mass = sum(r.probability for r in enumerate_runs(spec, horizon))
                assert abs(mass - 1.0) <= 1e-9, (seed, horizon, mass)
    report(1, "run probabilities sum to 1 on 20 random systems, H in 1..4", timer, 5.0)


def test_criterion_2_oracle_equivalence():
    with Timer() as timer:
        for seed in RANDOM_SEEDS:
            spec = random_system(seed, attribute_sensitive=seed % 3 == 0)
            for agent in range(len(spec.agents)):
                for horizon in (2, 3):
                    got = expected_reward_exact(spec, agent, horizon)
                    want = brute_force_expected_reward(spec, agent, horizon)
                    assert got == pytest.approx(want, rel=1e-12, abs=1e-12), (
                        seed,
                        agent,
                        horizon,
                    )
    report(2, "exact expected rewards match the brute-force oracle to 1e-12", timer, 10.0)


def test_criterion_3_estimator_consistency(traffic_default):
    coin = make_coin_system()
    with Timer() as timer:
        for label, spec, horizon in (
            ("coin", coin, 1),
            ("traffic", traffic_default, 6),
        ):
            exact = expected_reward_exact(spec, 0, horizon)
            hits = 0
            for seed in range(100):
                result = expected_reward_mc(spec, 0, horizon, 100_000, seed)
                hits += abs(result.mean - exact) <= 3 * result.std_error
            assert hits >= 97, (label, hits)
    report(3, "MC mean within 3 standard errors for >= 97/100 seeds", timer, 60.0)


def test_criterion_4_metric_identities():
    with Timer() as timer:
        # (a) conditional statistical parity with no factors == demographic parity
        for seed in RANDOM_SEEDS:
            spec = random_system(seed)
            pr = spec.protected[0]
            a = cond_sp(spec, pr, (), horizon=3)
            b = dem_par(spec, pr, horizon=3)
            assert a.measure == b.measure and a.pairs == b.pairs
        # (b) counterfactual construction is a bit-exact involution
        for seed in RANDOM_SEEDS:
            spec = random_system(seed, attribute_sensitive=seed % 2 == 0)
            pr = spec.protected[0]
            assert counterfactual_system(counterfactual_system(spec, pr), pr) == spec
        # (c) counterfactual fairness is 0 on attribute-insensitive systems
        for seed in RANDOM_SEEDS:
            spec = random_system(seed, attribute_sensitive=False)
            result = count_fair(spec, spec.protected[0], horizon=3)
            assert abs(result.measure) <= 1e-9
            assert result.satisfied
        # (d) demographic parity is 0 on the symmetric twin fixture
        twin = dem_par(make_twin_system(), 0, horizon=5)
        assert twin.measure == 0.0 and twin.satisfied
    report(4, "metric identities (CondSP=DemPar, involution, CountFair=0, twins)", timer, 10.0)


def test_criterion_5_traffic_fixture_behavior(
    traffic_default, traffic_lane, golden_values
):
    with Timer() as timer:
        horizon = golden_values["horizon"]
        baseline = dem_par(traffic_default, 0, horizon=horizon)
        lane = dem_par(traffic_lane, 0, horizon=horizon)
        assert baseline.measure < 0.0
        assert baseline.measure == pytest.approx(
            golden_values["dem_par_baseline"], abs=1e-9
        )
        assert lane.measure == pytest.approx(golden_values["dem_par_lane"], abs=1e-9)
        assert abs(lane.measure) < abs(baseline.measure)
        cf = count_fair(traffic_default, 0, horizon=horizon)
        assert cf.measure == pytest.approx(
            golden_values["count_fair_baseline"], abs=1e-9
        )
    report(5, "traffic DemPar negative, matches frozen oracle, lane narrows it", timer, 30.0)


def _gap_space() -> ConfigSpace:
    def binder(config) -> SystemSpec:
        p = float(config["p"])
        agents = (
            AgentSpec(
                attributes=(1, 0), actions=(0,), policy=((1.0,),), rewards=((0, 0, p),)
            ),
            AgentSpec(
                attributes=(0, 0), actions=(0,), policy=((1.0,),), rewards=((0, 0, 0.5),)
            ),
        )
        return SystemSpec(
            num_states=1,
            start=0,
            actions=("null",),
            agents=agents,
            attribute_names=("shielded", "sturdy"),
            protected=(0,),
            transition=TransitionSpec(
                entries=(TransitionEntry(0, (0, 0), ((0, 1.0),)),)
            ),
        )

    return ConfigSpace(parameters=(RealParam("p", 0.0, 1.0),), binder=binder)


def test_criterion_6_optimizer_correctness(golden_values):
    with Timer() as timer:
        objective = Objective(metric="DEM_PAR", protected="human_driven", horizon=6)
        result = grid_search(traffic_space(["dedicated_lane"]), objective)
        oracle_best = min(
            (abs(golden_values["dem_par_lane"]), {"dedicated_lane": True}),
            (abs(golden_values["dem_par_baseline"]), {"dedicated_lane": False}),
        )
        assert result.best_config == oracle_best[1]

        space = _gap_space()
        gap_objective = Objective(metric="DEM_PAR", protected="shielded", horizon=1)
        grid = grid_search(space, gap_objective, resolution=301)
        wins = 0
        for seed in range(10):
            evo = evolutionary_search(
                space,
                gap_objective,
                budget=300,
                population=10,
                offspring=10,
                mutation_scale=0.1,
                seed=seed,
            )
            wins += evo.best_value <= grid.best_value + 0.01
        assert wins >= 9, wins
    report(6, "grid picks oracle-fairer lane config; evolution matches grid oracle", timer, 30.0)


def test_criterion_7_determinism_byte_identical_reports(capsys):
    path = str(GOLDEN_DIR / "traffic_default.fairmas.json")
    with Timer() as timer:
        metric_args = [
            "metric", path, "--metric", "dempar", "--protected", "human_driven",
            "--horizon", "6", "--method", "mc", "--samples", "100000", "--seed", "7",
        ]
        optimize_args = [
            "optimize", "--family", "traffic", "--search", "dedicated_lane",
            "--metric", "dempar", "--protected", "human_driven", "--horizon", "6",
            "--optimizer", "evolution", "--budget", "10", "--population", "3",
            "--offspring", "3", "--seed", "11",
        ]
        outputs = []
        for args in (metric_args, metric_args, optimize_args, optimize_args):
            code = main(list(args))
            assert code in (0, 3)
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1] and outputs[0]
        assert outputs[2] == outputs[3] and outputs[2]
        payload = json.loads(outputs[0])["payload"]
        assert payload["method"] == {"kind": "mc", "samples": 100000, "seed": 7}
    with capsys.disabled():
        report(7, "repeated MC metric and optimizer reports are byte-identical", timer, 60.0)
