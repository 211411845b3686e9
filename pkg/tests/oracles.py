"""Independent brute-force oracles used to cross-check the engine and metrics.

Everything here recomputes results straight from the data model by literal
recursion over the run tree: no state-distribution propagation, no caching of
partial sums, no code shared with fairmas.engine or fairmas.metrics.  The
only concession to speed is indexing transition entries by (state, joint)
before walking, which does not change what is computed.
"""

from __future__ import annotations

import dataclasses

from fairmas.model import Run, SystemSpec


class OracleIndex:
    """Entry lookup and per-state joint-action tables for one system."""

    def __init__(self, spec: SystemSpec):
        self.spec = spec
        profile = tuple(agent.attributes for agent in spec.agents)
        self.dists: dict[tuple[int, tuple[int, ...]], tuple] = {}
        for entry in spec.transition.entries:
            if entry.profile is not None and entry.profile != profile:
                continue
            key = (entry.state, entry.joint)
            if key in self.dists:
                raise AssertionError(f"ambiguous transition for {key}")
            self.dists[key] = entry.dist

        self.joints: dict[int, list[tuple[tuple[int, ...], float]]] = {}
        for state in range(spec.num_states):
            combos: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
            for agent in spec.agents:
                options = sorted(
                    (action, agent.policy[state][j])
                    for j, action in enumerate(agent.actions)
                    if agent.policy[state][j] > 0.0
                )
                combos = [
                    (joint + (action,), p * pa)
                    for joint, p in combos
                    for action, pa in options
                ]
            self.joints[state] = combos

        self.rewards = [dict() for _ in spec.agents]
        for x, agent in enumerate(spec.agents):
            for src, dst, value in agent.rewards:
                self.rewards[x][(src, dst)] = value


def brute_force_runs(spec: SystemSpec, horizon: int) -> list[Run]:
    """Every positive-probability run of the given length, with probabilities,
    in depth-first (ascending actions, ascending next states) order."""
    index = OracleIndex(spec)
    runs: list[Run] = []

    def recurse(state, depth, prob, states, joints):
        if depth == horizon:
            runs.append(Run(tuple(states), tuple(joints), prob))
            return
        for joint, pj in index.joints[state]:
            for ns, pt in index.dists[(state, joint)]:
                if pt <= 0.0:
                    continue
                recurse(
                    ns,
                    depth + 1,
                    prob * pj * pt,
                    states + [ns],
                    joints + [joint],
                )

    recurse(spec.start, 0, 1.0, [spec.start], [])
    return runs


def brute_force_expected_rewards(spec: SystemSpec, horizon: int) -> list[float]:
    """Expected reward of every agent, summed leaf by leaf over the run tree."""
    index = OracleIndex(spec)
    n = len(spec.agents)
    totals = [0.0] * n

    def recurse(state, depth, prob, rewards):
        if depth == horizon:
            for x in range(n):
                totals[x] += rewards[x] * prob
            return
        for joint, pj in index.joints[state]:
            for ns, pt in index.dists[(state, joint)]:
                if pt <= 0.0:
                    continue
                recurse(
                    ns,
                    depth + 1,
                    prob * pj * pt,
                    [rewards[x] + index.rewards[x].get((state, ns), 0.0) for x in range(n)],
                )

    recurse(spec.start, 0, 1.0, [0.0] * n)
    return totals


def brute_force_expected_reward(spec: SystemSpec, agent: int, horizon: int) -> float:
    return brute_force_expected_rewards(spec, horizon)[agent]


def oracle_matched_pairs(spec, pr, lf=()):
    pairs = []
    m = len(spec.attribute_names)
    for x, ax in enumerate(spec.agents):
        for y, ay in enumerate(spec.agents):
            if x == y:
                continue
            if ax.attributes[pr] != 1 or ay.attributes[pr] != 0:
                continue
            if any(ax.attributes[f] != 1 or ay.attributes[f] != 1 for f in lf):
                continue
            if all(ax.attributes[i] == ay.attributes[i] for i in range(m) if i != pr):
                pairs.append((x, y))
    return sorted(pairs)


def oracle_dem_par(spec: SystemSpec, pr: int, horizon: int) -> float:
    rewards = brute_force_expected_rewards(spec, horizon)
    return sum(rewards[x] - rewards[y] for x, y in oracle_matched_pairs(spec, pr))


def oracle_cond_sp(spec: SystemSpec, pr: int, lf, horizon: int) -> float:
    rewards = brute_force_expected_rewards(spec, horizon)
    return sum(rewards[x] - rewards[y] for x, y in oracle_matched_pairs(spec, pr, lf))


def oracle_counterfactual(spec: SystemSpec, pr: int) -> SystemSpec:
    agents = tuple(
        dataclasses.replace(
            agent,
            attributes=tuple(
                (1 - bit) if i == pr else bit for i, bit in enumerate(agent.attributes)
            ),
        )
        for agent in spec.agents
    )
    return dataclasses.replace(spec, agents=agents)


def oracle_count_fair(spec: SystemSpec, pr: int, horizon: int) -> float:
    factual = brute_force_expected_rewards(spec, horizon)
    counter = brute_force_expected_rewards(oracle_counterfactual(spec, pr), horizon)
    return sum(
        factual[x] - counter[x]
        for x, agent in enumerate(spec.agents)
        if agent.attributes[pr] == 1
    )
