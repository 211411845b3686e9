"""Run enumeration, sampling, and exact or Monte Carlo expected rewards.

A run of horizon H is scored as the product over steps of every agent's
policy probability for its chosen action times the transformer probability of
the realized next state.  Expected rewards are probability-weighted sums of
per-run rewards over all H-step runs.

``expected_reward_exact`` computes that sum by propagating the state
distribution step by step (the dynamics are Markov in the state, so the sum
over runs factorizes); it never materializes runs and is immune to the
enumeration cap.  ``enumerate_runs`` materializes the run set itself, in a
deterministic depth-first order, for callers that need the runs.

Monte Carlo estimation draws every uniform from a counter-based stream
(see ``rng``): the j-th draw of step t of sample i sits at a fixed counter,
so estimates depend only on (spec, horizon, samples, seed), never on how
samples are partitioned across workers.  One uniform is consumed per agent
per step plus one for the state transition, whether or not the choice is
degenerate, which keeps the layout fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from . import rng
from .errors import (
    EnumerationCapExceededError,
    IndexOutOfRangeError,
    ShapeMismatchError,
    TransitionLookupError,
)
from .model import Run, SystemSpec, attribute_profile

DEFAULT_ENUMERATION_CAP = 10_000_000

# 95% two-sided normal quantile used for all confidence intervals.
Z_95 = 1.96

# Dense |E| x |E| reward matrices are only built below this state count;
# larger systems fall back to sparse dictionary lookups.
_DENSE_REWARD_LIMIT = 2048


@dataclass(frozen=True)
class EstimatorResult:
    """A Monte Carlo mean with its normal-approximation 95% interval."""

    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    samples: int
    seed: int
    horizon: int


class _Compiled:
    """Array/caching view of a SystemSpec used by every engine operation."""

    def __init__(self, spec: SystemSpec) -> None:
        self.spec = spec
        self.n = len(spec.agents)
        self.num_states = spec.num_states
        self.profile = attribute_profile(spec)

        self.action_ids: list[np.ndarray] = []
        self.local_index: list[dict[int, int]] = []
        self.policy: list[np.ndarray] = []
        self.policy_cdf: list[np.ndarray] = []
        for agent in spec.agents:
            ids = np.asarray(agent.actions, dtype=np.int64)
            self.action_ids.append(ids)
            self.local_index.append({a: j for j, a in enumerate(agent.actions)})
            probs = np.asarray(agent.policy, dtype=np.float64)
            self.policy.append(probs)
            self.policy_cdf.append(_cdf_rows(probs))

        self._entry_index: dict[tuple[int, tuple[int, ...]], list] = {}
        for entry in spec.transition.entries:
            self._entry_index.setdefault((entry.state, entry.joint), []).append(entry)

        self._dist_cache: dict[tuple[int, tuple[int, ...]], tuple] = {}
        self._trans_cdf: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._joints_pos: dict[int, list[tuple[tuple[int, ...], float]]] = {}
        self._kernel: dict[int, np.ndarray] = {}
        self._step_reward: dict[int, np.ndarray] = {}
        self._reward_dense: dict[int, np.ndarray] = {}
        self._reward_sparse: dict[int, dict[tuple[int, int], float]] = {}

    # -- transitions ---------------------------------------------------

    def resolve(self, state: int, joint: tuple[int, ...]) -> tuple:
        """The unique distribution for (state, joint) under the actual profile."""
        key = (state, joint)
        dist = self._dist_cache.get(key)
        if dist is not None:
            return dist
        matching = [
            e
            for e in self._entry_index.get(key, [])
            if e.profile is None or e.profile == self.profile
        ]
        if len(matching) != 1:
            raise TransitionLookupError(
                f"{len(matching)} transition entries match state {state}, joint {joint}; "
                "expected exactly one",
                state=state,
                joint=joint,
            )
        dist = matching[0].dist
        self._dist_cache[key] = dist
        return dist

    def joint_code(self, state: int, local: Sequence[int]) -> int:
        code = state
        for x in range(self.n):
            code = code * len(self.action_ids[x]) + int(local[x])
        return code

    def trans_cdf(self, code: int) -> tuple[np.ndarray, np.ndarray]:
        """(positive support, cdf) for a packed (state, local actions) code."""
        cached = self._trans_cdf.get(code)
        if cached is not None:
            return cached
        local = [0] * self.n
        rest = code
        for x in range(self.n - 1, -1, -1):
            k = len(self.action_ids[x])
            rest, local[x] = divmod(rest, k)
        state = rest
        joint = tuple(int(self.action_ids[x][local[x]]) for x in range(self.n))
        dist = [(ns, p) for ns, p in self.resolve(state, joint) if p > 0.0]
        support = np.asarray([ns for ns, _ in dist], dtype=np.int64)
        cdf = _cdf_row(np.asarray([p for _, p in dist], dtype=np.float64))
        self._trans_cdf[code] = (support, cdf)
        return support, cdf

    # -- exact dynamics ------------------------------------------------

    def joints_positive(self, state: int) -> list[tuple[tuple[int, ...], float]]:
        """Joint actions with positive policy probability at ``state``,
        in ascending global-action order, each with its joint probability."""
        cached = self._joints_pos.get(state)
        if cached is not None:
            return cached
        out: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
        for x, agent in enumerate(self.spec.agents):
            row = agent.policy[state]
            choices = sorted(
                (a, row[self.local_index[x][a]])
                for a in agent.actions
                if row[self.local_index[x][a]] > 0.0
            )
            out = [
                (joint + (a,), p * pa) for joint, p in out for a, pa in choices
            ]
        self._joints_pos[state] = out
        return out

    def kernel_row(self, state: int) -> np.ndarray:
        """One-step state distribution from ``state`` under the joint policy."""
        row = self._kernel.get(state)
        if row is not None:
            return row
        row = np.zeros(self.num_states, dtype=np.float64)
        for joint, pj in self.joints_positive(state):
            for ns, pt in self.resolve(state, joint):
                row[ns] += pj * pt
        self._kernel[state] = row
        return row

    def expected_step_reward(self, agent: int, state: int) -> float:
        """Expectation of the agent's one-step reward from ``state`` under the
        joint policy and transformer."""
        vec = self._step_reward.get(agent)
        if vec is None:
            vec = np.full(self.num_states, np.nan, dtype=np.float64)
            self._step_reward[agent] = vec
        if np.isnan(vec[state]):
            row = self.kernel_row(state)
            dense = self.reward_dense(agent)
            if dense is not None:
                vec[state] = float(row @ dense[state])
            else:
                vec[state] = sum(
                    row[dst] * value
                    for (src, dst), value in self.reward_sparse(agent).items()
                    if src == state and row[dst] != 0.0
                )
        return float(vec[state])

    # -- rewards -------------------------------------------------------

    def reward_sparse(self, agent: int) -> dict[tuple[int, int], float]:
        table = self._reward_sparse.get(agent)
        if table is None:
            table = {
                (src, dst): value for src, dst, value in self.spec.agents[agent].rewards
            }
            self._reward_sparse[agent] = table
        return table

    def reward_dense(self, agent: int) -> np.ndarray | None:
        if self.num_states > _DENSE_REWARD_LIMIT:
            return None
        mat = self._reward_dense.get(agent)
        if mat is None:
            mat = np.zeros((self.num_states, self.num_states), dtype=np.float64)
            for src, dst, value in self.spec.agents[agent].rewards:
                mat[src, dst] = value
            self._reward_dense[agent] = mat
        return mat


def _cdf_row(probs: np.ndarray) -> np.ndarray:
    """Cumulative row with the tail pinned to 1.0 from the last positive entry,
    so a uniform in [0, 1) can never select a zero-probability column."""
    cdf = np.cumsum(probs)
    positive = np.flatnonzero(probs > 0.0)
    start = positive[-1] if positive.size else 0
    cdf[start:] = 1.0
    return cdf


def _cdf_rows(probs: np.ndarray) -> np.ndarray:
    return np.vstack([_cdf_row(row) for row in probs]) if probs.size else probs.copy()


@lru_cache(maxsize=16)
def _compile(spec: SystemSpec) -> _Compiled:
    return _Compiled(spec)


def _check_run_shape(spec: SystemSpec, run: Run) -> None:
    n = len(spec.agents)
    if len(run.states) != len(run.joint_actions) + 1:
        raise ShapeMismatchError(
            f"run has {len(run.states)} states for {len(run.joint_actions)} steps"
        )
    if not run.joint_actions:
        raise ShapeMismatchError("run must contain at least one step")
    if run.states[0] != spec.start:
        raise ShapeMismatchError(
            f"run starts at state {run.states[0]}, system starts at {spec.start}"
        )
    for s in run.states:
        if not (0 <= s < spec.num_states):
            raise ShapeMismatchError(f"state {s} not in [0, {spec.num_states})")
    for i, joint in enumerate(run.joint_actions):
        if len(joint) != n:
            raise ShapeMismatchError(
                f"joint action {i} has {len(joint)} components, expected {n}"
            )
        for x, a in enumerate(joint):
            if a not in spec.agents[x].actions:
                raise ShapeMismatchError(
                    f"action {a} at step {i} is not in agent {x}'s action subset"
                )


def run_probability(spec: SystemSpec, run: Run) -> float:
    """Probability of ``run``: the product over steps of all agents' policy
    factors times the transformer factor; 0 as soon as any factor is 0."""
    _check_run_shape(spec, run)
    comp = _compile(spec)
    prob = 1.0
    for i, joint in enumerate(run.joint_actions):
        state = run.states[i]
        pj = 1.0
        for x, a in enumerate(joint):
            pj *= spec.agents[x].policy[state][comp.local_index[x][a]]
        if pj == 0.0:
            return 0.0
        pt = dict(comp.resolve(state, joint)).get(run.states[i + 1], 0.0)
        if pt == 0.0:
            return 0.0
        prob = prob * pj
        prob = prob * pt
    return prob


def run_reward(spec: SystemSpec, agent: int, run: Run) -> float:
    """Total reward of ``agent`` along ``run``: the sum of its state-pair rewards."""
    _check_agent_index(spec, agent)
    _check_run_shape(spec, run)
    table = _compile(spec).reward_sparse(agent)
    total = 0.0
    for i in range(len(run.joint_actions)):
        total += table.get((run.states[i], run.states[i + 1]), 0.0)
    return total


def _check_agent_index(spec: SystemSpec, agent: int) -> None:
    if not (0 <= agent < len(spec.agents)):
        raise IndexOutOfRangeError(
            f"agent index {agent} not in [0, {len(spec.agents)})", agent=agent
        )


def _check_horizon(horizon: int) -> None:
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")


def _branching_estimate(comp: _Compiled, horizon: int) -> int:
    """Upper bound on the run count: (max per-state branch count) ** horizon."""
    widest = 1
    visited = {comp.spec.start}
    frontier = [comp.spec.start]
    while frontier:
        state = frontier.pop()
        branches = 0
        for joint, _ in comp.joints_positive(state):
            dist = [ns for ns, p in comp.resolve(state, joint) if p > 0.0]
            branches += len(dist)
            for ns in dist:
                if ns not in visited:
                    visited.add(ns)
                    frontier.append(ns)
        widest = max(widest, branches)
    return widest**horizon


def estimate_run_count(spec: SystemSpec, horizon: int) -> int:
    """Cheap upper bound on the number of positive-probability runs."""
    _check_horizon(horizon)
    return _branching_estimate(_compile(spec), horizon)


def enumerate_runs(
    spec: SystemSpec, horizon: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Run]:
    """Yield every positive-probability run of exactly ``horizon`` steps.

    Order is deterministic: depth-first, joint actions ascending by global
    action index (agent 0 outermost), next states ascending.  Probabilities
    over the yielded set sum to 1.  Raises EnumerationCapExceededError once
    more than ``cap`` runs would be produced.
    """
    _check_horizon(horizon)
    comp = _compile(spec)
    produced = 0

    states = [spec.start] * (horizon + 1)
    joints: list[tuple[int, ...]] = [()] * horizon

    def walk(state: int, depth: int, prob: float) -> Iterator[Run]:
        nonlocal produced
        if depth == horizon:
            produced += 1
            if produced > cap:
                raise EnumerationCapExceededError(
                    f"more than {cap} runs at horizon {horizon}",
                    cap=cap,
                    estimated_count=_branching_estimate(comp, horizon),
                )
            yield Run(tuple(states), tuple(joints), prob)
            return
        for joint, pj in comp.joints_positive(state):
            joints[depth] = joint
            for ns, pt in comp.resolve(state, joint):
                if pt == 0.0:
                    continue
                states[depth + 1] = ns
                branch = prob * pj
                branch = branch * pt
                yield from walk(ns, depth + 1, branch)

    yield from walk(spec.start, 0, 1.0)


def expected_reward_exact(spec: SystemSpec, agent: int, horizon: int) -> float:
    """Exact expected reward over all ``horizon``-step runs.

    Equal to the probability-weighted reward sum over ``enumerate_runs``; the
    dynamics are Markov in the state, so the sum is evaluated by propagating
    the state distribution instead of materializing runs.
    """
    _check_agent_index(spec, agent)
    _check_horizon(horizon)
    comp = _compile(spec)

    dist = np.zeros(comp.num_states, dtype=np.float64)
    dist[spec.start] = 1.0
    total = 0.0
    for _ in range(horizon):
        nxt = np.zeros(comp.num_states, dtype=np.float64)
        for state in np.flatnonzero(dist):
            state = int(state)
            total += dist[state] * comp.expected_step_reward(agent, state)
            nxt += dist[state] * comp.kernel_row(state)
        dist = nxt
    return float(total)


def sample_run(spec: SystemSpec, horizon: int, stream: rng.Stream) -> Run:
    """Sample one run by drawing each agent's action from its policy and the
    next state from the transformer, ``horizon`` times.

    Consumes exactly ``horizon * (n_agents + 1)`` uniforms in a fixed slot
    order (agents 0..n-1, then the state draw), so identical streams always
    reproduce identical runs.
    """
    _check_horizon(horizon)
    comp = _compile(spec)
    states = [spec.start]
    joints: list[tuple[int, ...]] = []
    state = spec.start
    for _ in range(horizon):
        local = []
        for x in range(comp.n):
            u = stream.next_unit()
            row = comp.policy_cdf[x][state]
            local.append(int(np.searchsorted(row, u, side="right")))
        joints.append(tuple(int(comp.action_ids[x][local[x]]) for x in range(comp.n)))
        u = stream.next_unit()
        support, cdf = comp.trans_cdf(comp.joint_code(state, local))
        state = int(support[int(np.searchsorted(cdf, u, side="right"))])
        states.append(state)
    run = Run(tuple(states), tuple(joints), 0.0)
    return Run(run.states, run.joint_actions, run_probability(spec, run))


def monte_carlo_rewards(
    spec: SystemSpec,
    horizon: int,
    samples: int,
    seed: int,
    agents: Sequence[int] | None = None,
) -> np.ndarray:
    """Per-run total rewards for ``samples`` independently sampled runs.

    Returns a (samples, len(agents)) array; column order follows ``agents``
    (all agents when omitted).  Sample i consumes the draws of counter block
    i, so the result is a pure function of (spec, horizon, samples, seed).
    """
    _check_horizon(horizon)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    comp = _compile(spec)
    if agents is None:
        agents = range(comp.n)
    agents = [int(a) for a in agents]
    for a in agents:
        _check_agent_index(spec, a)

    slots = comp.n + 1
    per_sample = horizon * slots
    base = np.arange(samples, dtype=np.uint64) * np.uint64(per_sample)

    dense = [comp.reward_dense(a) for a in agents]
    sparse = [comp.reward_sparse(a) if dense[i] is None else None for i, a in enumerate(agents)]

    states = np.full(samples, spec.start, dtype=np.int64)
    rewards = np.zeros((samples, len(agents)), dtype=np.float64)
    local = np.empty((comp.n, samples), dtype=np.int64)

    for t in range(horizon):
        codes = states.copy()
        for x in range(comp.n):
            u = rng.units_at(seed, base + np.uint64(t * slots + x))
            rows = comp.policy_cdf[x][states]
            local[x] = np.sum(rows <= u[:, None], axis=1)
            codes = codes * len(comp.action_ids[x]) + local[x]

        u = rng.units_at(seed, base + np.uint64(t * slots + comp.n))
        next_states = np.empty(samples, dtype=np.int64)
        order = np.argsort(codes, kind="stable")
        sorted_codes = codes[order]
        boundaries = np.flatnonzero(np.diff(sorted_codes)) + 1
        for group in np.split(order, boundaries):
            support, cdf = comp.trans_cdf(int(codes[group[0]]))
            next_states[group] = support[np.searchsorted(cdf, u[group], side="right")]

        for i, mat in enumerate(dense):
            if mat is not None:
                rewards[:, i] += mat[states, next_states]
            else:
                table = sparse[i]
                rewards[:, i] += [
                    table.get((int(s), int(ns)), 0.0)
                    for s, ns in zip(states, next_states)
                ]
        states = next_states
    return rewards


def expected_reward_mc(
    spec: SystemSpec, agent: int, horizon: int, samples: int, seed: int
) -> EstimatorResult:
    """Monte Carlo estimate of the expected reward from ``samples`` runs.

    A pure function of its arguments: rerunning with the same seed is
    bit-identical regardless of worker count.
    """
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    values = monte_carlo_rewards(spec, horizon, samples, seed, agents=(agent,))[:, 0]
    mean = float(np.mean(values))
    std_error = float(np.std(values, ddof=1) / np.sqrt(samples))
    return EstimatorResult(
        mean=mean,
        std_error=std_error,
        ci_low=mean - Z_95 * std_error,
        ci_high=mean + Z_95 * std_error,
        samples=samples,
        seed=seed,
        horizon=horizon,
    )
