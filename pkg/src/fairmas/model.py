"""Immutable data model for stochastic multi-agent systems with protected attributes.

States and actions are small integer indices into the system's state and
action sets; action index 0 is the reserved null action and belongs to every
agent's action subset.  Each agent carries a binary attribute assignment, an
ordered action subset, a per-state stochastic policy over that subset, and a
sparse state-pair reward table.  The environment is a stochastic state
transformer whose entries may condition on the population's attribute profile
(the full agents-by-attributes bit matrix).

All types are frozen dataclasses built from tuples, so a validated system is
hashable, comparable, and safe to share across threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .errors import IndexOutOfRangeError, NotProtectedError

StateId = int
ActionId = int
AttributeBits = tuple[int, ...]
Profile = tuple[AttributeBits, ...]

NULL_ACTION: ActionId = 0

# Probability rows must sum to 1 within this tolerance: strict enough to catch
# typos, loose enough for probabilities written as decimal text.
PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Violation:
    """One broken invariant found by validate_system."""

    code: str
    message: str
    location: str


@dataclass(frozen=True)
class AgentSpec:
    """One agent: attribute bits, action subset, policy, and reward table.

    ``policy[s][j]`` is the probability of choosing ``actions[j]`` in state
    ``s``; every state needs a row.  ``rewards`` holds (source, target, value)
    triples for state-pair rewards; unlisted pairs default to 0.
    """

    attributes: AttributeBits
    actions: tuple[ActionId, ...]
    policy: tuple[tuple[float, ...], ...]
    rewards: tuple[tuple[StateId, StateId, float], ...] = ()


@dataclass(frozen=True)
class TransitionEntry:
    """Distribution over next states for one (state, joint action) pair.

    ``profile`` of None matches any population; otherwise the entry applies
    only when the population's attribute matrix equals ``profile`` exactly.
    ``dist`` lists (next_state, probability) pairs, ascending by state.
    """

    state: StateId
    joint: tuple[ActionId, ...]
    dist: tuple[tuple[StateId, float], ...]
    profile: Profile | None = None


@dataclass(frozen=True)
class TransitionSpec:
    entries: tuple[TransitionEntry, ...]
    attribute_sensitive: bool = False


@dataclass(frozen=True)
class SystemSpec:
    """The full system: states, start, actions, population, attributes, transformer."""

    num_states: int
    start: StateId
    actions: tuple[str, ...]
    agents: tuple[AgentSpec, ...]
    attribute_names: tuple[str, ...]
    protected: tuple[int, ...]
    transition: TransitionSpec
    state_names: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Run:
    """A bounded trajectory: H+1 states and H joint actions, with its probability."""

    states: tuple[StateId, ...]
    joint_actions: tuple[tuple[ActionId, ...], ...]
    probability: float

    @property
    def horizon(self) -> int:
        return len(self.joint_actions)


def attribute_profile(spec: SystemSpec) -> Profile:
    """Population attribute matrix: row x is agent x's attribute bits."""
    return tuple(agent.attributes for agent in spec.agents)


def matches_except(spec: SystemSpec, x: int, y: int, pr: int) -> bool:
    """True iff agent x holds protected attribute ``pr``, agent y does not,
    and the two assignments agree on every other attribute.

    Matching inspects attributes only; action sets, policies, and rewards are
    deliberately ignored.
    """
    n = len(spec.agents)
    m = len(spec.attribute_names)
    if not (0 <= x < n) or not (0 <= y < n) or x == y:
        raise IndexOutOfRangeError(
            f"agent indices must be distinct and in [0, {n})", x=x, y=y
        )
    if not (0 <= pr < m):
        raise IndexOutOfRangeError(f"attribute index must be in [0, {m})", pr=pr)
    if pr not in spec.protected:
        raise NotProtectedError(f"attribute {pr} is not protected", pr=pr)
    ax = spec.agents[x].attributes
    ay = spec.agents[y].attributes
    if ax[pr] != 1 or ay[pr] != 0:
        return False
    return all(ax[i] == ay[i] for i in range(m) if i != pr)


def _check_agent(
    spec: SystemSpec, x: int, agent: AgentSpec, out: list[Violation]
) -> None:
    m = len(spec.attribute_names)
    loc = f"agent[{x}]"

    if len(agent.attributes) != m:
        out.append(
            Violation(
                "ATTRIBUTES_LENGTH_MISMATCH",
                f"expected {m} attribute bits, got {len(agent.attributes)}",
                loc,
            )
        )
    for i, bit in enumerate(agent.attributes):
        if bit not in (0, 1):
            out.append(
                Violation(
                    "ATTRIBUTE_NOT_BINARY",
                    f"attribute value {bit!r} is not 0 or 1",
                    f"{loc}.attributes[{i}]",
                )
            )

    num_actions = len(spec.actions)
    if len(agent.actions) != len(set(agent.actions)):
        out.append(
            Violation("ACTIONS_DUPLICATE", "duplicate action in subset", f"{loc}.actions")
        )
    for a in agent.actions:
        if not (0 <= a < num_actions):
            out.append(
                Violation(
                    "ACTION_INDEX_OUT_OF_RANGE",
                    f"action index {a} not in [0, {num_actions})",
                    f"{loc}.actions",
                )
            )
    if NULL_ACTION not in agent.actions:
        out.append(
            Violation(
                "NULL_ACTION_MISSING",
                "every agent's action subset must contain the null action (index 0)",
                f"{loc}.actions",
            )
        )

    if len(agent.policy) != spec.num_states:
        out.append(
            Violation(
                "POLICY_SHAPE_MISMATCH",
                f"policy needs one row per state: expected {spec.num_states}, got {len(agent.policy)}",
                f"{loc}.policy",
            )
        )
    for s, row in enumerate(agent.policy):
        rloc = f"{loc}.policy[{s}]"
        if len(row) != len(agent.actions):
            out.append(
                Violation(
                    "POLICY_ROW_LENGTH_MISMATCH",
                    f"expected {len(agent.actions)} probabilities, got {len(row)}",
                    rloc,
                )
            )
            continue
        bad = False
        for p in row:
            if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 <= p <= 1.0):
                out.append(
                    Violation(
                        "POLICY_PROB_OUT_OF_RANGE",
                        f"probability {p!r} not in [0, 1]",
                        rloc,
                    )
                )
                bad = True
        if not bad and abs(sum(row) - 1.0) > PROB_TOLERANCE:
            out.append(
                Violation(
                    "POLICY_NOT_NORMALIZED",
                    f"probabilities sum to {sum(row)!r}, expected 1 within {PROB_TOLERANCE}",
                    rloc,
                )
            )

    seen_pairs: set[tuple[int, int]] = set()
    for i, (src, dst, value) in enumerate(agent.rewards):
        rloc = f"{loc}.rewards[{i}]"
        if not (0 <= src < spec.num_states) or not (0 <= dst < spec.num_states):
            out.append(
                Violation(
                    "REWARD_STATE_OUT_OF_RANGE",
                    f"state pair ({src}, {dst}) outside [0, {spec.num_states})",
                    rloc,
                )
            )
        if (src, dst) in seen_pairs:
            out.append(
                Violation(
                    "REWARD_DUPLICATE_PAIR",
                    f"state pair ({src}, {dst}) listed more than once",
                    rloc,
                )
            )
        seen_pairs.add((src, dst))
        if not (isinstance(value, (int, float)) and math.isfinite(value)):
            out.append(
                Violation("REWARD_NOT_FINITE", f"reward {value!r} is not finite", rloc)
            )


def _check_transition_entries(spec: SystemSpec, out: list[Violation]) -> None:
    n = len(spec.agents)
    m = len(spec.attribute_names)
    num_actions = len(spec.actions)
    seen: set[tuple] = set()

    for i, entry in enumerate(spec.transition.entries):
        loc = f"transition.entries[{i}]"
        if not (0 <= entry.state < spec.num_states):
            out.append(
                Violation(
                    "TRANSITION_STATE_OUT_OF_RANGE",
                    f"state {entry.state} not in [0, {spec.num_states})",
                    loc,
                )
            )
        if len(entry.joint) != n:
            out.append(
                Violation(
                    "TRANSITION_JOINT_SHAPE",
                    f"joint action has {len(entry.joint)} components, expected {n}",
                    loc,
                )
            )
        else:
            for x, a in enumerate(entry.joint):
                if not (0 <= a < num_actions):
                    out.append(
                        Violation(
                            "TRANSITION_ACTION_OUT_OF_RANGE",
                            f"action index {a} not in [0, {num_actions})",
                            f"{loc}.joint[{x}]",
                        )
                    )
                elif a not in spec.agents[x].actions:
                    out.append(
                        Violation(
                            "TRANSITION_JOINT_NOT_AVAILABLE",
                            f"action {a} is not in agent {x}'s action subset",
                            f"{loc}.joint[{x}]",
                        )
                    )

        if not entry.dist:
            out.append(Violation("TRANSITION_DIST_EMPTY", "empty distribution", loc))
        prev = -1
        total = 0.0
        bad = False
        for ns, p in entry.dist:
            if not (0 <= ns < spec.num_states):
                out.append(
                    Violation(
                        "TRANSITION_STATE_OUT_OF_RANGE",
                        f"next state {ns} not in [0, {spec.num_states})",
                        f"{loc}.dist",
                    )
                )
                bad = True
            if ns <= prev:
                out.append(
                    Violation(
                        "TRANSITION_DIST_NOT_ASCENDING",
                        "next states must be unique and ascending",
                        f"{loc}.dist",
                    )
                )
                bad = True
            prev = ns
            if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 <= p <= 1.0):
                out.append(
                    Violation(
                        "TRANSITION_PROB_OUT_OF_RANGE",
                        f"probability {p!r} not in [0, 1]",
                        f"{loc}.dist",
                    )
                )
                bad = True
            total += p
        if entry.dist and not bad and abs(total - 1.0) > PROB_TOLERANCE:
            out.append(
                Violation(
                    "TRANSITION_NOT_NORMALIZED",
                    f"probabilities sum to {total!r}, expected 1 within {PROB_TOLERANCE}",
                    loc,
                )
            )

        if entry.profile is not None:
            if not spec.transition.attribute_sensitive:
                out.append(
                    Violation(
                        "PROFILE_ON_INSENSITIVE",
                        "profile condition present but attribute_sensitive is false",
                        loc,
                    )
                )
            ok_shape = len(entry.profile) == n and all(
                len(row) == m for row in entry.profile
            )
            if not ok_shape:
                out.append(
                    Violation(
                        "TRANSITION_PROFILE_SHAPE",
                        f"profile condition must be a {n}x{m} bit matrix",
                        loc,
                    )
                )
            elif any(bit not in (0, 1) for row in entry.profile for bit in row):
                out.append(
                    Violation(
                        "TRANSITION_PROFILE_NOT_BINARY",
                        "profile condition entries must be 0 or 1",
                        loc,
                    )
                )

        key = (entry.state, entry.joint, entry.profile)
        if key in seen:
            out.append(
                Violation(
                    "TRANSITION_DUPLICATE",
                    f"duplicate entry for state {entry.state}, joint {entry.joint}",
                    loc,
                )
            )
        seen.add(key)


def _check_coverage(spec: SystemSpec, out: list[Violation]) -> None:
    """BFS from the start state over all joint actions from the agents' subsets.

    Every reachable (state, joint action) pair must match exactly one entry
    under the population's actual attribute profile.
    """
    profile = attribute_profile(spec)
    index: dict[tuple[int, tuple[int, ...]], list[TransitionEntry]] = {}
    for entry in spec.transition.entries:
        index.setdefault((entry.state, entry.joint), []).append(entry)

    joints = list(itertools.product(*(sorted(a.actions) for a in spec.agents)))
    visited = {spec.start}
    frontier = [spec.start]
    while frontier:
        state = frontier.pop(0)
        for joint in joints:
            matching = [
                e
                for e in index.get((state, joint), [])
                if e.profile is None or e.profile == profile
            ]
            loc = f"state={state} joint={joint}"
            if not matching:
                out.append(
                    Violation(
                        "TRANSITION_MISSING",
                        "no transition entry matches this reachable state and joint action",
                        loc,
                    )
                )
                continue
            if len(matching) > 1:
                out.append(
                    Violation(
                        "TRANSITION_AMBIGUOUS",
                        f"{len(matching)} transition entries match; expected exactly one",
                        loc,
                    )
                )
                continue
            for ns, p in matching[0].dist:
                if p > 0.0 and ns not in visited:
                    visited.add(ns)
                    frontier.append(ns)


def validate_system(spec: SystemSpec) -> list[Violation]:
    """Check every model invariant; returns an empty list iff the spec is valid.

    Violations are data, not exceptions.  The reachability coverage check only
    runs once the structural checks pass, so shape errors do not cascade.
    """
    out: list[Violation] = []

    if spec.num_states < 1:
        out.append(
            Violation("NUM_STATES_NOT_POSITIVE", "need at least one state", "system")
        )
    if not (0 <= spec.start < spec.num_states):
        out.append(
            Violation(
                "START_OUT_OF_RANGE",
                f"start state {spec.start} not in [0, {spec.num_states})",
                "system.start",
            )
        )
    if not spec.actions:
        out.append(
            Violation(
                "ACTIONS_EMPTY",
                "the action set must contain at least the null action",
                "system.actions",
            )
        )
    if len(set(spec.actions)) != len(spec.actions):
        out.append(
            Violation("ACTION_NAMES_DUPLICATE", "action names must be unique", "system.actions")
        )
    if len(set(spec.attribute_names)) != len(spec.attribute_names):
        out.append(
            Violation(
                "ATTRIBUTE_NAMES_DUPLICATE",
                "attribute names must be unique",
                "system.attributes",
            )
        )
    if spec.state_names is not None and len(spec.state_names) != spec.num_states:
        out.append(
            Violation(
                "STATE_NAMES_LENGTH_MISMATCH",
                f"expected {spec.num_states} state names, got {len(spec.state_names)}",
                "system.state_names",
            )
        )

    m = len(spec.attribute_names)
    if not spec.protected:
        out.append(
            Violation("PROTECTED_EMPTY", "need at least one protected attribute", "system.protected")
        )
    if list(spec.protected) != sorted(set(spec.protected)):
        out.append(
            Violation(
                "PROTECTED_NOT_ASCENDING",
                "protected indices must be unique and ascending",
                "system.protected",
            )
        )
    for pr in spec.protected:
        if not (0 <= pr < m):
            out.append(
                Violation(
                    "PROTECTED_INDEX_OUT_OF_RANGE",
                    f"protected attribute index {pr} not in [0, {m})",
                    "system.protected",
                )
            )
    if spec.protected and len(set(spec.protected)) >= m:
        out.append(
            Violation(
                "PROTECTED_NOT_STRICT_SUBSET",
                "protected attributes must be a strict subset of all attributes",
                "system.protected",
            )
        )

    if not spec.agents:
        out.append(Violation("AGENTS_EMPTY", "need at least one agent", "system.agents"))

    for x, agent in enumerate(spec.agents):
        _check_agent(spec, x, agent, out)

    _check_transition_entries(spec, out)

    if not out:
        _check_coverage(spec, out)
    return out
