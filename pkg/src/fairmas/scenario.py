"""Scenario files and the built-in traffic scenario family.

Scenario documents are strict JSON: every key is checked, probabilities are
decimal literals, and the canonical serialization (sorted keys, 17
significant digits) makes documents byte-stable, so they can be golden-filed
and hand-edited.  ``load_system`` accepts a parsed document and returns a
validated system; ``save_system`` inverts it canonically, omitting zero
rewards and zero-probability branches.

The traffic family models cars advancing along a corridor of ``L`` positions
on one of two routes.  Human-driven and AI-driven cars succeed at different
rates on the fast route, AI cars pick it more often, and an optional
dedicated lane reserves the fast route for human-driven cars (AI cars then
advance at the slow-route rate no matter which route they pick).  Transition
entries are conditioned on the population attribute profile for both the
factual population and the population with the human-driven column flipped,
so counterfactual evaluation has full coverage.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

from .engine import estimate_run_count
from .errors import (
    ParseError,
    UnsupportedSchemaVersionError,
    ValidationFailedError,
)
from .model import (
    AgentSpec,
    SystemSpec,
    TransitionEntry,
    TransitionSpec,
    Violation,
    validate_system,
)

SCHEMA_VERSION = "1"

# describe() reports run-count estimates above this as OVERFLOW.
OVERFLOW_LIMIT = 10**18
OVERFLOW = "OVERFLOW"

_TOP_KEYS = {
    "schema_version",
    "states",
    "start",
    "actions",
    "attributes",
    "protected",
    "agents",
    "transitions",
}
_AGENT_KEYS = {"attributes", "actions", "policy", "rewards"}
_ENTRY_KEYS = {"state", "joint", "next", "profile"}


# ---------------------------------------------------------------------------
# document loading


def _require(document: dict, key: str, kind: type, path: str):
    if key not in document:
        raise ParseError(f"missing key '{key}'", path=path)
    value = document[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"'{key}' must be a number", path=path)
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ParseError(f"'{key}' must be an integer", path=path)
    if not isinstance(value, kind):
        raise ParseError(f"'{key}' must be {kind.__name__}", path=path)
    return value


def _check_keys(document: dict, allowed: set[str], path: str, lenient: bool) -> None:
    if lenient:
        return
    unknown = sorted(set(document) - allowed)
    if unknown:
        raise ParseError(f"unknown keys {unknown}", path=path)


def _name_table(names: list, what: str, path: str) -> dict[str, int]:
    table: dict[str, int] = {}
    for i, name in enumerate(names):
        if not isinstance(name, str):
            raise ParseError(f"{what} names must be strings", path=path)
        table[name] = i
    return table


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", path=path)
    return float(value)


def _load_agent(
    document: dict,
    x: int,
    action_ids: dict[str, int],
    lenient: bool,
    violations: list[Violation],
) -> AgentSpec:
    path = f"agents[{x}]"
    if not isinstance(document, dict):
        raise ParseError("agent must be an object", path=path)
    _check_keys(document, _AGENT_KEYS, path, lenient)

    bits = _require(document, "attributes", list, path)
    attributes = tuple(int(b) if b in (0, 1) else b for b in bits)

    names = _require(document, "actions", list, path)
    actions = []
    for name in names:
        if name not in action_ids:
            raise ParseError(f"unknown action '{name}'", path=f"{path}.actions")
        actions.append(action_ids[name])

    rows = _require(document, "policy", list, path)
    policy = []
    for s, row in enumerate(rows):
        rpath = f"{path}.policy[{s}]"
        if not isinstance(row, dict):
            raise ParseError("policy row must map action names to probabilities", path=rpath)
        probs = [0.0] * len(actions)
        for name, value in row.items():
            prob = _number(value, rpath)
            if name not in action_ids:
                raise ParseError(f"unknown action '{name}'", path=rpath)
            action = action_ids[name]
            if action not in actions:
                if prob != 0.0:
                    violations.append(
                        Violation(
                            "POLICY_SUPPORT_NOT_IN_ACTIONS",
                            f"action '{name}' has probability {prob} but is not in "
                            f"agent {x}'s action subset",
                            rpath,
                        )
                    )
                continue
            probs[actions.index(action)] = prob
        policy.append(tuple(probs))

    triples = document.get("rewards", [])
    if not isinstance(triples, list):
        raise ParseError("'rewards' must be a list of [from, to, value] triples", path=path)
    rewards = []
    for i, triple in enumerate(triples):
        rpath = f"{path}.rewards[{i}]"
        if not (isinstance(triple, list) and len(triple) == 3):
            raise ParseError("reward entries are [from, to, value] triples", path=rpath)
        src, dst, value = triple
        if isinstance(src, bool) or isinstance(dst, bool) or not isinstance(src, int) or not isinstance(dst, int):
            raise ParseError("reward states must be integers", path=rpath)
        rewards.append((src, dst, _number(value, rpath)))
    rewards.sort(key=lambda r: (r[0], r[1]))

    return AgentSpec(
        attributes=attributes,
        actions=tuple(actions),
        policy=tuple(policy),
        rewards=tuple(rewards),
    )


def _load_entry(
    document: dict, i: int, action_ids: dict[str, int], lenient: bool
) -> TransitionEntry:
    path = f"transitions.entries[{i}]"
    if not isinstance(document, dict):
        raise ParseError("transition entry must be an object", path=path)
    _check_keys(document, _ENTRY_KEYS, path, lenient)
    state = _require(document, "state", int, path)
    joint_names = _require(document, "joint", list, path)
    joint = []
    for name in joint_names:
        if name not in action_ids:
            raise ParseError(f"unknown action '{name}'", path=f"{path}.joint")
        joint.append(action_ids[name])

    pairs = _require(document, "next", list, path)
    dist = []
    for pair in pairs:
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ParseError("next entries are [state, probability] pairs", path=path)
        ns, prob = pair
        if isinstance(ns, bool) or not isinstance(ns, int):
            raise ParseError("next states must be integers", path=path)
        prob = _number(prob, path)
        if prob != 0.0:
            dist.append((ns, prob))
    dist.sort(key=lambda d: d[0])
    for (a, _), (b, _) in zip(dist, dist[1:]):
        if a == b:
            raise ParseError(f"duplicate next state {a}", path=path)

    profile = None
    if "profile" in document:
        rows = document["profile"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise ParseError("'profile' must be a matrix of bits", path=path)
        profile = tuple(tuple(int(b) if b in (0, 1) else b for b in row) for row in rows)

    return TransitionEntry(state=state, joint=tuple(joint), dist=tuple(dist), profile=profile)


def load_system(document: dict, *, lenient: bool = False) -> SystemSpec:
    """Build and validate a SystemSpec from a parsed scenario document.

    Raises ParseError for malformed structure, UnsupportedSchemaVersionError
    for a schema this version cannot read, and ValidationFailedError carrying
    the violation list when the described system breaks a model invariant.
    Zero-probability transition branches are dropped on load.
    """
    if not isinstance(document, dict):
        raise ParseError("scenario document must be a JSON object", path="$")
    version = _require(document, "schema_version", str, "$")
    if version != SCHEMA_VERSION:
        raise UnsupportedSchemaVersionError(
            f"schema_version '{version}' is not supported (expected '{SCHEMA_VERSION}')"
        )
    _check_keys(document, _TOP_KEYS, "$", lenient)

    states = _require(document, "states", dict, "$")
    _check_keys(states, {"count", "names"}, "states", lenient)
    num_states = _require(states, "count", int, "states")
    state_names = None
    if "names" in states:
        names = states["names"]
        if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
            raise ParseError("'names' must be a list of strings", path="states")
        state_names = tuple(names)

    start = _require(document, "start", int, "$")
    action_list = _require(document, "actions", list, "$")
    action_ids = _name_table(action_list, "action", "actions")
    attribute_list = _require(document, "attributes", list, "$")
    attribute_ids = _name_table(attribute_list, "attribute", "attributes")

    protected_names = _require(document, "protected", list, "$")
    protected = []
    for name in protected_names:
        if name not in attribute_ids:
            raise ParseError(f"unknown attribute '{name}'", path="protected")
        protected.append(attribute_ids[name])
    protected.sort()

    agent_docs = _require(document, "agents", list, "$")
    violations: list[Violation] = []
    agents = tuple(
        _load_agent(doc, x, action_ids, lenient, violations)
        for x, doc in enumerate(agent_docs)
    )

    transitions = _require(document, "transitions", dict, "$")
    _check_keys(transitions, {"attribute_sensitive", "entries"}, "transitions", lenient)
    sensitive = _require(transitions, "attribute_sensitive", bool, "transitions")
    entry_docs = _require(transitions, "entries", list, "transitions")
    entries = tuple(
        _load_entry(doc, i, action_ids, lenient) for i, doc in enumerate(entry_docs)
    )

    spec = SystemSpec(
        num_states=num_states,
        start=start,
        actions=tuple(action_list),
        agents=agents,
        attribute_names=tuple(attribute_list),
        protected=tuple(protected),
        transition=TransitionSpec(entries=entries, attribute_sensitive=sensitive),
        state_names=state_names,
    )
    violations += validate_system(spec)
    if violations:
        raise ValidationFailedError(
            f"scenario document describes an invalid system ({len(violations)} violations)",
            violations,
        )
    return spec


def loads_system(text: str, *, lenient: bool = False) -> SystemSpec:
    """Parse scenario JSON text and load the system it describes."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc
    return load_system(document, lenient=lenient)


def load_system_file(path, *, lenient: bool = False) -> SystemSpec:
    with open(path, "r", encoding="utf-8") as handle:
        return loads_system(handle.read(), lenient=lenient)


# ---------------------------------------------------------------------------
# document saving


def transition_entry_key(entry: TransitionEntry) -> tuple:
    """Canonical ordering key: state, joint, unconditioned before conditioned."""
    if entry.profile is None:
        profile_key: tuple = (0,)
    else:
        profile_key = (1,) + tuple(bit for row in entry.profile for bit in row)
    return (entry.state, entry.joint, profile_key)


def save_system(spec: SystemSpec) -> dict:
    """Serialize a validated system to its canonical scenario document.

    Zero rewards and zero-probability branches are omitted; transition
    entries appear in canonical order.  ``load_system`` inverts this exactly
    for any system produced by this module's loaders and builders.
    """
    document: dict = {
        "schema_version": SCHEMA_VERSION,
        "states": {"count": spec.num_states},
        "start": spec.start,
        "actions": list(spec.actions),
        "attributes": list(spec.attribute_names),
        "protected": [spec.attribute_names[i] for i in spec.protected],
    }
    if spec.state_names is not None:
        document["states"]["names"] = list(spec.state_names)

    document["agents"] = [
        {
            "attributes": list(agent.attributes),
            "actions": [spec.actions[a] for a in agent.actions],
            "policy": [
                {
                    spec.actions[a]: p
                    for a, p in zip(agent.actions, row)
                    if p != 0.0
                }
                for row in agent.policy
            ],
            "rewards": [
                [src, dst, value]
                for src, dst, value in sorted(agent.rewards)
                if value != 0.0
            ],
        }
        for agent in spec.agents
    ]

    entries = []
    for entry in sorted(spec.transition.entries, key=transition_entry_key):
        doc_entry: dict = {
            "state": entry.state,
            "joint": [spec.actions[a] for a in entry.joint],
            "next": [[ns, p] for ns, p in entry.dist if p != 0.0],
        }
        if entry.profile is not None:
            doc_entry["profile"] = [list(row) for row in entry.profile]
        entries.append(doc_entry)
    document["transitions"] = {
        "attribute_sensitive": spec.transition.attribute_sensitive,
        "entries": entries,
    }
    return document


# ---------------------------------------------------------------------------
# traffic scenario family

NULL = "null"
ADVANCE_FAST = "advance_fast"
ADVANCE_SLOW = "advance_slow"
HUMAN_DRIVEN = "human_driven"
HIGH_SPEED = "high_speed"

_DRIVERS = ("human", "ai")
_SPEEDS = ("high", "low")


@dataclass(frozen=True)
class TrafficParams:
    """Parameters of the corridor-traffic scenario.

    ``cars`` lists (driver, speed_tier) per car, driver in {human, ai} and
    speed_tier in {high, low}.  Gains are per-step success probabilities of a
    chosen advance; with ``dedicated_lane`` the fast route only admits
    human-driven cars, so AI-driven cars advance at the slow gain whichever
    route they pick.  ``ai_fast_prob`` / ``human_fast_prob`` set how often a
    car picks the fast route; forcing them equal makes the policies identical
    across drivers.
    """

    corridor_length: int = 3
    cars: tuple[tuple[str, str], ...] = (("human", "high"), ("ai", "high"))
    fast_route_gain: float = 0.9
    human_gain: float = 0.6
    slow_route_gain: float = 0.5
    dedicated_lane: bool = False
    arrival_reward: float = 10.0
    step_cost: float = -1.0
    ai_fast_prob: float = 0.8
    human_fast_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.corridor_length < 1:
            raise ValueError("corridor_length must be >= 1")
        if not self.cars:
            raise ValueError("need at least one car")
        for car in self.cars:
            if (
                not isinstance(car, tuple)
                or len(car) != 2
                or car[0] not in _DRIVERS
                or car[1] not in _SPEEDS
            ):
                raise ValueError(
                    f"car {car!r} must be (driver in {_DRIVERS}, speed in {_SPEEDS})"
                )
        for name in ("fast_route_gain", "human_gain", "slow_route_gain"):
            gain = getattr(self, name)
            if not (0.0 < gain <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {gain}")
        for name in ("ai_fast_prob", "human_fast_prob"):
            prob = getattr(self, name)
            if not (0.0 <= prob <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {prob}")


def _positions_to_state(positions: tuple[int, ...], length: int) -> int:
    state = 0
    for p in positions:
        state = state * (length + 1) + p
    return state


def _advance_gain(params: TrafficParams, human: bool, action: int) -> float:
    if action == 2:  # slow route
        return params.slow_route_gain
    if params.dedicated_lane and not human:
        return params.slow_route_gain
    return params.human_gain if human else params.fast_route_gain


def build_traffic(params: TrafficParams) -> SystemSpec:
    """Build the corridor-traffic system for ``params``.

    States encode the tuple of car positions 0..L (car 0 most significant),
    starting with every car at 0.  A car that advances succeeds with the gain
    for its driver type and route and stays put otherwise; cars move
    independently.  Each step before arrival costs ``step_cost`` and the step
    that reaches position L additionally pays ``arrival_reward``.
    """
    length = params.corridor_length
    n = len(params.cars)
    num_states = (length + 1) ** n
    all_positions = list(itertools.product(range(length + 1), repeat=n))
    state_names = tuple("pos(" + ",".join(map(str, p)) + ")" for p in all_positions)

    factual = tuple(
        (1 if driver == "human" else 0, 1 if speed == "high" else 0)
        for driver, speed in params.cars
    )
    flipped = tuple((1 - bits[0], bits[1]) for bits in factual)

    agents = []
    for x, (driver, _) in enumerate(params.cars):
        fast = params.human_fast_prob if driver == "human" else params.ai_fast_prob
        policy = []
        for positions in all_positions:
            if positions[x] >= length:
                policy.append((1.0, 0.0, 0.0))
            else:
                policy.append((0.0, fast, 1.0 - fast))
        rewards = []
        for positions in all_positions:
            if positions[x] >= length:
                continue
            src = _positions_to_state(positions, length)
            moves = [
                (p,) if p >= length else (p, p + 1) for p in positions
            ]
            for nxt in itertools.product(*moves):
                dst = _positions_to_state(nxt, length)
                value = params.step_cost
                if nxt[x] >= length:
                    value += params.arrival_reward
                if value != 0.0:
                    rewards.append((src, dst, value))
        rewards.sort(key=lambda r: (r[0], r[1]))
        agents.append(
            AgentSpec(
                attributes=factual[x],
                actions=(0, 1, 2),
                policy=tuple(policy),
                rewards=tuple(rewards),
            )
        )

    entries = []
    for positions in all_positions:
        state = _positions_to_state(positions, length)
        for joint in itertools.product((0, 1, 2), repeat=n):
            for profile in (factual, flipped):
                outcomes = []
                for x, p in enumerate(positions):
                    if p >= length or joint[x] == 0:
                        outcomes.append([(p, 1.0)])
                        continue
                    gain = _advance_gain(params, profile[x][0] == 1, joint[x])
                    if gain >= 1.0:
                        outcomes.append([(p + 1, 1.0)])
                    else:
                        outcomes.append([(p + 1, gain), (p, 1.0 - gain)])
                dist: list[tuple[int, float]] = []
                for combo in itertools.product(*outcomes):
                    prob = 1.0
                    nxt = []
                    for p, q in combo:
                        nxt.append(p)
                        prob *= q
                    dist.append((_positions_to_state(tuple(nxt), length), prob))
                dist.sort(key=lambda d: d[0])
                entries.append(
                    TransitionEntry(
                        state=state,
                        joint=joint,
                        dist=tuple(dist),
                        profile=profile,
                    )
                )
    entries.sort(key=transition_entry_key)

    return SystemSpec(
        num_states=num_states,
        start=0,
        actions=(NULL, ADVANCE_FAST, ADVANCE_SLOW),
        agents=tuple(agents),
        attribute_names=(HUMAN_DRIVEN, HIGH_SPEED),
        protected=(0,),
        transition=TransitionSpec(entries=tuple(entries), attribute_sensitive=True),
        state_names=state_names,
    )


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class ScenarioSummary:
    states: int
    actions: int
    agents: int
    attributes: int
    protected_names: tuple[str, ...]
    attribute_sensitive: bool
    horizon: int | None = None
    estimated_runs: int | str | None = None


def describe(spec: SystemSpec, horizon: int | None = None) -> ScenarioSummary:
    """Size counts plus, when a horizon is given, the branching-bound run
    count estimate (or OVERFLOW when it exceeds 10**18)."""
    estimated: int | str | None = None
    if horizon is not None:
        count = estimate_run_count(spec, horizon)
        estimated = count if count <= OVERFLOW_LIMIT else OVERFLOW
    return ScenarioSummary(
        states=spec.num_states,
        actions=len(spec.actions),
        agents=len(spec.agents),
        attributes=len(spec.attribute_names),
        protected_names=tuple(spec.attribute_names[i] for i in spec.protected),
        attribute_sensitive=spec.transition.attribute_sensitive,
        horizon=horizon,
        estimated_runs=estimated,
    )
