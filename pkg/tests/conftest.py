"""Shared fixtures: small hand-built systems, traffic instances, golden values."""

from __future__ import annotations

import json
import pathlib

import pytest

from fairmas.model import AgentSpec, SystemSpec, TransitionEntry, TransitionSpec
from fairmas.scenario import TrafficParams, build_traffic

GOLDEN_DIR = pathlib.Path(__file__).parent / "golden"


def make_coin_system() -> SystemSpec:
    """One idle agent; the environment moves from state 0 to the absorbing
    state 1 with probability 0.7 per step, paying 1 on that move."""
    agent = AgentSpec(
        attributes=(0, 0),
        actions=(0,),
        policy=((1.0,), (1.0,)),
        rewards=((0, 1, 1.0),),
    )
    entries = (
        TransitionEntry(state=0, joint=(0,), dist=((0, 0.3), (1, 0.7))),
        TransitionEntry(state=1, joint=(0,), dist=((1, 1.0),)),
    )
    return SystemSpec(
        num_states=2,
        start=0,
        actions=("null",),
        agents=(agent,),
        attribute_names=("marked", "spare"),
        protected=(0,),
        transition=TransitionSpec(entries=entries),
    )


def make_twin_system() -> SystemSpec:
    """Two agents identical in actions, policy, and rewards, differing only in
    the protected bit; the environment ignores attributes entirely."""
    policy = ((0.5, 0.5), (0.5, 0.5))
    rewards = ((0, 1, 2.0), (1, 1, 1.0))
    agents = (
        AgentSpec(attributes=(1, 0), actions=(0, 1), policy=policy, rewards=rewards),
        AgentSpec(attributes=(0, 0), actions=(0, 1), policy=policy, rewards=rewards),
    )
    entries = []
    for state in (0, 1):
        for a in (0, 1):
            for b in (0, 1):
                dist = ((0, 0.4), (1, 0.6)) if state == 0 else ((1, 1.0),)
                entries.append(TransitionEntry(state=state, joint=(a, b), dist=dist))
    return SystemSpec(
        num_states=2,
        start=0,
        actions=("null", "go"),
        agents=agents,
        attribute_names=("shielded", "sturdy"),
        protected=(0,),
        transition=TransitionSpec(entries=tuple(entries)),
    )


def make_deterministic_system() -> SystemSpec:
    """One agent, one action, a deterministic two-state cycle, reward 1 per step."""
    agent = AgentSpec(
        attributes=(0, 0),
        actions=(0,),
        policy=((1.0,), (1.0,)),
        rewards=((0, 1, 1.0), (1, 0, 1.0)),
    )
    entries = (
        TransitionEntry(state=0, joint=(0,), dist=((1, 1.0),)),
        TransitionEntry(state=1, joint=(0,), dist=((0, 1.0),)),
    )
    return SystemSpec(
        num_states=2,
        start=0,
        actions=("null",),
        agents=(agent,),
        attribute_names=("marked", "spare"),
        protected=(0,),
        transition=TransitionSpec(entries=entries),
    )


@pytest.fixture
def coin_system() -> SystemSpec:
    return make_coin_system()


@pytest.fixture
def twin_system() -> SystemSpec:
    return make_twin_system()


@pytest.fixture
def deterministic_system() -> SystemSpec:
    return make_deterministic_system()


@pytest.fixture(scope="session")
def traffic_default() -> SystemSpec:
    return build_traffic(TrafficParams())


@pytest.fixture(scope="session")
def traffic_lane() -> SystemSpec:
    return build_traffic(TrafficParams(dedicated_lane=True))


@pytest.fixture(scope="session")
def golden_values() -> dict:
    return json.loads((GOLDEN_DIR / "golden_values.json").read_text(encoding="utf-8"))
