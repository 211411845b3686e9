"""Protected-attribute fairness metrics over expected rewards.

Three measures are provided, all signed sums of expected-reward differences:

* demographic parity
    sums ExpRew(x) - ExpRew(y) over ordered pairs (x, y) where x holds the
    protected attribute, y does not, and both agree on every other attribute;
* counterfactual fairness
    sums, over agents holding the protected attribute, the gap between their
    expected reward and the expected reward of their twin in the counterfactual
    system where everyone's protected bit is flipped;
* conditional statistical parity
    demographic parity restricted to pairs that both possess every listed
    legitimate factor.

A measure of exactly 0 means the corresponding fairness notion holds.  Exact
verdicts compare |measure| against a tolerance (floating summation of equal
quantities may not cancel bit-exactly); Monte Carlo verdicts accept when the
95% interval of the measure covers 0 or touches the tolerance.

Monte Carlo evaluation samples one batch of runs per system and scores every
agent on the same runs; for counterfactual fairness the factual and
counterfactual systems share the same seed (common random numbers), which
shrinks the variance of the difference.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .engine import Z_95, expected_reward_exact, monte_carlo_rewards
from .errors import (
    IndexOutOfRangeError,
    LfOverlapsProtectedError,
    NotProtectedError,
)
from .model import SystemSpec

DEFAULT_TOLERANCE = 1e-9

DEM_PAR = "DEM_PAR"
COUNT_FAIR = "COUNT_FAIR"
COND_SP = "COND_SP"


@dataclass(frozen=True)
class Exact:
    """Evaluate expected rewards by exact state-distribution propagation."""


@dataclass(frozen=True)
class MonteCarlo:
    """Evaluate expected rewards from ``samples`` seeded runs."""

    samples: int
    seed: int


Method = Exact | MonteCarlo


@dataclass(frozen=True)
class PairContribution:
    """One term of a measure: agents (x, y) and their expected-reward gap.

    For counterfactual fairness y equals x: the agent is compared with itself
    in the counterfactual system.
    """

    x: int
    y: int
    contribution: float


@dataclass(frozen=True)
class FairnessReport:
    metric: str
    protected_attribute: int
    legitimate_factors: tuple[int, ...]
    horizon: int
    method: Method
    measure: float
    pairs: tuple[PairContribution, ...]
    satisfied: bool
    tolerance: float
    mean_contribution: float
    std_error: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None


def _check_protected(spec: SystemSpec, pr: int) -> None:
    if not (0 <= pr < len(spec.attribute_names)):
        raise IndexOutOfRangeError(
            f"attribute index {pr} not in [0, {len(spec.attribute_names)})", pr=pr
        )
    if pr not in spec.protected:
        raise NotProtectedError(f"attribute {pr} is not protected", pr=pr)


def _check_factors(spec: SystemSpec, lf: tuple[int, ...]) -> None:
    for f in lf:
        if not (0 <= f < len(spec.attribute_names)):
            raise IndexOutOfRangeError(
                f"attribute index {f} not in [0, {len(spec.attribute_names)})", lf=f
            )
    overlap = sorted(set(lf) & set(spec.protected))
    if overlap:
        raise LfOverlapsProtectedError(
            f"legitimate factors {overlap} are protected attributes", overlap=overlap
        )


def matched_pairs(
    spec: SystemSpec, pr: int, lf: tuple[int, ...] = ()
) -> list[tuple[int, int]]:
    """Ordered pairs (x, y): x holds ``pr``, y does not, both agree on every
    other attribute, and (when given) both possess every legitimate factor.

    Output is in ascending (x, y) order.
    """
    _check_protected(spec, pr)
    _check_factors(spec, lf)
    pairs = []
    for x, ax in enumerate(spec.agents):
        if ax.attributes[pr] != 1:
            continue
        if any(ax.attributes[f] != 1 for f in lf):
            continue
        for y, ay in enumerate(spec.agents):
            if y == x or ay.attributes[pr] != 0:
                continue
            if any(ay.attributes[f] != 1 for f in lf):
                continue
            others_agree = all(
                ax.attributes[i] == ay.attributes[i]
                for i in range(len(spec.attribute_names))
                if i != pr
            )
            if others_agree:
                pairs.append((x, y))
    return sorted(pairs)


def counterfactual_system(spec: SystemSpec, pr: int) -> SystemSpec:
    """The system with every agent's bit for ``pr`` flipped and everything
    else (actions, policies, rewards, transition entries) carried unchanged.

    Profile-conditioned transition entries match against the flipped
    population profile, which is how the counterfactual world can behave
    differently.  Applying this twice returns the original system.
    """
    _check_protected(spec, pr)
    agents = tuple(
        dataclasses.replace(
            agent,
            attributes=tuple(
                1 - bit if i == pr else bit for i, bit in enumerate(agent.attributes)
            ),
        )
        for agent in spec.agents
    )
    return dataclasses.replace(spec, agents=agents)


def _verdict(
    measure: float,
    tolerance: float,
    std_error: float | None,
) -> tuple[bool, float | None, float | None]:
    if std_error is None:
        return abs(measure) <= tolerance, None, None
    lo = measure - Z_95 * std_error
    hi = measure + Z_95 * std_error
    if lo <= 0.0 <= hi:
        return True, lo, hi
    return min(abs(lo), abs(hi)) <= tolerance, lo, hi


def _report(
    metric: str,
    pr: int,
    lf: tuple[int, ...],
    horizon: int,
    method: Method,
    tolerance: float,
    entries: list[PairContribution],
    std_error: float | None,
) -> FairnessReport:
    measure = 0.0
    for entry in entries:
        measure += entry.contribution
    satisfied, ci_low, ci_high = _verdict(measure, tolerance, std_error)
    return FairnessReport(
        metric=metric,
        protected_attribute=pr,
        legitimate_factors=lf,
        horizon=horizon,
        method=method,
        measure=measure,
        pairs=tuple(entries),
        satisfied=satisfied,
        tolerance=tolerance,
        mean_contribution=measure / max(1, len(entries)),
        std_error=std_error,
        ci_low=ci_low,
        ci_high=ci_high,
    )


def _pair_metric(
    metric: str,
    spec: SystemSpec,
    pr: int,
    lf: tuple[int, ...],
    horizon: int,
    method: Method,
    tolerance: float,
) -> FairnessReport:
    pairs = matched_pairs(spec, pr, lf)
    if isinstance(method, Exact):
        values: dict[int, float] = {}
        for x, y in pairs:
            for a in (x, y):
                if a not in values:
                    values[a] = expected_reward_exact(spec, a, horizon)
        entries = [PairContribution(x, y, values[x] - values[y]) for x, y in pairs]
        return _report(metric, pr, lf, horizon, method, tolerance, entries, None)

    if not pairs:
        return _report(metric, pr, lf, horizon, method, tolerance, [], 0.0)
    needed = sorted({a for pair in pairs for a in pair})
    rewards = monte_carlo_rewards(spec, horizon, method.samples, method.seed, needed)
    column = {a: i for i, a in enumerate(needed)}
    entries = [
        PairContribution(
            x, y, float(np.mean(rewards[:, column[x]] - rewards[:, column[y]]))
        )
        for x, y in pairs
    ]
    per_run = np.zeros(method.samples, dtype=np.float64)
    for x, y in pairs:
        per_run += rewards[:, column[x]] - rewards[:, column[y]]
    std_error = float(np.std(per_run, ddof=1) / np.sqrt(method.samples))
    return _report(metric, pr, lf, horizon, method, tolerance, entries, std_error)


def dem_par(
    spec: SystemSpec,
    pr: int,
    horizon: int,
    method: Method = Exact(),
    tolerance: float = DEFAULT_TOLERANCE,
) -> FairnessReport:
    """Demographic parity measure for protected attribute ``pr``.

    No matched pairs is not an error: the measure is 0 and the verdict is
    vacuously satisfied, with an empty pair list to make that visible.
    """
    return _pair_metric(DEM_PAR, spec, pr, (), horizon, method, tolerance)


def cond_sp(
    spec: SystemSpec,
    pr: int,
    lf: tuple[int, ...],
    horizon: int,
    method: Method = Exact(),
    tolerance: float = DEFAULT_TOLERANCE,
) -> FairnessReport:
    """Conditional statistical parity: demographic parity within the subgroup
    possessing every legitimate factor in ``lf``.

    With ``lf`` empty this is demographic parity, computed by the same
    arithmetic path.
    """
    return _pair_metric(COND_SP, spec, pr, tuple(lf), horizon, method, tolerance)


def count_fair(
    spec: SystemSpec,
    pr: int,
    horizon: int,
    method: Method = Exact(),
    tolerance: float = DEFAULT_TOLERANCE,
) -> FairnessReport:
    """Counterfactual fairness measure for protected attribute ``pr``.

    The sum ranges over agents holding ``pr`` in the factual system only;
    each contributes ExpRew in the factual system minus ExpRew of the same
    agent in the flipped system.
    """
    _check_protected(spec, pr)
    flipped = counterfactual_system(spec, pr)
    holders = [x for x, a in enumerate(spec.agents) if a.attributes[pr] == 1]

    if isinstance(method, Exact):
        entries = [
            PairContribution(
                x,
                x,
                expected_reward_exact(spec, x, horizon)
                - expected_reward_exact(flipped, x, horizon),
            )
            for x in holders
        ]
        return _report(COUNT_FAIR, pr, (), horizon, method, tolerance, entries, None)

    if not holders:
        return _report(COUNT_FAIR, pr, (), horizon, method, tolerance, [], 0.0)
    factual = monte_carlo_rewards(spec, horizon, method.samples, method.seed, holders)
    counter = monte_carlo_rewards(flipped, horizon, method.samples, method.seed, holders)
    entries = [
        PairContribution(x, x, float(np.mean(factual[:, i] - counter[:, i])))
        for i, x in enumerate(holders)
    ]
    per_run = (factual - counter).sum(axis=1)
    std_error = float(np.std(per_run, ddof=1) / np.sqrt(method.samples))
    return _report(COUNT_FAIR, pr, (), horizon, method, tolerance, entries, std_error)
