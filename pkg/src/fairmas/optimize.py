"""Black-box search over environment configurations to reduce unfairness.

A ConfigSpace pairs typed parameters (boolean, integer range, real range)
with a binder that turns a configuration into a full system; the objective
evaluates one fairness metric on the bound system, by default minimizing the
measure's absolute value (over- and under-rewarding the protected group are
both unfair).  An optional efficiency term ``value -= weight * total exact
expected reward`` expresses fairness/efficiency trade-offs.

Three searches are provided: exhaustive grid (the oracle for the others),
uniform random sampling, and a (mu + lambda) evolution strategy.  All three
are pure functions of their arguments: randomness comes from counter-based
substreams keyed by evaluation index, so results do not depend on how
evaluations are scheduled.  Monte Carlo objectives keep one fixed seed for
the whole search, so the optimizer always sees a deterministic function
(frozen noise; a deliberate bias/variance trade-off).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from . import metrics, rng
from .errors import (
    BindFailedError,
    GridTooLargeError,
    UnknownAttributeError,
    ValidationFailedError,
)
from .metrics import Exact, Method
from .model import SystemSpec
from .engine import expected_reward_exact
from .scenario import TrafficParams, build_traffic

MINIMIZE_ABS = "abs"
MINIMIZE_SIGNED = "signed"

DEFAULT_GRID_CAP = 1_000_000


@dataclass(frozen=True)
class BoolParam:
    name: str


@dataclass(frozen=True)
class IntParam:
    name: str
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"{self.name}: lo {self.lo} > hi {self.hi}")


@dataclass(frozen=True)
class RealParam:
    name: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (self.lo <= self.hi):
            raise ValueError(f"{self.name}: lo {self.lo} > hi {self.hi}")


Parameter = BoolParam | IntParam | RealParam

Config = dict


@dataclass(frozen=True)
class ConfigSpace:
    """Typed parameters plus a binder from configurations to systems."""

    parameters: tuple[Parameter, ...]
    binder: Callable[[Config], SystemSpec]

    def __post_init__(self) -> None:
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")


@dataclass(frozen=True)
class Objective:
    """Which fairness measure to minimize, and how."""

    metric: str
    protected: str
    horizon: int
    legitimate_factors: tuple[str, ...] = ()
    method: Method = Exact()
    mode: str = MINIMIZE_ABS
    efficiency_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.metric not in (metrics.DEM_PAR, metrics.COUNT_FAIR, metrics.COND_SP):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.mode not in (MINIMIZE_ABS, MINIMIZE_SIGNED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.efficiency_weight < 0.0:
            raise ValueError("efficiency_weight must be >= 0")


@dataclass(frozen=True)
class TraceEntry:
    index: int
    config: Config
    value: float


@dataclass(frozen=True)
class OptimizationResult:
    best_config: Config
    best_value: float
    trace: tuple[TraceEntry, ...]
    budget_used: int
    seed: int


def attribute_index(spec: SystemSpec, name: str) -> int:
    try:
        return spec.attribute_names.index(name)
    except ValueError:
        raise UnknownAttributeError(
            f"attribute '{name}' not in {list(spec.attribute_names)}", name=name
        ) from None


def _check_config(space: ConfigSpace, config: Config) -> None:
    expected = {p.name for p in space.parameters}
    if set(config) != expected:
        raise ValueError(f"config keys {sorted(config)} do not match {sorted(expected)}")
    for param in space.parameters:
        value = config[param.name]
        if isinstance(param, BoolParam):
            if not isinstance(value, bool):
                raise ValueError(f"{param.name} must be a bool, got {value!r}")
        elif isinstance(param, IntParam):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{param.name} must be an int, got {value!r}")
            if not (param.lo <= value <= param.hi):
                raise ValueError(f"{param.name}={value} outside [{param.lo}, {param.hi}]")
        else:
            if not (param.lo <= float(value) <= param.hi):
                raise ValueError(f"{param.name}={value} outside [{param.lo}, {param.hi}]")


def evaluate_config(space: ConfigSpace, objective: Objective, config: Config) -> float:
    """Bind ``config`` and return the objective value of the bound system.

    Deterministic given (config, objective): Monte Carlo objectives carry
    their seed inside the method.
    """
    _check_config(space, config)
    try:
        spec = space.binder(dict(config))
    except (ValueError, ValidationFailedError) as exc:
        raise BindFailedError(f"binder rejected config {config}: {exc}") from exc

    pr = attribute_index(spec, objective.protected)
    lf = tuple(attribute_index(spec, name) for name in objective.legitimate_factors)
    if objective.metric == metrics.DEM_PAR:
        report = metrics.dem_par(spec, pr, objective.horizon, objective.method)
    elif objective.metric == metrics.COND_SP:
        report = metrics.cond_sp(spec, pr, lf, objective.horizon, objective.method)
    else:
        report = metrics.count_fair(spec, pr, objective.horizon, objective.method)

    value = abs(report.measure) if objective.mode == MINIMIZE_ABS else report.measure
    if objective.efficiency_weight > 0.0:
        total = sum(
            expected_reward_exact(spec, x, objective.horizon)
            for x in range(len(spec.agents))
        )
        value -= objective.efficiency_weight * total
    return value


def _best(trace: list[TraceEntry]) -> TraceEntry:
    best = trace[0]
    for entry in trace[1:]:
        if entry.value < best.value:
            best = entry
    return best


def grid_search(
    space: ConfigSpace,
    objective: Objective,
    resolution: int = 11,
    max_evals: int = DEFAULT_GRID_CAP,
) -> OptimizationResult:
    """Exhaustively evaluate the Cartesian grid over all parameters.

    Booleans take both values, integer ranges every value, real ranges
    ``resolution`` evenly spaced points including both endpoints.  Ties keep
    the first hit in lexicographic configuration order.  An empty parameter
    list evaluates the single empty configuration.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    axes: list[list] = []
    for param in space.parameters:
        if isinstance(param, BoolParam):
            axes.append([False, True])
        elif isinstance(param, IntParam):
            axes.append(list(range(param.lo, param.hi + 1)))
        else:
            if resolution == 1 or param.lo == param.hi:
                axes.append([param.lo])
            else:
                step = (param.hi - param.lo) / (resolution - 1)
                points = [param.lo + i * step for i in range(resolution - 1)]
                axes.append(points + [param.hi])
    total = math.prod(len(axis) for axis in axes)
    if total > max_evals:
        raise GridTooLargeError(
            f"grid has {total} points, cap is {max_evals}", size=total, cap=max_evals
        )

    trace: list[TraceEntry] = []
    names = [p.name for p in space.parameters]
    for i, values in enumerate(itertools.product(*axes)):
        config = dict(zip(names, values))
        trace.append(TraceEntry(i, config, evaluate_config(space, objective, config)))
    best = _best(trace)
    return OptimizationResult(
        best_config=best.config,
        best_value=best.value,
        trace=tuple(trace),
        budget_used=len(trace),
        seed=0,
    )


def _sample_uniform(space: ConfigSpace, stream: rng.Stream) -> Config:
    config: Config = {}
    for param in space.parameters:
        u = stream.next_unit()
        if isinstance(param, BoolParam):
            config[param.name] = u < 0.5
        elif isinstance(param, IntParam):
            config[param.name] = min(
                param.hi, param.lo + int(u * (param.hi - param.lo + 1))
            )
        else:
            config[param.name] = param.lo + u * (param.hi - param.lo)
    return config


def random_search(
    space: ConfigSpace, objective: Objective, budget: int, seed: int
) -> OptimizationResult:
    """Evaluate ``budget`` configurations sampled uniformly at random.

    Evaluation i draws from substream i of ``seed``, so the trace is
    identical however evaluations are scheduled.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    trace = []
    for i in range(budget):
        config = _sample_uniform(space, rng.Stream(rng.substream_seed(seed, i)))
        trace.append(TraceEntry(i, config, evaluate_config(space, objective, config)))
    best = _best(trace)
    return OptimizationResult(
        best_config=best.config,
        best_value=best.value,
        trace=tuple(trace),
        budget_used=len(trace),
        seed=seed,
    )


def _gaussian(stream: rng.Stream) -> float:
    # Box-Muller; 1 - u keeps the log argument in (0, 1].
    u1 = stream.next_unit()
    u2 = stream.next_unit()
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def _mutate(
    space: ConfigSpace, parent: Config, scale: float, stream: rng.Stream
) -> Config:
    child = dict(parent)
    for param in space.parameters:
        if isinstance(param, BoolParam):
            if stream.next_unit() < scale:
                child[param.name] = not child[param.name]
        elif isinstance(param, IntParam):
            if stream.next_unit() < scale:
                step = 1 if stream.next_unit() < 0.5 else -1
                child[param.name] = min(param.hi, max(param.lo, child[param.name] + step))
        else:
            noise = scale * (param.hi - param.lo) * _gaussian(stream)
            child[param.name] = min(param.hi, max(param.lo, child[param.name] + noise))
    return child


def evolutionary_search(
    space: ConfigSpace,
    objective: Objective,
    budget: int,
    population: int = 8,
    offspring: int = 8,
    mutation_scale: float = 0.2,
    seed: int = 0,
) -> OptimizationResult:
    """(mu + lambda) evolution strategy.

    Starts from ``population`` uniform configurations; each generation mutates
    uniformly chosen parents into ``offspring`` children (reals get additive
    noise of ``mutation_scale`` times the range, integers step by one and
    booleans flip with that probability) and keeps the best ``population`` of
    parents and children.  Stops once ``budget`` evaluations are spent and
    returns the best configuration ever seen.
    """
    if population < 1 or offspring < 1:
        raise ValueError("population and offspring must be >= 1")
    if budget < population:
        raise ValueError("budget must cover the initial population")
    if mutation_scale < 0.0:
        raise ValueError("mutation_scale must be >= 0")

    trace: list[TraceEntry] = []

    def evaluate(config: Config) -> TraceEntry:
        index = len(trace)
        entry = TraceEntry(index, config, evaluate_config(space, objective, config))
        trace.append(entry)
        return entry

    parents = [
        evaluate(_sample_uniform(space, rng.Stream(rng.substream_seed(seed, i))))
        for i in range(population)
    ]
    while len(trace) < budget:
        children = []
        for _ in range(min(offspring, budget - len(trace))):
            stream = rng.Stream(rng.substream_seed(seed, len(trace)))
            parent = parents[int(stream.next_unit() * population) % population]
            children.append(evaluate(_mutate(space, parent.config, mutation_scale, stream)))
        pool = parents + children
        pool.sort(key=lambda e: (e.value, e.index))
        parents = pool[:population]

    best = _best(trace)
    return OptimizationResult(
        best_config=best.config,
        best_value=best.value,
        trace=tuple(trace),
        budget_used=len(trace),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# registered scenario families

_TRAFFIC_CATALOG: dict[str, Parameter] = {
    "dedicated_lane": BoolParam("dedicated_lane"),
    "fast_route_gain": RealParam("fast_route_gain", 0.05, 1.0),
    "human_gain": RealParam("human_gain", 0.05, 1.0),
    "slow_route_gain": RealParam("slow_route_gain", 0.05, 1.0),
    "ai_fast_prob": RealParam("ai_fast_prob", 0.0, 1.0),
    "human_fast_prob": RealParam("human_fast_prob", 0.0, 1.0),
    "arrival_reward": RealParam("arrival_reward", 0.0, 20.0),
    "step_cost": RealParam("step_cost", -5.0, 0.0),
    "corridor_length": IntParam("corridor_length", 1, 4),
}


def traffic_space(
    search: Sequence[str] = ("dedicated_lane",), fixed: dict | None = None
) -> ConfigSpace:
    """Config space over the traffic family, searching the named parameters.

    ``fixed`` overrides defaults for parameters that are not searched.
    """
    unknown = sorted(set(search) - set(_TRAFFIC_CATALOG))
    if unknown:
        raise ValueError(f"unknown traffic parameters {unknown}")
    fixed = dict(fixed or {})
    overlap = sorted(set(fixed) & set(search))
    if overlap:
        raise ValueError(f"parameters {overlap} are both searched and fixed")

    parameters = tuple(_TRAFFIC_CATALOG[name] for name in search)

    def binder(config: Config) -> SystemSpec:
        values = dict(fixed)
        values.update(config)
        if "cars" in values:
            values["cars"] = tuple(tuple(car) for car in values["cars"])
        return build_traffic(TrafficParams(**values))

    return ConfigSpace(parameters=parameters, binder=binder)


def fixed_system_space(spec: SystemSpec) -> ConfigSpace:
    """Degenerate space over an already-built system: nothing to vary."""
    return ConfigSpace(parameters=(), binder=lambda _config: spec)


FAMILIES: dict[str, Callable[..., ConfigSpace]] = {"traffic": traffic_space}
