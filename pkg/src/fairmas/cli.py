"""Command-line interface: validation, enumeration, metrics, counterfactuals,
scenario generation, and configuration search.

Reports go to standard output as canonical JSON (sorted keys, fixed float
formatting); diagnostics go to standard error.  Exit codes: 0 success/fair,
1 validation or flag errors, 2 parse errors, 3 metric not satisfied,
4 enumeration cap exceeded.  With fixed seeds the default output is
byte-identical across runs; ``--timing`` fills ``wall_time_ms`` with a
measured value and is the one flag that breaks that.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__, engine, metrics, optimize, reporting, scenario
from .errors import (
    EnumerationCapExceededError,
    FairmasError,
    ParseError,
    UnsupportedSchemaVersionError,
    ValidationFailedError,
)
from .model import SystemSpec
from .optimize import Objective

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARSE = 2
EXIT_UNFAIR = 3
EXIT_CAP = 4

_PARSE_ERRORS = (ParseError, UnsupportedSchemaVersionError)

_METRIC_NAMES = {
    "dempar": metrics.DEM_PAR,
    "countfair": metrics.COUNT_FAIR,
    "condsp": metrics.COND_SP,
}


class _CliError(Exception):
    """Flag-consistency failure; maps to EXIT_INVALID."""


def _read_document(path: str) -> tuple[dict, str]:
    """Parsed document plus its content digest."""
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as exc:
        raise ParseError(f"cannot read '{path}': {exc.strerror}") from exc
    import json

    try:
        document = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        if hasattr(exc, "lineno"):
            raise ParseError(
                f"invalid JSON in '{path}' at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                line=exc.lineno,
                column=exc.colno,
            ) from exc
        raise ParseError(f"'{path}' is not UTF-8 text") from exc
    return document, reporting.content_digest(data)


def _load_spec(path: str, lenient: bool) -> tuple[SystemSpec, str]:
    document, digest = _read_document(path)
    return scenario.load_system(document, lenient=lenient), digest


def _attribute_index(spec: SystemSpec, name: str) -> int:
    return optimize.attribute_index(spec, name)


def _method_from_args(args: argparse.Namespace) -> metrics.Method:
    if args.method == "exact":
        if args.samples is not None or args.seed is not None:
            raise _CliError("--samples and --seed require --method mc")
        return metrics.Exact()
    samples = 100_000 if args.samples is None else args.samples
    seed = 0 if args.seed is None else args.seed
    if samples < 2:
        raise _CliError("--samples must be >= 2")
    return metrics.MonteCarlo(samples=samples, seed=seed)


def _emit(document: dict) -> None:
    sys.stdout.write(reporting.canonical_dumps(document))


def _report(
    args: argparse.Namespace,
    argv: list[str],
    digest: str,
    parameters: dict,
    payload: dict,
    started: float,
) -> dict:
    wall_ms = int((time.perf_counter() - started) * 1000) if args.timing else 0
    return reporting.build_report_document(
        tool_version=__version__,
        command=argv,
        input_digest=digest,
        parameters=parameters,
        payload=payload,
        wall_time_ms=wall_ms,
    )


# ---------------------------------------------------------------------------
# commands


def _cmd_validate(args: argparse.Namespace, argv: list[str], started: float) -> int:
    document, digest = _read_document(args.path)
    try:
        scenario.load_system(document, lenient=args.lenient)
        violations = []
    except ValidationFailedError as exc:
        violations = exc.violations
    payload = reporting.violations_to_dict(violations)
    _emit(_report(args, argv, digest, {"lenient": args.lenient}, payload, started))
    return EXIT_OK if not violations else EXIT_INVALID


def _cmd_metric(args: argparse.Namespace, argv: list[str], started: float) -> int:
    metric = _METRIC_NAMES[args.metric]
    factors = [f for f in (args.legit_factors or "").split(",") if f]
    if factors and metric != metrics.COND_SP:
        raise _CliError("--legit-factors is only valid with --metric condsp")
    method = _method_from_args(args)

    spec, digest = _load_spec(args.path, args.lenient)
    pr = _attribute_index(spec, args.protected)
    lf = tuple(_attribute_index(spec, name) for name in factors)

    if metric == metrics.DEM_PAR:
        report = metrics.dem_par(spec, pr, args.horizon, method, args.tolerance)
    elif metric == metrics.COND_SP:
        report = metrics.cond_sp(spec, pr, lf, args.horizon, method, args.tolerance)
    else:
        report = metrics.count_fair(spec, pr, args.horizon, method, args.tolerance)

    parameters = {
        "metric": args.metric,
        "protected": args.protected,
        "legit_factors": factors,
        "horizon": args.horizon,
        "method": reporting.method_to_dict(method),
        "tolerance": args.tolerance,
    }
    payload = reporting.fairness_report_to_dict(report)
    _emit(_report(args, argv, digest, parameters, payload, started))
    return EXIT_OK if report.satisfied else EXIT_UNFAIR


def _cmd_counterfactual(args: argparse.Namespace, argv: list[str], started: float) -> int:
    spec, _digest = _load_spec(args.path, args.lenient)
    pr = _attribute_index(spec, args.protected)
    flipped = metrics.counterfactual_system(spec, pr)
    text = reporting.canonical_dumps(scenario.save_system(flipped))
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(text)
    print(f"wrote counterfactual system to {args.out}", file=sys.stderr)
    return EXIT_OK


def _parse_cars(text: str) -> tuple[tuple[str, str], ...]:
    cars = []
    for token in text.split(","):
        parts = token.strip().split(":")
        if len(parts) != 2:
            raise _CliError(
                f"car '{token}' must be driver:speed, e.g. human:high"
            )
        cars.append((parts[0], parts[1]))
    return tuple(cars)


def _traffic_params_from_args(args: argparse.Namespace) -> scenario.TrafficParams:
    try:
        return scenario.TrafficParams(
            corridor_length=args.length,
            cars=_parse_cars(args.cars),
            fast_route_gain=args.fast_route_gain,
            human_gain=args.human_gain,
            slow_route_gain=args.slow_route_gain,
            dedicated_lane=args.dedicated_lane,
            arrival_reward=args.arrival_reward,
            step_cost=args.step_cost,
            ai_fast_prob=args.ai_fast_prob,
            human_fast_prob=args.human_fast_prob,
        )
    except ValueError as exc:
        raise _CliError(str(exc)) from exc


def _cmd_gen(args: argparse.Namespace, argv: list[str], started: float) -> int:
    if args.family != "traffic":
        raise _CliError(f"unknown scenario family '{args.family}'")
    spec = scenario.build_traffic(_traffic_params_from_args(args))
    text = reporting.canonical_dumps(scenario.save_system(spec))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
        print(f"wrote scenario to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_enumerate(args: argparse.Namespace, argv: list[str], started: float) -> int:
    spec, digest = _load_spec(args.path, args.lenient)
    cap = args.cap
    if cap is None:
        cap = int(os.environ.get("FAIRMAS_ENUM_CAP", engine.DEFAULT_ENUMERATION_CAP))

    count = 0
    mass = 0.0
    for run in engine.enumerate_runs(spec, args.horizon, cap=cap):
        count += 1
        mass += run.probability
    if abs(mass - 1.0) > 1e-9:
        print(
            f"probability mass {mass!r} differs from 1 by more than 1e-9",
            file=sys.stderr,
        )
        return EXIT_INVALID

    payload = {
        "type": "enumeration_summary",
        "runs": count,
        "probability_mass": mass,
        "expected_rewards": [
            engine.expected_reward_exact(spec, x, args.horizon)
            for x in range(len(spec.agents))
        ],
    }
    parameters = {"horizon": args.horizon, "cap": cap}
    _emit(_report(args, argv, digest, parameters, payload, started))
    return EXIT_OK


def _cmd_optimize(args: argparse.Namespace, argv: list[str], started: float) -> int:
    metric = _METRIC_NAMES[args.metric]
    factors = [f for f in (args.legit_factors or "").split(",") if f]
    if factors and metric != metrics.COND_SP:
        raise _CliError("--legit-factors is only valid with --metric condsp")

    if args.method == "exact":
        if args.samples is not None or args.metric_seed is not None:
            raise _CliError("--samples and --metric-seed require --method mc")
        method: metrics.Method = metrics.Exact()
    else:
        method = metrics.MonteCarlo(
            samples=100_000 if args.samples is None else args.samples,
            seed=0 if args.metric_seed is None else args.metric_seed,
        )

    objective = Objective(
        metric=metric,
        protected=args.protected,
        horizon=args.horizon,
        legitimate_factors=tuple(factors),
        method=method,
        mode=args.mode,
        efficiency_weight=args.efficiency_weight,
    )

    if args.family:
        if args.path:
            raise _CliError("give either a scenario path or --family, not both")
        if args.family != "traffic":
            raise _CliError(f"unknown scenario family '{args.family}'")
        search = [s for s in (args.search or "dedicated_lane").split(",") if s]
        try:
            space = optimize.traffic_space(search)
        except ValueError as exc:
            raise _CliError(str(exc)) from exc
        descriptor = {"family": args.family, "search": search}
        digest = reporting.content_digest(
            reporting.canonical_dumps(descriptor).encode("utf-8")
        )
    else:
        if not args.path:
            raise _CliError("need a scenario path or --family")
        if args.search:
            raise _CliError("--search requires --family")
        spec, digest = _load_spec(args.path, args.lenient)
        space = optimize.fixed_system_space(spec)

    if args.optimizer == "grid":
        result = optimize.grid_search(space, objective, resolution=args.resolution)
    elif args.optimizer == "random":
        result = optimize.random_search(space, objective, args.budget, args.seed)
    else:
        result = optimize.evolutionary_search(
            space,
            objective,
            args.budget,
            population=args.population,
            offspring=args.offspring,
            mutation_scale=args.mutation_scale,
            seed=args.seed,
        )

    payload = {
        "type": "optimization_result",
        "optimizer": args.optimizer,
        "best_config": result.best_config,
        "best_value": result.best_value,
        "budget_used": result.budget_used,
        "seed": result.seed,
        "trace": [
            {"index": e.index, "config": e.config, "value": e.value}
            for e in result.trace
        ],
    }
    parameters = {
        "metric": args.metric,
        "protected": args.protected,
        "legit_factors": factors,
        "horizon": args.horizon,
        "method": reporting.method_to_dict(method),
        "mode": args.mode,
        "efficiency_weight": args.efficiency_weight,
        "optimizer": args.optimizer,
        "budget": args.budget,
        "resolution": args.resolution,
        "population": args.population,
        "offspring": args.offspring,
        "mutation_scale": args.mutation_scale,
        "seed": args.seed,
    }
    _emit(_report(args, argv, digest, parameters, payload, started))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_metric_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--metric", required=True, choices=sorted(_METRIC_NAMES), help="fairness metric"
    )
    parser.add_argument("--protected", required=True, help="protected attribute name")
    parser.add_argument(
        "--legit-factors",
        help="comma-separated legitimate factor names (condsp only)",
    )
    parser.add_argument("--horizon", type=int, required=True, help="run horizon H")
    parser.add_argument(
        "--method", choices=("exact", "mc"), default="exact", help="evaluation method"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairmas",
        description="Simulate multi-agent systems and measure protected-attribute fairness.",
    )
    parser.add_argument("--version", action="version", version=f"fairmas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file against every invariant")
    p.add_argument("path")
    p.add_argument("--lenient", action="store_true", help="ignore unknown document keys")
    p.add_argument("--timing", action="store_true", help="measure wall_time_ms")

    p = sub.add_parser("metric", help="evaluate a fairness metric on a scenario file")
    p.add_argument("path")
    _add_metric_flags(p)
    p.add_argument("--samples", type=int, help="Monte Carlo sample count (mc only)")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (mc only)")
    p.add_argument(
        "--tolerance",
        type=float,
        default=metrics.DEFAULT_TOLERANCE,
        help="satisfaction tolerance on |measure|",
    )
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("counterfactual", help="write the protected-bit-flipped system")
    p.add_argument("path")
    p.add_argument("--protected", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("gen", help="generate a scenario file from a registered family")
    p.add_argument("--family", default="traffic")
    p.add_argument("--cars", default="human:high,ai:high", help="driver:speed list")
    p.add_argument("--length", type=int, default=3, help="corridor length")
    p.add_argument("--fast-route-gain", type=float, default=0.9)
    p.add_argument("--human-gain", type=float, default=0.6)
    p.add_argument("--slow-route-gain", type=float, default=0.5)
    p.add_argument("--dedicated-lane", action="store_true")
    p.add_argument("--arrival-reward", type=float, default=10.0)
    p.add_argument("--step-cost", type=float, default=-1.0)
    p.add_argument("--ai-fast-prob", type=float, default=0.8)
    p.add_argument("--human-fast-prob", type=float, default=0.5)
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("enumerate", help="enumerate all runs of a fixed horizon")
    p.add_argument("path")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument(
        "--cap",
        type=int,
        help="run-count cap (default FAIRMAS_ENUM_CAP or 10^7)",
    )
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--timing", action="store_true")

    p = sub.add_parser("optimize", help="search configurations for a fairer system")
    p.add_argument("path", nargs="?", help="scenario file (fixed, degenerate search)")
    p.add_argument("--family", help="registered scenario family to search")
    _add_metric_flags(p)
    p.add_argument("--samples", type=int, help="Monte Carlo sample count (mc only)")
    p.add_argument("--metric-seed", type=int, help="Monte Carlo seed (mc only)")
    p.add_argument(
        "--search", help="comma-separated family parameters to search over"
    )
    p.add_argument(
        "--optimizer", choices=("grid", "random", "evolution"), default="grid"
    )
    p.add_argument("--budget", type=int, default=100, help="evaluation budget")
    p.add_argument("--resolution", type=int, default=11, help="grid points per real axis")
    p.add_argument("--population", type=int, default=8)
    p.add_argument("--offspring", type=int, default=8)
    p.add_argument("--mutation-scale", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0, help="search seed")
    p.add_argument(
        "--mode",
        choices=(optimize.MINIMIZE_ABS, optimize.MINIMIZE_SIGNED),
        default=optimize.MINIMIZE_ABS,
    )
    p.add_argument("--efficiency-weight", type=float, default=0.0)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--timing", action="store_true")

    return parser


_HANDLERS = {
    "validate": _cmd_validate,
    "metric": _cmd_metric,
    "counterfactual": _cmd_counterfactual,
    "gen": _cmd_gen,
    "enumerate": _cmd_enumerate,
    "optimize": _cmd_optimize,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 for usage errors; fold into the flag-error code,
        # but let --help/--version exit 0 untouched.
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID

    try:
        return _HANDLERS[args.command](args, argv, started)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EnumerationCapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FairmasError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
