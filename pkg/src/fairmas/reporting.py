"""Canonical JSON serialization for scenario documents and CLI reports.

Canonical form: keys sorted, two-space indent, floats printed with 17
significant digits (enough to round-trip any IEEE double exactly), arrays in
index order, trailing newline.  Identical values always serialize to
identical bytes, so golden files and report diffs are stable.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

from .engine import EstimatorResult
from .metrics import Exact, FairnessReport, Method, MonteCarlo
from .model import Violation


def _format_number(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite number {value!r}")
    return format(value, ".17g")


def _emit(value: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(value)
        for i, key in enumerate(keys):
            if not isinstance(key, str):
                raise TypeError(f"document keys must be strings, got {key!r}")
            out.append(f"{inner}{json.dumps(key)}: ")
            _emit(value[key], indent + 1, out)
            out.append(",\n" if i + 1 < len(keys) else "\n")
        out.append(f"{pad}}}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(inner)
            _emit(item, indent + 1, out)
            out.append(",\n" if i + 1 < len(value) else "\n")
        out.append(f"{pad}]")
    elif isinstance(value, bool) or value is None or isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_number(value))
    else:
        raise TypeError(f"cannot serialize {type(value).__name__} canonically")


def canonical_dumps(document: Any) -> str:
    """Serialize a document to canonical JSON text."""
    out: list[str] = []
    _emit(document, 0, out)
    out.append("\n")
    return "".join(out)


def content_digest(data: bytes) -> str:
    """Hex SHA-256 of raw document bytes, used as the report input digest."""
    return "sha256:" + hashlib.sha256(data).hexdigest()


def method_to_dict(method: Method) -> dict:
    if isinstance(method, MonteCarlo):
        return {"kind": "mc", "samples": method.samples, "seed": method.seed}
    assert isinstance(method, Exact)
    return {"kind": "exact"}


def fairness_report_to_dict(report: FairnessReport) -> dict:
    payload = {
        "type": "fairness_report",
        "metric": report.metric,
        "protected_attribute": report.protected_attribute,
        "legitimate_factors": list(report.legitimate_factors),
        "horizon": report.horizon,
        "method": method_to_dict(report.method),
        "measure": report.measure,
        "pairs": [
            {"x": p.x, "y": p.y, "contribution": p.contribution}
            for p in report.pairs
        ],
        "satisfied": report.satisfied,
        "tolerance": report.tolerance,
        "mean_contribution": report.mean_contribution,
    }
    if report.std_error is not None:
        payload["std_error"] = report.std_error
        payload["ci_low"] = report.ci_low
        payload["ci_high"] = report.ci_high
    return payload


def estimator_to_dict(result: EstimatorResult) -> dict:
    return {
        "type": "estimator_result",
        "mean": result.mean,
        "std_error": result.std_error,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "samples": result.samples,
        "seed": result.seed,
        "horizon": result.horizon,
    }


def violations_to_dict(violations: list[Violation]) -> dict:
    return {
        "type": "violations",
        "count": len(violations),
        "violations": [
            {"code": v.code, "message": v.message, "location": v.location}
            for v in violations
        ],
    }


def build_report_document(
    tool_version: str,
    command: list[str],
    input_digest: str,
    parameters: dict,
    payload: dict,
    wall_time_ms: int = 0,
) -> dict:
    """Assemble the report envelope emitted by every CLI command.

    ``wall_time_ms`` defaults to 0 so that default reports are byte-identical
    across runs; the CLI only fills it when timing is explicitly requested.
    """
    return {
        "tool_version": tool_version,
        "command": list(command),
        "input_digest": input_digest,
        "parameters": parameters,
        "payload": payload,
        "wall_time_ms": wall_time_ms,
    }
