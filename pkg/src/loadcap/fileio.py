"""File formats: traces, fitted models, pmfs, regions, results, experiments.

CSV output is locale-independent ('.' decimal, '\\n' line endings, UTF-8)
and JSON output is deterministic (sorted keys, no timestamps), so rerunning
a command with the same inputs and seed reproduces files byte for byte.
NaN is serialized as null.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .admission import QosPolicy
from .models import (
    MODEL_FAMILIES,
    AlternatingRenewal,
    ApplianceClass,
    Bernoulli,
    DurationPmf,
    LoadModel,
    TraceSeries,
    TwoStateMarkov,
    fit_model,
)
from .scheduling import SchedulingStrategy, SlotOutcome
from .simulation import SimConfig, SimMode, SimResult, SweepCell
from .tailprob import EstimationMethod, PowerPmf

__all__ = [
    "TRACE_HEADER",
    "ExperimentSpec",
    "read_trace",
    "write_trace",
    "read_model",
    "write_model",
    "write_pmf",
    "write_region",
    "write_series",
    "write_outcomes",
    "write_sweep",
    "write_result",
    "write_sweep_result",
    "parse_experiment",
]

TRACE_HEADER = ("timestamp_s", "power_w")


def _open_write(path: str):
    return open(path, "w", encoding="utf-8", newline="")


def read_trace(path: str) -> TraceSeries:
    """Load a measured power trace from CSV.

    The header must be exactly ``timestamp_s,power_w``; every data row must
    hold two numbers.  The sample period is taken from the first timestamp
    gap (1 s for single-row traces).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty trace file") from None
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ValueError(
                f"bad trace header {header!r}; expected {','.join(TRACE_HEADER)}"
            )
        times: list[float] = []
        watts: list[float] = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 2:
                    raise ValueError
                times.append(float(row[0]))
                watts.append(float(row[1]))
            except ValueError:
                raise ValueError(f"malformed trace row {row_number}: {row!r}") from None
    if not watts:
        raise ValueError("trace has no data rows")
    period = times[1] - times[0] if len(times) >= 2 else 1.0
    if period <= 0.0:
        raise ValueError(f"non-increasing timestamps; first gap is {period!r}")
    return TraceSeries(sample_period_s=period, watts=np.array(watts))


def write_trace(path: str, trace: TraceSeries) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for i, w in enumerate(trace.watts):
            writer.writerow([repr(i * trace.sample_period_s), repr(float(w))])


def _require_keys(obj: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ValueError(f"unknown keys {unknown!r} in {where}")


def write_model(path: str, model: LoadModel, on_power: float) -> None:
    """Persist a fitted model as a flat JSON object."""
    doc: dict[str, Any] = {"on_power": float(on_power)}
    if isinstance(model, Bernoulli):
        doc["family"] = "bernoulli"
        doc["p_on"] = model.p_on
    elif isinstance(model, TwoStateMarkov):
        doc["family"] = "markov"
        doc["p_off_to_on"] = model.p_off_to_on
        doc["p_on_to_off"] = model.p_on_to_off
    elif isinstance(model, AlternatingRenewal):
        doc["family"] = "renewal"
        doc["on_durations"] = {str(d): p for d, p in model.on_durations.as_mapping().items()}
        doc["off_durations"] = {str(d): p for d, p in model.off_durations.as_mapping().items()}
    else:
        raise ValueError(f"unknown model type {type(model).__name__}")
    _write_json(path, doc)


def _model_from_doc(doc: Mapping[str, Any], where: str) -> tuple[LoadModel, float]:
    family = doc.get("family")
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r} in {where}")
    if "on_power" not in doc:
        raise ValueError(f"missing on_power in {where}")
    on_power = float(doc["on_power"])
    if family == "bernoulli":
        _require_keys(doc, {"family", "on_power", "p_on"}, where)
        return Bernoulli(p_on=float(doc["p_on"])), on_power
    if family == "markov":
        _require_keys(doc, {"family", "on_power", "p_off_to_on", "p_on_to_off"}, where)
        return (
            TwoStateMarkov(
                p_off_to_on=float(doc["p_off_to_on"]),
                p_on_to_off=float(doc["p_on_to_off"]),
            ),
            on_power,
        )
    _require_keys(doc, {"family", "on_power", "on_durations", "off_durations"}, where)

    def pmf(raw: Mapping[str, Any]) -> DurationPmf:
        return DurationPmf.from_mapping({int(k): float(v) for k, v in raw.items()})

    return (
        AlternatingRenewal(
            on_durations=pmf(doc["on_durations"]),
            off_durations=pmf(doc["off_durations"]),
        ),
        on_power,
    )


def read_model(path: str) -> tuple[LoadModel, float]:
    """Load a model JSON; returns the model and its ON wattage."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"model file {path!r} must hold a JSON object")
    return _model_from_doc(doc, f"model file {path!r}")


def write_pmf(path: str, pmf: PowerPmf) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["watts", "probability"])
        for w, prob in zip(pmf.support_watts, pmf.probabilities):
            writer.writerow([repr(float(w)), repr(float(prob))])


def write_region(path: str, region: np.ndarray) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n1", "n2", "accept"])
        for n1 in range(region.shape[0]):
            for n2 in range(region.shape[1]):
                writer.writerow([n1, n2, "true" if region[n1, n2] else "false"])


def write_series(path: str, result: SimResult) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "baseline_w", "managed_w"])
        for t in range(result.slots):
            writer.writerow(
                [
                    t,
                    repr(float(result.series_baseline[t])),
                    repr(float(result.series_managed[t])),
                ]
            )


def write_outcomes(path: str, outcomes: Sequence[SlotOutcome]) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "served_w", "dropped_w", "backlog_depth", "disabled_count"])
        for t, outcome in enumerate(outcomes):
            writer.writerow(
                [
                    t,
                    repr(outcome.served_load),
                    repr(outcome.dropped_load),
                    outcome.backlog_depth,
                    outcome.disabled_count,
                ]
            )


def write_sweep(path: str, cells: Sequence[SweepCell]) -> None:
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "method", "enabled", "p_hat", "k", "stderr"])
        for cell in cells:
            writer.writerow(
                [
                    repr(cell.p),
                    cell.method.value,
                    cell.enabled,
                    repr(cell.p_hat),
                    repr(cell.k),
                    repr(cell.stderr),
                ]
            )


def _sanitize(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def _write_json(path: str, doc: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(dict(doc)), fh, sort_keys=True, indent=2)
        fh.write("\n")


def result_document(name: str, result: SimResult) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "name": name,
        "p_hat": result.p_hat,
        "k": result.k,
        "stderr": result.stderr,
        "low_confidence": result.low_confidence,
        "lf_baseline": result.lf_baseline,
        "lf_managed": result.lf_managed,
        "enabled_counts": list(result.enabled_counts),
        "overload_slots": result.overload_slots,
        "slots": result.slots,
        "series_baseline": [float(v) for v in result.series_baseline],
        "series_managed": [float(v) for v in result.series_managed],
    }
    if result.ledger is not None:
        doc["energy_steps"] = {
            "demanded": result.ledger.demanded_steps,
            "served": result.ledger.served_steps,
            "dropped": result.ledger.dropped_steps,
            "backlog": result.ledger.backlog_steps,
        }
    return doc


def write_result(path: str, name: str, result: SimResult) -> None:
    _write_json(path, result_document(name, result))


def write_sweep_result(path: str, name: str, cells: Sequence[SweepCell]) -> None:
    doc = {
        "name": name,
        "cells": [
            {
                "p": cell.p,
                "method": cell.method.value,
                "enabled": cell.enabled,
                "p_hat": cell.p_hat,
                "k": cell.k,
                "stderr": cell.stderr,
                "low_confidence": cell.low_confidence,
            }
            for cell in cells
        ],
    }
    _write_json(path, doc)


@dataclass(frozen=True)
class ExperimentSpec:
    """Parsed experiment file: a run config plus sweep axes and outputs."""

    name: str
    config: SimConfig
    p_values: tuple[float, ...] | None
    methods: tuple[EstimationMethod, ...] | None
    outputs: dict[str, str]

    @property
    def is_sweep(self) -> bool:
        return self.p_values is not None


_CLASS_KEYS = {
    "name",
    "on_power",
    "count",
    "shiftable",
    "deterministic",
    "model",
    "model_file",
    "trace",
    "family",
    "on_threshold",
}
_POLICY_KEYS = {"c_max", "p", "c_min", "r", "c_sys"}
_TOP_KEYS = {
    "name",
    "classes",
    "policy",
    "method",
    "methods",
    "p_values",
    "mode",
    "strategy",
    "slots",
    "seed",
    "quantum",
    "deterministic_load",
    "outputs",
}
_OUTPUT_KEYS = {"result_json", "series_csv", "outcomes_csv", "sweep_csv", "region_csv"}


def _parse_class(doc: Mapping[str, Any], index: int, base_dir: str) -> ApplianceClass:
    where = f"classes[{index}]"
    if not isinstance(doc, dict):
        raise ValueError(f"{where} must be an object")
    _require_keys(doc, _CLASS_KEYS, where)
    for key in ("name", "count"):
        if key not in doc:
            raise ValueError(f"missing {key!r} in {where}")
    sources = [k for k in ("model", "model_file", "trace") if doc.get(k) is not None]
    if doc.get("deterministic"):
        sources.append("deterministic")
    if len(sources) != 1:
        raise ValueError(
            f"{where} needs exactly one of model, model_file, trace, "
            f"deterministic; got {sources!r}"
        )
    model: LoadModel | None
    on_power = doc.get("on_power")
    source = sources[0]
    if source == "deterministic":
        model = None
    elif source == "model":
        if not isinstance(doc["model"], dict):
            raise ValueError(f"{where}.model must be an object")
        model, fitted_power = _model_from_doc(doc["model"], f"{where}.model")
        on_power = on_power if on_power is not None else fitted_power
    elif source == "model_file":
        model, fitted_power = read_model(os.path.join(base_dir, doc["model_file"]))
        on_power = on_power if on_power is not None else fitted_power
    else:
        family = doc.get("family")
        if family not in MODEL_FAMILIES:
            raise ValueError(f"{where}.family must be one of {MODEL_FAMILIES}")
        trace = read_trace(os.path.join(base_dir, doc["trace"]))
        fitted = fit_model(trace, family, float(doc.get("on_threshold", 0.0)))
        model = fitted.model
        on_power = on_power if on_power is not None else fitted.on_power
    if on_power is None:
        raise ValueError(f"missing on_power in {where}")
    return ApplianceClass(
        name=str(doc["name"]),
        on_power=float(on_power),
        model=model,
        count=int(doc["count"]),
        shiftable=bool(doc.get("shiftable", True)),
        deterministic=model is None,
    )


def parse_experiment(path: str) -> ExperimentSpec:
    """Parse and validate an experiment file.

    Unknown keys are rejected at every level.  Referenced model and trace
    files are read during parsing, so a missing file fails here, not midway
    through a run.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("experiment file must hold a JSON object")
    _require_keys(doc, _TOP_KEYS, "experiment")
    for key in ("name", "classes", "policy"):
        if key not in doc:
            raise ValueError(f"missing {key!r} in experiment")
    base_dir = os.path.dirname(os.path.abspath(path))

    raw_classes = doc["classes"]
    if not isinstance(raw_classes, list) or not raw_classes:
        raise ValueError("classes must be a non-empty array")
    classes = tuple(_parse_class(c, i, base_dir) for i, c in enumerate(raw_classes))

    raw_policy = doc["policy"]
    if not isinstance(raw_policy, dict):
        raise ValueError("policy must be an object")
    _require_keys(raw_policy, _POLICY_KEYS, "policy")
    for key in ("c_max", "p"):
        if key not in raw_policy:
            raise ValueError(f"missing {key!r} in policy")
    policy = QosPolicy(
        c_max=float(raw_policy["c_max"]),
        p=float(raw_policy["p"]),
        c_min=None if raw_policy.get("c_min") is None else float(raw_policy["c_min"]),
        r=None if raw_policy.get("r") is None else float(raw_policy["r"]),
        c_sys=None if raw_policy.get("c_sys") is None else float(raw_policy["c_sys"]),
    )

    methods = None
    if doc.get("methods") is not None:
        if not isinstance(doc["methods"], list) or not doc["methods"]:
            raise ValueError("methods must be a non-empty array")
        methods = tuple(EstimationMethod(m) for m in doc["methods"])
    p_values = None
    if doc.get("p_values") is not None:
        if not isinstance(doc["p_values"], list) or not doc["p_values"]:
            raise ValueError("p_values must be a non-empty array")
        p_values = tuple(float(v) for v in doc["p_values"])
    if "method" in doc:
        method = EstimationMethod(doc["method"])
    elif methods:
        method = methods[0]
    else:
        raise ValueError("missing 'method' (or a 'methods' array) in experiment")

    outputs_doc = doc.get("outputs", {})
    if not isinstance(outputs_doc, dict):
        raise ValueError("outputs must be an object")
    _require_keys(outputs_doc, _OUTPUT_KEYS, "outputs")
    outputs = {k: str(v) for k, v in outputs_doc.items()}

    config = SimConfig(
        classes=classes,
        policy=policy,
        method=method,
        strategy=SchedulingStrategy(doc.get("strategy", "drop")),
        slots=int(doc.get("slots", 50_000)),
        seed=int(doc.get("seed", 0)),
        mode=SimMode(doc.get("mode", "composition")),
        quantum=float(doc.get("quantum", 1.0)),
        deterministic_load=float(doc.get("deterministic_load", 0.0)),
    )
    return ExperimentSpec(
        name=str(doc["name"]),
        config=config,
        p_values=p_values,
        methods=methods,
        outputs=outputs,
    )
