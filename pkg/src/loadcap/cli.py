"""Command-line front end.

Subcommands: bounds (tail estimates for a composition), simulate (run an
experiment file), region (two-class acceptance grid), fit (model from a
trace).  Exit codes: 0 success, 2 validation error, 3 I/O error, 4 when
`bounds --require` finds no method that certifies the requested QoS.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import re
import sys
from typing import Sequence

from .admission import QosPolicy, decision_region
from .fileio import (
    parse_experiment,
    read_trace,
    write_model,
    write_outcomes,
    write_pmf,
    write_region,
    write_result,
    write_series,
    write_sweep,
    write_sweep_result,
)
from .models import ApplianceClass, Bernoulli, fit_model, stationary_stats
from .simulation import run, sweep_qos
from .tailprob import ClassComposition, EstimationMethod, estimate, exact_pmf

__all__ = ["main"]

_EXIT_VALIDATION = 2
_EXIT_IO = 3
_EXIT_UNSATISFIABLE = 4

_SPEC_PATTERN = re.compile(r"^(\d+)x([^@]+)@(.+)$")


def _parse_composition_spec(specs: Sequence[str], quantum: float) -> ClassComposition:
    """Build a composition from COUNTxWATTS@P_ON strings (e.g. 100x1@0.5)."""
    entries = []
    for i, spec in enumerate(specs):
        m = _SPEC_PATTERN.match(spec)
        if m is None:
            raise ValueError(
                f"bad composition spec {spec!r}; expected COUNTxWATTS@P_ON like 100x1@0.5"
            )
        count = int(m.group(1))
        watts = float(m.group(2))
        p_on = float(m.group(3))
        cls = ApplianceClass(
            name=f"c{i}", on_power=watts, model=Bernoulli(p_on=p_on), count=count
        )
        entries.append((cls, count))
    del quantum  # grid compatibility is checked by the estimators
    return ClassComposition(entries=tuple(entries))


def _parse_methods(raw: str) -> tuple[EstimationMethod, ...]:
    if raw.strip().lower() == "all":
        return tuple(EstimationMethod)
    return tuple(EstimationMethod(name.strip().lower()) for name in raw.split(","))


def _out_path(args: argparse.Namespace, filename: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, filename)


def _cmd_bounds(args: argparse.Namespace) -> int:
    composition = _parse_composition_spec(args.composition, args.quantum_w)
    if args.det > 0.0:
        composition = ClassComposition(
            entries=composition.entries, deterministic_load=args.det
        )
    methods = _parse_methods(args.methods)
    print("method,estimate")
    values = []
    for method in methods:
        value = estimate(method, composition, args.c_max, args.quantum_w)
        values.append(value)
        print(f"{method.value},{value!r}")
    if args.dump_pmf is not None:
        write_pmf(_out_path(args, args.dump_pmf), exact_pmf(composition, args.quantum_w))
    if args.require is not None and min(values) > args.require:
        print(
            f"no method certifies p <= {args.require!r}; "
            f"best estimate is {min(values)!r}",
            file=sys.stderr,
        )
        return _EXIT_UNSATISFIABLE
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    spec = parse_experiment(args.experiment)
    config = spec.config
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if spec.is_sweep:
        cells = sweep_qos(config, spec.p_values, spec.methods, jobs=args.jobs)
        sweep_csv = spec.outputs.get("sweep_csv", f"{spec.name}.sweep.csv")
        result_json = spec.outputs.get("result_json", f"{spec.name}.json")
        write_sweep(_out_path(args, sweep_csv), cells)
        write_sweep_result(_out_path(args, result_json), spec.name, cells)
        print("p,method,enabled,p_hat,k,stderr")
        for cell in cells:
            print(
                f"{cell.p!r},{cell.method.value},{cell.enabled},"
                f"{cell.p_hat!r},{cell.k!r},{cell.stderr!r}"
            )
        return 0
    result = run(config)
    result_json = spec.outputs.get("result_json", f"{spec.name}.json")
    series_csv = spec.outputs.get("series_csv", f"{spec.name}.series.csv")
    write_result(_out_path(args, result_json), spec.name, result)
    write_series(_out_path(args, series_csv), result)
    if result.outcomes is not None:
        outcomes_csv = spec.outputs.get("outcomes_csv", f"{spec.name}.outcomes.csv")
        write_outcomes(_out_path(args, outcomes_csv), result.outcomes)
    print(f"p_hat={result.p_hat!r} k={result.k!r} stderr={result.stderr!r}")
    print(f"lf_baseline={result.lf_baseline!r} lf_managed={result.lf_managed!r}")
    print(f"enabled={','.join(str(n) for n in result.enabled_counts)}")
    if result.low_confidence:
        print(
            "warning: expected violation count below 10; k is low-confidence",
            file=sys.stderr,
        )
    return 0


def _cmd_region(args: argparse.Namespace) -> int:
    comp = _parse_composition_spec([args.class1, args.class2], args.quantum_w)
    (class1, _), (class2, _) = comp.entries
    policy = QosPolicy(c_max=args.c_max, p=args.p)
    method = EstimationMethod(args.method)
    region = decision_region(class1, class2, policy, method, args.quantum_w)
    out = _out_path(args, args.out)
    write_region(out, region)
    accepted = int(region.sum())
    print(f"wrote {out}: {accepted} of {region.size} cells accepted")
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    trace = read_trace(args.trace)
    fitted = fit_model(trace, args.family, args.on_threshold)
    out = _out_path(args, args.out)
    write_model(out, fitted.model, fitted.on_power)
    stats = stationary_stats(fitted.model)
    print(f"wrote {out}")
    print(
        f"p_on={stats.p_on!r} mean_on_run={stats.mean_on_run!r} "
        f"mean_off_run={stats.mean_off_run!r} on_power={fitted.on_power!r}"
    )
    return 0


def _add_common(parser: argparse.ArgumentParser, seed_default: int | None = 0) -> None:
    parser.add_argument("--seed", type=int, default=seed_default, help="base RNG seed")
    parser.add_argument(
        "--quantum-w", type=float, default=1.0, help="power grid step in watts"
    )
    parser.add_argument(
        "--jobs", type=int, default=1, help="parallel worker processes for sweeps"
    )
    parser.add_argument(
        "--out-dir", default=".", help="directory for output files"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadcap",
        description="Probabilistic admission control for stochastic appliance loads",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bounds = sub.add_parser(
        "bounds", help="tail estimates of a composition under every method"
    )
    _add_common(bounds)
    bounds.add_argument(
        "composition", nargs="+", help="class specs, COUNTxWATTS@P_ON (e.g. 100x1@0.5)"
    )
    bounds.add_argument("--c-max", type=float, required=True, help="consumption ceiling")
    bounds.add_argument(
        "--det", type=float, default=0.0, help="constant base load in watts"
    )
    bounds.add_argument(
        "--methods", default="all", help="comma-separated method names, or 'all'"
    )
    bounds.add_argument(
        "--dump-pmf", default=None, metavar="FILE", help="also write the exact pmf CSV"
    )
    bounds.add_argument(
        "--require",
        type=float,
        default=None,
        metavar="P",
        help="exit 4 unless some method's estimate is <= P",
    )
    bounds.set_defaults(func=_cmd_bounds)

    simulate = sub.add_parser("simulate", help="run an experiment file")
    _add_common(simulate, seed_default=None)  # None keeps the file's seed
    simulate.add_argument("experiment", help="experiment JSON path")
    simulate.set_defaults(func=_cmd_simulate)

    region = sub.add_parser("region", help="two-class acceptance grid CSV")
    _add_common(region)
    region.add_argument("--class1", required=True, help="COUNTxWATTS@P_ON")
    region.add_argument("--class2", required=True, help="COUNTxWATTS@P_ON")
    region.add_argument("--c-max", type=float, required=True)
    region.add_argument("--p", type=float, required=True, help="QoS probability")
    region.add_argument(
        "--method",
        default="exact",
        choices=[m.value for m in EstimationMethod],
    )
    region.add_argument("--out", default="region.csv", help="output CSV name")
    region.set_defaults(func=_cmd_region)

    fit = sub.add_parser("fit", help="fit a load model to a trace CSV")
    _add_common(fit)
    fit.add_argument("trace", help="trace CSV path")
    fit.add_argument("--family", required=True, choices=["bernoulli", "markov", "renewal"])
    fit.add_argument(
        "--on-threshold",
        type=float,
        required=True,
        help="watts above which a sample counts as ON",
    )
    fit.add_argument("--out", default="model.json", help="output model JSON name")
    fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
