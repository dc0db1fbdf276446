"""Monte Carlo harness for admission control under realistic appliance runs.

Two modes.  Composition mode sizes each class once with the chosen tail
estimator and then lets the enabled appliances run freely, measuring how
often the aggregate actually reaches the ceiling.  SlotDynamic mode runs
per-slot admission over live demands, routing blocked demand through a
scheduling strategy, and reports load-shape metrics alongside the tail
statistics.

All randomness descends from the single config seed.  Appliance streams are
keyed by global appliance index, so the series of appliance i is the same
regardless of which method or policy is being evaluated (common random
numbers across compared runs).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .admission import QosPolicy, max_admissible
from .models import ApplianceClass, derive_seed, sample_series
from .scheduling import (
    Backlog,
    PendingDemand,
    SchedulingStrategy,
    SlotOutcome,
    apply_strategy,
    load_factor,
)
from .tailprob import ClassComposition, EstimationMethod, _grid_steps, estimate

__all__ = [
    "SimMode",
    "SimConfig",
    "EnergyLedger",
    "SimResult",
    "SweepCell",
    "TableRow",
    "run",
    "run_composition",
    "run_slot_dynamic",
    "sweep_qos",
    "enabled_percentage_table",
]

# slots with at least this many expected violations give usable k estimates
_MIN_EXPECTED_EVENTS = 10.0


class SimMode(Enum):
    COMPOSITION = "composition"
    SLOT_DYNAMIC = "slot_dynamic"


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulation run depends on, seed included."""

    classes: tuple[ApplianceClass, ...]
    policy: QosPolicy
    method: EstimationMethod
    strategy: SchedulingStrategy = SchedulingStrategy.DROP
    slots: int = 50_000
    seed: int = 0
    mode: SimMode = SimMode.COMPOSITION
    quantum: float = 1.0
    deterministic_load: float = 0.0

    def __post_init__(self) -> None:
        classes = tuple(self.classes)
        if not classes:
            raise ValueError("classes must be non-empty")
        names = [cls.name for cls in classes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class names in {names!r}")
        object.__setattr__(self, "classes", classes)
        if int(self.slots) != self.slots or self.slots < 1:
            raise ValueError(f"slots={self.slots!r} must be a positive integer")
        object.__setattr__(self, "slots", int(self.slots))
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed={self.seed!r} must be a non-negative integer")
        object.__setattr__(self, "seed", int(self.seed))
        if not (self.quantum > 0.0 and math.isfinite(self.quantum)):
            raise ValueError(f"quantum={self.quantum!r} must be positive and finite")
        det = float(self.deterministic_load)
        if not (det >= 0.0 and math.isfinite(det)):
            raise ValueError(f"deterministic_load={det!r} must be >= 0 and finite")
        object.__setattr__(self, "deterministic_load", det)


@dataclass(frozen=True)
class EnergyLedger:
    """Shiftable demand accounting in integer grid-step units.

    served + dropped + backlog equals demanded exactly on every run; the
    backlog term is whatever is still queued when the horizon ends.
    """

    demanded_steps: int
    served_steps: int
    dropped_steps: int
    backlog_steps: int


@dataclass(frozen=True, eq=False)
class SimResult:
    """Outcome of one run.

    ``p_hat`` is the fraction of slots whose served load reached the
    ceiling; ``k`` is that fraction over the policy's tolerated probability.
    ``low_confidence`` flags runs whose expected violation count is too
    small for ``k`` to mean much.  Load factors are NaN when the series is
    all zero.  The ledger and per-slot outcomes are populated in
    SlotDynamic mode only.
    """

    p_hat: float
    k: float
    stderr: float
    low_confidence: bool
    lf_baseline: float
    lf_managed: float
    enabled_counts: tuple[int, ...]
    overload_slots: int
    slots: int
    series_baseline: np.ndarray
    series_managed: np.ndarray
    ledger: EnergyLedger | None = None
    outcomes: tuple[SlotOutcome, ...] | None = None


@dataclass(frozen=True)
class SweepCell:
    """One (p, method) point of a QoS sweep."""

    p: float
    method: EstimationMethod
    enabled: int
    p_hat: float
    k: float
    stderr: float
    low_confidence: bool


@dataclass(frozen=True)
class TableRow:
    """Enabled count for one method, relative to the exact reference."""

    method: EstimationMethod
    enabled: int
    percent_of_exact: float


def _safe_load_factor(series: np.ndarray) -> float:
    try:
        return load_factor(series)
    except ValueError:
        return math.nan


def _overload_mask(series: np.ndarray, c_max: float) -> np.ndarray:
    # same grid-snap tolerance as the tail computation's threshold rounding
    return series >= c_max - 1e-9 * max(1.0, abs(c_max))


def _tail_stats(
    managed: np.ndarray, policy: QosPolicy, slots: int
) -> tuple[float, float, float, bool, int]:
    overload = int(np.count_nonzero(_overload_mask(managed, policy.c_max)))
    p_hat = overload / slots
    k = p_hat / policy.p
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / slots) / policy.p
    low_confidence = policy.p * slots < _MIN_EXPECTED_EVENTS
    return p_hat, k, stderr, low_confidence, overload


def _appliance_offsets(classes: Sequence[ApplianceClass]) -> list[int]:
    offsets = [0]
    for cls in classes:
        offsets.append(offsets[-1] + cls.count)
    return offsets


def run(config: SimConfig) -> SimResult:
    """Dispatch on the configured mode."""
    if config.mode is SimMode.COMPOSITION:
        return run_composition(config)
    return run_slot_dynamic(config)


def run_composition(config: SimConfig) -> SimResult:
    """Size each class statistically, then free-run the enabled appliances.

    Each class's enabled count is the largest that alone (over the constant
    base load) satisfies the policy under the configured method.  Disabled
    appliances never run; no scheduling is involved.  The baseline series
    runs every appliance for comparison.
    """
    base = ClassComposition(entries=(), deterministic_load=config.deterministic_load)
    enabled_counts = tuple(
        max_admissible(cls, config.policy, config.method, config.quantum, base=base)
        for cls in config.classes
    )
    offsets = _appliance_offsets(config.classes)
    baseline = np.full(config.slots, config.deterministic_load)
    managed = np.full(config.slots, config.deterministic_load)
    for cls, enabled, offset in zip(config.classes, enabled_counts, offsets):
        for i in range(cls.count):
            series = sample_series(cls, config.slots, derive_seed(config.seed, 0, offset + i))
            baseline += series
            if i < enabled:
                managed += series
    p_hat, k, stderr, low_conf, overload = _tail_stats(managed, config.policy, config.slots)
    return SimResult(
        p_hat=p_hat,
        k=k,
        stderr=stderr,
        low_confidence=low_conf,
        lf_baseline=_safe_load_factor(baseline),
        lf_managed=_safe_load_factor(managed),
        enabled_counts=enabled_counts,
        overload_slots=overload,
        slots=config.slots,
        series_baseline=baseline,
        series_managed=managed,
    )


class _EstimateMemo:
    """Memoized tail estimate over admitted shiftable counts.

    Admitted compositions recur heavily across slots; one run touches only
    a small set of count vectors, each estimated once.
    """

    def __init__(self, config: SimConfig, shiftable: Sequence[ApplianceClass]):
        self._config = config
        self._stochastic = tuple(c for c in shiftable if not c.deterministic)
        self._det_classes = tuple(c for c in shiftable if c.deterministic)
        base_entries = []
        base_det = config.deterministic_load
        for cls in config.classes:
            if cls.shiftable:
                continue
            if cls.deterministic:
                base_det += cls.count * cls.on_power
            else:
                base_entries.append((cls, cls.count))
        self._base_entries = tuple(base_entries)
        self._base_det = base_det
        self._index = {c.name: i for i, c in enumerate(self._stochastic)}
        self._det_index = {c.name: i for i, c in enumerate(self._det_classes)}
        self._cache: dict[tuple[int, ...], float] = {}

    def split_counts(
        self, counts: dict[str, int]
    ) -> tuple[tuple[int, ...], tuple[int, ...]]:
        stoch = [0] * len(self._stochastic)
        det = [0] * len(self._det_classes)
        for name, n in counts.items():
            if name in self._index:
                stoch[self._index[name]] = n
            else:
                det[self._det_index[name]] = n
        return tuple(stoch), tuple(det)

    def value(self, counts: dict[str, int]) -> float:
        stoch, det = self.split_counts(counts)
        key = stoch + det
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        entries = self._base_entries + tuple(
            (cls, n) for cls, n in zip(self._stochastic, stoch)
        )
        det_load = self._base_det + sum(
            n * cls.on_power for cls, n in zip(self._det_classes, det)
        )
        comp = ClassComposition(entries=entries, deterministic_load=det_load)
        value = estimate(
            self._config.method, comp, self._config.policy.c_max, self._config.quantum
        )
        self._cache[key] = value
        return value


def run_slot_dynamic(config: SimConfig) -> SimResult:
    """Per-slot greedy admission over live demands.

    Every appliance draws its own demand series.  Each slot serves all
    non-shiftable demand unconditionally, then admits backlogged demand in
    FIFO order followed by the slot's new shiftable demands in seeded
    random order, as long as the tail estimate over the admitted
    composition stays within the policy.  Blocked demand is dropped or
    queued per the strategy.  An appliance serves at most one demand unit
    per slot; further units it holds cascade to later slots.
    """
    slots = config.slots
    h_steps = {
        cls.name: _grid_steps(cls.on_power, config.quantum) for cls in config.classes
    }
    offsets = _appliance_offsets(config.classes)
    class_of: list[ApplianceClass] = []
    demand: list[np.ndarray] = []
    base_served = np.full(slots, config.deterministic_load)
    baseline = np.full(slots, config.deterministic_load)
    for cls, offset in zip(config.classes, offsets):
        for i in range(cls.count):
            series = sample_series(cls, slots, derive_seed(config.seed, 0, offset + i))
            demand.append(series > 0.0)
            class_of.append(cls)
            baseline += series
            if not cls.shiftable:
                base_served += series
    shiftable_ids = [i for i, cls in enumerate(class_of) if cls.shiftable]
    memo = _EstimateMemo(config, tuple(c for c in config.classes if c.shiftable))
    scheduler_rng = np.random.default_rng(derive_seed(config.seed, 1))

    backlog = Backlog()
    managed = np.zeros(slots)
    outcomes: list[SlotOutcome] = []
    demanded_steps = 0
    served_steps = 0
    dropped_steps = 0
    p = config.policy.p

    for t in range(slots):
        admitted: dict[str, int] = {cls.name: 0 for cls in config.classes if cls.shiftable}
        served_units_w = 0.0
        served_this_slot: set[int] = set()
        disabled_ids: set[int] = set()
        blocked: list[PendingDemand] = []

        for entry in backlog.drain():
            cls = class_of[entry.appliance_id]
            ok = False
            if entry.appliance_id not in served_this_slot:
                admitted[cls.name] += 1
                if memo.value(admitted) <= p:
                    ok = True
                else:
                    admitted[cls.name] -= 1
            if ok:
                served_this_slot.add(entry.appliance_id)
                served_steps += entry.energy_steps
                served_units_w += entry.energy_steps * config.quantum
            else:
                backlog.push(entry)  # cascades, FIFO position kept
                disabled_ids.add(entry.appliance_id)

        new_ids = [i for i in shiftable_ids if demand[i][t]]
        order = scheduler_rng.permutation(len(new_ids))
        for idx in order:
            appliance_id = new_ids[int(idx)]
            cls = class_of[appliance_id]
            steps = h_steps[cls.name]
            demanded_steps += steps
            ok = False
            if appliance_id not in served_this_slot:
                admitted[cls.name] += 1
                if memo.value(admitted) <= p:
                    ok = True
                else:
                    admitted[cls.name] -= 1
            if ok:
                served_this_slot.add(appliance_id)
                served_steps += steps
                served_units_w += steps * config.quantum
            else:
                disabled_ids.add(appliance_id)
                blocked.append(
                    PendingDemand(
                        appliance_id=appliance_id,
                        class_name=cls.name,
                        energy_steps=steps,
                    )
                )

        dropped_now = apply_strategy(config.strategy, blocked, backlog)
        dropped_steps += dropped_now
        served_load = float(base_served[t] + served_units_w)
        managed[t] = served_load
        outcomes.append(
            SlotOutcome(
                served_load=served_load,
                dropped_load=dropped_now * config.quantum,
                backlog_depth=backlog.depth,
                disabled_ids=frozenset(disabled_ids),
            )
        )

    p_hat, k, stderr, low_conf, overload = _tail_stats(managed, config.policy, slots)
    ledger = EnergyLedger(
        demanded_steps=demanded_steps,
        served_steps=served_steps,
        dropped_steps=dropped_steps,
        backlog_steps=backlog.total_energy_steps(),
    )
    return SimResult(
        p_hat=p_hat,
        k=k,
        stderr=stderr,
        low_confidence=low_conf,
        lf_baseline=_safe_load_factor(baseline),
        lf_managed=_safe_load_factor(managed),
        enabled_counts=tuple(cls.count for cls in config.classes),
        overload_slots=overload,
        slots=slots,
        series_baseline=baseline,
        series_managed=managed,
        ledger=ledger,
        outcomes=tuple(outcomes),
    )


def _sweep_cell(args: tuple[SimConfig, float, EstimationMethod, int]) -> SweepCell:
    config, p, method, p_index = args
    cell_config = replace(
        config,
        policy=replace(config.policy, p=p),
        method=method,
        seed=int(derive_seed(config.seed, 2, p_index)),
        mode=SimMode.COMPOSITION,
    )
    result = run_composition(cell_config)
    return SweepCell(
        p=p,
        method=method,
        enabled=int(sum(result.enabled_counts)),
        p_hat=result.p_hat,
        k=result.k,
        stderr=result.stderr,
        low_confidence=result.low_confidence,
    )


def sweep_qos(
    config: SimConfig,
    p_values: Sequence[float],
    methods: Sequence[EstimationMethod] | None = None,
    jobs: int = 1,
) -> list[SweepCell]:
    """Composition-mode runs over a grid of QoS probabilities and methods.

    All methods at one p share a seed, so they see identical appliance
    series and differ only in how many appliances they enable.  Cells are
    independent; jobs > 1 runs them in worker processes with output order
    unchanged.
    """
    values = [float(v) for v in p_values]
    if not values:
        raise ValueError("p_values must be non-empty")
    if any(not (0.0 < v < 1.0) for v in values):
        raise ValueError("every p value must lie strictly inside (0, 1)")
    if sorted(values) != values:
        raise ValueError("p_values must be sorted ascending")
    chosen = tuple(methods) if methods is not None else tuple(EstimationMethod)
    tasks = [
        (config, p, method, p_index)
        for p_index, p in enumerate(values)
        for method in chosen
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(task) for task in tasks]


def enabled_percentage_table(
    appliance_class: ApplianceClass,
    policy: QosPolicy,
    methods: Sequence[EstimationMethod] | None = None,
    quantum: float = 1.0,
    base: ClassComposition | None = None,
) -> list[TableRow]:
    """Maximum enabled counts per method, as a percentage of the exact one.

    ``base`` carries load that is enabled regardless (a second class at
    full count, constant load), matching the two-class table layouts.
    """
    chosen = tuple(methods) if methods is not None else tuple(EstimationMethod)
    reference = max_admissible(
        appliance_class, policy, EstimationMethod.EXACT, quantum, base=base
    )
    rows = []
    for method in chosen:
        enabled = max_admissible(appliance_class, policy, method, quantum, base=base)
        if reference > 0:
            percent = 100.0 * enabled / reference
        else:
            percent = 0.0 if enabled == 0 else math.inf
        rows.append(TableRow(method=method, enabled=enabled, percent_of_exact=percent))
    return rows
