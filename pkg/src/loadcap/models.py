"""Two-state appliance load models.

Each appliance is either OFF (drawing nothing) or ON (drawing a fixed
wattage) in every time slot.  Three ON/OFF processes are supported:

* ``Bernoulli``: every slot is an independent coin flip.
* ``TwoStateMarkov``: first-order chain with geometric run lengths.
* ``AlternatingRenewal``: ON and OFF run lengths drawn from arbitrary
  finite-support duration distributions.

The module also fits these models to recorded power traces and samples
synthetic per-slot series from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

import numpy as np

__all__ = [
    "DurationPmf",
    "Bernoulli",
    "TwoStateMarkov",
    "AlternatingRenewal",
    "LoadModel",
    "StationaryStats",
    "ApplianceClass",
    "TraceSeries",
    "FitResult",
    "MODEL_FAMILIES",
    "derive_seed",
    "stationary_stats",
    "sample_series",
    "fit_model",
    "pool_trace",
]

MODEL_FAMILIES = ("bernoulli", "markov", "renewal")


def derive_seed(base_seed: int, *path: int) -> int:
    """Derive a child seed from a base seed and an index path.

    Distinct paths give statistically independent streams, and the mapping is
    stable across runs and platforms.  Used to split one experiment seed into
    per-appliance and per-sweep-cell seeds.
    """
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(int(i) for i in path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DurationPmf:
    """Finite-support distribution of run lengths, in whole slots.

    Attributes:
        entries: sorted tuple of ``(duration, probability)`` pairs.  Durations
            are positive integers, probabilities are strictly positive and sum
            to 1 within 1e-9.
    """

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("duration pmf needs at least one entry")
        cleaned = []
        for dur, weight in self.entries:
            if int(dur) != dur or dur < 1:
                raise ValueError(f"duration {dur!r} is not a positive integer")
            weight = float(weight)
            if not (0.0 < weight <= 1.0) or not math.isfinite(weight):
                raise ValueError(f"bad probability {weight!r} for duration {dur}")
            cleaned.append((int(dur), weight))
        cleaned.sort()
        if len({d for d, _ in cleaned}) != len(cleaned):
            raise ValueError("duplicate durations in pmf")
        total = math.fsum(w for _, w in cleaned)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"duration probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "entries", tuple(cleaned))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "DurationPmf":
        return cls(tuple((int(d), float(w)) for d, w in mapping.items()))

    def as_mapping(self) -> dict[int, float]:
        return dict(self.entries)

    @cached_property
    def _durations(self) -> np.ndarray:
        return np.array([d for d, _ in self.entries], dtype=np.int64)

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum([w for _, w in self.entries])

    def mean(self) -> float:
        return math.fsum(d * w for d, w in self.entries)

    def sample(self, rng: np.random.Generator) -> int:
        """Draw one run length by inverse-cdf lookup."""
        idx = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        idx = min(idx, len(self.entries) - 1)
        return int(self._durations[idx])


@dataclass(frozen=True)
class Bernoulli:
    """Memoryless ON/OFF process: each slot is ON with probability p_on."""

    p_on: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_on <= 1.0):
            raise ValueError(f"p_on={self.p_on!r} outside [0, 1]")


@dataclass(frozen=True)
class TwoStateMarkov:
    """First-order chain on {OFF, ON} with per-slot switch probabilities.

    Both transition probabilities must lie strictly inside (0, 1) so the
    chain is irreducible and has a stationary distribution.
    """

    p_off_to_on: float
    p_on_to_off: float

    def __post_init__(self) -> None:
        for label, value in (
            ("p_off_to_on", self.p_off_to_on),
            ("p_on_to_off", self.p_on_to_off),
        ):
            if not (0.0 < value < 1.0):
                raise ValueError(f"{label}={value!r} outside (0, 1)")


@dataclass(frozen=True)
class AlternatingRenewal:
    """ON and OFF runs alternate, each length drawn fresh from its pmf."""

    on_durations: DurationPmf
    off_durations: DurationPmf


LoadModel = Union[Bernoulli, TwoStateMarkov, AlternatingRenewal]


@dataclass(frozen=True)
class StationaryStats:
    """Long-run ON probability and mean run lengths of a load model."""

    p_on: float
    mean_on_run: float
    mean_off_run: float


def stationary_stats(model: LoadModel) -> StationaryStats:
    """Stationary ON probability and mean ON/OFF run lengths.

    For the Markov family the stationary ON probability is
    p_off_to_on / (p_off_to_on + p_on_to_off); for the renewal family it is
    the ON share of the mean cycle length.
    """
    if isinstance(model, Bernoulli):
        p = model.p_on
        on_run = 1.0 / (1.0 - p) if p < 1.0 else math.inf
        off_run = 1.0 / p if p > 0.0 else math.inf
        return StationaryStats(p_on=p, mean_on_run=on_run, mean_off_run=off_run)
    if isinstance(model, TwoStateMarkov):
        denom = model.p_off_to_on + model.p_on_to_off
        if denom == 0.0:
            raise ValueError("no stationary distribution")
        return StationaryStats(
            p_on=model.p_off_to_on / denom,
            mean_on_run=1.0 / model.p_on_to_off,
            mean_off_run=1.0 / model.p_off_to_on,
        )
    if isinstance(model, AlternatingRenewal):
        mean_on = model.on_durations.mean()
        mean_off = model.off_durations.mean()
        return StationaryStats(
            p_on=mean_on / (mean_on + mean_off),
            mean_on_run=mean_on,
            mean_off_run=mean_off,
        )
    raise TypeError(f"unknown load model {model!r}")


@dataclass(frozen=True)
class ApplianceClass:
    """A population of identical two-state appliances.

    Attributes:
        name: label used in reports and CSV output.
        on_power: watts drawn while ON; must be positive.
        model: the ON/OFF process.  ``None`` only for deterministic classes.
        count: population size (enabled counts never exceed it).
        shiftable: whether a scheduler may postpone this class's demand.
        deterministic: True for constant loads that draw ``on_power`` every
            slot while enabled; such classes carry no stochastic model.
    """

    name: str
    on_power: float
    model: LoadModel | None
    count: int
    shiftable: bool = True
    deterministic: bool = False

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("appliance class needs a non-empty name")
        if not (self.on_power > 0.0 and math.isfinite(self.on_power)):
            raise ValueError(f"on_power={self.on_power!r} must be positive and finite")
        if int(self.count) != self.count or self.count < 0:
            raise ValueError(f"count={self.count!r} must be a non-negative integer")
        object.__setattr__(self, "count", int(self.count))
        if self.deterministic and self.model is not None:
            raise ValueError("deterministic class must not carry a stochastic model")
        if not self.deterministic and self.model is None:
            raise ValueError(f"class {self.name!r} needs a load model")

    @property
    def p_on(self) -> float:
        """Stationary ON probability; 1 for deterministic classes."""
        if self.deterministic:
            return 1.0
        return stationary_stats(self.model).p_on

    @property
    def mean_power(self) -> float:
        return self.on_power * self.p_on

    @property
    def power_variance(self) -> float:
        p = self.p_on
        return self.on_power**2 * p * (1.0 - p)


@dataclass(frozen=True, eq=False)
class TraceSeries:
    """Evenly sampled power readings in watts."""

    sample_period_s: float
    watts: np.ndarray

    def __post_init__(self) -> None:
        if not (self.sample_period_s > 0.0 and math.isfinite(self.sample_period_s)):
            raise ValueError(f"sample_period_s={self.sample_period_s!r} must be positive")
        arr = np.asarray(self.watts, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("trace must be a non-empty 1-D series")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError("trace readings must be finite and non-negative")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "watts", arr)

    def __len__(self) -> int:
        return int(self.watts.size)


def _alternating_states(
    slots: int, first_on: bool, draw_run, rng: np.random.Generator
) -> np.ndarray:
    """Fill a boolean series from alternating runs; draw_run(on) -> length."""
    states = np.empty(slots, dtype=bool)
    pos = 0
    on = first_on
    while pos < slots:
        run = int(draw_run(on, rng))
        end = min(pos + run, slots)
        states[pos:end] = on
        pos = end
        on = not on
    return states


def _sample_states(model: LoadModel, slots: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(model, Bernoulli):
        return rng.random(slots) < model.p_on
    stats = stationary_stats(model)
    first_on = bool(rng.random() < stats.p_on)
    if isinstance(model, TwoStateMarkov):
        # geometric runs reproduce the chain exactly; a stationary initial
        # state keeps the whole series stationary
        def draw(on: bool, r: np.random.Generator) -> int:
            return int(r.geometric(model.p_on_to_off if on else model.p_off_to_on))

        return _alternating_states(slots, first_on, draw, rng)
    if isinstance(model, AlternatingRenewal):
        def draw(on: bool, r: np.random.Generator) -> int:
            pmf = model.on_durations if on else model.off_durations
            return pmf.sample(r)

        return _alternating_states(slots, first_on, draw, rng)
    raise TypeError(f"unknown load model {model!r}")


def sample_series(appliance: ApplianceClass, slots: int, seed: int) -> np.ndarray:
    """Sample one appliance's per-slot power draw in watts.

    The same (appliance, slots, seed) triple always yields the same series.
    """
    if int(slots) != slots or slots < 1:
        raise ValueError(f"slots={slots!r} must be a positive integer")
    slots = int(slots)
    if appliance.deterministic:
        return np.full(slots, appliance.on_power, dtype=np.float64)
    rng = np.random.default_rng(int(seed))
    states = _sample_states(appliance.model, slots, rng)
    return states.astype(np.float64) * appliance.on_power


@dataclass(frozen=True)
class FitResult:
    """A fitted load model plus the estimated ON wattage."""

    model: LoadModel
    on_power: float


def _run_lengths(mask: np.ndarray) -> list[tuple[bool, int]]:
    """(state, length) runs of a boolean series, in order."""
    boundaries = np.flatnonzero(np.diff(mask)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [mask.size]))
    return [(bool(mask[s]), int(e - s)) for s, e in zip(starts, ends)]


def _duration_histogram(lengths: list[int]) -> DurationPmf:
    total = len(lengths)
    counts: dict[int, int] = {}
    for length in lengths:
        counts[length] = counts.get(length, 0) + 1
    return DurationPmf(tuple((d, c / total) for d, c in sorted(counts.items())))


def fit_model(trace: TraceSeries, family: str, on_threshold: float) -> FitResult:
    """Fit a load model to a trace binarized at ``on_threshold`` watts.

    Readings strictly above the threshold count as ON.  ``family`` is one of
    "bernoulli", "markov" (transition frequencies with add-one smoothing), or
    "renewal" (run-length histograms over interior runs only, so runs cut off
    by the trace boundary never bias the histogram).

    Raises ValueError("degenerate trace") when the binarized trace has no ON
    samples, no OFF samples, or (renewal) no interior run of either kind.
    """
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r}; choose from {MODEL_FAMILIES}")
    on = trace.watts > float(on_threshold)
    n_on = int(np.count_nonzero(on))
    if n_on == 0 or n_on == on.size:
        raise ValueError("degenerate trace: needs both ON and OFF samples")
    on_power = float(trace.watts[on].mean())

    if family == "bernoulli":
        return FitResult(Bernoulli(p_on=n_on / on.size), on_power)

    if family == "markov":
        prev, cur = on[:-1], on[1:]
        from_off = int(np.count_nonzero(~prev))
        from_on = int(np.count_nonzero(prev))
        switched_on = int(np.count_nonzero(~prev & cur))
        switched_off = int(np.count_nonzero(prev & ~cur))
        model = TwoStateMarkov(
            p_off_to_on=(switched_on + 1) / (from_off + 2),
            p_on_to_off=(switched_off + 1) / (from_on + 2),
        )
        return FitResult(model, on_power)

    runs = _run_lengths(on)[1:-1]  # interior runs only
    on_runs = [length for state, length in runs if state]
    off_runs = [length for state, length in runs if not state]
    if not on_runs or not off_runs:
        raise ValueError("degenerate trace: no interior runs to fit")
    model = AlternatingRenewal(
        on_durations=_duration_histogram(on_runs),
        off_durations=_duration_histogram(off_runs),
    )
    return FitResult(model, on_power)


def pool_trace(trace: TraceSeries, factor: int) -> TraceSeries:
    """Mean-pool consecutive groups of ``factor`` samples.

    Resamples a trace to a coarser slot length; a trailing partial group is
    dropped.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"pooling factor {factor!r} must be a positive integer")
    factor = int(factor)
    if factor == 1:
        return trace
    groups = trace.watts.size // factor
    if groups == 0:
        raise ValueError(f"trace too short to pool by {factor}")
    pooled = trace.watts[: groups * factor].reshape(groups, factor).mean(axis=1)
    return TraceSeries(sample_period_s=trace.sample_period_s * factor, watts=pooled)
