"""Admission control for stochastic appliance loads.

An admission policy fixes a consumption ceiling and a tolerated probability
of reaching it.  An appliance is admitted when the chosen tail estimator,
applied to the composition including the newcomer, still respects that
probability.  Equality counts as acceptance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .models import ApplianceClass
from .tailprob import (
    MONOTONE_IN_COUNT,
    ClassComposition,
    EstimationMethod,
    aggregate_stats,
    estimate,
    lower_tail,
)

__all__ = [
    "QosPolicy",
    "AdmissionState",
    "Verdict",
    "Decision",
    "UnderconsumptionReport",
    "decide",
    "check_underconsumption",
    "max_admissible",
    "decision_region",
    "region_frontier",
]


@dataclass(frozen=True)
class QosPolicy:
    """Consumption limits and tolerated violation probabilities.

    ``c_max`` is the ceiling guarded with probability ``p``.  ``c_min`` and
    ``r`` optionally configure the symmetric underconsumption check.
    ``c_sys`` is the physical ceiling; it validates ``c_max`` at
    construction and plays no further part in decisions.
    """

    c_max: float
    p: float
    c_min: float | None = None
    r: float | None = None
    c_sys: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c_max) and self.c_max > 0.0):
            raise ValueError(f"c_max={self.c_max!r} must be positive and finite")
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"p={self.p!r} must lie strictly inside (0, 1)")
        if self.c_min is not None:
            if not (math.isfinite(self.c_min) and 0.0 <= self.c_min < self.c_max):
                raise ValueError(
                    f"c_min={self.c_min!r} must lie in [0, c_max={self.c_max!r})"
                )
        if self.r is not None and not (0.0 < self.r < 1.0):
            raise ValueError(f"r={self.r!r} must lie strictly inside (0, 1)")
        if self.c_sys is not None and not self.c_max <= self.c_sys:
            raise ValueError(
                f"c_max={self.c_max!r} exceeds the physical ceiling {self.c_sys!r}"
            )


@dataclass(frozen=True)
class AdmissionState:
    """Snapshot the decision rule operates on.

    The method is fixed for the lifetime of a decision sequence so that
    successive verdicts are comparable.
    """

    composition: ClassComposition
    policy: QosPolicy
    method: EstimationMethod
    quantum: float = 1.0


class Verdict(Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    estimate: float
    method: EstimationMethod
    effective_threshold: float

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


@dataclass(frozen=True)
class UnderconsumptionReport:
    probability: float
    satisfied: bool


def decide(state: AdmissionState, incoming: ApplianceClass) -> Decision:
    """Admit one more appliance of a class, or reject it.

    The candidate composition is the current one plus the newcomer; for a
    deterministic newcomer that means a higher constant base load rather
    than a new stochastic entry.  Accept when the tail estimate is at or
    below the policy probability.
    """
    candidate = state.composition.with_added(incoming)
    value = estimate(state.method, candidate, state.policy.c_max, state.quantum)
    verdict = Verdict.ACCEPT if value <= state.policy.p else Verdict.REJECT
    return Decision(
        verdict=verdict,
        estimate=value,
        method=state.method,
        effective_threshold=state.policy.c_max - candidate.deterministic_load,
    )


def check_underconsumption(state: AdmissionState) -> UnderconsumptionReport:
    """Probability that the load stays below the configured floor.

    Only the exact and normal-approximation estimators have a lower-tail
    form; the bound methods are mapped to the exact computation.
    """
    policy = state.policy
    if policy.c_min is None or policy.r is None:
        raise ValueError("lower limit not configured")
    method = (
        EstimationMethod.CLT
        if state.method is EstimationMethod.CLT
        else EstimationMethod.EXACT
    )
    probability = lower_tail(method, state.composition, policy.c_min, state.quantum)
    return UnderconsumptionReport(
        probability=probability, satisfied=probability <= policy.r
    )


def _count_estimator(
    appliance_class: ApplianceClass,
    policy: QosPolicy,
    method: EstimationMethod,
    quantum: float,
    base: ClassComposition,
):
    """Tail estimate as a function of how many of one class are enabled."""
    if appliance_class.deterministic:

        def f(n: int) -> float:
            comp = ClassComposition(
                entries=base.entries,
                deterministic_load=base.deterministic_load
                + n * appliance_class.on_power,
            )
            return estimate(method, comp, policy.c_max, quantum)

        return f

    def f(n: int) -> float:
        entries = base.entries + ((appliance_class, n),)
        comp = ClassComposition(
            entries=entries, deterministic_load=base.deterministic_load
        )
        return estimate(method, comp, policy.c_max, quantum)

    return f


def _search_is_monotone(
    appliance_class: ApplianceClass,
    policy: QosPolicy,
    method: EstimationMethod,
    base: ClassComposition,
) -> bool:
    # a deterministic class only lowers the effective threshold, which no
    # estimator's value decreases under, so binary search is always sound
    if appliance_class.deterministic:
        return True
    if method not in MONOTONE_IN_COUNT:
        return False
    if method is EstimationMethod.CLT:
        # the normal estimate rises with the count only while the threshold
        # sits above the base composition's mean; elsewhere scan linearly
        threshold = policy.c_max - base.deterministic_load
        return threshold > aggregate_stats(base).mean
    return True


def max_admissible(
    appliance_class: ApplianceClass,
    policy: QosPolicy,
    method: EstimationMethod,
    quantum: float = 1.0,
    base: ClassComposition | None = None,
) -> int:
    """Largest enabled count of one class that still meets the policy.

    ``base`` holds load that is present regardless (other classes, constant
    load); the search varies only this class's count, capped at its
    population.  Methods whose estimate is monotone in the count get an
    exponential-then-binary search; the others get a full linear scan that
    keeps the largest feasible count.  Returns 0 when nothing fits.
    """
    if base is None:
        base = ClassComposition.empty()
    count = appliance_class.count
    f = _count_estimator(appliance_class, policy, method, quantum, base)
    p = policy.p
    if not _search_is_monotone(appliance_class, policy, method, base):
        best = 0
        for n in range(count + 1):
            if f(n) <= p:
                best = n
        return best
    if f(0) > p:
        return 0
    if count == 0 or f(count) <= p:
        return count
    # invariant: f(lo) <= p < f(hi)
    lo, hi = 0, 1
    while f(hi) <= p:
        lo = hi
        hi = min(2 * hi, count)  # f(count) > p, so hi stays a strict bound
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) <= p:
            lo = mid
        else:
            hi = mid
    return lo


def decision_region(
    class1: ApplianceClass,
    class2: ApplianceClass,
    policy: QosPolicy,
    method: EstimationMethod,
    quantum: float = 1.0,
) -> np.ndarray:
    """Boolean acceptance grid over two class counts.

    Cell ``[n1, n2]`` is true when enabling n1 of the first class and n2 of
    the second meets the policy under the method.  Computed by full grid
    enumeration; shape is (class1.count + 1, class2.count + 1).
    """
    region = np.zeros((class1.count + 1, class2.count + 1), dtype=bool)
    for n1 in range(class1.count + 1):
        for n2 in range(class2.count + 1):
            comp = ClassComposition(entries=((class1, n1), (class2, n2)))
            region[n1, n2] = estimate(method, comp, policy.c_max, quantum) <= policy.p
    return region


def region_frontier(region: np.ndarray) -> np.ndarray:
    """Largest accepted first-class count per second-class count.

    Entry j is the largest n1 with region[n1, j] true, or -1 when the whole
    column is rejected.
    """
    counts = np.asarray(region, dtype=bool)
    frontier = np.full(counts.shape[1], -1, dtype=np.int64)
    for j in range(counts.shape[1]):
        hits = np.flatnonzero(counts[:, j])
        if hits.size:
            frontier[j] = hits[-1]
    return frontier
