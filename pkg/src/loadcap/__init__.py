"""Probabilistic admission control and scheduling for appliance loads.

The package decides how many stochastic two-state appliances may draw power
at once so that the probability of the aggregate reaching a consumption
ceiling stays within a quality-of-service limit.  It provides exact tail
computation by pmf convolution, five analytic upper bounds plus a normal
approximation, admission decision rules and search, demand scheduling for
blocked appliances, and a seeded Monte Carlo simulator with a CLI.
"""

from .admission import (
    AdmissionState,
    Decision,
    QosPolicy,
    UnderconsumptionReport,
    Verdict,
    check_underconsumption,
    decide,
    decision_region,
    max_admissible,
    region_frontier,
)
from .models import (
    MODEL_FAMILIES,
    AlternatingRenewal,
    ApplianceClass,
    Bernoulli,
    DurationPmf,
    FitResult,
    LoadModel,
    StationaryStats,
    TraceSeries,
    TwoStateMarkov,
    derive_seed,
    fit_model,
    pool_trace,
    sample_series,
    stationary_stats,
)
from .scheduling import (
    Backlog,
    PendingDemand,
    SchedulingStrategy,
    SlotOutcome,
    apply_strategy,
    load_factor,
    select_to_disable,
)
from .simulation import (
    EnergyLedger,
    SimConfig,
    SimMode,
    SimResult,
    SweepCell,
    TableRow,
    enabled_percentage_table,
    run,
    run_composition,
    run_slot_dynamic,
    sweep_qos,
)
from .tailprob import (
    AggregateStats,
    ClassComposition,
    EstimationMethod,
    PowerPmf,
    aggregate_stats,
    bound_bennett,
    bound_chebyshev,
    bound_chernoff,
    bound_hoeffding,
    bound_markov,
    clt_estimate,
    estimate,
    exact_pmf,
    lower_tail,
    mass_below,
    tail_from_pmf,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissionState",
    "AggregateStats",
    "AlternatingRenewal",
    "ApplianceClass",
    "Backlog",
    "Bernoulli",
    "ClassComposition",
    "Decision",
    "DurationPmf",
    "EnergyLedger",
    "EstimationMethod",
    "FitResult",
    "LoadModel",
    "MODEL_FAMILIES",
    "PendingDemand",
    "PowerPmf",
    "QosPolicy",
    "SchedulingStrategy",
    "SimConfig",
    "SimMode",
    "SimResult",
    "SlotOutcome",
    "StationaryStats",
    "SweepCell",
    "TableRow",
    "TraceSeries",
    "TwoStateMarkov",
    "UnderconsumptionReport",
    "Verdict",
    "aggregate_stats",
    "apply_strategy",
    "bound_bennett",
    "bound_chebyshev",
    "bound_chernoff",
    "bound_hoeffding",
    "bound_markov",
    "check_underconsumption",
    "clt_estimate",
    "decide",
    "decision_region",
    "derive_seed",
    "enabled_percentage_table",
    "estimate",
    "exact_pmf",
    "fit_model",
    "load_factor",
    "lower_tail",
    "mass_below",
    "max_admissible",
    "pool_trace",
    "region_frontier",
    "run",
    "run_composition",
    "run_slot_dynamic",
    "sample_series",
    "select_to_disable",
    "stationary_stats",
    "sweep_qos",
    "tail_from_pmf",
]
