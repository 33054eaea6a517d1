"""Preemptive multi-server queue with uniformly distributed priorities.

Closed-form per-level analytics, an event-driven simulator, binned
estimators for the simulated curves, and an experiment driver that puts
the two side by side.
"""

from .analytics import (
    INFINITY,
    ExtendedReal,
    RegimeTag,
    StabilityRegime,
    SystemParams,
    UnstableRegionError,
    expected_tail_count,
    is_stable,
    mean_measure,
    p0_derivative,
    p0_mass,
    priority_density,
    quantile_transform,
    sojourn_time,
    stability_threshold,
    tail_pmf,
    waiting_time,
)
from .des import (
    CustomerRecord,
    PriorityRegistry,
    SimConfig,
    SimObserver,
    SimTrace,
    Snapshot,
    read_snapshots_csv,
    read_trace_csv,
    simulate,
    write_snapshots_csv,
    write_trace_csv,
)
from .estimate import (
    BinGrid,
    CensoredPolicy,
    CurveEstimate,
    DensityAccumulator,
    RecordBinStats,
    estimate_density,
    estimate_sojourn,
    estimate_waiting,
    evaluate,
    read_curve_csv,
    write_curve_csv,
)
from .oracle import (
    BirthDeathSpec,
    birth_death_stationary,
    default_truncation,
    finite_difference,
    reference_simulate,
)
from .cli import (
    ComparisonReport,
    ExperimentConfig,
    ExperimentResult,
    compare_curves,
    replication_seed,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # analytics
    "INFINITY",
    "ExtendedReal",
    "RegimeTag",
    "StabilityRegime",
    "SystemParams",
    "UnstableRegionError",
    "expected_tail_count",
    "is_stable",
    "mean_measure",
    "p0_derivative",
    "p0_mass",
    "priority_density",
    "quantile_transform",
    "sojourn_time",
    "stability_threshold",
    "tail_pmf",
    "waiting_time",
    # des
    "CustomerRecord",
    "PriorityRegistry",
    "SimConfig",
    "SimObserver",
    "SimTrace",
    "Snapshot",
    "read_snapshots_csv",
    "read_trace_csv",
    "simulate",
    "write_snapshots_csv",
    "write_trace_csv",
    # estimate
    "BinGrid",
    "CensoredPolicy",
    "CurveEstimate",
    "DensityAccumulator",
    "RecordBinStats",
    "estimate_density",
    "estimate_sojourn",
    "estimate_waiting",
    "evaluate",
    "read_curve_csv",
    "write_curve_csv",
    # oracle
    "BirthDeathSpec",
    "birth_death_stationary",
    "default_truncation",
    "finite_difference",
    "reference_simulate",
    # cli
    "ComparisonReport",
    "ExperimentConfig",
    "ExperimentResult",
    "compare_curves",
    "replication_seed",
    "run_experiment",
]
