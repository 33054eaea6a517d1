"""Binned estimators recovering the analytic curves from simulation traces.

The level axis [0, 1] is split into ``1/delta`` equal bins. The density
estimate averages per-bin head counts over the arrival snapshots (arrivals
see time averages) and rescales by the bin count; the sojourn and waiting
estimates average per-customer delays over the customers whose priority fell
in each bin. Customers still in system at the horizon carry no finished
delay: the Infinite policy treats theirs as infinite (any such customer makes
its bin infinite), the Exclude policy drops them.

Estimated curves evaluate between bin centers by linear interpolation and
extend beyond the outermost centers as constants.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .analytics import INFINITY, ExtendedReal
from .des import CustomerRecord, PriorityRegistry, SimObserver, Snapshot

__all__ = [
    "BinGrid",
    "CensoredPolicy",
    "CurveEstimate",
    "DensityAccumulator",
    "RecordBinStats",
    "estimate_density",
    "estimate_sojourn",
    "estimate_waiting",
    "evaluate",
    "write_curve_csv",
    "read_curve_csv",
]


class CensoredPolicy(Enum):
    """How unfinished (censored) customers enter the delay averages."""

    INFINITE = "infinite"
    EXCLUDE = "exclude"


@dataclass(frozen=True)
class BinGrid:
    """Equal partition of [0, 1] into ``1/delta`` half-open bins.

    ``delta`` must be the reciprocal of a positive integer (validated to within
    1e-9, which admits values like 1/3 that floating point cannot hold
    exactly). Bin ``i`` covers ``[i*delta, (i+1)*delta)`` with center
    ``(i + 1/2) * delta``; a priority of exactly 1.0 folds into the top bin.
    """

    delta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", float(self.delta))
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        n = round(1.0 / self.delta)
        if n < 1 or abs(n * self.delta - 1.0) > 1e-9:
            raise ValueError(f"delta must be the reciprocal of a positive integer, got {self.delta}")

    @property
    def n_bins(self) -> int:
        return round(1.0 / self.delta)

    @property
    def centers(self) -> tuple[float, ...]:
        n = self.n_bins
        return tuple((2 * i + 1) / (2 * n) for i in range(n))

    def edges(self, i: int) -> tuple[float, float]:
        """Lower and upper edge of bin ``i``."""
        n = self.n_bins
        if not 0 <= i < n:
            raise IndexError(f"bin index {i} out of range for {n} bins")
        return i / n, (i + 1) / n

    def index_of(self, p: float) -> int:
        """Bin index holding priority ``p``; exactly 1.0 goes to the last bin."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"priority {p} outside [0, 1] fits no bin")
        n = self.n_bins
        i = int(p * n)
        return i if i < n else n - 1


@dataclass(frozen=True)
class CurveEstimate:
    """Per-bin estimated values on a grid; None marks a bin with no data.

    An undefined bin (None) is distinct from an infinite one: the first says
    nothing was observed, the second says censoring forced the average up.
    """

    grid: BinGrid
    values: tuple[ExtendedReal | None, ...]

    def __post_init__(self) -> None:
        if len(self.values) != self.grid.n_bins:
            raise ValueError(
                f"expected {self.grid.n_bins} values, got {len(self.values)}"
            )

    def __call__(self, p: float) -> ExtendedReal | None:
        return evaluate(self, p)


def evaluate(curve: CurveEstimate, p: float) -> ExtendedReal | None:
    """Evaluate a binned curve at any level in [0, 1].

    At a bin center the stored value is returned as-is. Between two centers
    the value interpolates linearly when both neighbors are finite, is None
    when either neighbor is undefined, and infinite when either neighbor is
    infinite. Outside the outermost centers the nearest stored value extends
    as a constant.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"evaluation point {p} outside [0, 1]")
    centers = curve.grid.centers
    values = curve.values
    if p <= centers[0]:
        return values[0]
    if p >= centers[-1]:
        return values[-1]
    i = bisect_left(centers, p)
    if centers[i] == p:
        return values[i]
    left, right = values[i - 1], values[i]
    if left is None or right is None:
        return None
    if not left.is_finite or not right.is_finite:
        return INFINITY
    span = centers[i] - centers[i - 1]
    weight = (p - centers[i - 1]) / span
    return ExtendedReal(left.value + weight * (right.value - left.value))


class DensityAccumulator(SimObserver):
    """Streaming per-bin population counts, mergeable across replications.

    As a :class:`~uniprio.des.SimObserver` it mirrors the population through
    insert/remove hooks and accumulates the per-bin counts at every snapshot,
    so overloaded runs never need stored snapshots. ``add_snapshots`` covers
    the offline path. Snapshots before ``start_time`` are ignored (warm-up).
    """

    def __init__(self, grid: BinGrid, start_time: float = 0.0) -> None:
        self.grid = grid
        self.start_time = start_time
        self._current = np.zeros(grid.n_bins, dtype=np.int64)
        self._sums = np.zeros(grid.n_bins, dtype=np.float64)
        self._snapshots = 0

    def on_insert(self, priority: float) -> None:
        self._current[self.grid.index_of(priority)] += 1

    def on_remove(self, priority: float) -> None:
        self._current[self.grid.index_of(priority)] -= 1

    def on_snapshot(self, time: float, registry: PriorityRegistry | None = None) -> None:
        if time >= self.start_time:
            self._sums += self._current
            self._snapshots += 1

    def add_snapshots(self, snapshots: Iterable[Snapshot]) -> "DensityAccumulator":
        index_of = self.grid.index_of
        sums = self._sums
        for time, priorities in snapshots:
            if time < self.start_time:
                continue
            for q in priorities:
                sums[index_of(q)] += 1.0
            self._snapshots += 1
        return self

    @property
    def snapshot_count(self) -> int:
        return self._snapshots

    def merge(self, other: "DensityAccumulator") -> "DensityAccumulator":
        if other.grid != self.grid:
            raise ValueError("cannot merge accumulators on different grids")
        self._sums += other._sums
        self._snapshots += other._snapshots
        return self

    def curve(self) -> CurveEstimate:
        """Density curve: bin count times mean per-bin population per snapshot."""
        if self._snapshots == 0:
            raise ValueError("no snapshots accumulated")
        n = self.grid.n_bins
        values = tuple(ExtendedReal(n * s / self._snapshots) for s in self._sums)
        return CurveEstimate(self.grid, values)


class RecordBinStats:
    """Mergeable per-bin delay tallies over customer records.

    Tracks, per bin, the number of departed and censored customers and the
    summed sojourn and waiting times of the departed ones; curves for either
    censoring policy come out of one pass over the records.
    """

    def __init__(self, grid: BinGrid) -> None:
        self.grid = grid
        n = grid.n_bins
        self._departed = np.zeros(n, dtype=np.int64)
        self._censored = np.zeros(n, dtype=np.int64)
        self._sojourn = np.zeros(n, dtype=np.float64)
        self._waiting = np.zeros(n, dtype=np.float64)

    def add(self, records: Iterable[CustomerRecord], start_time: float = 0.0) -> "RecordBinStats":
        """Tally records whose arrival is at or after ``start_time``."""
        index_of = self.grid.index_of
        for r in records:
            if r.arrival_time < start_time:
                continue
            i = index_of(r.priority)
            if r.departure_time is None:
                self._censored[i] += 1
            else:
                if r.last_service_entry is None:
                    raise ValueError(
                        f"departed customer {r.customer_id} has no service entry"
                    )
                self._departed[i] += 1
                self._sojourn[i] += r.departure_time - r.arrival_time
                self._waiting[i] += r.last_service_entry - r.arrival_time
        return self

    def merge(self, other: "RecordBinStats") -> "RecordBinStats":
        if other.grid != self.grid:
            raise ValueError("cannot merge stats on different grids")
        self._departed += other._departed
        self._censored += other._censored
        self._sojourn += other._sojourn
        self._waiting += other._waiting
        return self

    @property
    def departed_total(self) -> int:
        return int(self._departed.sum())

    @property
    def censored_total(self) -> int:
        return int(self._censored.sum())

    def departed_count(self, i: int) -> int:
        """Departed customers tallied in bin ``i``."""
        return int(self._departed[i])

    def censored_count(self, i: int) -> int:
        """Customers still present at the horizon tallied in bin ``i``."""
        return int(self._censored[i])

    def sojourn_curve(self, policy: CensoredPolicy = CensoredPolicy.INFINITE) -> CurveEstimate:
        return self._curve(self._sojourn, policy)

    def waiting_curve(self, policy: CensoredPolicy = CensoredPolicy.INFINITE) -> CurveEstimate:
        return self._curve(self._waiting, policy)

    def _curve(self, sums: np.ndarray, policy: CensoredPolicy) -> CurveEstimate:
        values: list[ExtendedReal | None] = []
        for i in range(self.grid.n_bins):
            if policy is CensoredPolicy.INFINITE and self._censored[i] > 0:
                values.append(INFINITY)
            elif self._departed[i] == 0:
                values.append(None)
            else:
                values.append(ExtendedReal(sums[i] / self._departed[i]))
        return CurveEstimate(self.grid, tuple(values))


def estimate_density(snapshots: Sequence[Snapshot], grid: BinGrid) -> CurveEstimate:
    """Density curve from arrival snapshots.

    Each bin's value is ``(1/delta)`` times the average, over snapshots, of the
    number of priorities in the bin. All-empty snapshots give a well-defined
    all-zero curve; an empty snapshot sequence is an error.
    """
    if len(snapshots) == 0:
        raise ValueError("cannot estimate a density from zero snapshots")
    return DensityAccumulator(grid).add_snapshots(snapshots).curve()


def estimate_sojourn(
    records: Iterable[CustomerRecord],
    grid: BinGrid,
    policy: CensoredPolicy = CensoredPolicy.INFINITE,
) -> CurveEstimate:
    """Mean time in system per priority bin, censoring handled per policy."""
    return RecordBinStats(grid).add(records).sojourn_curve(policy)


def estimate_waiting(
    records: Iterable[CustomerRecord],
    grid: BinGrid,
    policy: CensoredPolicy = CensoredPolicy.INFINITE,
) -> CurveEstimate:
    """Mean time out of service per priority bin, censoring handled per policy."""
    return RecordBinStats(grid).add(records).waiting_curve(policy)


def write_curve_csv(curve: CurveEstimate, path) -> None:
    """One row per bin center; infinity renders as ``inf``, no data as empty."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["p", "value"])
        for p, v in zip(curve.grid.centers, curve.values):
            if v is None:
                cell = ""
            elif not v.is_finite:
                cell = "inf"
            else:
                cell = repr(v.value)
            writer.writerow([repr(p), cell])


def read_curve_csv(path) -> CurveEstimate:
    """Rebuild a curve written by :func:`write_curve_csv`, exactly."""
    rows: list[tuple[str, str]] = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            rows.append((row["p"], row["value"]))
    if not rows:
        raise ValueError(f"no curve rows in {path}")
    grid = BinGrid(1.0 / len(rows))
    values: list[ExtendedReal | None] = []
    for (p_text, value_text), center in zip(rows, grid.centers):
        if float(p_text) != center:
            raise ValueError(f"row center {p_text} does not match grid center {center!r}")
        if value_text == "":
            values.append(None)
        elif value_text == "inf":
            values.append(INFINITY)
        else:
            values.append(ExtendedReal(float(value_text)))
    return CurveEstimate(grid, tuple(values))
