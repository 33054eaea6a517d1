"""Event-driven simulation of the preemptive uniform-priority multi-server queue.

The simulator keeps the whole population in one ordered multiset (the
:class:`PriorityRegistry`) and exploits memorylessness twice: the time to the
next service completion is exponential at rate ``min(N, c)`` regardless of who
is being served, and the completing customer is uniform over the in-service
set. This is distribution-equal to racing per-customer unit-rate clocks (the
slower construction lives in :mod:`uniprio.oracle` as an independent check)
while touching only one clock per event.

Observables follow the arrivals-see-time-averages route: immediately before
each arrival is inserted, the sorted multiset of priorities present is
recorded as a snapshot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from sortedcontainers import SortedList

from .analytics import SystemParams

__all__ = [
    "PriorityRegistry",
    "CustomerRecord",
    "Snapshot",
    "SimConfig",
    "SimTrace",
    "SimObserver",
    "simulate",
    "write_trace_csv",
    "read_trace_csv",
    "write_snapshots_csv",
    "read_snapshots_csv",
]


class PriorityRegistry:
    """Ordered multiset of the customers in system, keyed for rank queries.

    Entries are ordered ascending by ``(priority, -customer_id)``: between equal
    priorities the earlier arrival ranks higher, so it wins the tie for a
    server. All rank queries and mutations are O(log n). Each entry also
    carries a display priority (the level after an optional quantile
    transform) that tags along for logging but never affects the order.
    """

    __slots__ = ("_items",)

    def __init__(self) -> None:
        # (priority, -customer_id, display_priority)
        self._items: SortedList = SortedList()

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        """Yield (priority, customer_id) pairs, weakest first."""
        for priority, neg_id, _ in self._items:
            yield priority, -neg_id

    def insert(self, priority: float, customer_id: int, display: float | None = None) -> int:
        """Add a customer and return its ascending rank position."""
        entry = (priority, -customer_id, priority if display is None else display)
        self._items.add(entry)
        return self._items.index(entry)

    def remove(self, priority: float, customer_id: int) -> None:
        """Remove one customer; raises KeyError if absent."""
        idx = self._items.bisect_left((priority, -customer_id))
        if idx < len(self._items):
            entry = self._items[idx]
            if entry[0] == priority and entry[1] == -customer_id:
                del self._items[idx]
                return
        raise KeyError((priority, customer_id))

    def count_gt(self, p: float) -> int:
        """Number of customers with priority strictly above ``p``."""
        return len(self._items) - self._items.bisect_left((p, math.inf))

    def count_leq(self, p: float) -> int:
        """Number of customers with priority at most ``p``."""
        return self._items.bisect_left((p, math.inf))

    def count_in(self, lo: float, hi: float) -> int:
        """Number of customers with priority in the half-open band [lo, hi)."""
        if lo > hi:
            raise ValueError(f"band endpoints out of order: {lo} > {hi}")
        return self._items.bisect_left((hi,)) - self._items.bisect_left((lo,))

    def nth_highest(self, n: int) -> tuple[float, int]:
        """The (priority, customer_id) pair ranked ``n`` from the top, 0-based."""
        if not 0 <= n < len(self._items):
            raise IndexError(f"rank {n} out of range for {len(self._items)} entries")
        entry = self._items[len(self._items) - 1 - n]
        return entry[0], -entry[1]

    def pop_nth_highest(self, n: int) -> tuple[float, int]:
        """Remove and return the pair ranked ``n`` from the top, 0-based."""
        if not 0 <= n < len(self._items):
            raise IndexError(f"rank {n} out of range for {len(self._items)} entries")
        entry = self._items.pop(len(self._items) - 1 - n)
        return entry[0], -entry[1]

    def display_priorities(self) -> tuple[float, ...]:
        """Display priorities of everyone present, ascending."""
        return tuple(entry[2] for entry in self._items)


class Snapshot(NamedTuple):
    """State seen by one arrival: the priorities present just before it joins."""

    time: float
    priorities: tuple[float, ...]


@dataclass(frozen=True)
class CustomerRecord:
    """One customer's lifecycle. ``departure_time`` is None when the run ended
    with the customer still in system (censored).

    ``last_service_entry`` is the instant the customer most recently moved
    into service, or None if it never reached a server. A preemption does not
    clear it; the field is simply overwritten at the next service entry, so
    for departed customers ``last_service_entry`` marks the start of the final
    uninterrupted service spell.
    """

    customer_id: int
    priority: float
    arrival_time: float
    last_service_entry: float | None
    departure_time: float | None

    @property
    def is_censored(self) -> bool:
        return self.departure_time is None

    @property
    def sojourn(self) -> float | None:
        """Time in system, None while censored."""
        if self.departure_time is None:
            return None
        return self.departure_time - self.arrival_time

    @property
    def waiting(self) -> float | None:
        """Time from arrival to the start of the final service spell.

        None while censored; the total still depends on an unseen future.
        """
        if self.departure_time is None:
            return None
        if self.last_service_entry is None:
            raise ValueError(f"departed customer {self.customer_id} never entered service")
        return self.last_service_entry - self.arrival_time


@dataclass(frozen=True)
class SimConfig:
    """Run parameters for one simulation.

    ``priority_quantile``, when given, must be a nondecreasing map from [0, 1]
    to priorities of the desired distribution. Scheduling always uses the raw
    uniform draws (order is all that matters), so two runs with the same seed
    and different quantile maps share every event time; only logged priorities
    differ. ``record_snapshots=False`` skips storing per-arrival snapshots,
    which long overloaded runs need to keep memory bounded; streaming
    observers still see every snapshot.
    """

    params: SystemParams
    horizon: float
    seed: int
    priority_quantile: Callable[[float], float] | None = None
    record_snapshots: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "horizon", float(self.horizon))
        if not math.isfinite(self.horizon) or self.horizon < 0.0:
            raise ValueError(f"horizon must be finite and nonnegative, got {self.horizon}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")


@dataclass(frozen=True)
class SimTrace:
    """Everything one run produced; immutable after construction.

    ``final_population`` equals the number of censored records: customers in
    system when the horizon cut the run off.
    """

    records: tuple[CustomerRecord, ...]
    snapshots: tuple[Snapshot, ...]
    event_count: int
    final_population: int


class SimObserver:
    """Streaming hooks into a run; all default to no-ops.

    ``on_snapshot`` fires immediately before each arrival is inserted (the
    arriving customer is not yet present). ``on_insert`` and ``on_remove``
    fire with the raw uniform priority whenever the population changes, so an
    observer can mirror the registry contents without storing snapshots.
    """

    def on_snapshot(self, time: float, registry: PriorityRegistry) -> None:
        pass

    def on_insert(self, priority: float) -> None:
        pass

    def on_remove(self, priority: float) -> None:
        pass


def simulate(config: SimConfig, observer: SimObserver | None = None) -> SimTrace:
    """Run the queue to the horizon and return its trace.

    Event mechanics: while customers are present the next service completion
    is scheduled after an exponential gap at rate ``min(N, c)``; the completing
    customer is drawn uniformly from the ``min(N, c)`` highest-priority
    customers. An arrival whose priority ranks within the top ``min(N+1, c)``
    enters service immediately, displacing the weakest in-service customer
    when the house was full; the displaced customer keeps its
    ``last_service_entry`` until it next reenters service.

    Reproducibility: one PCG64 stream seeded with ``config.seed`` drives the
    run, consumed in a fixed order per iteration: first the candidate
    completion gap (when the system is occupied; discarded unscathed if an
    arrival preempts the comparison, which memorylessness permits), then on an
    arrival its uniform priority followed by the next interarrival gap, or on
    a departure the uniform index choosing who completes. Identical configs
    give bitwise-identical traces.

    Boundary rule: events stamped exactly at the horizon are processed; the
    run stops at the first event strictly beyond it. Customers still present
    are recorded as censored.
    """
    rng = np.random.default_rng(config.seed)
    uniform = rng.random
    choose = rng.integers
    alpha = config.params.alpha
    servers = config.params.c
    horizon = config.horizon
    quantile = config.priority_quantile

    registry = PriorityRegistry()
    arrivals: list[float] = []
    displays: list[float] = []
    entered: list[float | None] = []
    departed: list[float | None] = []
    snapshots: list[Snapshot] = []
    keep_snapshots = config.record_snapshots
    events = 0

    time = 0.0
    next_arrival = -math.log1p(-uniform()) / alpha
    while True:
        population = len(registry)
        if population:
            busy = population if population < servers else servers
            next_completion = time + (-math.log1p(-uniform()) / busy)
        else:
            busy = 0
            next_completion = math.inf

        if next_arrival <= next_completion:
            if next_arrival > horizon:
                break
            time = next_arrival
            if keep_snapshots:
                snapshots.append(Snapshot(time, registry.display_priorities()))
            if observer is not None:
                observer.on_snapshot(time, registry)
            level = uniform()
            display = float(quantile(level)) if quantile is not None else level
            customer = len(arrivals)
            position = registry.insert(level, customer, display)
            arrivals.append(time)
            displays.append(display)
            departed.append(None)
            # Top min(N, c) ascending positions start at len - servers.
            if position >= len(registry) - servers:
                entered.append(time)
            else:
                entered.append(None)
            if observer is not None:
                observer.on_insert(level)
            events += 1
            next_arrival = time + (-math.log1p(-uniform()) / alpha)
        else:
            if next_completion > horizon:
                break
            time = next_completion
            promoted = -1
            if population > servers:
                # Removing anyone from service pulls the strongest waiter in.
                _, promoted = registry.nth_highest(servers)
            victim_level, victim = registry.pop_nth_highest(int(choose(busy)))
            departed[victim] = time
            if promoted >= 0:
                entered[promoted] = time
            if observer is not None:
                observer.on_remove(victim_level)
            events += 1

    records = tuple(
        CustomerRecord(i, displays[i], arrivals[i], entered[i], departed[i])
        for i in range(len(arrivals))
    )
    return SimTrace(
        records=records,
        snapshots=tuple(snapshots),
        event_count=events,
        final_population=len(registry),
    )


# ---------------------------------------------------------------------------
# CSV export and import


_TRACE_COLUMNS = ("customer_id", "priority", "arrival_time", "last_service_entry", "departure_time")


def _cell(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_trace_csv(records: Iterable[CustomerRecord], path) -> None:
    """Write customer records, one row each; empty cells mark missing times."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_TRACE_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.customer_id,
                    repr(r.priority),
                    repr(r.arrival_time),
                    _cell(r.last_service_entry),
                    _cell(r.departure_time),
                ]
            )


def read_trace_csv(path) -> tuple[CustomerRecord, ...]:
    """Parse a file written by :func:`write_trace_csv`, exactly round-tripping."""
    out: list[CustomerRecord] = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            out.append(
                CustomerRecord(
                    customer_id=int(row["customer_id"]),
                    priority=float(row["priority"]),
                    arrival_time=float(row["arrival_time"]),
                    last_service_entry=(
                        float(row["last_service_entry"]) if row["last_service_entry"] else None
                    ),
                    departure_time=(
                        float(row["departure_time"]) if row["departure_time"] else None
                    ),
                )
            )
    return tuple(out)


def write_snapshots_csv(snapshots: Sequence[Snapshot], path) -> None:
    """Write per-arrival snapshots; priorities are semicolon-joined, ascending."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["snapshot_time", "priorities"])
        for snap in snapshots:
            writer.writerow([repr(snap.time), ";".join(repr(q) for q in snap.priorities)])


def read_snapshots_csv(path) -> tuple[Snapshot, ...]:
    """Parse a file written by :func:`write_snapshots_csv`."""
    out: list[Snapshot] = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            cell = row["priorities"]
            priorities = tuple(float(q) for q in cell.split(";")) if cell else ()
            out.append(Snapshot(float(row["snapshot_time"]), priorities))
    return tuple(out)
