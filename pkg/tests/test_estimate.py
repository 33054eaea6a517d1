"""Binned estimators: grids, accumulators, policies, evaluation, round trips."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings, strategies as st

from uniprio.analytics import INFINITY, ExtendedReal, SystemParams
from uniprio.des import CustomerRecord, SimConfig, Snapshot, simulate
from uniprio.estimate import (
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

GRID20 = BinGrid(0.05)


def record(
    cid: int,
    priority: float,
    arrival: float,
    entered: float | None,
    departed: float | None,
) -> CustomerRecord:
    return CustomerRecord(cid, priority, arrival, entered, departed)


class TestBinGrid:
    def test_counts_and_centers(self) -> None:
        assert GRID20.n_bins == 20
        assert GRID20.centers[0] == 0.025
        assert GRID20.centers[-1] == 0.975
        half = BinGrid(0.5)
        assert half.centers == (0.25, 0.75)
        assert BinGrid(1.0).n_bins == 1

    def test_accepts_one_third(self) -> None:
        assert BinGrid(1 / 3).n_bins == 3

    @pytest.mark.parametrize("delta", [0.3, 0.0, -0.1, 1.5, 0.07])
    def test_rejects_non_reciprocal_widths(self, delta: float) -> None:
        with pytest.raises(ValueError):
            BinGrid(delta)

    def test_edges(self) -> None:
        assert GRID20.edges(0) == (0.0, 0.05)
        assert GRID20.edges(19) == (0.95, 1.0)
        with pytest.raises(IndexError):
            GRID20.edges(20)

    def test_index_of(self) -> None:
        assert GRID20.index_of(0.0) == 0
        assert GRID20.index_of(0.049) == 0
        assert GRID20.index_of(0.05) == 1
        assert GRID20.index_of(0.999) == 19
        assert GRID20.index_of(1.0) == 19  # top level folds into the last bin
        with pytest.raises(ValueError):
            GRID20.index_of(-0.01)
        with pytest.raises(ValueError):
            GRID20.index_of(1.01)

    def test_centers_land_in_their_own_bins(self) -> None:
        for n in list(range(1, 64)) + [100, 128, 200, 1000]:
            grid = BinGrid(1.0 / n)
            for i, center in enumerate(grid.centers):
                assert grid.index_of(center) == i

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_index_is_monotone(self, p: float, q: float) -> None:
        lo, hi = min(p, q), max(p, q)
        assert GRID20.index_of(lo) <= GRID20.index_of(hi)


class TestDensityEstimation:
    def test_two_snapshot_worked_example(self) -> None:
        # Bin width one half: counts 1 then 2 in the lower bin, so the
        # density there is (1/0.5) * mean = 2 * 1.5 = 3; upper bin stays 0.
        snaps = [Snapshot(0.4, (0.1,)), Snapshot(1.1, (0.1, 0.3))]
        curve = estimate_density(snaps, BinGrid(0.5))
        assert curve.values[0] == ExtendedReal(3.0)
        assert curve.values[1] == ExtendedReal(0.0)

    def test_rejects_empty_input(self) -> None:
        with pytest.raises(ValueError):
            estimate_density([], BinGrid(0.5))

    def test_total_mass_matches_mean_population(self) -> None:
        trace = simulate(SimConfig(SystemParams(1.5, 2), 500.0, 8))
        curve = estimate_density(trace.snapshots, GRID20)
        mass = sum(v.finite * 0.05 for v in curve.values)
        mean_pop = sum(len(s.priorities) for s in trace.snapshots) / len(trace.snapshots)
        assert mass == pytest.approx(mean_pop, rel=1e-12)

    def test_streaming_equals_offline(self) -> None:
        cfg_stream = SimConfig(SystemParams(1.5, 2), 400.0, 9, record_snapshots=False)
        streaming = DensityAccumulator(GRID20)
        trace_stream = simulate(cfg_stream, observer=streaming)
        trace_kept = simulate(SimConfig(SystemParams(1.5, 2), 400.0, 9))
        offline = estimate_density(trace_kept.snapshots, GRID20)
        assert streaming.snapshot_count == len(trace_kept.snapshots)
        assert streaming.curve().values == offline.values
        assert trace_stream.records == trace_kept.records

    def test_warmup_skips_early_snapshots(self) -> None:
        snaps = [Snapshot(0.5, (0.1,)), Snapshot(2.0, (0.7,))]
        acc = DensityAccumulator(BinGrid(0.5), start_time=1.0)
        acc.add_snapshots(snaps)
        assert acc.snapshot_count == 1
        assert acc.curve().values[1] == ExtendedReal(2.0)

    def test_merge_equals_single_pass(self) -> None:
        trace = simulate(SimConfig(SystemParams(1.5, 2), 400.0, 10))
        whole = DensityAccumulator(GRID20)
        whole.add_snapshots(trace.snapshots)
        left, right = DensityAccumulator(GRID20), DensityAccumulator(GRID20)
        left.add_snapshots(trace.snapshots[:100])
        right.add_snapshots(trace.snapshots[100:])
        left.merge(right)
        assert left.curve().values == whole.curve().values

    def test_merge_rejects_mismatched_grids(self) -> None:
        with pytest.raises(ValueError):
            DensityAccumulator(BinGrid(0.5)).merge(DensityAccumulator(BinGrid(0.25)))


class TestDelayEstimation:
    def test_interrupted_customer_worked_example(self) -> None:
        # Arrives at 0 and starts service, loses the server at 1, gets it
        # back at 4, leaves at 5: waited 4 until the decisive service entry.
        r = record(0, 0.3, 0.0, 4.0, 5.0)
        stats = RecordBinStats(BinGrid(0.5))
        stats.add([r])
        assert stats.waiting_curve().values[0] == ExtendedReal(4.0)
        assert stats.sojourn_curve().values[0] == ExtendedReal(5.0)

    def test_censored_policies(self) -> None:
        grid = BinGrid(0.5)
        rs = [
            record(0, 0.2, 0.0, 1.0, 3.0),  # sojourn 3
            record(1, 0.3, 1.0, 2.0, 6.0),  # sojourn 5
            record(2, 0.25, 2.0, None, None),  # censored, same bin
            record(3, 0.8, 2.0, None, None),  # censored, upper bin alone
        ]
        infinite_s = estimate_sojourn(rs, grid, CensoredPolicy.INFINITE)
        assert infinite_s.values[0] == INFINITY
        assert infinite_s.values[1] == INFINITY
        excluded_s = estimate_sojourn(rs, grid, CensoredPolicy.EXCLUDE)
        assert excluded_s.values[0] == ExtendedReal(4.0)
        assert excluded_s.values[1] is None  # nothing departed up there

    def test_empty_bin_is_undefined_under_both_policies(self) -> None:
        rs = [record(0, 0.2, 0.0, 1.0, 3.0)]
        for policy in CensoredPolicy:
            curve = estimate_sojourn(rs, BinGrid(0.5), policy)
            assert curve.values[1] is None

    def test_policies_agree_on_censor_free_bins(self) -> None:
        trace = simulate(SimConfig(SystemParams(1.5, 2), 600.0, 12))
        inf_curve = estimate_sojourn(trace.records, GRID20, CensoredPolicy.INFINITE)
        exc_curve = estimate_sojourn(trace.records, GRID20, CensoredPolicy.EXCLUDE)
        assert any(v is not None and not v.is_finite for v in inf_curve.values) or all(
            a == b for a, b in zip(inf_curve.values, exc_curve.values)
        )
        for a, b in zip(inf_curve.values, exc_curve.values):
            if a is not None and a.is_finite:
                assert a == b

    def test_waiting_and_sojourn_relate(self) -> None:
        trace = simulate(SimConfig(SystemParams(1.5, 2), 600.0, 12))
        soj = estimate_sojourn(trace.records, GRID20, CensoredPolicy.EXCLUDE)
        wait = estimate_waiting(trace.records, GRID20, CensoredPolicy.EXCLUDE)
        for s, w in zip(soj.values, wait.values):
            if s is not None:
                assert w is not None
                assert w.finite <= s.finite  # service takes the rest

    def test_warmup_skips_early_arrivals(self) -> None:
        rs = [record(0, 0.2, 0.0, 0.0, 1.0), record(1, 0.2, 5.0, 5.0, 7.0)]
        stats = RecordBinStats(BinGrid(0.5))
        stats.add(rs, start_time=2.0)
        assert stats.departed_total == 1
        assert stats.sojourn_curve().values[0] == ExtendedReal(2.0)

    def test_departed_without_entry_is_an_error(self) -> None:
        stats = RecordBinStats(BinGrid(0.5))
        with pytest.raises(ValueError):
            stats.add([record(0, 0.2, 0.0, None, 3.0)])

    def test_merge_equals_single_pass(self) -> None:
        # Counts merge exactly; the means may differ by summation order.
        trace = simulate(SimConfig(SystemParams(1.5, 2), 400.0, 13))
        whole = RecordBinStats(GRID20)
        whole.add(trace.records)
        left, right = RecordBinStats(GRID20), RecordBinStats(GRID20)
        left.add(trace.records[:50])
        right.add(trace.records[50:])
        left.merge(right)
        assert left.censored_total == whole.censored_total
        assert left.departed_total == whole.departed_total
        for a, b in zip(left.sojourn_curve().values, whole.sojourn_curve().values):
            if a is None or not a.is_finite:
                assert a == b
            else:
                assert a.finite == pytest.approx(b.finite, rel=1e-12)


class TestEvaluate:
    def curve(self, values) -> CurveEstimate:
        return CurveEstimate(BinGrid(0.25), tuple(values))

    def test_exact_center_returns_stored_value(self) -> None:
        c = self.curve([ExtendedReal(1.0), ExtendedReal(3.0), INFINITY, None])
        assert evaluate(c, 0.125) == ExtendedReal(1.0)
        assert evaluate(c, 0.625) == INFINITY
        assert evaluate(c, 0.875) is None

    def test_linear_between_centers(self) -> None:
        c = self.curve([ExtendedReal(1.0), ExtendedReal(3.0), ExtendedReal(3.0), ExtendedReal(5.0)])
        assert evaluate(c, 0.25).finite == pytest.approx(2.0, rel=1e-15)
        assert evaluate(c, 0.3).finite == pytest.approx(2.4, rel=1e-14)

    def test_constant_extrapolation(self) -> None:
        c = self.curve([ExtendedReal(1.0), ExtendedReal(3.0), ExtendedReal(3.0), ExtendedReal(5.0)])
        assert evaluate(c, 0.0) == ExtendedReal(1.0)
        assert evaluate(c, 1.0) == ExtendedReal(5.0)

    def test_infinite_neighbor_dominates(self) -> None:
        c = self.curve([ExtendedReal(1.0), INFINITY, ExtendedReal(3.0), ExtendedReal(5.0)])
        assert evaluate(c, 0.2) == INFINITY
        assert evaluate(c, 0.55) == INFINITY

    def test_undefined_neighbor_poisons(self) -> None:
        c = self.curve([ExtendedReal(1.0), None, ExtendedReal(3.0), ExtendedReal(5.0)])
        assert evaluate(c, 0.2) is None

    def test_out_of_range_raises(self) -> None:
        c = self.curve([ExtendedReal(1.0)] * 4)
        with pytest.raises(ValueError):
            evaluate(c, -0.1)
        with pytest.raises(ValueError):
            evaluate(c, 1.1)

    def test_call_notation(self) -> None:
        c = self.curve([ExtendedReal(1.0), ExtendedReal(3.0), ExtendedReal(3.0), ExtendedReal(5.0)])
        assert c(0.25) == evaluate(c, 0.25)


class TestCurveCsv:
    def test_round_trip(self, tmp_path) -> None:
        curve = CurveEstimate(
            BinGrid(0.25),
            (ExtendedReal(1.2345678901234567), INFINITY, None, ExtendedReal(0.0)),
        )
        path = tmp_path / "curve.csv"
        write_curve_csv(curve, path)
        back = read_curve_csv(path)
        assert back.grid == curve.grid
        assert back.values == curve.values

    def test_round_trip_from_simulation(self, tmp_path) -> None:
        trace = simulate(SimConfig(SystemParams(1.5, 2), 300.0, 14))
        curve = estimate_density(trace.snapshots, GRID20)
        path = tmp_path / "density.csv"
        write_curve_csv(curve, path)
        assert read_curve_csv(path).values == curve.values
