from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gtasim.costmodel import CostEstimate
from gtasim.geometry import GtaConfig, enumerate_arrangements
from gtasim.mapper import Dataflow, MappingError, plan
from gtasim.ops import PGemmOp
from gtasim.scheduler import (
    CSV_HEADER, ScheduleCandidate, ScheduleError, ScheduleOptions, enumerate_space, read_scatter_csv,
    reselect_rows, schedule, score_costs, select,
)
from gtasim.workloads import find


def fake(cycles, mem, i=0):
    return ScheduleCandidate(i, "WS", enumerate_arrangements(GtaConfig(lanes_L=1))[0], None,
                             PGemmOp(1, 1, 1, "INT8").precision, CostEstimate(cycles, {"A": mem}, 0))


def brute_force(pairs):
    """Exhaustive re-scan with a float-free score comparison."""
    min_c, min_m = min(c for c, _ in pairs), min(m for _, m in pairs)
    scores = [Fraction(c, min_c) ** 2 + Fraction(m, min_m) ** 2 for c, m in pairs]
    best = min(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    fewest = min(pairs[i][0] for i in tied)
    return next(i for i in tied if pairs[i][0] == fewest)


class TestSelect:
    def test_single(self):
        r = select([fake(10, 20)])
        assert (r.cycles_ratio[0], r.mem_ratio[0], r.scores[0], r.chosen) == (1, 1, 2, 0)

    def test_tie_prefers_fewer_cycles(self):
        r = select([fake(200, 50, 0), fake(100, 100, 1)])
        assert r.scores == [5, 5] and r.chosen == 1

    def test_tie_on_everything_keeps_enumeration_order(self):
        assert select([fake(5, 5), fake(5, 5)]).chosen == 0

    def test_empty(self):
        with pytest.raises(ScheduleError):
            score_costs([])

    @settings(max_examples=300)
    @given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 50)), min_size=1, max_size=30))
    def test_matches_brute_force(self, pairs):
        cr, mr, scores, chosen = score_costs(pairs)
        assert chosen == brute_force(pairs)
        assert min(cr) == 1 and min(mr) == 1
        assert all(scores[chosen] <= s for s in scores)


class TestEnumerate:
    def test_degenerate_space(self):
        opts = ScheduleOptions(max_k_segments=1, dataflows=("WS",))
        cands = enumerate_space(PGemmOp(5, 5, 5, "INT8"), GtaConfig(lanes_L=1), opts)
        assert [c.dataflow for c in cands] == ["WS", "SIMD"]

    def test_product_space_count(self):
        op = PGemmOp(40, 24, 70, "INT16")
        cfg = GtaConfig()
        opts = ScheduleOptions(dedupe=False)
        expected = 0
        for shape in enumerate_arrangements(cfg):
            for df in Dataflow:
                for s in range(1, 9):
                    for d in ("lateral", "vertical"):
                        for ef in (False, True):
                            try:
                                plan(op, shape, df, s, d, ef)
                                expected += 1
                            except MappingError:
                                pass
        assert len(enumerate_space(op, cfg, opts)) == expected + 1

    def test_illegal_segments_are_filtered(self):
        cands = enumerate_space(PGemmOp(2, 2, 2, "INT8"), GtaConfig(lanes_L=1), ScheduleOptions(dedupe=False))
        assert max(c.knobs.k_segments for c in cands if not c.is_simd) == 2  # temporal length 2

    def test_dedupe_keeps_first_of_equal_costs(self):
        op = PGemmOp(30, 30, 30, "INT8")
        full = enumerate_space(op, GtaConfig(lanes_L=4), ScheduleOptions(dedupe=False))
        kept = enumerate_space(op, GtaConfig(lanes_L=4))
        assert len(kept) < len(full)
        def key(c):
            return c.dataflow, c.arrangement, c.precision.kind, c.cost.counters(), c.cost.pe_busy_cycles
        assert len({key(c) for c in kept}) == len(kept)
        assert {key(c) for c in kept} == {key(c) for c in full}
        assert [c.index for c in kept] == list(range(len(kept)))

    def test_simd_per_precision(self):
        opts = ScheduleOptions(precisions=("INT8", "FP16", "FP32"))
        cands = enumerate_space(PGemmOp(20, 20, 20, "INT8"), GtaConfig(lanes_L=2), opts)
        simd = [c.precision.kind.value for c in cands if c.is_simd]
        assert simd == ["INT8", "FP16", "FP32"]

    def test_exact_mode_agrees_with_model(self):
        op = PGemmOp(9, 6, 11, "INT16")
        cfg = GtaConfig(lanes_L=2)
        model = enumerate_space(op, cfg, ScheduleOptions(max_k_segments=3, dedupe=False))
        exact = enumerate_space(op, cfg, ScheduleOptions(max_k_segments=3, dedupe=False, exact=True))
        assert [c.cost.counters() for c in model] == [c.cost.counters() for c in exact]

    def test_parallel_matches_serial(self):
        op = PGemmOp(33, 17, 29, "FP32")
        serial = schedule(op, GtaConfig(), ScheduleOptions())
        parallel = schedule(op, GtaConfig(), ScheduleOptions(workers=2))
        assert serial.to_csv() == parallel.to_csv()

    def test_bad_options(self):
        with pytest.raises(ScheduleError):
            ScheduleOptions(max_k_segments=0)


class TestReports:
    def setup_method(self):
        self.report = schedule(PGemmOp(50, 70, 90, "INT8"), GtaConfig(lanes_L=4),
                               ScheduleOptions(precisions=("INT8", "FP32")))

    def test_rows_and_header(self):
        text = self.report.to_csv()
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == len(self.report.candidates) + 1
        rows = read_scatter_csv(text)
        assert sum(int(r["chosen"]) for r in rows) == 1
        assert any(r["cycles_ratio"] == "1.0" for r in rows) and any(r["mem_ratio"] == "1.0" for r in rows)
        simd = [r for r in rows if r["dataflow"] == "SIMD"]
        assert simd and all(r["rows"] == "" and r["k_segments"] == "" for r in simd)

    def test_round_trip_reselects_same_index(self):
        rows = read_scatter_csv(self.report.to_csv())
        assert reselect_rows(rows) == self.report.chosen

    def test_byte_identical(self):
        again = schedule(PGemmOp(50, 70, 90, "INT8"), GtaConfig(lanes_L=4),
                         ScheduleOptions(precisions=("INT8", "FP32")))
        assert again.to_csv() == self.report.to_csv() and again.to_json() == self.report.to_json()

    def test_bad_header(self):
        with pytest.raises(ScheduleError):
            read_scatter_csv("a,b\n1,2\n")


def test_precision_changes_shape_of_the_scatter():
    conv2 = find("ALI").op("conv2")
    points = {}
    for kind in ("INT8", "FP32"):
        r = schedule(conv2.with_precision(kind), GtaConfig())
        points[kind] = sorted(zip(r.cycles_ratio, r.mem_ratio))
    assert points["INT8"] != points["FP32"]
