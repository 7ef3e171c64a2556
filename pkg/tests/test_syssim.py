import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import ARRAY_8, ARRAY_8x32, ARRAY_16
from gtasim.costmodel import plan_cost
from gtasim.geometry import GtaConfig
from gtasim.mapper import Dataflow, plan
from gtasim.ops import PGemmOp, VectorOp, reference_gemm
from gtasim.precision import Kind
from gtasim.syssim import TRACE_HEADER, MappingMismatch, SimError, simulate, simulate_vector


def test_single_mac():
    op = PGemmOp(1, 1, 1, "INT8", [[-7]], [[13]])
    r = simulate(op, ARRAY_8, "WS")
    assert r.output.tolist() == [[-91]]
    # preload one row, then one beat through a 1x1 region
    assert r.cycles == 2 and r.mem_reads == {"A": 1, "B": 1} and r.mem_writes == 1


def test_int32_two_by_two(rng):
    op = PGemmOp.random(2, 2, 2, "INT32", rng)
    r = simulate(op, ARRAY_8, "WS")
    assert np.array_equal(r.output, reference_gemm(op.A, op.B))
    # B occupies K=2 rows and N*n = 8 columns
    assert r.pe_busy_cycles == 2 * 8 * (2 * 4)


def test_os_four_cubed(rng):
    op = PGemmOp.random(4, 4, 4, "INT8", rng)
    r = simulate(op, ARRAY_8, "OS")
    assert np.array_equal(r.output, reference_gemm(op.A, op.B))
    # skewed stream K + h + w - 2 = 10 cycles, then 4 drain cycles
    assert r.cycles == 14
    assert r.mem_reads == {"A": 16, "B": 16} and r.mem_writes == 16
    assert r.counters() == plan_cost(plan(op, ARRAY_8, "OS")).counters()


def test_ws_four_cubed_cycles(rng):
    op = PGemmOp.random(4, 4, 4, "INT8", rng)
    assert simulate(op, ARRAY_8, "WS").cycles == 4 + (4 + 4 + 4 - 2)


def test_known_values():
    A = [[1, 2, 3], [4, 5, 6]]
    B = [[7, -8], [9, 10], [-11, 12]]
    op = PGemmOp(2, 2, 3, "INT16", A, B)
    expected = [[1 * 7 + 2 * 9 - 3 * 11, -1 * 8 + 2 * 10 + 3 * 12], [4 * 7 + 5 * 9 - 6 * 11, -4 * 8 + 5 * 10 + 6 * 12]]
    for df in Dataflow:
        assert simulate(op, ARRAY_8, df).output.tolist() == expected


gemm_cases = st.tuples(
    st.integers(1, 12), st.integers(1, 12), st.integers(1, 12), st.sampled_from(list(Kind)),
    st.sampled_from([ARRAY_8, ARRAY_16, ARRAY_8x32]), st.integers(0, 2**32 - 1),
)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(gemm_cases)
def test_exact_for_every_kind_and_dataflow(case):
    M, N, K, kind, shape, seed = case
    op = PGemmOp.random(M, N, K, kind, np.random.default_rng(seed))
    ref = reference_gemm(op.A, op.B)
    outs = [simulate(op, shape, df).output for df in Dataflow]
    for out in outs:
        assert np.array_equal(out, ref)


@settings(max_examples=40, deadline=None)
@given(gemm_cases, st.integers(1, 8), st.booleans(), st.booleans())
def test_knobs_never_change_numbers(case, s, edge_fill, overlap):
    M, N, K, kind, shape, seed = case
    op = PGemmOp.random(M, N, K, kind, np.random.default_rng(seed))
    ref = reference_gemm(op.A, op.B)
    for df in Dataflow:
        try:
            p = plan(op, shape, df, k_segments=s if not edge_fill else 1, edge_fill=edge_fill)
        except ValueError:
            continue
        r = simulate(op, shape, df, p, overlap_preload=overlap)
        assert np.array_equal(r.output, ref)
        assert r.counters() == plan_cost(p, overlap).counters()
        assert 0 <= r.utilization <= 1


def test_monotone_in_each_dimension(rng):
    for df in Dataflow:
        for kind in ("INT8", "INT32"):
            base = (3, 5, 4)
            c0 = simulate(PGemmOp.random(*base, kind, rng), ARRAY_8, df).cycles
            for axis in range(3):
                dims = list(base)
                dims[axis] += 4
                assert simulate(PGemmOp.random(*dims, kind, rng), ARRAY_8, df).cycles >= c0


def test_overlap_hides_preload(rng):
    op = PGemmOp.random(12, 12, 12, "INT16", rng)
    plain = simulate(op, ARRAY_8, "WS")
    hidden = simulate(op, ARRAY_8, "WS", overlap_preload=True)
    assert hidden.cycles < plain.cycles
    assert hidden.mem_reads == plain.mem_reads and hidden.mem_writes == plain.mem_writes
    assert np.array_equal(hidden.output, plain.output)
    # output stationary has no preload to hide
    assert simulate(op, ARRAY_8, "OS", overlap_preload=True).cycles == simulate(op, ARRAY_8, "OS").cycles


def test_deterministic(rng):
    op = PGemmOp.random(7, 9, 5, "FP16", rng)
    a, b = simulate(op, ARRAY_16, "IS"), simulate(op, ARRAY_16, "IS")
    assert a.counters() == b.counters() and a.utilization == b.utilization
    assert np.array_equal(a.output, b.output)


def test_trace_format(rng):
    op = PGemmOp.random(2, 2, 2, "INT16", rng)
    buf = io.StringIO()
    r = simulate(op, ARRAY_8, "WS", trace=buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == TRACE_HEADER
    events = [line.split(",") for line in lines[1:]]
    assert all(len(e) == 6 for e in events)
    kinds = {e[1] for e in events}
    assert kinds == {"load", "feed", "drain"}
    cycles = [int(e[0]) for e in events]
    assert cycles == sorted(cycles) and max(cycles) < r.cycles
    # every resident limb is loaded once: K rows x N*n columns
    assert sum(e[1] == "load" for e in events) == 2 * 4
    assert all(e[2] == "B" for e in events if e[1] == "load")


def test_trace_is_reproducible(rng):
    op = PGemmOp.random(3, 2, 4, "INT8", rng)
    bufs = [io.StringIO(), io.StringIO()]
    for buf in bufs:
        simulate(op, ARRAY_8, "OS", trace=buf)
    assert bufs[0].getvalue() == bufs[1].getvalue()


def test_mapping_mismatch(rng):
    op = PGemmOp.random(3, 3, 3, "INT8", rng)
    other = PGemmOp(3, 3, 4, "INT8")
    with pytest.raises(MappingMismatch):
        simulate(op, ARRAY_8, "WS", plan(other, ARRAY_8, "WS"))
    with pytest.raises(MappingMismatch):
        simulate(op, ARRAY_8, "WS", plan(op, ARRAY_8, "OS"))
    with pytest.raises(MappingMismatch):
        simulate(op, ARRAY_8, "WS", plan(op, ARRAY_16, "WS"))


def test_needs_operands():
    with pytest.raises(SimError):
        simulate(PGemmOp(2, 2, 2, "INT8"), ARRAY_8, "WS")


class TestVector:
    def test_empty(self):
        assert simulate_vector(VectorOp("map", 0, "INT8"), GtaConfig()).cycles == 0

    def test_int8_macs_on_sixteen_lanes(self):
        r = simulate_vector(VectorOp("mac", 1024, "INT8"), GtaConfig(lanes_L=16))
        # 16 lanes x 8 ops/lane x gain 8
        assert r.cycles == math.ceil(Fraction(1024, 16 * 8 * 8)) == 1

    def test_elementwise_add_int64(self):
        r = simulate_vector(VectorOp("map", 64, "INT64"), GtaConfig(lanes_L=1))
        assert r.mem_reads == {"A": 64, "B": 64} and r.mem_writes == 64 and r.cycles == 64

    def test_fractional_rate_is_ceiled(self):
        r = simulate_vector(VectorOp("mac", 100, "FP32"), GtaConfig(lanes_L=4))
        assert r.cycles == 4  # 100 / 28.48 = 3.51
        r = simulate_vector(VectorOp("reduce", 10, "FP64"), GtaConfig(lanes_L=1))
        assert r.cycles == 8 and r.mem_reads == {"A": 10}  # 10 / 1.3 = 7.69
