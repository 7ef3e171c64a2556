"""Acceptance criteria, one test each, one PASS/FAIL line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the verdict lines.
"""

import itertools
import time
from fractions import Fraction

import numpy as np

from gtasim import costmodel, verify
from gtasim.costmodel import baseline_throughput, estimate, vector_baseline_cost, vector_throughput
from gtasim.geometry import ArrayShape, GtaConfig, squarest
from gtasim.mapper import Dataflow, plan as make_plan
from gtasim.ops import PGemmOp, reference_gemm
from gtasim.precision import Kind
from gtasim.scheduler import select
from gtasim.syssim import simulate
from gtasim.workloads import catalog

# SIMD gains over the baseline vector unit, as published
PUBLISHED_GAINS = {"INT8": 8, "INT16": 4, "INT32": 2, "INT64": 1,
                   "BP16": 16, "FP16": 4, "FP32": "3.56", "FP64": "1.3"}


def verdict(name: str, ok: bool, detail: str = "") -> None:
    print(f"\n{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
    assert ok, detail


def test_arithmetic_exactness():
    t = time.perf_counter()
    result = verify.arithmetic_suite(quick=False)
    elapsed = time.perf_counter() - t
    # 511^2 INT8 pairs + 65536^2 INT16 pairs + 6 kinds x 10^4 random pairs
    expected = 511 ** 2 + 65536 ** 2 + 6 * 10_000
    ok = result.failures == 0 and result.checked == expected and elapsed < 120
    verdict("arithmetic exactness", ok, f"{result.checked} pairs, {result.failures} mismatches, {elapsed:.1f}s")


def test_gemm_exactness():
    result = verify.gemm_suite(quick=False)
    ok = result.passed and result.checked == 200 * 3 * 2 * 3
    verdict("GEMM exactness", ok, f"{result.checked} runs, {result.failures} mismatches")


def test_cost_matches_simulation():
    dims = list(itertools.product(range(1, 13), repeat=3))
    checked, bad, detail = verify.cost_grid(dims)
    ok = bad == 0 and checked == 12 ** 3 * 3 * 3 * 2
    verdict("cost = simulation", ok, f"{checked} grid points, {bad} mismatches {detail}")


def test_simd_gain_constants():
    table = costmodel.default_table()
    cfg = GtaConfig(lanes_L=16)
    bad = [k for k, g in PUBLISHED_GAINS.items()
           if table.gain(k) != Fraction(g) or vector_throughput(k, cfg) / baseline_throughput(k, cfg) != Fraction(g)]
    verdict("SIMD gain constants", not bad, f"mismatched: {bad}" if bad else "8 kinds")


def test_structural_checks():
    rng = np.random.default_rng(7)
    problems = []
    array8 = ArrayShape(8, 8, (1, 1))
    for n, kind in ((1, Kind.INT8), (2, Kind.INT16), (4, Kind.INT32), (8, Kind.INT64)):
        op = PGemmOp.random(1, 1, 1, kind, rng)
        p = make_plan(op, array8, Dataflow.WS)
        occ = p.occupancy(next(iter(p.steps())))
        rows, cols = np.nonzero(occ >= 0)
        if len(rows) != n or len(set(rows.tolist())) != 1:
            problems.append(f"WS n={n} occupies {len(rows)} PEs over rows {sorted(set(rows.tolist()))}")
        r = simulate(op, array8, Dataflow.WS)
        if not np.array_equal(r.output, reference_gemm(op.A, op.B)):
            problems.append(f"WS n={n} inexact")
    op = PGemmOp.random(1, 1, 1, Kind.INT64, rng)
    p = make_plan(op, array8, Dataflow.OS)
    busy = int(np.count_nonzero(p.occupancy(next(iter(p.steps()))) >= 0))
    r = simulate(op, array8, Dataflow.OS)
    if busy != 64 or r.pe_busy_cycles != 64 or not np.array_equal(r.output, reference_gemm(op.A, op.B)):
        problems.append(f"OS INT64 occupies {busy} PEs")
    verdict("structural checks", not problems, "; ".join(problems) or "WS n in {1,2,4,8} on one row, OS 64-bit on 64 PEs")


def test_coverage_totality_and_segmentation():
    result = verify.coverage_suite(quick=False)
    ok = result.passed and result.checked == 10_000 + 100
    verdict("coverage totality + segmentation direction", ok,
            f"{result.checked} checks, {result.failures} failures")


def test_scheduler_optimality():
    first = verify.scheduler_suite(quick=False)
    rng = np.random.default_rng(11)
    spaces = [verify.random_space(rng) for _ in range(3)]
    stable = all(select(s).to_json() == select(s).to_json() and select(s).to_csv() == select(s).to_csv()
                 for s in spaces)
    ok = first.passed and first.checked == 50 and stable
    verdict("scheduler optimality", ok, f"{first.checked} spaces, {first.failures} failures, stable={stable}")


def test_baseline_dominance():
    cfg = GtaConfig()
    shape = squarest(cfg, cfg.lanes_L)
    checked, losers = 0, []
    for w in catalog():
        for op in w.gemms:
            if min(op.M, op.N, op.K) < 2:
                continue
            checked += 1
            best = min(estimate(op, shape, df).reads for df in Dataflow)
            base = vector_baseline_cost(op, cfg).reads
            if not best < base:
                losers.append(f"{w.name}/{op.name}")
    ok = checked > 0 and not losers
    verdict("baseline dominance", ok, f"{checked} ops" + (f", losers {losers}" if losers else ""))
