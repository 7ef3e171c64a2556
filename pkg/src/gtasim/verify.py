"""Oracle suites behind ``gtasim verify``.

Each suite checks the package against an independent reference (wide-integer
multiply, pure-Python GEMM, brute-force re-scoring) and returns a
``SuiteResult``.  ``fault=True`` perturbs one observed value per suite so the
failure path can be exercised.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .costmodel import estimate, precision_for_limbs
from .geometry import ArrayShape, GtaConfig
from .mapper import CoverageCase, Dataflow, MappedFootprint, classify, plan as make_plan
from .ops import PGemmOp, reference_gemm
from .precision import Kind, get_precision, limb_multiply, limb_multiply_outer, random_operands
from .scheduler import ScheduleOptions, enumerate_space, select
from .syssim import simulate

ARRAYS = (ArrayShape(8, 8, (1, 1)), ArrayShape(16, 16, (2, 2)))


@dataclass
class SuiteResult:
    name: str
    checked: int
    failures: int
    seconds: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.checked > 0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{verdict}  {self.name:<20} {self.checked:>12} checks {self.failures:>6} failures {self.seconds:8.1f}s{extra}"


def _timed(name: str, fn: Callable[[], tuple[int, int, str]]) -> SuiteResult:
    t = time.perf_counter()
    checked, failures, detail = fn()
    return SuiteResult(name, checked, failures, time.perf_counter() - t, detail)


def exhaustive_pairs(kind, lo: int, hi: int, chunk: int = 32) -> tuple[int, int]:
    """Every (x, y) in [lo, hi]^2 through the vectorised limb path."""
    y = np.arange(lo, hi + 1, dtype=np.int64)
    y_exact = y.astype(np.int32) if max(-lo, hi) ** 2 < 1 << 31 else y
    checked = bad = 0
    for start in range(lo, hi + 1, chunk):
        x = np.arange(start, min(start + chunk, hi + 1), dtype=np.int64)
        got = limb_multiply_outer(x, y, kind)
        exact = x.astype(y_exact.dtype)[:, None] * y_exact[None, :]
        bad += int(np.count_nonzero(got != exact))
        checked += got.size
    return checked, bad


def arithmetic_suite(quick: bool = False, fault: bool = False, seed: int = 0) -> SuiteResult:
    def run():
        rng = np.random.default_rng(seed)
        checked = bad = 0
        c, b = exhaustive_pairs(Kind.INT8, -255, 255)
        checked, bad = checked + c, bad + b
        if quick:
            x = np.array(random_operands(Kind.INT16, 512, rng), dtype=np.int64)
            got = limb_multiply_outer(x, x, Kind.INT16)
            checked += got.size
            bad += int(np.count_nonzero(got != np.multiply.outer(x, x)))
        else:
            c, b = exhaustive_pairs(Kind.INT16, -32768, 32767)
            checked, bad = checked + c, bad + b
        pairs = 1_000 if quick else 10_000
        for kind in (Kind.INT32, Kind.INT64, Kind.BP16, Kind.FP16, Kind.FP32, Kind.FP64):
            xs = random_operands(kind, pairs, rng)
            ys = random_operands(kind, pairs, rng)
            for x, y in zip(xs, ys):
                checked += 1
                bad += limb_multiply(x, y, kind) != x * y
        return checked, bad + int(fault), "INT8/INT16 exhaustive" if not quick else "INT16 sampled"
    return _timed("arithmetic", run)


def gemm_suite(quick: bool = False, fault: bool = False, seed: int = 1) -> SuiteResult:
    def run():
        rng = np.random.default_rng(seed)
        points = 20 if quick else 200
        checked = bad = 0
        for _ in range(points):
            M, N, K = (int(v) for v in rng.integers(1, 13, 3))
            for kind in (Kind.INT8, Kind.INT32, Kind.FP32):
                op = PGemmOp.random(M, N, K, kind, rng)
                ref = reference_gemm(op.A, op.B)
                for shape in ARRAYS:
                    for df in Dataflow:
                        out = simulate(op, shape, df).output
                        checked += 1
                        bad += not np.array_equal(out, ref)
        return checked, bad + int(fault), f"{points} shapes"
    return _timed("gemm-exact", run)


def cost_grid(dims, limb_counts=(1, 2, 4), arrays=ARRAYS, seed: int = 2, fault: bool = False):
    """Closed-form cost vs simulated counters over a dims x n x dataflow x array grid."""
    rng = np.random.default_rng(seed)
    checked = bad = 0
    first = None
    for M, N, K in dims:
        for n in limb_counts:
            op = PGemmOp.random(M, N, K, precision_for_limbs(n), rng)
            for shape in arrays:
                for df in Dataflow:
                    sim = simulate(op, shape, df)
                    est = estimate(op, shape, df)
                    got = (sim.cycles + int(fault and checked == 0), sim.mem_reads["A"], sim.mem_reads["B"],
                           sim.mem_writes)
                    checked += 1
                    if got != est.counters():
                        bad += 1
                        first = first or f"first mismatch {(M, N, K, n, str(shape), df.value)}"
    return checked, bad, first or ""


def cost_suite(quick: bool = False, fault: bool = False) -> SuiteResult:
    def run():
        if quick:
            dims = list(itertools.product((1, 2, 5, 8, 12), repeat=3))
        else:
            dims = list(itertools.product(range(1, 13), repeat=3))
        return cost_grid(dims, fault=fault)
    return _timed("cost=sim", run)


def coverage_suite(quick: bool = False, fault: bool = False, seed: int = 3) -> SuiteResult:
    """Case totality plus the utilisation/reuse direction of k-segmentation."""
    def run():
        rng = np.random.default_rng(seed)
        checked = bad = 0
        for _ in range(1_000 if quick else 10_000):
            fp = MappedFootprint(*(int(v) for v in rng.integers(1, 300, 3)))
            r_l, c_l = (int(v) for v in rng.integers(1, 17, 2))
            shape = ArrayShape(8 * r_l, 8 * c_l, (r_l, c_l))
            rows_ok = fp.spatial_rows <= shape.rows_R
            cols_ok = fp.spatial_cols <= shape.cols_C
            expected = {
                (False, False): {CoverageCase.COVER1},
                (False, True): {CoverageCase.COVER2 if fp.spatial_cols == shape.cols_C else CoverageCase.UNCOVER2},
                (True, False): {CoverageCase.COVER3 if fp.spatial_rows == shape.rows_R else CoverageCase.UNCOVER3},
                (True, True): {CoverageCase.COVER1 if (fp.spatial_rows, fp.spatial_cols) == (shape.rows_R, shape.cols_C)
                               else CoverageCase.UNCOVER1},
            }[(rows_ok, cols_ok)]
            checked += 1
            bad += classify(fp, shape) not in expected
        ok, n_points = segmentation_direction(10 if quick else 100, seed)
        return checked + n_points, bad + (n_points - ok) + int(fault), ""
    return _timed("coverage", run)


def segmentation_direction(points: int, seed: int = 4) -> tuple[int, int]:
    """Points where raising k_segments never adds cycles nor removes reads."""
    rng = np.random.default_rng(seed)
    good = tried = 0
    while tried < points:
        M, N, K = (int(v) for v in rng.integers(1, 65, 3))
        n = int(rng.choice([1, 2, 4]))
        op = PGemmOp(M, N, K, precision_for_limbs(n))
        shape = ARRAYS[int(rng.integers(0, 2))]
        df = Dataflow(str(rng.choice(["WS", "IS", "OS"])))
        if not make_plan(op, shape, df).case.is_uncover:
            continue
        tried += 1
        prev = None
        monotone = True
        for s in range(1, 9):
            try:
                p = make_plan(op, shape, df, k_segments=s)
            except ValueError:
                break
            c = estimate(op, shape, df, p)
            if prev is not None and (c.cycles > prev.cycles or c.reads < prev.reads):
                monotone = False
            prev = c
        good += monotone
    return good, tried


def random_space(rng: np.random.Generator) -> list:
    M, N, K = (int(v) for v in rng.integers(1, 200, 3))
    kinds = [k for k in Kind if rng.random() < 0.4] or [Kind.INT8]
    cfg = GtaConfig(lanes_L=int(rng.choice([1, 2, 4, 6, 8, 16])))
    opts = ScheduleOptions(max_k_segments=int(rng.integers(1, 9)),
                           precisions=tuple(get_precision(k) for k in kinds))
    return enumerate_space(PGemmOp(M, N, K, kinds[0]), cfg, opts)


def brute_force_choice(pairs) -> int:
    """Independent re-scan: integer arithmetic on cross-multiplied ratios."""
    min_c = min(c for c, _ in pairs)
    min_m = min(m for _, m in pairs)
    best = None
    for i, (c, m) in enumerate(pairs):
        # score * min_c^2 * min_m^2, exact in integers
        key = (c * c * min_m * min_m + m * m * min_c * min_c, c)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def scheduler_suite(quick: bool = False, fault: bool = False, seed: int = 5) -> SuiteResult:
    def run():
        rng = np.random.default_rng(seed)
        checked = bad = 0
        for _ in range(10 if quick else 50):
            cands = random_space(rng)
            report = select(cands)
            pairs = [(c.cycles, c.mem) for c in cands]
            checked += 1
            chosen = report.chosen + int(fault)
            bad += chosen != brute_force_choice(pairs)
            bad += min(report.cycles_ratio) != 1 or min(report.mem_ratio) != 1
            bad += report.to_csv() != select(cands).to_csv()
        return checked, bad, ""
    return _timed("scheduler-argmin", run)


SUITES = {
    "arithmetic": arithmetic_suite,
    "gemm": gemm_suite,
    "cost": cost_suite,
    "coverage": coverage_suite,
    "scheduler": scheduler_suite,
}


def run_all(quick: bool = False, fault: bool = False, only: list[str] | None = None) -> list[SuiteResult]:
    names = only or list(SUITES)
    return [SUITES[name](quick=quick, fault=fault) for name in names]
