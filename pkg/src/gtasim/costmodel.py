"""Closed-form cycle and memory-access estimates.

Per step (all placements start together, each in its own sub-region of
``h x w`` PEs streaming ``beats`` limb beats):

    WS/IS  preload max(h)  +  stream max(beats + h + w - 2)
    OS     stream max(beats + h + w - 2)  +  drain max(h)

with ``beats = slice * n`` for WS/IS (each streamed element enters limb by
limb) and ``beats = slice`` for OS.  Memory counts are in elements: one read
per element entering the array edge, one write per distinct output element
leaving a step.  Zero padding costs cycles but no traffic.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping

from .geometry import ArrayShape, GtaConfig
from .mapper import Dataflow, MappingPlan, StepRun, Tile, plan as make_plan
from .ops import PGemmOp, VectorOp
from .precision import Kind, PrecisionSpec, get_precision

CALIBRATION_ENV = "GTASIM_CALIBRATION"


class CostError(ValueError):
    pass


class TileTooLarge(CostError):
    pass


class UnknownDatatype(CostError):
    pass


@dataclass(frozen=True)
class CostEstimate:
    cycles: int
    mem_reads: Mapping[str, int]
    mem_writes: int
    pe_busy_cycles: int = 0

    @property
    def reads(self) -> int:
        return sum(self.mem_reads.values())

    @property
    def mem(self) -> int:
        """Total memory accesses (reads + writes), the scheduler's second axis."""
        return self.reads + self.mem_writes

    def counters(self) -> tuple:
        return (self.cycles, self.mem_reads.get("A", 0), self.mem_reads.get("B", 0), self.mem_writes)


@dataclass(frozen=True)
class TileDims:
    M: int
    N: int
    K: int


# -- systolic -----------------------------------------------------------------

@dataclass
class _StepCost:
    preload: int = 0
    stream: int = 0
    drain: int = 0
    busy: int = 0
    reads_a: int = 0
    reads_b: int = 0
    writes: int = 0


def _step_cost(p: MappingPlan, run: StepRun) -> _StepCost:
    n = p.limb_count_n
    df = p.dataflow
    T = p.footprint.temporal_len
    if run.axis == "single":
        tile = run.tiles[0]
        slices = [ln for _, ln in p.temporal_slices()]
        regions = [(tile, p.tile_h, p.tile_w, ln) for ln in slices]
    else:
        regions = [(t, t.rows, t.cols, T) for t in run.tiles]

    sc = _StepCost()
    heights = [h for _, h, _, _ in regions]
    beats_per = n if df is not Dataflow.OS else 1
    sc.stream = max(ln * beats_per + h + w - 2 for _, h, w, ln in regions)
    if df is Dataflow.OS:
        sc.drain = max(heights)
    else:
        sc.preload = max(heights)
    sc.busy = sum(h * w * ln * beats_per for _, h, w, ln in regions)

    stationary = streamed = 0
    for t, _, _, ln in regions:
        if df is Dataflow.OS:
            sc.reads_a += (t.rows // n) * ln
            sc.reads_b += (t.cols // n) * ln
        else:
            streamed += t.rows * ln
            stationary += t.rows * (t.cols // n)
    if df is Dataflow.WS:
        sc.reads_a, sc.reads_b = streamed, stationary
    elif df is Dataflow.IS:
        sc.reads_a, sc.reads_b = stationary, streamed

    distinct = {(t.a, t.b): t for t in run.tiles}.values()
    if df is Dataflow.OS:
        sc.writes = sum((t.rows // n) * (t.cols // n) for t in distinct)
    else:
        # temporal ranges of one tile column always union to the whole of T
        cols_by_b = {t.b: t.cols for t in run.tiles}
        sc.writes = T * sum(c // n for c in cols_by_b.values())
    return sc


def plan_cost(p: MappingPlan, overlap_preload: bool = False) -> CostEstimate:
    """Compose a whole plan from its step runs."""
    cycles = busy = ra = rb = wr = 0
    prev_stream = None
    hide = overlap_preload and p.dataflow is not Dataflow.OS
    for run in p.step_runs():
        sc = _step_cost(p, run)
        busy += run.count * sc.busy
        ra += run.count * sc.reads_a
        rb += run.count * sc.reads_b
        wr += run.count * sc.writes
        body = sc.stream + sc.drain
        if not hide:
            cycles += run.count * (sc.preload + body)
            continue
        first = sc.preload if prev_stream is None else max(0, sc.preload - prev_stream)
        cycles += first + body + (run.count - 1) * (max(0, sc.preload - sc.stream) + body)
        prev_stream = sc.stream
    return CostEstimate(cycles, {"A": ra, "B": rb}, wr, busy)


def estimate(op: PGemmOp, shape: ArrayShape, dataflow: Dataflow | str, p: MappingPlan | None = None,
             overlap_preload: bool = False) -> CostEstimate:
    if p is None:
        p = make_plan(op, shape, dataflow)
    if p.op_dims != (op.M, op.N, op.K) or p.dataflow is not Dataflow(dataflow) or p.shape != shape:
        raise CostError("plan does not belong to this op/shape/dataflow")
    return plan_cost(p, overlap_preload)


_KIND_FOR_LIMBS = {1: Kind.INT8, 2: Kind.INT16, 3: Kind.FP32, 4: Kind.INT32, 7: Kind.FP64, 8: Kind.INT64}


def precision_for_limbs(n: int) -> PrecisionSpec:
    try:
        return get_precision(_KIND_FOR_LIMBS[n])
    except KeyError:
        raise CostError(f"no datatype uses {n} limbs") from None


def tile_cost(tile: TileDims, shape: ArrayShape, dataflow: Dataflow | str, n: int) -> CostEstimate:
    """Cost of one tile that fits the array in a single step."""
    op = PGemmOp(tile.M, tile.N, tile.K, precision_for_limbs(n))
    p = make_plan(op, shape, dataflow)
    if p.grid != (1, 1):
        raise TileTooLarge(f"{tile} at n={n} needs a {p.footprint.spatial_rows}x"
                           f"{p.footprint.spatial_cols} region, array is {shape}")
    return plan_cost(p)


# -- vector / SIMD -------------------------------------------------------------

@dataclass(frozen=True)
class ThroughputTable:
    """SIMD gain over the baseline VPU, and baseline ops/cycle/lane, per kind."""

    gains: Mapping[Kind, Fraction]
    baseline: Mapping[Kind, Fraction]
    source: str = field(default="", compare=False)

    def gain(self, kind) -> Fraction:
        kind = get_precision(kind).kind
        if kind not in self.gains:
            raise UnknownDatatype(f"no gain configured for {kind.value}")
        return self.gains[kind]

    def baseline_rate(self, kind) -> Fraction:
        kind = get_precision(kind).kind
        if kind not in self.baseline:
            raise UnknownDatatype(f"no baseline throughput configured for {kind.value}")
        return self.baseline[kind]

    def to_json(self) -> dict:
        return {
            "gains": {k.value: str(v) for k, v in self.gains.items()},
            "baseline_ops_per_lane": {k.value: str(v) for k, v in self.baseline.items()},
        }


def _rational(value, where: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise CostError(f"{where}: use an integer or a decimal string, got {value!r}")
    try:
        out = Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise CostError(f"{where}: {value!r} is not a rational number") from None
    if out <= 0:
        raise CostError(f"{where}: must be positive")
    return out


def parse_calibration(data: dict, source: str = "") -> ThroughputTable:
    if not isinstance(data, dict) or set(data) - {"gains", "baseline_ops_per_lane", "comment"}:
        raise CostError(f"{source}: calibration needs 'gains' and 'baseline_ops_per_lane' only")
    tables = []
    for key in ("gains", "baseline_ops_per_lane"):
        section = data.get(key)
        if not isinstance(section, dict):
            raise CostError(f"{source}: missing section {key!r}")
        table = {}
        for name, value in section.items():
            table[get_precision(name).kind] = _rational(value, f"{source}: {key}.{name}")
        tables.append(table)
    return ThroughputTable(tables[0], tables[1], source)


def load_calibration(path: str | os.PathLike | None = None) -> ThroughputTable:
    """Read a calibration file; ``None`` means $GTASIM_CALIBRATION or the shipped default."""
    if path is None:
        path = os.environ.get(CALIBRATION_ENV)
    if path is None:
        text = resources.files("gtasim.data").joinpath("calibration.json").read_text()
        source = "default calibration"
    else:
        text = Path(path).read_text()
        source = str(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CostError(f"{source}:{exc.lineno}: {exc.msg}") from None
    return parse_calibration(data, source)


_TABLES: dict[str | None, ThroughputTable] = {}


def default_table() -> ThroughputTable:
    key = os.environ.get(CALIBRATION_ENV)
    if key not in _TABLES:
        _TABLES[key] = load_calibration(key)
    return _TABLES[key]


def vector_throughput(d, cfg: GtaConfig, table: ThroughputTable | None = None) -> Fraction:
    """GTA SIMD ops per cycle: lanes x baseline rate x gain."""
    table = table or default_table()
    return cfg.lanes_L * table.baseline_rate(d) * table.gain(d)


def baseline_throughput(d, cfg: GtaConfig, table: ThroughputTable | None = None) -> Fraction:
    table = table or default_table()
    return cfg.lanes_L * table.baseline_rate(d)


def _ceil_div(count: int, rate: Fraction) -> int:
    return math.ceil(Fraction(count) / rate)


def vector_cost(op: VectorOp, cfg: GtaConfig, table: ThroughputTable | None = None) -> CostEstimate:
    cycles = _ceil_div(op.element_count, vector_throughput(op.precision, cfg, table))
    reads = {src: op.element_count for src in op.kind.sources}
    return CostEstimate(cycles, reads, op.element_count)


def simd_gemm_cost(op: PGemmOp, cfg: GtaConfig, table: ThroughputTable | None = None) -> CostEstimate:
    """A p-GEMM run as plain vector MACs on GTA's SIMD path."""
    macs = op.macs
    cycles = _ceil_div(macs, vector_throughput(op.precision, cfg, table))
    return CostEstimate(cycles, {"A": macs, "B": macs}, op.M * op.N)


def vector_baseline_cost(op: PGemmOp, cfg: GtaConfig | None = None,
                         table: ThroughputTable | None = None) -> CostEstimate:
    """No-reuse VPU baseline: every multiply fetches both operands."""
    cfg = cfg or GtaConfig()
    macs = op.macs
    cycles = _ceil_div(macs, baseline_throughput(op.precision, cfg, table))
    return CostEstimate(cycles, {"A": macs, "B": macs}, op.M * op.N)

