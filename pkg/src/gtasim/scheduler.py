"""Schedule-space enumeration and least-sum-of-squares selection.

Every legal (precision, arrangement, dataflow, k_segments, direction,
edge_fill) point is costed, plus one SIMD point per precision.  Both axes
are normalised by their minimum over the space and the candidate with the
smallest ``cycles_ratio**2 + mem_ratio**2`` wins.  Ties go to fewer cycles,
then to the earlier candidate in enumeration order.  All arithmetic is
exact (``Fraction``), so reports are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .costmodel import CostEstimate, ThroughputTable, plan_cost, simd_gemm_cost
from .geometry import ArrayShape, GtaConfig, enumerate_arrangements
from .mapper import Dataflow, Direction, MappingError, MappingPlan, plan as make_plan
from .ops import PGemmOp
from .precision import PrecisionSpec, get_precision

SIMD = "SIMD"
CSV_HEADER = ("dataflow", "rows", "cols", "k_segments", "direction", "edge_fill", "precision",
              "cycles", "mem", "cycles_ratio", "mem_ratio", "score", "chosen")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Knobs:
    k_segments: int = 1
    direction: Direction = Direction.LATERAL
    edge_fill: bool = False


@dataclass(frozen=True)
class ScheduleOptions:
    """Bounds of the explored space."""

    max_k_segments: int = 8
    dataflows: tuple[Dataflow, ...] = (Dataflow.WS, Dataflow.IS, Dataflow.OS)
    directions: tuple[Direction, ...] = (Direction.LATERAL, Direction.VERTICAL)
    edge_fill: tuple[bool, ...] = (False, True)
    precisions: tuple[PrecisionSpec, ...] | None = None
    include_simd: bool = True
    exact: bool = False
    overlap_preload: bool = False
    dedupe: bool = True
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_k_segments < 1:
            raise ScheduleError("max_k_segments must be >= 1")
        if not self.dataflows and not self.include_simd:
            raise ScheduleError("nothing to enumerate")
        object.__setattr__(self, "dataflows", tuple(Dataflow(d) for d in self.dataflows))
        object.__setattr__(self, "directions", tuple(Direction(d) for d in self.directions))
        if self.precisions is not None:
            object.__setattr__(self, "precisions", tuple(get_precision(p) for p in self.precisions))


@dataclass(frozen=True)
class ScheduleCandidate:
    index: int
    dataflow: str
    arrangement: ArrayShape | None
    knobs: Knobs | None
    precision: PrecisionSpec
    cost: CostEstimate

    @property
    def cycles(self) -> int:
        return self.cost.cycles

    @property
    def mem(self) -> int:
        return self.cost.mem

    @property
    def is_simd(self) -> bool:
        return self.dataflow == SIMD

    def label(self) -> str:
        if self.is_simd:
            return f"SIMD {self.precision.kind.value}"
        k = self.knobs
        fill = " edge-fill" if k.edge_fill else ""
        return (f"{self.dataflow} {self.arrangement} {self.precision.kind.value} "
                f"s={k.k_segments} {k.direction.value}{fill}")


def _systolic_cost(args) -> CostEstimate:
    op, p, exact, overlap = args
    if not exact:
        return plan_cost(p, overlap)
    from .syssim import simulate

    r = simulate(op, p.shape, p.dataflow, p, overlap_preload=overlap)
    return CostEstimate(r.cycles, r.mem_reads, r.mem_writes, r.pe_busy_cycles)


def _plans(op: PGemmOp, shape: ArrayShape, df: Dataflow, opts: ScheduleOptions) -> Iterable[tuple[Knobs, MappingPlan]]:
    for s in range(1, opts.max_k_segments + 1):
        for d in opts.directions:
            for ef in opts.edge_fill:
                try:
                    p = make_plan(op, shape, df, s, d, ef)
                except MappingError:
                    continue  # illegal knob combination: left out of the space
                yield Knobs(s, d, ef), p


def enumerate_space(op: PGemmOp, cfg: GtaConfig, options: ScheduleOptions | None = None,
                    table: ThroughputTable | None = None) -> list[ScheduleCandidate]:
    """Cost every legal configuration of ``op`` on ``cfg``.

    Order: precision, arrangement (ascending lane rows), dataflow, k_segments,
    direction, edge_fill; each precision's SIMD point follows its systolic
    points.  With ``dedupe`` a knob variant whose cost vector repeats an
    earlier one on the same (precision, arrangement, dataflow) is dropped.
    """
    opts = options or ScheduleOptions()
    precisions = opts.precisions or (op.precision,)
    rng = np.random.default_rng(opts.seed)

    pending = []  # (dataflow, shape, knobs, precision) per candidate, SIMD ones have no job
    jobs = []
    for prec in precisions:
        pop = op if prec == op.precision else op.with_precision(prec)
        if opts.exact and not pop.has_data:
            pop = PGemmOp.random(pop.M, pop.N, pop.K, prec, rng, pop.name)
        for shape in enumerate_arrangements(cfg):
            for df in opts.dataflows:
                for knobs, p in _plans(pop, shape, df, opts):
                    pending.append((df.value, shape, knobs, prec))
                    jobs.append((pop, p, opts.exact, opts.overlap_preload))
        if opts.include_simd:
            pending.append((SIMD, None, None, prec))
            jobs.append(None)

    systolic = [j for j in jobs if j is not None]
    if opts.workers > 1 and len(systolic) > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            costs = iter(list(pool.map(_systolic_cost, systolic, chunksize=16)))
    else:
        costs = iter([_systolic_cost(j) for j in systolic])

    out: list[ScheduleCandidate] = []
    seen: set = set()
    for (df, shape, knobs, prec), job in zip(pending, jobs):
        if job is None:
            cost = simd_gemm_cost(op.with_precision(prec), cfg, table)
        else:
            cost = next(costs)
            key = (df, shape, prec.kind, cost.cycles, tuple(sorted(cost.mem_reads.items())),
                   cost.mem_writes, cost.pe_busy_cycles)
            if opts.dedupe:
                if key in seen:
                    continue
                seen.add(key)
        out.append(ScheduleCandidate(len(out), df, shape, knobs, prec, cost))
    return out


def score_costs(pairs: Sequence[tuple[int, int]]) -> tuple[list[Fraction], list[Fraction], list[Fraction], int]:
    """Normalise (cycles, mem) pairs and pick the least sum of squares.

    Returns (cycles_ratios, mem_ratios, scores, chosen_index).
    """
    if not pairs:
        raise ScheduleError("no candidates to select from")
    min_c = min(c for c, _ in pairs)
    min_m = min(m for _, m in pairs)
    if min_c <= 0 or min_m <= 0:
        raise ScheduleError("cycles and memory accesses must be positive to normalise")
    cr = [Fraction(c, min_c) for c, _ in pairs]
    mr = [Fraction(m, min_m) for _, m in pairs]
    scores = [a * a + b * b for a, b in zip(cr, mr)]
    chosen = min(range(len(pairs)), key=lambda i: (scores[i], pairs[i][0], i))
    return cr, mr, scores, chosen


@dataclass
class ScheduleReport:
    candidates: list[ScheduleCandidate]
    cycles_ratio: list[Fraction]
    mem_ratio: list[Fraction]
    scores: list[Fraction]
    chosen: int
    title: str = field(default="")

    @property
    def best(self) -> ScheduleCandidate:
        return self.candidates[self.chosen]

    def rows(self) -> list[dict]:
        return scatter_export(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        body = {
            "title": self.title,
            "chosen": self.chosen,
            "chosen_label": self.best.label(),
            "candidates": [
                dict(row, index=i, reads_A=c.cost.mem_reads.get("A", 0), reads_B=c.cost.mem_reads.get("B", 0),
                     writes=c.cost.mem_writes, score_exact=str(self.scores[i]))
                for i, (row, c) in enumerate(zip(self.rows(), self.candidates))
            ],
        }
        return json.dumps(body, indent=2) + "\n"


def select(candidates: Sequence[ScheduleCandidate], title: str = "") -> ScheduleReport:
    cr, mr, scores, chosen = score_costs([(c.cycles, c.mem) for c in candidates])
    return ScheduleReport(list(candidates), cr, mr, scores, chosen, title)


def _fmt(x: Fraction) -> str:
    return repr(float(x))


def scatter_export(report: ScheduleReport) -> list[dict]:
    """One flat row per candidate; SIMD rows leave the array/knob fields blank."""
    rows = []
    for i, c in enumerate(report.candidates):
        simd = c.is_simd
        rows.append({
            "dataflow": c.dataflow,
            "rows": "" if simd else c.arrangement.rows_R,
            "cols": "" if simd else c.arrangement.cols_C,
            "k_segments": "" if simd else c.knobs.k_segments,
            "direction": "" if simd else c.knobs.direction.value,
            "edge_fill": "" if simd else int(c.knobs.edge_fill),
            "precision": c.precision.kind.value,
            "cycles": c.cycles,
            "mem": c.mem,
            "cycles_ratio": _fmt(report.cycles_ratio[i]),
            "mem_ratio": _fmt(report.mem_ratio[i]),
            "score": _fmt(report.scores[i]),
            "chosen": int(i == report.chosen),
        })
    return rows


def read_scatter_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ScheduleError(f"unexpected scatter header {reader.fieldnames}")
    return list(reader)


def reselect_rows(rows: Sequence[dict]) -> int:
    """Chosen index recomputed from the raw cycles/mem columns of a scatter table."""
    return score_costs([(int(r["cycles"]), int(r["mem"])) for r in rows])[3]


def schedule(op: PGemmOp, cfg: GtaConfig, options: ScheduleOptions | None = None,
             table: ThroughputTable | None = None) -> ScheduleReport:
    title = op.name or f"M={op.M} N={op.N} K={op.K}"
    return select(enumerate_space(op, cfg, options, table), title)
