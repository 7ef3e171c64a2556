"""Cycle-accurate functional simulation of p-GEMM on the PE array.

Every PE is an 8-bit limb multiplier with a wide signed partial-sum
register.  The whole R x C array is stepped one clock at a time; a mapping
step may hold several placements, each an independent sub-region with its
own edges (the mask-group mechanism keeps neighbouring regions apart).

WS / IS   The resident operand's limbs sit in ``n`` consecutive PEs of a
          row.  Streamed elements enter the region's left edge limb by limb
          (one limb per cycle, rows skewed by one cycle), pass rightwards,
          and partial sums run down the columns to the region's bottom edge.
OS        A limbs enter from the left, B limbs from the top, each PE keeps a
          limb-pair accumulator; results shift out of the bottom afterwards.

Partial sums leaving the array are per limb pair; the accumulator stage
shift-adds them into exact Python ints.  Memory counters tick once per
element entering an edge (its limb 0) and once per distinct output element
drained in a step.

Trace lines (``cycle,event_kind,operand,row,col,value``):
    load   resident limb written into a PE          (value: signed limb)
    feed   limb entering a region edge               (value: signed limb)
    drain  partial sum collected at a bottom edge    (value: partial sum)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Iterator

import numpy as np

from .costmodel import ThroughputTable, vector_throughput
from .geometry import ArrayShape, GtaConfig
from .mapper import Dataflow, MappingPlan, Step, footprint, plan as make_plan
from .ops import PGemmOp, VectorOp
from .precision import LIMB_BITS, decompose_array

TRACE_HEADER = "cycle,event_kind,operand,row,col,value"


class SimError(ValueError):
    pass


class MappingMismatch(SimError):
    pass


@dataclass
class SimResult:
    output: np.ndarray | None
    cycles: int
    mem_reads: dict[str, int]
    mem_writes: int
    pe_busy_cycles: int
    utilization: Fraction
    array_pes: int = 0
    steps: int = 0

    @property
    def reads(self) -> int:
        return sum(self.mem_reads.values())

    def counters(self) -> tuple:
        return (self.cycles, self.mem_reads.get("A", 0), self.mem_reads.get("B", 0), self.mem_writes)


class _Trace:
    def __init__(self, stream: IO[str] | None):
        self.stream = stream
        if stream is not None:
            stream.write(TRACE_HEADER + "\n")

    def __bool__(self):
        return self.stream is not None

    def emit(self, cycle: int, kind: str, operand: str, rows, cols, values):
        for r, c, v in zip(np.atleast_1d(rows).tolist(), np.atleast_1d(cols).tolist(),
                           np.atleast_1d(values).tolist()):
            self.stream.write(f"{cycle},{kind},{operand},{r},{c},{v}\n")


def _shift_right(x: np.ndarray, fill) -> None:
    x[:, 1:] = x[:, :-1]
    x[:, 0] = fill


def _shift_down(x: np.ndarray, fill) -> None:
    x[1:, :] = x[:-1, :]
    x[0, :] = fill


@dataclass
class _Regions:
    """Per-PE bookkeeping for the placements of one step."""

    R: int
    C: int
    pid: np.ndarray = field(init=False)
    lrow: np.ndarray = field(init=False)
    lcol: np.ndarray = field(init=False)
    left: np.ndarray = field(init=False)
    top: np.ndarray = field(init=False)
    bottom: np.ndarray = field(init=False)

    def __post_init__(self):
        shape = (self.R, self.C)
        self.pid = np.full(shape, -1, dtype=np.int64)
        self.lrow = np.full(shape, -1, dtype=np.int64)
        self.lcol = np.full(shape, -1, dtype=np.int64)
        self.left = np.zeros(shape, dtype=bool)
        self.top = np.zeros(shape, dtype=bool)
        self.bottom = np.zeros(shape, dtype=bool)

    @classmethod
    def of(cls, step: Step, R: int, C: int) -> "_Regions":
        reg = cls(R, C)
        for idx, p in enumerate(step):
            r0, c0 = p.origin
            h, w = p.region_rows, p.region_cols
            window = reg.pid[r0:r0 + h, c0:c0 + w]
            if window.shape != (h, w) or np.any(window >= 0):
                raise SimError("placements overlap or leave the array")
            window[...] = idx
            reg.lrow[r0:r0 + h, c0:c0 + w] = np.arange(h)[:, None]
            reg.lcol[r0:r0 + h, c0:c0 + w] = np.arange(w)[None, :]
            reg.left[r0:r0 + h, c0] = True
            reg.top[r0, c0:c0 + w] = True
            reg.bottom[r0 + h - 1, c0:c0 + w] = True
        return reg

    @property
    def inside(self) -> np.ndarray:
        return self.pid >= 0


class _Edge:
    """Pre-computed edge feed schedule: value/sign/tag/head per cycle per PE."""

    def __init__(self, cycles: int, R: int, C: int):
        self.mag = np.zeros((cycles, R, C), dtype=np.int64)
        self.sgn = np.ones((cycles, R, C), dtype=np.int64)
        self.tag = np.full((cycles, R, C), -1, dtype=np.int64)
        self.head = np.zeros((cycles, R, C), dtype=bool)
        self.mask = np.zeros((R, C), dtype=bool)

    def put(self, cyc, r, c, mag, sgn, tag, head):
        self.mag[cyc, r, c] = mag
        self.sgn[cyc, r, c] = sgn
        self.tag[cyc, r, c] = tag
        self.head[cyc, r, c] = head
        self.mask[r, c] = True


class _Simulator:
    def __init__(self, op: PGemmOp, shape: ArrayShape, plan: MappingPlan, overlap_preload: bool,
                 trace: IO[str] | None):
        self.op = op
        self.plan = plan
        self.R, self.C = shape.rows_R, shape.cols_C
        self.n = op.precision.limb_count_n
        self.trace = _Trace(trace)
        self.overlap = overlap_preload and plan.dataflow is not Dataflow.OS
        self.cycle = 0
        self.busy = 0
        self.writes = 0
        self.reads = {"A": 0, "B": 0}
        a_l, a_s = decompose_array(op.A, op.precision)
        b_l, b_s = decompose_array(op.B, op.precision)
        df = plan.dataflow
        if df is Dataflow.WS:
            # resident B[k, j]; streamed A[m, k]
            self.S_l, self.S_s, self.Q_l, self.Q_s = b_l, b_s, a_l, a_s
            self.stat_name, self.stream_name = "B", "A"
        elif df is Dataflow.IS:
            # resident A^T[k, i]; streamed B^T[j, k]
            self.S_l, self.S_s = a_l.transpose(1, 0, 2), a_s.T
            self.Q_l, self.Q_s = b_l.transpose(1, 0, 2), b_s.T
            self.stat_name, self.stream_name = "A", "B"
        else:
            self.A_l, self.A_s, self.B_l, self.B_s = a_l, a_s, b_l, b_s
        if df is Dataflow.OS:
            out_shape = (op.M, op.N)
        else:
            out_shape = (self.Q_l.shape[0], self.S_l.shape[1])
        self.acc = np.zeros(out_shape + (self.n, self.n), dtype=np.int64)

    # -- resident-operand dataflows (WS, IS) ---------------------------------

    def _stationary_job(self, step: Step):
        R, C, n = self.R, self.C, self.n
        reg = _Regions.of(step, R, C)
        W_mag = np.zeros((R, C), dtype=np.int64)
        W_sgn = np.ones((R, C), dtype=np.int64)
        W_head = np.zeros((R, C), dtype=bool)
        real_res = np.zeros((R, C), dtype=bool)
        out_p = np.full((R, C), -1, dtype=np.int64)
        out_limb = np.zeros((R, C), dtype=np.int64)
        n_feed = max(p.t_len * n + p.region_rows - 1 for p in step)
        edge = _Edge(n_feed, R, C)
        expected = 0
        for p in step:
            r0, c0 = p.origin
            t = p.tile
            i, j = np.meshgrid(np.arange(t.rows), np.arange(t.cols), indexing="ij")
            k = t.row0 + i
            fc = t.col0 + j
            W_mag[r0 + i, c0 + j] = self.S_l[k, fc // n, fc % n]
            W_sgn[r0 + i, c0 + j] = self.S_s[k, fc // n]
            W_head[r0 + i, c0 + j] = fc % n == 0
            real_res[r0 + i, c0 + j] = True
            jj = np.arange(t.cols)
            out_p[r0 + p.region_rows - 1, c0 + jj] = (t.col0 + jj) // n
            out_limb[r0 + p.region_rows - 1, c0 + jj] = (t.col0 + jj) % n

            beats = p.t_len * n
            b, i = np.meshgrid(np.arange(beats), np.arange(p.region_rows), indexing="ij")
            real = i < t.rows
            m = p.t0 + b // n
            la = b % n
            kk = np.minimum(t.row0 + i, self.Q_l.shape[1] - 1)
            mag = np.where(real, self.Q_l[m, kk, la], 0)
            sgn = np.where(real, self.Q_s[m, kk], 1)
            edge.put(b + i, r0 + i, c0, mag, sgn, b, real & (la == 0))
            expected += beats * p.region_cols
        return dict(reg=reg, W_mag=W_mag, W_sgn=W_sgn, W_head=W_head, real=real_res, out_p=out_p, out_limb=out_limb,
                    edge=edge, expected=expected, rows=max(p.region_rows for p in step),
                    t0=np.array([p.t0 for p in step]), loaded=0)

    def _load_tick(self, job, into: dict) -> None:
        """Write local row ``loaded`` of every region into the resident registers."""
        sel = job["reg"].lrow == job["loaded"]
        into["W_mag"][sel] = job["W_mag"][sel]
        into["W_sgn"][sel] = job["W_sgn"][sel]
        real = sel & job["real"]
        self.reads[self.stat_name] += int((real & job["W_head"]).sum())
        if self.trace:
            rr, cc = np.nonzero(real)
            self.trace.emit(self.cycle, "load", self.stat_name, rr, cc,
                            job["W_mag"][rr, cc] * job["W_sgn"][rr, cc])
        job["loaded"] += 1

    def _run_stationary(self, steps: list[Step]) -> None:
        R, C, n = self.R, self.C, self.n
        jobs: Iterator = iter(steps)
        first = next(jobs, None)
        job = self._stationary_job(first) if first is not None else None
        while job is not None:
            regs = {"W_mag": np.zeros((R, C), dtype=np.int64), "W_sgn": np.ones((R, C), dtype=np.int64)}
            if job.get("shadow") is not None:
                regs = job["shadow"]
            while job["loaded"] < job["rows"]:
                self._load_tick(job, regs)
                self.cycle += 1
            step_next = next(jobs, None)
            nxt = self._stationary_job(step_next) if step_next is not None else None
            if nxt is not None and self.overlap:
                nxt["shadow"] = {"W_mag": np.zeros((R, C), dtype=np.int64),
                                 "W_sgn": np.ones((R, C), dtype=np.int64)}
            self._stream_stationary(job, regs, nxt if self.overlap else None)
            job = nxt

    def _stream_stationary(self, job, regs, nxt) -> None:
        R, C, n = self.R, self.C, self.n
        reg: _Regions = job["reg"]
        edge: _Edge = job["edge"]
        W = regs["W_mag"] * regs["W_sgn"]
        inside = reg.inside
        a_mag = np.zeros((R, C), dtype=np.int64)
        a_sgn = np.ones((R, C), dtype=np.int64)
        a_tag = np.full((R, C), -1, dtype=np.int64)
        psum = np.zeros((R, C), dtype=np.int64)
        written = np.zeros(self.acc.shape[:2], dtype=bool)
        remaining = job["expected"]
        n_feed = edge.mag.shape[0]
        out_p, out_limb, t0 = job["out_p"], job["out_limb"], job["t0"]
        cyc = 0
        while remaining > 0:
            _shift_right(a_mag, 0)
            _shift_right(a_sgn, 1)
            _shift_right(a_tag, -1)
            if cyc < n_feed:
                lm = edge.mask
                a_mag[lm] = edge.mag[cyc][lm]
                a_sgn[lm] = edge.sgn[cyc][lm]
                a_tag[lm] = edge.tag[cyc][lm]
                heads = edge.head[cyc]
                self.reads[self.stream_name] += int(heads.sum())
                if self.trace:
                    rr, cc = np.nonzero(lm & (edge.tag[cyc] >= 0))
                    self.trace.emit(self.cycle, "feed", self.stream_name, rr, cc,
                                    a_mag[rr, cc] * a_sgn[rr, cc])
            else:
                a_tag[reg.left] = -1
                a_mag[reg.left] = 0
            _shift_down(psum, 0)
            psum[reg.top] = 0
            psum += a_mag * a_sgn * W
            live = inside & (a_tag >= 0)
            self.busy += int(live.sum())
            rr, cc = np.nonzero(reg.bottom & live)
            if rr.size:
                remaining -= rr.size
                beat = a_tag[rr, cc]
                pid = reg.pid[rr, cc]
                m = t0[pid] + beat // n
                la = beat % n
                p_idx = out_p[rr, cc]
                real = p_idx >= 0
                vals = psum[rr, cc]
                np.add.at(self.acc, (m[real], p_idx[real], la[real], out_limb[rr, cc][real]), vals[real])
                written[m[real], p_idx[real]] = True
                if self.trace:
                    self.trace.emit(self.cycle, "drain", "C", rr, cc, vals)
            if nxt is not None and nxt["loaded"] < nxt["rows"]:
                self._load_tick(nxt, nxt["shadow"])
            self.cycle += 1
            cyc += 1
        self.writes += int(written.sum())

    # -- output stationary --------------------------------------------------

    def _run_os(self, steps) -> None:
        R, C, n = self.R, self.C, self.n
        for step in steps:
            reg = _Regions.of(step, R, C)
            n_feed = max(p.t_len + max(p.region_rows, p.region_cols) - 1 for p in step)
            left = _Edge(n_feed, R, C)
            top = _Edge(n_feed, R, C)
            expected = 0
            row_of = np.full((R, C), -1, dtype=np.int64)
            col_of = np.full((R, C), -1, dtype=np.int64)
            for p in step:
                r0, c0 = p.origin
                t = p.tile
                k, i = np.meshgrid(np.arange(p.t_len), np.arange(p.region_rows), indexing="ij")
                real = i < t.rows
                fr = np.minimum(t.row0 + i, self.A_l.shape[0] * n - 1)
                kk = p.t0 + k
                left.put(k + i, r0 + i, c0, np.where(real, self.A_l[fr // n, kk, fr % n], 0),
                         np.where(real, self.A_s[fr // n, kk], 1), k, real & (fr % n == 0))
                k, j = np.meshgrid(np.arange(p.t_len), np.arange(p.region_cols), indexing="ij")
                real = j < t.cols
                fc = np.minimum(t.col0 + j, self.B_l.shape[1] * n - 1)
                kk = p.t0 + k
                top.put(k + j, r0, c0 + j, np.where(real, self.B_l[kk, fc // n, fc % n], 0),
                        np.where(real, self.B_s[kk, fc // n], 1), k, real & (fc % n == 0))
                expected += p.t_len * p.region_rows * p.region_cols
                ii = np.arange(p.region_rows)
                jj = np.arange(p.region_cols)
                row_of[r0 + ii[:, None], c0 + jj[None, :]] = np.where(ii < t.rows, t.row0 + ii, -1)[:, None]
                col_of[r0 + ii[:, None], c0 + jj[None, :]] = np.where(jj < t.cols, t.col0 + jj, -1)[None, :]

            a_mag = np.zeros((R, C), dtype=np.int64)
            a_sgn = np.ones((R, C), dtype=np.int64)
            a_tag = np.full((R, C), -1, dtype=np.int64)
            b_mag = np.zeros((R, C), dtype=np.int64)
            b_sgn = np.ones((R, C), dtype=np.int64)
            b_tag = np.full((R, C), -1, dtype=np.int64)
            acc = np.zeros((R, C), dtype=np.int64)
            inside = reg.inside
            cyc = 0
            while expected > 0:
                _shift_right(a_mag, 0)
                _shift_right(a_sgn, 1)
                _shift_right(a_tag, -1)
                _shift_down(b_mag, 0)
                _shift_down(b_sgn, 1)
                _shift_down(b_tag, -1)
                for edge, mag, sgn, tag, name in ((left, a_mag, a_sgn, a_tag, "A"),
                                                  (top, b_mag, b_sgn, b_tag, "B")):
                    em = edge.mask
                    if cyc < n_feed:
                        mag[em] = edge.mag[cyc][em]
                        sgn[em] = edge.sgn[cyc][em]
                        tag[em] = edge.tag[cyc][em]
                        self.reads[name] += int(edge.head[cyc].sum())
                        if self.trace:
                            rr, cc = np.nonzero(em & (edge.tag[cyc] >= 0))
                            self.trace.emit(self.cycle, "feed", name, rr, cc, mag[rr, cc] * sgn[rr, cc])
                    else:
                        mag[em] = 0
                        tag[em] = -1
                live = inside & (a_tag >= 0) & (b_tag >= 0)
                if np.any(live & (a_tag != b_tag)):
                    raise SimError("operand skew broken")
                acc += np.where(live, a_mag * b_mag * a_sgn * b_sgn, 0)
                n_live = int(live.sum())
                self.busy += n_live
                expected -= n_live
                self.cycle += 1
                cyc += 1

            # drain: one row per cycle leaves through each region's bottom edge
            written = np.zeros((self.op.M, self.op.N), dtype=bool)
            for _ in range(max(p.region_rows for p in step)):
                rr, cc = np.nonzero(reg.bottom & (row_of >= 0) & (col_of >= 0))
                if rr.size:
                    fr, fc = row_of[rr, cc], col_of[rr, cc]
                    np.add.at(self.acc, (fr // n, fc // n, fr % n, fc % n), acc[rr, cc])
                    written[fr // n, fc // n] = True
                    if self.trace:
                        self.trace.emit(self.cycle, "drain", "C", rr, cc, acc[rr, cc])
                for x, fill in ((acc, 0), (row_of, -1)):
                    _shift_down(x, fill)
                    x[reg.top] = fill
                self.cycle += 1
            self.writes += int(written.sum())

    def run(self) -> np.ndarray:
        steps = list(self.plan.steps())
        if self.plan.dataflow is Dataflow.OS:
            self._run_os(steps)
        else:
            self._run_stationary(steps)
        n = self.n
        weights = np.array([[1 << (LIMB_BITS * (i + j)) for j in range(n)] for i in range(n)], dtype=object)
        out = (self.acc.astype(object) * weights).sum(axis=(2, 3))
        if self.plan.dataflow is Dataflow.IS:
            out = out.T.copy()
        return out, len(steps)


def simulate(op: PGemmOp, shape: ArrayShape, dataflow: Dataflow | str, mapping: MappingPlan | None = None,
             *, overlap_preload: bool = False, trace: IO[str] | None = None) -> SimResult:
    """Run ``op`` clock by clock under ``mapping`` (default: plain tiling)."""
    dataflow = Dataflow(dataflow)
    if not op.has_data:
        raise SimError("simulate needs operand matrices")
    if mapping is None:
        mapping = make_plan(op, shape, dataflow)
    if (mapping.dataflow is not dataflow or mapping.shape != shape
            or mapping.op_dims != (op.M, op.N, op.K) or mapping.footprint != footprint(op, dataflow)
            or mapping.limb_count_n != op.precision.limb_count_n):
        raise MappingMismatch("mapping plan was made for a different op, shape or dataflow")
    sim = _Simulator(op, shape, mapping, overlap_preload, trace)
    output, n_steps = sim.run()
    total = sim.cycle * shape.pes
    util = Fraction(sim.busy, total) if total else Fraction(0)
    return SimResult(output, sim.cycle, dict(sim.reads), sim.writes, sim.busy, util, shape.pes, n_steps)


def simulate_vector(op: VectorOp, cfg: GtaConfig, table: ThroughputTable | None = None) -> SimResult:
    """Vector op on the SIMD path: no reuse, one read per source element."""
    rate = vector_throughput(op.precision, cfg, table)
    cycles = math.ceil(Fraction(op.element_count) / rate)
    reads = {src: op.element_count for src in op.kind.sources}
    pes = cfg.lanes_L * cfg.pes_per_lane
    busy = op.element_count * op.precision.limb_count_n ** 2
    util = Fraction(min(busy, cycles * pes), cycles * pes) if cycles else Fraction(0)
    return SimResult(None, cycles, reads, op.element_count, min(busy, cycles * pes), util, pes)
