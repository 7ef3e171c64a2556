"""Dataflow pattern matching: footprints, coverage cases and tiling plans.

A p-GEMM mapped onto the array occupies a *footprint* of spatial rows x
spatial cols (in PEs, after limb expansion) plus a temporal length:

    WS  rows=K    cols=N*n  temporal=M   (B resident, A streams)
    IS  rows=K    cols=M*n  temporal=N   (A resident, B streams)
    OS  rows=M*n  cols=N*n  temporal=K   (C resident, A and B stream)

The footprint is cut into tiles no larger than the array (tile edges are
aligned to whole limb groups) and tiles are grouped into *steps*.  All
placements of a step run concurrently in independent sub-regions.

Knobs:
  k_segments  replicate the (single) tile of a step over idle area, each copy
              taking a contiguous slice of the temporal dimension.
  edge_fill   pack narrow edge tiles side by side (or stacked) so idle
              rows/columns are used by pending tiles; tiles keep their true
              size instead of being zero-padded.
  direction   tile sweep order; Lateral walks a row band before moving down,
              Vertical walks a column band before moving right.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .geometry import ArrayShape
from .ops import PGemmOp


class MappingError(ValueError):
    pass


class InvalidSegments(MappingError):
    pass


class Dataflow(str, Enum):
    WS = "WS"
    IS = "IS"
    OS = "OS"


class Direction(str, Enum):
    LATERAL = "lateral"
    VERTICAL = "vertical"


class CoverageCase(str, Enum):
    UNCOVER1 = "Uncover1"
    UNCOVER2 = "Uncover2"
    UNCOVER3 = "Uncover3"
    COVER2 = "Cover2"
    COVER3 = "Cover3"
    COVER1 = "Cover1"

    @property
    def is_uncover(self) -> bool:
        return self.value.startswith("Uncover")


@dataclass(frozen=True)
class MappedFootprint:
    spatial_rows: int
    spatial_cols: int
    temporal_len: int
    row_group: int = 1
    col_group: int = 1


def footprint(op: PGemmOp, dataflow: Dataflow | str) -> MappedFootprint:
    dataflow = Dataflow(dataflow)
    n = op.precision.limb_count_n
    if dataflow is Dataflow.WS:
        return MappedFootprint(op.K, op.N * n, op.M, 1, n)
    if dataflow is Dataflow.IS:
        return MappedFootprint(op.K, op.M * n, op.N, 1, n)
    return MappedFootprint(op.M * n, op.N * n, op.K, n, n)


def classify(fp: MappedFootprint, shape: ArrayShape) -> CoverageCase:
    rows, cols = fp.spatial_rows, fp.spatial_cols
    R, C = shape.rows_R, shape.cols_C
    if rows > R and cols > C:
        return CoverageCase.COVER1
    if rows > R:
        return CoverageCase.COVER2 if cols == C else CoverageCase.UNCOVER2
    if cols > C:
        return CoverageCase.COVER3 if rows == R else CoverageCase.UNCOVER3
    if rows == R and cols == C:
        return CoverageCase.COVER1
    return CoverageCase.UNCOVER1


@dataclass(frozen=True)
class Tile:
    """A rectangle of the footprint; (a, b) is its position in the tile grid."""

    a: int
    b: int
    row0: int
    rows: int
    col0: int
    cols: int


@dataclass(frozen=True)
class Placement:
    tile: Tile
    region_rows: int
    region_cols: int
    t0: int
    t_len: int
    origin: tuple[int, int]


Step = tuple[Placement, ...]


@dataclass(frozen=True)
class StepRun:
    """``count`` consecutive steps shaped like ``tiles``.

    axis is "single" (padded tile, possibly replicated), "cols" (tiles side
    by side, sharing a tile column) or "rows" (tiles stacked, sharing a tile
    row).
    """

    count: int
    tiles: tuple[Tile, ...]
    axis: str


@dataclass(frozen=True)
class MappingPlan:
    dataflow: Dataflow
    shape: ArrayShape
    footprint: MappedFootprint
    limb_count_n: int
    op_dims: tuple[int, int, int]
    case: CoverageCase
    tile_h: int
    tile_w: int
    k_segments: int = 1
    tiling_direction: Direction = Direction.LATERAL
    edge_fill: bool = False

    @property
    def grid(self) -> tuple[int, int]:
        fp = self.footprint
        return -(-fp.spatial_rows // self.tile_h), -(-fp.spatial_cols // self.tile_w)

    def tile(self, a: int, b: int) -> Tile:
        fp = self.footprint
        r0, c0 = a * self.tile_h, b * self.tile_w
        return Tile(a, b, r0, min(self.tile_h, fp.spatial_rows - r0),
                    c0, min(self.tile_w, fp.spatial_cols - c0))

    @property
    def tiles(self) -> list[Tile]:
        """Tiles in sweep order."""
        tr, tc = self.grid
        if self.tiling_direction is Direction.LATERAL:
            return [self.tile(a, b) for a in range(tr) for b in range(tc)]
        return [self.tile(a, b) for b in range(tc) for a in range(tr)]

    @property
    def step_count(self) -> int:
        return sum(1 for _ in self.steps())

    def temporal_slices(self) -> list[tuple[int, int]]:
        T, s = self.footprint.temporal_len, self.k_segments
        q, r = divmod(T, s)
        out, t0 = [], 0
        for i in range(s):
            ln = q + (1 if i < r else 0)
            out.append((t0, ln))
            t0 += ln
        return out

    def steps(self) -> Iterator[Step]:
        if self.edge_fill:
            yield from self._packed_steps()
        else:
            yield from self._padded_steps()

    def _padded_steps(self) -> Iterator[Step]:
        h, w = self.tile_h, self.tile_w
        per_row = self.shape.cols_C // w
        slices = self.temporal_slices()
        for t in self.tiles:
            step = []
            for q, (t0, ln) in enumerate(slices):
                step.append(Placement(t, h, w, t0, ln, ((q // per_row) * h, (q % per_row) * w)))
            yield tuple(step)

    def _axis(self, t: Tile) -> str:
        tr, tc = self.grid
        last_col, last_row = t.b == tc - 1, t.a == tr - 1
        if last_col and last_row:
            return "cols" if self.tiling_direction is Direction.LATERAL else "rows"
        return "cols" if last_col else "rows"

    def _packed_steps(self) -> Iterator[Step]:
        R, C = self.shape.rows_R, self.shape.cols_C
        tr, tc = self.grid
        order = self.tiles
        done: set[tuple[int, int]] = set()
        T = self.footprint.temporal_len
        for i, t in enumerate(order):
            if (t.a, t.b) in done:
                continue
            interior = t.a < tr - 1 and t.b < tc - 1
            group = [t]
            if not interior:
                axis = self._axis(t)
                used = t.cols if axis == "cols" else t.rows
                for u in order[i + 1:]:
                    if (u.a, u.b) in done:
                        continue
                    if axis == "cols":
                        fits = u.cols <= C - used and u.rows <= R
                    else:
                        fits = u.rows <= R - used and u.cols <= C
                    if fits:
                        group.append(u)
                        used += u.cols if axis == "cols" else u.rows
            else:
                axis = "cols"
            step, offset = [], 0
            for u in group:
                done.add((u.a, u.b))
                origin = (0, offset) if axis == "cols" else (offset, 0)
                step.append(Placement(u, u.rows, u.cols, 0, T, origin))
                offset += u.cols if axis == "cols" else u.rows
            yield tuple(step)

    def step_runs(self) -> list[StepRun]:
        """Closed-form step structure, O(tile rows + tile cols) runs.

        Padded plans are order-free (every step has the same region), so
        they come back as one run per tile class.  Packed plans come back in
        execution order.
        """
        tr, tc = self.grid
        t = self.tile
        if not self.edge_fill:
            classes = [((tr - 1) * (tc - 1), 0, 0), (tr - 1, 0, tc - 1), (tc - 1, tr - 1, 0), (1, tr - 1, tc - 1)]
            return [StepRun(n, (t(a, b),), "single") for n, a, b in classes if n > 0]

        R, C = self.shape.rows_R, self.shape.cols_C
        lateral = self.tiling_direction is Direction.LATERAL
        corner = t(tr - 1, tc - 1)
        if lateral:
            n_major, n_minor = tr, tc
            k_pri, k_sec = C // corner.cols, R // corner.rows
            pri_axis, sec_axis = "cols", "rows"
            pri = lambda x: t(x, tc - 1)  # noqa: E731
            sec = lambda y: t(tr - 1, y)  # noqa: E731
            interior = lambda x: t(x, 0)  # noqa: E731
        else:
            n_major, n_minor = tc, tr
            k_pri, k_sec = R // corner.rows, C // corner.cols
            pri_axis, sec_axis = "rows", "cols"
            pri = lambda x: t(tr - 1, x)  # noqa: E731
            sec = lambda y: t(y, tc - 1)  # noqa: E731
            interior = lambda x: t(0, x)  # noqa: E731

        runs: list[StepRun] = []
        corner_starts_group = (n_major - 1) % k_pri == 0
        for x in range(n_major - 1):
            if n_minor > 1:
                runs.append(StepRun(n_minor - 1, (interior(x),), "single"))
            if x % k_pri == 0:
                members = tuple(pri(v) for v in range(x, min(x + k_pri, n_major)))
                runs.append(StepRun(1, members, pri_axis))
        corner_done = not corner_starts_group
        secs = [sec(y) for y in range(n_minor - 1)]
        for g in range(0, len(secs), k_sec):
            members = secs[g:g + k_sec]
            if g + k_sec >= len(secs) and len(members) < k_sec and not corner_done:
                members = members + [corner]
                corner_done = True
            runs.append(StepRun(1, tuple(members), sec_axis))
        if not corner_done:
            runs.append(StepRun(1, (corner,), pri_axis))
        return runs

    def run_signature(self) -> tuple:
        """Cost-relevant shape of the plan; equal signatures cost the same."""
        runs = tuple((r.count, r.axis, tuple((u.rows, u.cols) for u in r.tiles)) for r in self.step_runs())
        return (self.edge_fill, self.k_segments, self.tile_h, self.tile_w, runs)

    def occupancy(self, step: Step) -> np.ndarray:
        """R x C map of placement indices (-1 = idle) for one step."""
        occ = np.full((self.shape.rows_R, self.shape.cols_C), -1, dtype=int)
        for idx, p in enumerate(step):
            r, c = p.origin
            region = occ[r:r + p.region_rows, c:c + p.region_cols]
            if region.shape != (p.region_rows, p.region_cols) or np.any(region >= 0):
                raise MappingError("placement overlaps or leaves the array")
            region[...] = idx
        return occ


def segment_capacity(fp: MappedFootprint, shape: ArrayShape) -> int:
    """How many copies of the (padded) tile fit on the array at once."""
    h, w = tile_dims(fp, shape)
    return (shape.rows_R // h) * (shape.cols_C // w)


def tile_dims(fp: MappedFootprint, shape: ArrayShape) -> tuple[int, int]:
    h_cap = (shape.rows_R // fp.row_group) * fp.row_group
    w_cap = (shape.cols_C // fp.col_group) * fp.col_group
    if h_cap == 0 or w_cap == 0:
        raise MappingError(f"a {fp.row_group}x{fp.col_group} limb group does not fit a {shape} array")
    return min(fp.spatial_rows, h_cap), min(fp.spatial_cols, w_cap)


def plan(op: PGemmOp, shape: ArrayShape, dataflow: Dataflow | str, k_segments: int = 1,
         tiling_direction: Direction | str = Direction.LATERAL, edge_fill: bool = False) -> MappingPlan:
    dataflow = Dataflow(dataflow)
    tiling_direction = Direction(tiling_direction)
    fp = footprint(op, dataflow)
    h, w = tile_dims(fp, shape)
    if k_segments < 1:
        raise InvalidSegments("k_segments must be >= 1")
    if k_segments > 1:
        if edge_fill:
            raise InvalidSegments("k-segmentation and edge fill are exclusive")
        cap = min(segment_capacity(fp, shape), fp.temporal_len)
        if k_segments > cap:
            raise InvalidSegments(f"k_segments={k_segments} exceeds idle capacity {cap}")
    return MappingPlan(dataflow, shape, fp, op.precision.limb_count_n, (op.M, op.N, op.K),
                       classify(fp, shape), h, w, k_segments, tiling_direction, edge_fill)


def step_signature(p: MappingPlan) -> tuple:
    """Exact step sequence of a plan, placements included."""
    return tuple(tuple((pl.tile.a, pl.tile.b, pl.region_rows, pl.region_cols, pl.t0, pl.t_len, pl.origin)
                       for pl in step) for step in p.steps())
