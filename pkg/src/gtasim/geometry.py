"""Lanes, logical array arrangements and mask-group partitions.

Every lane hosts one MPRA (8x8 PEs by default).  The global layout arranges
``L`` lanes as an ``r x c`` grid, giving an ``(r*8) x (c*8)`` PE array.  Mask
groups split the lanes into independent sub-arrays.  Reconfiguration is
treated as instantaneous unless ``reconfig_cycles`` says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class GeometryError(ValueError):
    pass


class TooManyPartitions(GeometryError):
    pass


class InsufficientLanes(GeometryError):
    pass


@dataclass(frozen=True)
class GtaConfig:
    lanes_L: int = 16
    mpra_rows: int = 8
    mpra_cols: int = 8
    mask_width_bits: int = 4
    reconfig_cycles: int = 0

    def __post_init__(self):
        if self.lanes_L < 1:
            raise GeometryError(f"lanes_L must be >= 1, got {self.lanes_L}")
        if self.mpra_rows < 1 or self.mpra_cols < 1:
            raise GeometryError("MPRA dimensions must be positive")
        if self.mask_width_bits < 1:
            raise GeometryError("mask_width_bits must be >= 1")
        if self.reconfig_cycles < 0:
            raise GeometryError("reconfig_cycles must be >= 0")

    @property
    def pes_per_lane(self) -> int:
        return self.mpra_rows * self.mpra_cols

    @property
    def max_partitions(self) -> int:
        return 1 << self.mask_width_bits


@dataclass(frozen=True, order=True)
class ArrayShape:
    rows_R: int
    cols_C: int
    lane_grid: tuple[int, int] = (1, 1)

    @classmethod
    def from_lane_grid(cls, r_lanes: int, c_lanes: int, mpra_rows: int = 8, mpra_cols: int = 8) -> "ArrayShape":
        return cls(r_lanes * mpra_rows, c_lanes * mpra_cols, (r_lanes, c_lanes))

    @classmethod
    def parse(cls, text: str, mpra_rows: int = 8, mpra_cols: int = 8) -> "ArrayShape":
        """Parse ``"16x32"`` (PE rows x PE cols)."""
        try:
            r, c = (int(v) for v in text.lower().split("x"))
        except ValueError:
            raise GeometryError(f"bad array shape {text!r}, expected RxC") from None
        if r % mpra_rows or c % mpra_cols:
            raise GeometryError(f"{text} is not a whole number of {mpra_rows}x{mpra_cols} lanes")
        return cls.from_lane_grid(r // mpra_rows, c // mpra_cols, mpra_rows, mpra_cols)

    @property
    def lanes(self) -> int:
        return self.lane_grid[0] * self.lane_grid[1]

    @property
    def pes(self) -> int:
        return self.rows_R * self.cols_C

    def __str__(self) -> str:
        return f"{self.rows_R}x{self.cols_C}"


def enumerate_arrangements(cfg: GtaConfig, lanes: int | None = None) -> list[ArrayShape]:
    """All rectangular lane grids using exactly ``lanes`` lanes, ascending lane rows."""
    lanes = cfg.lanes_L if lanes is None else lanes
    return [ArrayShape.from_lane_grid(r, lanes // r, cfg.mpra_rows, cfg.mpra_cols)
            for r in range(1, lanes + 1) if lanes % r == 0]


def squarest(cfg: GtaConfig, lanes: int) -> ArrayShape:
    """Most square arrangement of ``lanes``; ties go to the taller one."""
    return min(enumerate_arrangements(cfg, lanes),
               key=lambda s: (abs(s.rows_R - s.cols_C), -s.rows_R))


@dataclass(frozen=True)
class Partition:
    sub_arrays: tuple[ArrayShape, ...]
    mask_group_ids: tuple[int, ...]
    lane_sets: tuple[frozenset[int], ...] = field(default=())

    @property
    def lanes_used(self) -> int:
        return sum(len(s) for s in self.lane_sets)


def partition(cfg: GtaConfig, shape_requests: list[int],
              shapes: list[ArrayShape] | None = None) -> Partition:
    """Split the lanes into disjoint sub-arrays, one per request.

    Each request is a lane count; lanes are handed out contiguously in request
    order.  ``shapes`` optionally fixes each sub-array's arrangement, otherwise
    the squarest arrangement of that lane budget is used.
    """
    if len(shape_requests) > cfg.max_partitions:
        raise TooManyPartitions(
            f"{len(shape_requests)} partitions requested, mask width {cfg.mask_width_bits} "
            f"allows {cfg.max_partitions}")
    if any(r < 1 for r in shape_requests):
        raise GeometryError("each partition needs at least one lane")
    if sum(shape_requests) > cfg.lanes_L:
        raise InsufficientLanes(f"{sum(shape_requests)} lanes requested, {cfg.lanes_L} available")
    if shapes is not None and len(shapes) != len(shape_requests):
        raise GeometryError("shapes must match shape_requests one to one")

    subs, lane_sets = [], []
    start = 0
    for i, lanes in enumerate(shape_requests):
        if shapes is None:
            shape = squarest(cfg, lanes)
        else:
            shape = shapes[i]
            if shape.lanes != lanes or shape not in enumerate_arrangements(cfg, lanes):
                raise GeometryError(f"{shape} is not an arrangement of {lanes} lanes")
        subs.append(shape)
        lane_sets.append(frozenset(range(start, start + lanes)))
        start += lanes
    return Partition(tuple(subs), tuple(range(len(subs))), tuple(lane_sets))
