"""Limb arithmetic for the multi-precision array.

Wide operands are split into unsigned 8-bit limbs (least significant first),
every limb pair is multiplied on an 8-bit PE, and the accumulator recombines
the partial products with shifts.  Signs are handled sign-magnitude: limbs
carry magnitudes only, the product sign is applied when recombining.

Float kinds only contribute their integer mantissa (significand including the
hidden bit); exponent handling and rounding live outside this model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

LIMB_BITS = 8
LIMB_BASE = 1 << LIMB_BITS


class PrecisionError(ValueError):
    pass


class OutOfRange(PrecisionError):
    pass


class MismatchedWidth(PrecisionError):
    pass


class NotFloat(PrecisionError):
    pass


class Kind(str, Enum):
    INT8 = "INT8"
    INT16 = "INT16"
    INT32 = "INT32"
    INT64 = "INT64"
    BP16 = "BP16"
    FP16 = "FP16"
    FP32 = "FP32"
    FP64 = "FP64"

    @property
    def is_float(self) -> bool:
        return self in _FLOAT_KINDS


_FLOAT_KINDS = frozenset({Kind.BP16, Kind.FP16, Kind.FP32, Kind.FP64})

# mantissa multiply widths of the float kinds
_MANTISSA_BITS = {Kind.BP16: 8, Kind.FP16: 12, Kind.FP32: 24, Kind.FP64: 53}

_TOTAL_BITS = {
    Kind.INT8: 8, Kind.INT16: 16, Kind.INT32: 32, Kind.INT64: 64,
    Kind.BP16: 16, Kind.FP16: 16, Kind.FP32: 32, Kind.FP64: 64,
}

_ALIASES = {"BF16": Kind.BP16}


@dataclass(frozen=True)
class PrecisionSpec:
    kind: Kind
    total_bits: int
    mantissa_bits: int
    limb_count_n: int

    @property
    def is_float(self) -> bool:
        return self.kind.is_float

    @property
    def max_magnitude(self) -> int:
        """Largest magnitude an operand of this kind may carry."""
        return (1 << self.mantissa_bits) - 1

    @property
    def bytes(self) -> int:
        return self.total_bits // 8

    def __str__(self) -> str:
        return self.kind.value


def _build(kind: Kind) -> PrecisionSpec:
    total = _TOTAL_BITS[kind]
    mant = _MANTISSA_BITS.get(kind, total)
    return PrecisionSpec(kind, total, mant, math.ceil(mant / LIMB_BITS))


PRECISIONS: dict[Kind, PrecisionSpec] = {k: _build(k) for k in Kind}


def get_precision(kind: Kind | str | PrecisionSpec) -> PrecisionSpec:
    """Look up a PrecisionSpec by kind or (case-insensitive) name."""
    if isinstance(kind, PrecisionSpec):
        return kind
    if isinstance(kind, Kind):
        return PRECISIONS[kind]
    name = str(kind).strip().upper()
    if name in _ALIASES:
        return PRECISIONS[_ALIASES[name]]
    try:
        return PRECISIONS[Kind(name)]
    except ValueError:
        raise PrecisionError(f"unknown precision {kind!r}") from None


def mantissa_map(kind: Kind | str) -> PrecisionSpec:
    spec = get_precision(kind)
    if not spec.is_float:
        raise NotFloat(f"{spec.kind.value} is an integer kind")
    return spec


@dataclass(frozen=True)
class LimbVector:
    limbs: tuple[int, ...]
    sign: int = 1

    @property
    def n(self) -> int:
        return len(self.limbs)


@dataclass(frozen=True)
class PartialProductGrid:
    """cells[i][j] = x.limbs[i] * y.limbs[j]; sign is the product sign."""

    cells: tuple[tuple[int, ...], ...]
    n: int
    sign: int = 1


def decompose(x: int, spec: PrecisionSpec | Kind | str) -> LimbVector:
    spec = get_precision(spec)
    x = int(x)
    mag = abs(x)
    if mag >> spec.mantissa_bits:
        raise OutOfRange(f"|{x}| needs more than {spec.mantissa_bits} bits for {spec.kind.value}")
    limbs = []
    for _ in range(spec.limb_count_n):
        limbs.append(mag & (LIMB_BASE - 1))
        mag >>= LIMB_BITS
    return LimbVector(tuple(limbs), -1 if x < 0 else 1)


def recompose(v: LimbVector) -> int:
    value = 0
    for limb in reversed(v.limbs):
        value = (value << LIMB_BITS) | limb
    return v.sign * value


def partial_products(x: LimbVector, y: LimbVector) -> PartialProductGrid:
    if x.n != y.n:
        raise MismatchedWidth(f"limb counts differ: {x.n} vs {y.n}")
    cells = tuple(tuple(a * b for b in y.limbs) for a in x.limbs)
    return PartialProductGrid(cells, x.n, x.sign * y.sign)


def accumulate_shift_add(grid: PartialProductGrid, spec: PrecisionSpec | Kind | str | None = None) -> int:
    """Shift-add the partial products: sum of cells[i][j] << 8*(i+j)."""
    if spec is not None and get_precision(spec).limb_count_n != grid.n:
        raise MismatchedWidth(f"grid has {grid.n} limbs, {get_precision(spec).kind.value} expects "
                              f"{get_precision(spec).limb_count_n}")
    total = 0
    for i, row in enumerate(grid.cells):
        for j, cell in enumerate(row):
            total += cell << (LIMB_BITS * (i + j))
    return grid.sign * total


def limb_multiply(x: int, y: int, spec: PrecisionSpec | Kind | str) -> int:
    """Multiply two operands the way the array does it."""
    spec = get_precision(spec)
    return accumulate_shift_add(partial_products(decompose(x, spec), decompose(y, spec)), spec)


# -- vectorised forms (used for exhaustive sweeps) --------------------------

def decompose_array(values: np.ndarray, spec: PrecisionSpec | Kind | str) -> tuple[np.ndarray, np.ndarray]:
    """Split an integer array into limbs.

    Returns ``(limbs, signs)`` where ``limbs`` has a trailing axis of length n
    (int64, least significant first) and ``signs`` holds +1/-1.  Works on int64
    arrays and on object arrays of Python ints.
    """
    spec = get_precision(spec)
    values = np.asarray(values)
    if values.dtype == object:
        mags = np.frompyfunc(abs, 1, 1)(values)
        signs = np.where(values < 0, -1, 1).astype(np.int64)
        if values.size and int(np.max(mags)) >> spec.mantissa_bits:
            raise OutOfRange(f"operand exceeds {spec.mantissa_bits} bits")
        limbs = np.empty(values.shape + (spec.limb_count_n,), dtype=np.int64)
        rest = mags
        for i in range(spec.limb_count_n):
            limbs[..., i] = (rest % LIMB_BASE).astype(np.int64)
            rest = rest // LIMB_BASE
        return limbs, signs
    values = values.astype(np.int64)
    mags = np.abs(values)
    if spec.mantissa_bits < 63 and values.size and np.any(mags >> spec.mantissa_bits):
        raise OutOfRange(f"operand exceeds {spec.mantissa_bits} bits")
    shifts = np.arange(spec.limb_count_n, dtype=np.int64) * LIMB_BITS
    limbs = (mags[..., None] >> shifts) & (LIMB_BASE - 1)
    return limbs, np.where(values < 0, -1, 1).astype(np.int64)


def limb_multiply_outer(x: np.ndarray, y: np.ndarray, spec: PrecisionSpec | Kind | str) -> np.ndarray:
    """Limb-decomposed products of every pair in ``x`` x ``y``.

    Only valid while the exact products fit in int64, i.e. operands of at
    most 31 magnitude bits.  Uses int32 when every product fits in it.
    """
    spec = get_precision(spec)
    if spec.mantissa_bits > 31:
        raise PrecisionError("outer form limited to 31-bit magnitudes")
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    xl, xs = decompose_array(x, spec)
    yl, ys = decompose_array(y, spec)
    big = int(np.abs(x).max(initial=0)) * int(np.abs(y).max(initial=0))
    dt = np.int32 if big < (1 << 31) else np.int64
    xl = np.ascontiguousarray(xl.T, dtype=dt)[:, :, None]
    yl = np.ascontiguousarray(yl.T, dtype=dt)[:, None, :]
    n = spec.limb_count_n
    acc = None
    for d in range(2 * n - 1):
        # limb pairs of equal weight share one shift
        diag = None
        for i in range(max(0, d - n + 1), min(d, n - 1) + 1):
            term = xl[i] * yl[d - i]
            if diag is None:
                diag = term
            else:
                diag += term
        if d:
            diag <<= LIMB_BITS * d
        if acc is None:
            acc = diag
        else:
            acc += diag
    acc *= xs.astype(dt)[:, None]
    acc *= ys.astype(dt)[None, :]
    return acc


def signed_range(spec: PrecisionSpec | Kind | str) -> tuple[int, int]:
    """Inclusive operand range under sign-magnitude limbs."""
    m = get_precision(spec).max_magnitude
    return -m, m


def random_operands(spec: PrecisionSpec | Kind | str, count: int, rng: np.random.Generator,
                    signed: bool = True) -> list[int]:
    """Uniform random operands over the full magnitude range (Python ints)."""
    spec = get_precision(spec)
    limbs = rng.integers(0, LIMB_BASE, size=(count, spec.limb_count_n))
    top_bits = spec.mantissa_bits - LIMB_BITS * (spec.limb_count_n - 1)
    limbs[:, -1] &= (1 << top_bits) - 1
    out = []
    signs = rng.integers(0, 2, size=count) if signed else np.zeros(count, dtype=int)
    for row, s in zip(limbs.tolist(), signs.tolist()):
        mag = 0
        for limb in reversed(row):
            mag = (mag << LIMB_BITS) | limb
        out.append(-mag if s else mag)
    return out


def as_limb_vector(limbs: Sequence[int], sign: int = 1) -> LimbVector:
    return LimbVector(tuple(int(v) for v in limbs), sign)
