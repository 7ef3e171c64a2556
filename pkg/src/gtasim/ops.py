"""Operator descriptions shared by the simulator, cost model and workloads."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .precision import PrecisionSpec, get_precision, random_operands


class OpError(ValueError):
    pass


def _as_object_matrix(values, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.empty((rows, cols), dtype=object)
    src = np.asarray(values, dtype=object)
    if src.shape != (rows, cols):
        raise OpError(f"{name} has shape {src.shape}, expected {(rows, cols)}")
    for idx, v in np.ndenumerate(src):
        arr[idx] = int(v)
    return arr


@dataclass(frozen=True, eq=False)
class PGemmOp:
    """A lowered matrix-multiply-shaped operator: C[M,N] = A[M,K] @ B[K,N].

    ``A`` and ``B`` are optional; shape-only ops can be costed but not
    simulated.  Elements are Python ints (integer mantissas for float kinds).
    """

    M: int
    N: int
    K: int
    precision: PrecisionSpec
    A: np.ndarray | None = field(default=None, repr=False)
    B: np.ndarray | None = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "precision", get_precision(self.precision))
        if min(self.M, self.N, self.K) < 1:
            raise OpError(f"M, N, K must be >= 1, got {(self.M, self.N, self.K)}")
        if (self.A is None) != (self.B is None):
            raise OpError("give both operand matrices or neither")
        if self.A is not None:
            a = _as_object_matrix(self.A, self.M, self.K, "A")
            b = _as_object_matrix(self.B, self.K, self.N, "B")
            limit = self.precision.max_magnitude
            for mat, label in ((a, "A"), (b, "B")):
                if mat.size and max(abs(v) for v in mat.flat) > limit:
                    raise OpError(f"{label} has elements outside {self.precision.kind.value} range")
            object.__setattr__(self, "A", a)
            object.__setattr__(self, "B", b)

    @property
    def has_data(self) -> bool:
        return self.A is not None

    @property
    def macs(self) -> int:
        return self.M * self.N * self.K

    def with_precision(self, precision) -> "PGemmOp":
        """Same shape at another precision (operands are dropped)."""
        return PGemmOp(self.M, self.N, self.K, get_precision(precision), name=self.name)

    def shape_key(self) -> tuple:
        return (self.M, self.N, self.K, self.precision.kind.value)

    @classmethod
    def random(cls, M: int, N: int, K: int, precision, rng: np.random.Generator, name: str = "") -> "PGemmOp":
        spec = get_precision(precision)
        a = np.array(random_operands(spec, M * K, rng), dtype=object).reshape(M, K)
        b = np.array(random_operands(spec, K * N, rng), dtype=object).reshape(K, N)
        return cls(M, N, K, spec, a, b, name)


class VectorKind(str, Enum):
    MAP = "map"
    REDUCE = "reduce"
    MAC = "mac"

    @property
    def sources(self) -> tuple[str, ...]:
        """Operand streams read once per element."""
        return ("A",) if self is VectorKind.REDUCE else ("A", "B")


@dataclass(frozen=True)
class VectorOp:
    kind: VectorKind
    element_count: int
    precision: PrecisionSpec
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", VectorKind(self.kind))
        object.__setattr__(self, "precision", get_precision(self.precision))
        if self.element_count < 0:
            raise OpError("element_count must be >= 0")


def reference_gemm(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Exact integer matrix product with Python ints, no numpy arithmetic."""
    M, K = A.shape
    K2, N = B.shape
    if K != K2:
        raise OpError("inner dimensions differ")
    rows_a = [[int(v) for v in A[i]] for i in range(M)]
    cols_b = [[int(B[k, j]) for k in range(K)] for j in range(N)]
    out = np.empty((M, N), dtype=object)
    for i in range(M):
        for j in range(N):
            out[i, j] = sum(x * y for x, y in zip(rows_a[i], cols_b[j]))
    return out
