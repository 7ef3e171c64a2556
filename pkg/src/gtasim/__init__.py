"""Multi-precision systolic accelerator simulator and schedule explorer."""

from .costmodel import CostEstimate, estimate, simd_gemm_cost, tile_cost, vector_baseline_cost, vector_cost
from .geometry import ArrayShape, GtaConfig, enumerate_arrangements, partition
from .mapper import CoverageCase, Dataflow, Direction, MappingPlan, classify, footprint, plan
from .ops import PGemmOp, VectorKind, VectorOp, reference_gemm
from .precision import Kind, PrecisionSpec, get_precision
from .syssim import SimResult, simulate, simulate_vector

__version__ = "0.1.0"
