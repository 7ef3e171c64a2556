"""Command-line front end: ``gtasim {simulate,cost,schedule,workloads,verify}``.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure (simulated output differs from the reference, or a suite failed).
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .costmodel import (CALIBRATION_ENV, CostError, estimate, load_calibration, simd_gemm_cost,
                        vector_baseline_cost, vector_cost)
from .geometry import ArrayShape, GeometryError, GtaConfig, enumerate_arrangements, squarest
from .mapper import Dataflow, Direction, MappingError, plan as make_plan
from .ops import OpError, PGemmOp, VectorOp, reference_gemm
from .precision import PrecisionError, get_precision
from .scheduler import ScheduleError, ScheduleOptions, schedule
from .syssim import SimError, simulate, simulate_vector
from .verify import SUITES, run_all
from .workloads import WorkloadError, catalog, dump_workloads, find, load_workloads

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    lanes: int = 16
    mpra_rows: int = 8
    mpra_cols: int = 8
    mask_width_bits: int = 4
    calibration: str | None = None
    cost_source: str = "model"
    max_k_segments: int = 8
    directions: list[str] = field(default_factory=lambda: ["lateral", "vertical"])
    edge_fill: list[bool] = field(default_factory=lambda: [False, True])
    dataflows: list[str] = field(default_factory=lambda: ["WS", "IS", "OS"])
    overlap_preload: bool = False
    workers: int = 1
    csv: str | None = None
    report: str | None = None

    def validate(self) -> "RunConfig":
        try:
            self.gta()
        except GeometryError as exc:
            raise ConfigError(str(exc)) from None
        if self.cost_source not in ("model", "exact"):
            raise ConfigError(f"cost_source must be 'model' or 'exact', got {self.cost_source!r}")
        if self.max_k_segments < 1:
            raise ConfigError("max_k_segments must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            [Direction(d) for d in self.directions]
            [Dataflow(d.upper()) for d in self.dataflows]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.calibration is not None and not Path(self.calibration).is_file():
            raise ConfigError(f"calibration file {self.calibration} not found")
        return self

    def gta(self) -> GtaConfig:
        return GtaConfig(self.lanes, self.mpra_rows, self.mpra_cols, self.mask_width_bits)

    def table(self):
        return load_calibration(self.calibration) if self.calibration else None


_CONFIG_TYPES = {f.name: f for f in fields(RunConfig)}


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def load_config(path: str) -> RunConfig:
    """Read a JSON run configuration; errors carry ``file:line`` context."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    cfg = RunConfig()
    expected = {"lanes": int, "mpra_rows": int, "mpra_cols": int, "mask_width_bits": int,
                "calibration": (str, type(None)), "cost_source": str, "max_k_segments": int,
                "directions": list, "edge_fill": list, "dataflows": list, "overlap_preload": bool,
                "workers": int, "csv": (str, type(None)), "report": (str, type(None))}
    for key, value in data.items():
        line = _line_of(text, key)
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{line}: unknown key {key!r}")
        kind = expected[key]
        if isinstance(value, bool) and kind is int or not isinstance(value, kind):
            raise ConfigError(f"{path}:{line}: {key!r} has the wrong type ({type(value).__name__})")
        setattr(cfg, key, value)
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_op(text: str) -> dict:
    """``M=4,N=4,K=4,prec=int8`` -> dict."""
    out = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            raise ConfigError(f"bad op field {part!r}, expected key=value")
        k, v = (s.strip() for s in part.split("=", 1))
        key = {"m": "M", "n": "N", "k": "K", "prec": "precision", "precision": "precision"}.get(k.lower())
        if key is None:
            raise ConfigError(f"unknown op field {k!r} (use M, N, K, prec)")
        if key == "precision":
            out[key] = v
        else:
            try:
                out[key] = int(v)
            except ValueError:
                raise ConfigError(f"{k} must be an integer, got {v!r}") from None
    missing = {"M", "N", "K"} - set(out)
    if missing:
        raise ConfigError(f"op is missing {', '.join(sorted(missing))}")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--lanes", type=int, help="lane count L")
    g.add_argument("--mpra-rows", type=int)
    g.add_argument("--mpra-cols", type=int)
    g.add_argument("--mask-bits", type=int, dest="mask_width_bits")
    g.add_argument("--calibration", help=f"throughput calibration JSON (default: ${CALIBRATION_ENV} or shipped)")


def _op_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("operator")
    g.add_argument("--op", help="inline p-GEMM, e.g. M=4,N=4,K=4,prec=int8")
    g.add_argument("--workload", help="catalog workload name")
    g.add_argument("--op-name", help="op within the workload (default: first p-GEMM)")
    g.add_argument("--workload-file", help="load workloads from this JSON file instead of the catalog")
    g.add_argument("--prec", help="override the op precision")


def _plan_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("mapping")
    g.add_argument("--dataflow", default="ws", help="ws, is or os")
    g.add_argument("--array", help="array shape RxC in PEs (default: squarest arrangement)")
    g.add_argument("--k-segments", type=int, default=1)
    g.add_argument("--direction", default="lateral", choices=[d.value for d in Direction])
    g.add_argument("--edge-fill", action="store_true")
    g.add_argument("--overlap-preload", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gtasim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="cycle-accurate run with exactness check")
    _common(p)
    _op_args(p)
    _plan_args(p)
    p.add_argument("--seed", type=int, default=0, help="operand RNG seed")
    p.add_argument("--trace", help="write the per-event trace here")
    p.add_argument("--report", help="write the JSON result here (default: stdout)")
    p.add_argument("--show-output", action="store_true", help="include the output matrix in the report")

    p = sub.add_parser("cost", help="closed-form cost estimate")
    _common(p)
    _op_args(p)
    _plan_args(p)
    p.add_argument("--report", help="write the JSON result here (default: stdout)")

    p = sub.add_parser("schedule", help="explore and score the schedule space")
    _common(p)
    _op_args(p)
    p.add_argument("--precisions", help="comma-separated precision set to compare, e.g. int8,fp16,fp32")
    p.add_argument("--dataflows", help="comma-separated subset of ws,is,os")
    p.add_argument("--max-k-segments", type=int)
    p.add_argument("--no-simd", action="store_true", help="leave out the SIMD candidate")
    p.add_argument("--exact", action="store_true", help="cost candidates by simulation")
    p.add_argument("--overlap-preload", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--csv", help="scatter CSV output path")
    p.add_argument("--report", help="JSON report output path")

    p = sub.add_parser("workloads", help="list or export workloads")
    p.add_argument("--workload-file", help="list this file instead of the shipped catalog")
    p.add_argument("--json", action="store_true", help="dump in the workload file format")

    p = sub.add_parser("verify", help="run the oracle suites")
    _common(p)
    p.add_argument("--quick", action="store_true", help="reduced grids, same invariants")
    p.add_argument("--only", help="comma-separated suites: " + ",".join(SUITES))
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k, None) for k in ("lanes", "mpra_rows", "mpra_cols", "mask_width_bits",
                                                     "calibration", "csv", "report", "workers",
                                                     "max_k_segments")}
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "exact", False):
        cfg.cost_source = "exact"
    if getattr(args, "overlap_preload", False):
        cfg.overlap_preload = True
    if getattr(args, "dataflows", None):
        cfg.dataflows = [d.strip().upper() for d in args.dataflows.split(",")]
    return cfg.validate()


def _resolve_op(args) -> PGemmOp | VectorOp:
    if bool(args.op) == bool(args.workload):
        raise ConfigError("give exactly one of --op or --workload")
    if args.op:
        spec = parse_op(args.op)
        prec = args.prec or spec.get("precision", "INT8")
        return PGemmOp(spec["M"], spec["N"], spec["K"], get_precision(prec), name="inline")
    pool = load_workloads(args.workload_file) if args.workload_file else None
    w = find(args.workload, pool)
    if args.op_name:
        op = w.op(args.op_name)
    elif w.gemms:
        op = w.gemms[0]
    else:
        op = w.ops[0]
    if args.prec:
        op = op.with_precision(args.prec) if isinstance(op, PGemmOp) else replace(op, precision=get_precision(args.prec))
    return op


def _array(args, cfg: RunConfig) -> ArrayShape:
    gta = cfg.gta()
    if args.array:
        shape = ArrayShape.parse(args.array, cfg.mpra_rows, cfg.mpra_cols)
        if shape not in enumerate_arrangements(gta):
            raise ConfigError(f"{shape} is not an arrangement of {cfg.lanes} lanes")
        return shape
    return squarest(gta, cfg.lanes)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _op_json(op) -> dict:
    if isinstance(op, PGemmOp):
        return {"type": "gemm", "name": op.name, "M": op.M, "N": op.N, "K": op.K,
                "precision": op.precision.kind.value, "limbs": op.precision.limb_count_n}
    return {"type": "vector", "name": op.name, "kind": op.kind.value, "elements": op.element_count,
            "precision": op.precision.kind.value}


def _counters(res, bits: int) -> dict:
    reads = dict(res.mem_reads) if hasattr(res, "mem_reads") else {}
    total_reads = sum(reads.values())
    return {"cycles": res.cycles, "mem_reads": reads, "mem_writes": res.mem_writes,
            "mem": total_reads + res.mem_writes,
            "bytes": (total_reads + res.mem_writes) * bits // 8}


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    op = _resolve_op(args)
    if isinstance(op, VectorOp):
        res = simulate_vector(op, cfg.gta(), cfg.table())
        body = {"op": _op_json(op), "mode": "SIMD", **_counters(res, op.precision.total_bits),
                "pe_busy_cycles": res.pe_busy_cycles, "utilization": str(res.utilization)}
        _emit(json.dumps(body, indent=2) + "\n", args.report)
        return EXIT_OK
    shape = _array(args, cfg)
    df = Dataflow(args.dataflow.upper())
    rng = np.random.default_rng(args.seed)
    data_op = PGemmOp.random(op.M, op.N, op.K, op.precision, rng, op.name)
    p = make_plan(data_op, shape, df, args.k_segments, args.direction, args.edge_fill)
    trace = open(args.trace, "w") if args.trace else None
    try:
        res = simulate(data_op, shape, df, p, overlap_preload=cfg.overlap_preload, trace=trace)
    finally:
        if trace:
            trace.close()
    ref = reference_gemm(data_op.A, data_op.B)
    exact = bool(np.array_equal(res.output, ref))
    body = {
        "op": _op_json(op), "array": str(shape), "dataflow": df.value, "case": p.case.value,
        "k_segments": p.k_segments, "direction": p.tiling_direction.value, "edge_fill": p.edge_fill,
        "steps": res.steps, **_counters(res, op.precision.total_bits),
        "pe_busy_cycles": res.pe_busy_cycles, "utilization": str(res.utilization),
        "utilization_float": round(float(res.utilization), 6), "seed": args.seed, "exact": exact,
    }
    if args.show_output:
        body["output"] = res.output.tolist()
    _emit(json.dumps(body, indent=2) + "\n", args.report)
    if not exact:
        print("verification failed: simulated output differs from the reference GEMM", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_cost(args) -> int:
    cfg = _run_config(args)
    op = _resolve_op(args)
    table = cfg.table()
    if isinstance(op, VectorOp):
        est = vector_cost(op, cfg.gta(), table)
        body = {"op": _op_json(op), "mode": "SIMD", **_counters(est, op.precision.total_bits)}
    else:
        shape = _array(args, cfg)
        df = Dataflow(args.dataflow.upper())
        p = make_plan(op, shape, df, args.k_segments, args.direction, args.edge_fill)
        est = estimate(op, shape, df, p, cfg.overlap_preload)
        bits = op.precision.total_bits
        body = {"op": _op_json(op), "array": str(shape), "dataflow": df.value, "case": p.case.value,
                "k_segments": p.k_segments, "direction": p.tiling_direction.value, "edge_fill": p.edge_fill,
                **_counters(est, bits), "pe_busy_cycles": est.pe_busy_cycles,
                "simd": _counters(simd_gemm_cost(op, cfg.gta(), table), bits),
                "vector_baseline": _counters(vector_baseline_cost(op, cfg.gta(), table), bits)}
    _emit(json.dumps(body, indent=2) + "\n", args.report)
    return EXIT_OK


def cmd_schedule(args) -> int:
    cfg = _run_config(args)
    op = _resolve_op(args)
    if not isinstance(op, PGemmOp):
        raise ConfigError("schedule needs a p-GEMM op")
    precisions = None
    if args.precisions:
        precisions = tuple(get_precision(p.strip()) for p in args.precisions.split(","))
    opts = ScheduleOptions(max_k_segments=cfg.max_k_segments, dataflows=tuple(cfg.dataflows),
                           directions=tuple(cfg.directions), edge_fill=tuple(cfg.edge_fill),
                           precisions=precisions, include_simd=not args.no_simd,
                           exact=cfg.cost_source == "exact", overlap_preload=cfg.overlap_preload,
                           workers=cfg.workers)
    report = schedule(op, cfg.gta(), opts, cfg.table())
    if cfg.csv:
        Path(cfg.csv).write_text(report.to_csv())
    if cfg.report:
        Path(cfg.report).write_text(report.to_json())
    best = report.best
    i = report.chosen
    print(f"{len(report.candidates)} candidates; chosen #{i}: {best.label()}")
    print(f"  cycles {best.cycles} (x{float(report.cycles_ratio[i]):.4f})  "
          f"mem {best.mem} (x{float(report.mem_ratio[i]):.4f})  score {float(report.scores[i]):.6f}")
    if not cfg.csv and not cfg.report:
        sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_workloads(args) -> int:
    pool = load_workloads(args.workload_file) if args.workload_file else catalog()
    if args.json:
        sys.stdout.write(json.dumps(dump_workloads(pool), indent=1) + "\n")
        return EXIT_OK
    for w in pool:
        print(f"{w.name:<6} {w.precision:<6} {w.description}")
        for op in w.ops:
            if isinstance(op, PGemmOp):
                print(f"    gemm   {op.name:<16} M={op.M} N={op.N} K={op.K}")
            else:
                print(f"    vector {op.name:<16} {op.kind.value} x{op.element_count}")
    return EXIT_OK


def cmd_verify(args) -> int:
    _run_config(args)
    only = [s.strip() for s in args.only.split(",")] if args.only else None
    if only and set(only) - set(SUITES):
        raise ConfigError(f"unknown suite(s): {', '.join(sorted(set(only) - set(SUITES)))}")
    results = run_all(quick=args.quick, fault=args.inject_fault, only=only)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all suites passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"simulate": cmd_simulate, "cost": cmd_cost, "schedule": cmd_schedule,
            "workloads": cmd_workloads, "verify": cmd_verify}

_USER_ERRORS = (ConfigError, GeometryError, MappingError, CostError, OpError, PrecisionError, ScheduleError,
                SimError, WorkloadError)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except _USER_ERRORS as exc:
        print(f"gtasim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"gtasim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
