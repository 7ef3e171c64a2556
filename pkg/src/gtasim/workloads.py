"""Workload catalog: named applications lowered to p-GEMM and vector ops.

Workload files are JSON::

    {"workloads": [
      {"name": "ALI", "description": "...", "precision": "INT8",
       "provenance": "...",
       "ops": [
         {"type": "gemm", "name": "conv2", "M": 729, "N": 192, "K": 1600,
          "conv": {"H": 27, "W": 27, "Cin": 64, "Cout": 192, "kh": 5, "kw": 5,
                   "stride": 1, "pad": 2}},
         {"type": "vector", "name": "relu2", "kind": "map", "elements": 139968}
       ]}]}

An op may override the workload ``precision``.  When ``conv`` is present
the GEMM dims must equal its lowering.  Dimensions of the shipped catalog
are stand-ins taken from public layer definitions; each op's ``note`` says
where they come from.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

from .ops import PGemmOp, VectorOp
from .precision import PrecisionError, get_precision


class WorkloadError(ValueError):
    pass


class InvalidConvShape(WorkloadError):
    pass


@dataclass(frozen=True)
class ConvShape:
    H: int
    W: int
    Cin: int
    Cout: int
    kh: int
    kw: int
    stride: int = 1
    pad: int = 0

    @property
    def out_hw(self) -> tuple[int, int]:
        ho = (self.H + 2 * self.pad - self.kh) // self.stride + 1
        wo = (self.W + 2 * self.pad - self.kw) // self.stride + 1
        return ho, wo

    @property
    def macs(self) -> int:
        ho, wo = self.out_hw
        return ho * wo * self.Cout * self.kh * self.kw * self.Cin


def lower_conv(conv: ConvShape | dict, precision, name: str = "") -> PGemmOp:
    """im2col view: M = output pixels, K = kh*kw*Cin, N = Cout."""
    if isinstance(conv, dict):
        try:
            conv = ConvShape(**conv)
        except TypeError as exc:
            raise InvalidConvShape(str(exc)) from None
    dims = (conv.H, conv.W, conv.Cin, conv.Cout, conv.kh, conv.kw)
    if any(not isinstance(v, int) or v < 1 for v in dims):
        raise InvalidConvShape(f"conv dims must be positive integers: {conv}")
    if conv.stride < 1 or conv.pad < 0:
        raise InvalidConvShape(f"need stride >= 1 and pad >= 0: {conv}")
    ho, wo = conv.out_hw
    if ho < 1 or wo < 1:
        raise InvalidConvShape(f"kernel larger than padded input: {conv}")
    return PGemmOp(ho * wo, conv.Cout, conv.kh * conv.kw * conv.Cin, get_precision(precision), name=name)


Op = Union[PGemmOp, VectorOp]


@dataclass
class Workload:
    name: str
    description: str
    precision: str
    ops: list[Op]
    provenance: str = ""
    notes: dict[str, str] = field(default_factory=dict)
    convs: dict[str, ConvShape] = field(default_factory=dict)

    @property
    def gemms(self) -> list[PGemmOp]:
        return [op for op in self.ops if isinstance(op, PGemmOp)]

    @property
    def vectors(self) -> list[VectorOp]:
        return [op for op in self.ops if isinstance(op, VectorOp)]

    def op(self, name: str) -> Op:
        for op in self.ops:
            if op.name == name:
                return op
        raise WorkloadError(f"{self.name} has no op named {name!r}")


def _int(entry: dict, key: str, where: str) -> int:
    v = entry.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise WorkloadError(f"{where}: {key!r} must be an integer")
    return v


def _parse_op(entry: dict, default_prec: str, where: str) -> tuple[Op, ConvShape | None]:
    if not isinstance(entry, dict):
        raise WorkloadError(f"{where}: op must be an object")
    try:
        prec = get_precision(entry.get("precision", default_prec))
    except PrecisionError as exc:
        raise WorkloadError(f"{where}: {exc}") from None
    name = entry.get("name", "")
    kind = entry.get("type")
    if kind == "gemm":
        op = PGemmOp(_int(entry, "M", where), _int(entry, "N", where), _int(entry, "K", where), prec, name=name)
        conv = None
        if "conv" in entry:
            conv = ConvShape(**entry["conv"])
            lowered = lower_conv(conv, prec)
            if (lowered.M, lowered.N, lowered.K) != (op.M, op.N, op.K):
                raise WorkloadError(f"{where}: dims {(op.M, op.N, op.K)} disagree with conv lowering "
                                    f"{(lowered.M, lowered.N, lowered.K)}")
        return op, conv
    if kind == "vector":
        return VectorOp(entry.get("kind", "map"), _int(entry, "elements", where), prec, name), None
    raise WorkloadError(f"{where}: op type must be 'gemm' or 'vector', got {kind!r}")


def parse_workloads(data: dict, source: str = "<workloads>") -> list[Workload]:
    if not isinstance(data, dict) or not isinstance(data.get("workloads"), list):
        raise WorkloadError(f"{source}: top level needs a 'workloads' list")
    out = []
    for i, w in enumerate(data["workloads"]):
        where = f"{source}: workloads[{i}]"
        if not isinstance(w, dict) or "name" not in w or "precision" not in w:
            raise WorkloadError(f"{where}: needs 'name' and 'precision'")
        ops, notes, convs = [], {}, {}
        for j, entry in enumerate(w.get("ops", [])):
            op, conv = _parse_op(entry, w["precision"], f"{where}.ops[{j}]")
            ops.append(op)
            if entry.get("note"):
                notes[op.name] = entry["note"]
            if conv is not None:
                convs[op.name] = conv
        out.append(Workload(w["name"], w.get("description", ""), get_precision(w["precision"]).kind.value,
                            ops, w.get("provenance", ""), notes, convs))
    return out


def dump_workloads(workloads: list[Workload]) -> dict:
    body = []
    for w in workloads:
        ops = []
        for op in w.ops:
            if isinstance(op, PGemmOp):
                entry = {"type": "gemm", "name": op.name, "M": op.M, "N": op.N, "K": op.K}
                if op.name in w.convs:
                    entry["conv"] = dict(vars(w.convs[op.name]))
            else:
                entry = {"type": "vector", "name": op.name, "kind": op.kind.value, "elements": op.element_count}
            if op.precision.kind.value != w.precision:
                entry["precision"] = op.precision.kind.value
            if op.name in w.notes:
                entry["note"] = w.notes[op.name]
            ops.append(entry)
        body.append({"name": w.name, "description": w.description, "precision": w.precision,
                     "provenance": w.provenance, "ops": ops})
    return {"workloads": body}


def load_workloads(path: str | os.PathLike) -> list[Workload]:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorkloadError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return parse_workloads(data, str(path))


def catalog() -> list[Workload]:
    """The nine shipped application workloads."""
    text = resources.files("gtasim.data").joinpath("catalog.json").read_text()
    return parse_workloads(json.loads(text), "catalog")


def find(name: str, workloads: list[Workload] | None = None) -> Workload:
    for w in workloads if workloads is not None else catalog():
        if w.name.lower() == name.lower():
            return w
    raise WorkloadError(f"unknown workload {name!r}")
