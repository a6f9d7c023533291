"""Device capability profiles and the accelerator/CPU partitioner.

A profile is a model, not an emulator: a capability set per data type, local
taint rules (an op next to a fallback op also falls back), deployment-failure
rules and a handful of cost parameters. Bundled profiles live in
``portanet/profiles/*.toml``.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import InvalidCost, ParseError
from .ir import DataType, Graph, Node, OpKind, topo_sort

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class Engine(str, Enum):
    ACCEL = "ACCEL"
    CPU = "CPU"


@dataclass(frozen=True)
class TaintRule:
    trigger: OpKind
    affected: frozenset
    scope: str = "IMMEDIATE_SUCCESSORS"
    dtypes: Optional[frozenset] = None  # None: applies to every dtype

    def applies_to(self, dtype: DataType) -> bool:
        return self.dtypes is None or dtype in self.dtypes


@dataclass(frozen=True)
class FailRule:
    """Nodes matching this rule make the whole deployment fail."""

    kind: OpKind
    attrs: tuple = ()
    min_inputs: int = 0

    def matches(self, node: Node) -> bool:
        if node.kind is not self.kind or len(node.inputs) < self.min_inputs:
            return False
        return all(node.attrs.get(k) == v for k, v in self.attrs)

    def describe(self) -> str:
        extra = [f"{k}={v}" for k, v in self.attrs]
        if self.min_inputs:
            extra.append(f"inputs>={self.min_inputs}")
        return self.kind.value + (f"[{', '.join(extra)}]" if extra else "")


@dataclass(frozen=True)
class CostModel:
    accel_macs_per_ms: float
    cpu_macs_per_ms: float
    accel_bytes_per_ms: float
    cpu_bytes_per_ms: float
    transition_ms: float = 0.0
    per_op_overhead_ms: float = 0.0

    def __post_init__(self):
        if not self.accel_macs_per_ms > self.cpu_macs_per_ms > 0:
            raise InvalidCost("need accel_macs_per_ms > cpu_macs_per_ms > 0")
        if not self.accel_bytes_per_ms >= self.cpu_bytes_per_ms > 0:
            raise InvalidCost("need accel_bytes_per_ms >= cpu_bytes_per_ms > 0")
        if self.transition_ms < 0 or self.per_op_overhead_ms < 0:
            raise InvalidCost("transition_ms and per_op_overhead_ms must be >= 0")


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    supported: frozenset  # of (OpKind, DataType)
    cost: CostModel
    taint_rules: tuple = ()
    fails: tuple = ()  # of FailRule
    fail_dtypes: frozenset = frozenset()

    def supports(self, kind: OpKind, dtype: DataType) -> bool:
        return (kind, dtype) in self.supported

    def kinds_for(self, dtype: DataType) -> set:
        return {k for k, d in self.supported if d is dtype}


@dataclass(frozen=True)
class FallbackReason:
    code: str  # UNSUPPORTED_KIND | UNSUPPORTED_DTYPE | TAINTED_BY
    source: Optional[str] = None

    def __str__(self) -> str:
        return f"TAINTED_BY({self.source})" if self.code == "TAINTED_BY" else self.code


@dataclass(frozen=True)
class Segment:
    engine: Engine
    nodes: tuple


@dataclass(frozen=True)
class PartitionPlan:
    dtype: DataType
    order: tuple
    assignment: Mapping[str, Engine]
    segments: tuple
    fallback_reasons: Mapping[str, FallbackReason] = field(default_factory=dict)

    @property
    def fallback_nodes(self) -> set:
        return {n for n, e in self.assignment.items() if e is Engine.CPU}

    @property
    def transitions(self) -> int:
        return max(len(self.segments) - 1, 0)

    def to_dict(self) -> dict:
        return {
            "dtype": self.dtype.value,
            "assignment": {n: self.assignment[n].value for n in self.order},
            "segments": [{"engine": s.engine.value, "nodes": list(s.nodes)} for s in self.segments],
            "fallback_reasons": {n: str(r) for n, r in sorted(self.fallback_reasons.items())},
        }


def _segments(order, assignment) -> tuple:
    segs: list[Segment] = []
    for nid in order:
        e = assignment[nid]
        if segs and segs[-1].engine is e:
            segs[-1] = Segment(e, segs[-1].nodes + (nid,))
        else:
            segs.append(Segment(e, (nid,)))
    return tuple(segs)


def partition(graph: Graph, profile: DeviceProfile, dtype: DataType) -> PartitionPlan:
    """Assign each node to the accelerator or the CPU fallback path.

    A node falls back when its (kind, dtype) is unsupported, or when a taint
    rule fires: one of its producers fell back, that producer's kind is the
    rule trigger and this node's kind is in the affected set. Taint is
    iterated to a fixpoint so chained rules propagate.
    """
    dtype = DataType(dtype)
    order = topo_sort(graph)
    any_dtype = {k for k, _ in profile.supported}
    reasons: dict[str, FallbackReason] = {}
    for n in order:
        if not profile.supports(n.kind, dtype):
            code = "UNSUPPORTED_DTYPE" if n.kind in any_dtype else "UNSUPPORTED_KIND"
            reasons[n.id] = FallbackReason(code)
    rules = [r for r in profile.taint_rules if r.applies_to(dtype)]
    producers = graph.producers()
    changed = bool(rules)
    while changed:
        changed = False
        for n in order:
            if n.id in reasons:
                continue
            for t in n.inputs:
                p = producers.get(t)
                if p is None or p.id not in reasons:
                    continue
                if any(r.trigger is p.kind and n.kind in r.affected for r in rules):
                    reasons[n.id] = FallbackReason("TAINTED_BY", p.id)
                    changed = True
                    break
    ids = tuple(n.id for n in order)
    assignment = {nid: (Engine.CPU if nid in reasons else Engine.ACCEL) for nid in ids}
    return PartitionPlan(dtype, ids, assignment, _segments(ids, assignment), reasons)


def deployment_failures(graph: Graph, profile: DeviceProfile, dtype: DataType) -> list[str]:
    """Reasons the runtime would refuse this graph; empty when it deploys."""
    dtype = DataType(dtype)
    out = []
    if dtype in profile.fail_dtypes:
        out.append(f"dtype {dtype.value} not deployable on {profile.name}")
    for n in topo_sort(graph):
        for r in profile.fails:
            if r.matches(n):
                out.append(f"{n.id}: {r.describe()}")
                break
    return out


# -- profile files -------------------------------------------------------------

def _kind(name, where) -> OpKind:
    try:
        return OpKind(name)
    except ValueError:
        raise ParseError(f"unknown OpKind {name!r}", field=where) from None


def _dtype(name, where) -> DataType:
    try:
        return DataType(name)
    except ValueError:
        raise ParseError(f"unknown dtype {name!r}", field=where) from None


def profile_from_dict(doc: Mapping, default_name: str = "profile") -> DeviceProfile:
    supported = set()
    for dname, kinds in dict(doc.get("supported", {})).items():
        dt = _dtype(dname, f"supported.{dname}")
        if kinds == "*" or kinds == ["*"]:
            kinds = [k.value for k in OpKind]
        if not isinstance(kinds, list):
            raise ParseError("expected a list of op kinds or '*'", field=f"supported.{dname}")
        for k in kinds:
            supported.add((_kind(k, f"supported.{dname}"), dt))
    rules = []
    for i, t in enumerate(doc.get("taint", [])):
        where = f"taint[{i}]"
        scope = t.get("scope", "IMMEDIATE_SUCCESSORS")
        if scope != "IMMEDIATE_SUCCESSORS":
            raise ParseError(f"unsupported taint scope {scope!r}", field=f"{where}.scope")
        if "trigger" not in t:
            raise ParseError("missing trigger", field=f"{where}.trigger")
        dts = t.get("dtypes")
        rules.append(TaintRule(
            trigger=_kind(t["trigger"], f"{where}.trigger"),
            affected=frozenset(_kind(k, f"{where}.affected") for k in t.get("affected", [])),
            scope=scope,
            dtypes=None if dts is None else frozenset(_dtype(d, f"{where}.dtypes") for d in dts),
        ))
    fails = [FailRule(_kind(k, "fails")) for k in doc.get("fails", [])]
    for i, f in enumerate(doc.get("fail", [])):
        where = f"fail[{i}]"
        if "kind" not in f:
            raise ParseError("missing kind", field=f"{where}.kind")
        fails.append(FailRule(_kind(f["kind"], f"{where}.kind"),
                              tuple(sorted(dict(f.get("attrs", {})).items())),
                              int(f.get("min_inputs", 0))))
    cost = doc.get("cost")
    if not isinstance(cost, Mapping):
        raise ParseError("missing [cost] table", field="cost")
    try:
        cm = CostModel(**{k: float(v) for k, v in cost.items()})
    except TypeError as e:
        raise ParseError(f"bad [cost] table: {e}", field="cost") from None
    return DeviceProfile(
        name=str(doc.get("name", default_name)),
        supported=frozenset(supported),
        cost=cm,
        taint_rules=tuple(rules),
        fails=tuple(fails),
        fail_dtypes=frozenset(_dtype(d, "fail_dtypes") for d in doc.get("fail_dtypes", [])),
    )


def loads_profile(text: str, default_name: str = "profile") -> DeviceProfile:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ParseError(str(e)) from None
    return profile_from_dict(doc, default_name)


def load_profile(path) -> DeviceProfile:
    path = Path(path)
    return loads_profile(path.read_text(encoding="utf-8"), path.stem)


BUNDLED = ("mate30-like", "reno3-like", "pixel4-like")


def bundled_profile_text(name: str) -> str:
    return resources.files("portanet").joinpath("profiles").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def bundled_profile(name: str) -> DeviceProfile:
    if name not in BUNDLED:
        raise KeyError(f"no bundled profile {name!r}; choose from {', '.join(BUNDLED)}")
    return loads_profile(bundled_profile_text(name), name)


def bundled_profiles() -> list[DeviceProfile]:
    return [bundled_profile(n) for n in BUNDLED]


def load_profiles(source) -> list[DeviceProfile]:
    """Profiles from a directory of .toml files, a single file, or a bundled name."""
    p = Path(source)
    if p.is_dir():
        files = sorted(p.glob("*.toml"))
        if not files:
            raise ParseError(f"no .toml profiles in {p}")
        return [load_profile(f) for f in files]
    if p.is_file():
        return [load_profile(p)]
    return [bundled_profile(str(source))]


def fully_supported(profile: DeviceProfile, dtypes: Iterable[DataType] = tuple(DataType)) -> DeviceProfile:
    """Same costs, every (kind, dtype) supported, no taint or failure rules."""
    return DeviceProfile(
        name=profile.name + "+all",
        supported=frozenset((k, d) for k in OpKind for d in dtypes),
        cost=profile.cost,
    )
