"""Graph data model: tensors, operator nodes, validation and shape inference.

Layout is NHWC throughout. Graphs are treated as immutable values; every pass
returns a new :class:`Graph` built with :func:`dataclasses.replace`.
"""
from __future__ import annotations

import dataclasses
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import InvalidGraph, ShapeMismatch, UnresolvedShape


class DataType(str, Enum):
    F32 = "F32"
    F16 = "F16"
    Q8 = "Q8"  # asymmetric unsigned 8-bit
    Q16 = "Q16"  # symmetric signed 16-bit


BYTES_PER_ELEMENT = {DataType.F32: 4, DataType.F16: 2, DataType.Q8: 1, DataType.Q16: 2}


class OpKind(str, Enum):
    CONV_2D = "CONV_2D"
    TRANSPOSE_CONV_2D = "TRANSPOSE_CONV_2D"
    DEPTH_TO_SPACE = "DEPTH_TO_SPACE"
    SPACE_TO_DEPTH = "SPACE_TO_DEPTH"
    RESIZE_BILINEAR = "RESIZE_BILINEAR"
    RESIZE_NEAREST = "RESIZE_NEAREST"
    CONCATENATION = "CONCATENATION"
    ADD = "ADD"
    MUL = "MUL"
    RELU = "RELU"
    PRELU = "PRELU"
    MAX_POOL_2D = "MAX_POOL_2D"
    AVG_POOL_2D = "AVG_POOL_2D"
    FULLY_CONNECTED = "FULLY_CONNECTED"


PADDINGS = ("SAME", "VALID")

_WINDOW = {"kernel_h", "kernel_w", "stride"}

ATTR_SCHEMA: dict[OpKind, frozenset[str]] = {
    OpKind.CONV_2D: frozenset(_WINDOW | {"padding", "out_channels"}),
    OpKind.TRANSPOSE_CONV_2D: frozenset(_WINDOW | {"out_channels"}),
    OpKind.DEPTH_TO_SPACE: frozenset({"block_size"}),
    OpKind.SPACE_TO_DEPTH: frozenset({"block_size"}),
    OpKind.RESIZE_BILINEAR: frozenset({"scale"}),
    OpKind.RESIZE_NEAREST: frozenset({"scale"}),
    OpKind.CONCATENATION: frozenset({"axis"}),
    OpKind.ADD: frozenset(),
    OpKind.MUL: frozenset(),
    OpKind.RELU: frozenset(),
    OpKind.PRELU: frozenset(),
    OpKind.MAX_POOL_2D: frozenset(_WINDOW | {"padding"}),
    OpKind.AVG_POOL_2D: frozenset(_WINDOW | {"padding"}),
    OpKind.FULLY_CONNECTED: frozenset({"out_channels"}),
}

# (min inputs, max inputs); None means unbounded
ARITY: dict[OpKind, tuple[int, Optional[int]]] = {
    OpKind.CONCATENATION: (2, None),
    OpKind.ADD: (2, 2),
    OpKind.MUL: (2, 2),
}

# Ordered weight slots per kind. Kinds absent here must not reference weights.
WEIGHT_SLOTS: dict[OpKind, tuple[str, ...]] = {
    OpKind.CONV_2D: ("filter", "bias"),
    OpKind.TRANSPOSE_CONV_2D: ("filter", "bias"),
    OpKind.FULLY_CONNECTED: ("filter", "bias"),
    OpKind.PRELU: ("slope",),
}

WEIGHTED_LINEAR = (OpKind.CONV_2D, OpKind.TRANSPOSE_CONV_2D, OpKind.FULLY_CONNECTED)


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple[int, int, int, int]
    dtype: DataType = DataType.F32

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def nbytes(self) -> int:
        return self.size * BYTES_PER_ELEMENT[self.dtype]


@dataclass(frozen=True)
class QuantScheme:
    """Per-tensor affine quantization: real = scale * (q - zero_point)."""

    bits: int
    scale: float
    zero_point: int
    mode: str = "PTQ"

    @property
    def qmin(self) -> int:
        return 0 if self.bits == 8 else -(1 << (self.bits - 1))

    @property
    def qmax(self) -> int:
        return 255 if self.bits == 8 else (1 << (self.bits - 1)) - 1


@dataclass(frozen=True)
class Node:
    id: str
    kind: OpKind
    inputs: tuple[str, ...]
    output: str
    attrs: Mapping[str, object] = field(default_factory=dict)
    weights: tuple[str, ...] = ()

    def weight(self, slot: str) -> str:
        return self.weights[WEIGHT_SLOTS[self.kind].index(slot)]


@dataclass(frozen=True, eq=False)
class Graph:
    nodes: tuple[Node, ...]
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    weights: Mapping[str, np.ndarray] = field(default_factory=dict)
    specs: Mapping[str, TensorSpec] = field(default_factory=dict)
    seed: int = 0
    weight_seeds: Mapping[str, int] = field(default_factory=dict)
    quant: Mapping[str, QuantScheme] = field(default_factory=dict)
    qweights: Mapping[str, np.ndarray] = field(default_factory=dict)

    def replace(self, **changes) -> "Graph":
        return dataclasses.replace(self, **changes)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def producers(self) -> dict[str, Node]:
        return {n.output: n for n in self.nodes}

    def consumers(self) -> dict[str, list[Node]]:
        out: dict[str, list[Node]] = {}
        for n in self.topo_order():
            for t in n.inputs:
                out.setdefault(t, []).append(n)
        return out

    def topo_order(self) -> list[Node]:
        return topo_sort(self)

    def spec(self, tensor: str) -> TensorSpec:
        try:
            return self.specs[tensor]
        except KeyError:
            raise UnresolvedShape(f"tensor {tensor!r} has no resolved shape") from None

    @property
    def is_resolved(self) -> bool:
        return all(t in self.specs for t in self.inputs) and all(
            n.output in self.specs for n in self.nodes
        )

    @property
    def input_specs(self) -> list[TensorSpec]:
        return [self.spec(t) for t in self.inputs]

    @property
    def output_specs(self) -> list[TensorSpec]:
        return [self.spec(t) for t in self.outputs]

    def tensor_names(self) -> list[str]:
        return list(self.inputs) + [n.output for n in self.topo_order()]


@dataclass(frozen=True)
class Violation:
    rule: str
    node: Optional[str]
    detail: str = ""

    def __str__(self) -> str:
        where = self.node if self.node is not None else "<graph>"
        return f"{self.rule}({where}, {self.detail!r})" if self.detail else f"{self.rule}({where})"


def topo_sort(graph: Graph) -> list[Node]:
    """Kahn's algorithm with ties broken by node id.

    Raises InvalidGraph on cycles.
    """
    producers = {n.output: n for n in graph.nodes}
    indeg = {n.id: 0 for n in graph.nodes}
    succ: dict[str, list[Node]] = {n.id: [] for n in graph.nodes}
    for n in graph.nodes:
        for t in n.inputs:
            p = producers.get(t)
            if p is not None:
                indeg[n.id] += 1
                succ[p.id].append(n)
    by_id = {n.id: n for n in graph.nodes}
    ready = [nid for nid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order: list[Node] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(by_id[nid])
        for s in succ[nid]:
            indeg[s.id] -= 1
            if indeg[s.id] == 0:
                heapq.heappush(ready, s.id)
    if len(order) != len(by_id):
        stuck = sorted(nid for nid, d in indeg.items() if d > 0)
        raise InvalidGraph([Violation("Cycle", stuck[0], ",".join(stuck))])
    return order


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _check_attrs(node: Node) -> list[Violation]:
    out = []
    schema = ATTR_SCHEMA[node.kind]
    for a in sorted(schema - set(node.attrs)):
        out.append(Violation("MissingAttr", node.id, a))
    for a in sorted(set(node.attrs) - schema):
        out.append(Violation("UnknownAttr", node.id, a))
    for a in sorted(schema & set(node.attrs)):
        v = node.attrs[a]
        if a == "padding":
            if v not in PADDINGS:
                out.append(Violation("InvalidAttr", node.id, f"padding={v!r}"))
        elif a == "axis":
            if not _is_int(v) or v not in (3, -1):
                out.append(Violation("InvalidAttr", node.id, f"axis={v!r} (channel axis only)"))
        elif not _is_int(v) or v < 1:
            out.append(Violation("InvalidAttr", node.id, f"{a}={v!r}"))
    return out


def validate(graph: Graph) -> list[Violation]:
    """Check every structural invariant; an empty list means the graph is well formed."""
    out: list[Violation] = []
    seen_ids: set[str] = set()
    produced: dict[str, str] = {}
    for t in graph.inputs:
        produced[t] = "<input>"
    for n in graph.nodes:
        if n.id in seen_ids:
            out.append(Violation("DuplicateNodeId", n.id))
        seen_ids.add(n.id)
        if not isinstance(n.kind, OpKind):
            out.append(Violation("UnknownKind", n.id, str(n.kind)))
            continue
        out.extend(_check_attrs(n))
        lo, hi = ARITY.get(n.kind, (1, 1))
        if len(n.inputs) < lo or (hi is not None and len(n.inputs) > hi):
            out.append(Violation("BadArity", n.id, f"{len(n.inputs)} inputs"))
        slots = WEIGHT_SLOTS.get(n.kind, ())
        if slots and not n.weights:
            out.append(Violation("MissingWeights", n.id))
        elif not slots and n.weights:
            out.append(Violation("UnexpectedWeights", n.id))
        elif slots and len(n.weights) != len(slots):
            out.append(Violation("WeightSlots", n.id, f"expected {slots}"))
        for w in n.weights:
            if w not in graph.weights:
                out.append(Violation("UnknownWeight", n.id, w))
        if n.output in produced:
            out.append(Violation("DuplicateProducer", n.id, n.output))
        else:
            produced[n.output] = n.id
    for n in graph.nodes:
        for t in n.inputs:
            if t not in produced:
                out.append(Violation("UndefinedTensor", n.id, t))
    for t in graph.outputs:
        if t not in produced:
            out.append(Violation("UndefinedOutput", None, t))
    if not any(v.rule in ("DuplicateNodeId", "DuplicateProducer") for v in out):
        try:
            topo_sort(graph)
        except InvalidGraph as e:
            out.extend(e.violations)
    return out


def check(graph: Graph) -> None:
    violations = validate(graph)
    if violations:
        raise InvalidGraph(violations)


def _window_out(size: int, k: int, s: int, padding: str, what: str) -> int:
    if padding == "SAME":
        return -(-size // s)
    o = (size - k) // s + 1
    if size < k:
        raise ShapeMismatch(f"{what}: VALID window {k} larger than input {size}")
    return o


def same_padding(size: int, k: int, s: int) -> tuple[int, int]:
    """(before, after) padding for SAME; the odd pixel goes bottom/right."""
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


def _node_shape(node: Node, ins: list[tuple[int, int, int, int]]) -> tuple[int, int, int, int]:
    a = node.attrs
    k = node.kind
    n, h, w, c = ins[0]
    if k is OpKind.CONV_2D:
        return (n, _window_out(h, a["kernel_h"], a["stride"], a["padding"], node.id),
                _window_out(w, a["kernel_w"], a["stride"], a["padding"], node.id), a["out_channels"])
    if k is OpKind.TRANSPOSE_CONV_2D:
        return (n, a["stride"] * h, a["stride"] * w, a["out_channels"])
    if k is OpKind.DEPTH_TO_SPACE:
        b = a["block_size"]
        if c % (b * b):
            raise ShapeMismatch(f"{node.id}: {c} channels not divisible by block_size^2={b * b}")
        return (n, h * b, w * b, c // (b * b))
    if k is OpKind.SPACE_TO_DEPTH:
        b = a["block_size"]
        if h % b or w % b:
            raise ShapeMismatch(f"{node.id}: spatial {h}x{w} not divisible by block_size={b}")
        return (n, h // b, w // b, c * b * b)
    if k in (OpKind.RESIZE_BILINEAR, OpKind.RESIZE_NEAREST):
        return (n, h * a["scale"], w * a["scale"], c)
    if k is OpKind.CONCATENATION:
        for s in ins[1:]:
            if s[:3] != ins[0][:3]:
                raise ShapeMismatch(f"{node.id}: concat of {ins[0]} and {s}")
        return (n, h, w, sum(s[3] for s in ins))
    if k in (OpKind.ADD, OpKind.MUL):
        if ins[1] != ins[0]:
            raise ShapeMismatch(f"{node.id}: {k.value} of {ins[0]} and {ins[1]}")
        return ins[0]
    if k in (OpKind.RELU, OpKind.PRELU):
        return ins[0]
    if k in (OpKind.MAX_POOL_2D, OpKind.AVG_POOL_2D):
        return (n, _window_out(h, a["kernel_h"], a["stride"], a["padding"], node.id),
                _window_out(w, a["kernel_w"], a["stride"], a["padding"], node.id), c)
    if k is OpKind.FULLY_CONNECTED:
        return (n, 1, 1, a["out_channels"])
    raise AssertionError(k)


def expected_weight_shapes(node: Node, ins: list[tuple[int, ...]]) -> dict[str, tuple[int, ...]]:
    a = node.attrs
    c_in = ins[0][3]
    if node.kind in (OpKind.CONV_2D, OpKind.TRANSPOSE_CONV_2D):
        return {"filter": (a["kernel_h"], a["kernel_w"], c_in, a["out_channels"]),
                "bias": (a["out_channels"],)}
    if node.kind is OpKind.FULLY_CONNECTED:
        _, h, w, c = ins[0]
        return {"filter": (h * w * c, a["out_channels"]), "bias": (a["out_channels"],)}
    if node.kind is OpKind.PRELU:
        return {"slope": (c_in,)}
    return {}


def infer_shapes(graph: Graph, input_shapes: Optional[Mapping[str, object]] = None) -> Graph:
    """Resolve a TensorSpec for every tensor.

    ``input_shapes`` maps graph input names to a 4-tuple or a TensorSpec. When
    omitted, the graph's already-resolved input specs are reused.
    """
    check(graph)
    specs: dict[str, TensorSpec] = {}
    for t in graph.inputs:
        if input_shapes is not None and t in input_shapes:
            v = input_shapes[t]
            spec = v if isinstance(v, TensorSpec) else TensorSpec(t, tuple(int(d) for d in v))
            spec = TensorSpec(t, tuple(int(d) for d in spec.shape), spec.dtype)
        elif t in graph.specs:
            spec = graph.specs[t]
        else:
            raise UnresolvedShape(f"no shape given for graph input {t!r}")
        if len(spec.shape) != 4 or any(d < 1 for d in spec.shape):
            raise ShapeMismatch(f"input {t!r}: shape {spec.shape} is not a positive NHWC 4-tuple")
        specs[t] = spec
    for node in topo_sort(graph):
        ins = [specs[t].shape for t in node.inputs]
        shape = _node_shape(node, ins)
        if any(d < 1 for d in shape):
            raise ShapeMismatch(f"{node.id}: produced degenerate shape {shape}")
        for slot, want in expected_weight_shapes(node, ins).items():
            have = tuple(graph.weights[node.weight(slot)].shape)
            if have != want:
                raise ShapeMismatch(f"{node.id}: {slot} weight has shape {have}, expected {want}")
        dtype = specs[node.inputs[0]].dtype
        prev = graph.specs.get(node.output)
        if prev is not None and prev.dtype != dtype:
            dtype = prev.dtype
        specs[node.output] = TensorSpec(node.output, shape, dtype)
    return graph.replace(specs=specs)


def resize_inputs(graph: Graph, height: int, width: int) -> Graph:
    """Re-infer every shape with all graph inputs resized to ``height x width``."""
    shapes = {}
    for t in graph.inputs:
        spec = graph.spec(t)
        n, _, _, c = spec.shape
        shapes[t] = TensorSpec(t, (n, height, width, c), spec.dtype)
    return infer_shapes(graph, shapes)


def fan_in(kind: OpKind, shape: tuple[int, ...]) -> int:
    if kind in (OpKind.CONV_2D, OpKind.TRANSPOSE_CONV_2D):
        return shape[0] * shape[1] * shape[2]
    if kind is OpKind.FULLY_CONNECTED:
        return shape[0]
    return 1


def unique_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    i = 1
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)
