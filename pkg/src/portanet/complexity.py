"""MAC and memory-footprint accounting.

Conventions: one MAC per multiply in the conv-family kernels (padding taps
included, bias additions excluded). Elementwise, resize and pooling ops cost
0 MACs and are tallied separately as ``aux_ops``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import UnresolvedShape
from .ir import BYTES_PER_ELEMENT, Graph, Node, OpKind, TensorSpec, topo_sort

_AUX_ELEMENTWISE = (OpKind.PRELU, OpKind.ADD, OpKind.MUL,
                    OpKind.RESIZE_BILINEAR, OpKind.RESIZE_NEAREST)
_POOLS = (OpKind.MAX_POOL_2D, OpKind.AVG_POOL_2D)


@dataclass(frozen=True)
class NodeCost:
    macs: int
    aux_ops: int
    weight_bytes: int
    activation_bytes: int


@dataclass(frozen=True)
class ComplexityReport:
    per_node: dict[str, NodeCost] = field(default_factory=dict)
    total_macs: int = 0
    total_aux_ops: int = 0
    peak_activation_bytes: int = 0
    total_weight_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "total_macs": self.total_macs,
            "total_aux_ops": self.total_aux_ops,
            "peak_activation_bytes": self.peak_activation_bytes,
            "total_weight_bytes": self.total_weight_bytes,
            "per_node": {k: vars(v) for k, v in self.per_node.items()},
        }


def _spec(specs: Mapping[str, TensorSpec], t: str, node: Node) -> TensorSpec:
    try:
        return specs[t]
    except KeyError:
        raise UnresolvedShape(f"{node.id}: tensor {t!r} has no resolved shape") from None


def macs_of_node(node: Node, specs: Mapping[str, TensorSpec]) -> int:
    out = _spec(specs, node.output, node).shape
    ins = [_spec(specs, t, node).shape for t in node.inputs]
    a = node.attrs
    if node.kind is OpKind.CONV_2D:
        n, ho, wo, co = out
        return n * ho * wo * co * a["kernel_h"] * a["kernel_w"] * ins[0][3]
    if node.kind is OpKind.TRANSPOSE_CONV_2D:
        n, hi, wi, ci = ins[0]
        return n * hi * wi * ci * a["kernel_h"] * a["kernel_w"] * out[3]
    if node.kind is OpKind.FULLY_CONNECTED:
        n, h, w, c = ins[0]
        return n * h * w * c * out[3]
    return 0


def aux_ops_of_node(node: Node, specs: Mapping[str, TensorSpec]) -> int:
    size = _spec(specs, node.output, node).size
    if node.kind in _AUX_ELEMENTWISE:
        return size
    if node.kind in _POOLS:
        return size * node.attrs["kernel_h"] * node.attrs["kernel_w"]
    return 0


def weight_bytes_of_node(node: Node, graph: Graph) -> int:
    width = BYTES_PER_ELEMENT[graph.spec(node.output).dtype]
    return sum(int(graph.weights[w].size) for w in node.weights) * width


def peak_activation_bytes(graph: Graph, order=None) -> int:
    """Liveness over the topological order: a tensor lives from production to last use.

    Graph inputs are live from the start; graph outputs never die.
    """
    order = order if order is not None else topo_sort(graph)
    last_use: dict[str, int] = {}
    for i, n in enumerate(order):
        for t in n.inputs:
            last_use[t] = i
    keep = set(graph.outputs)
    live = {t: graph.spec(t).nbytes for t in graph.inputs}
    peak = sum(live.values())
    for i, n in enumerate(order):
        live[n.output] = graph.spec(n.output).nbytes
        peak = max(peak, sum(live.values()))
        for t in list(live):
            if t in keep:
                continue
            if last_use.get(t, -1) <= i:
                del live[t]
    return peak


def complexity(graph: Graph) -> ComplexityReport:
    order = topo_sort(graph)
    per_node = {}
    for n in order:
        per_node[n.id] = NodeCost(
            macs=macs_of_node(n, graph.specs),
            aux_ops=aux_ops_of_node(n, graph.specs),
            weight_bytes=weight_bytes_of_node(n, graph),
            activation_bytes=graph.spec(n.output).nbytes,
        )
    for t in graph.inputs:
        graph.spec(t)
    return ComplexityReport(
        per_node=per_node,
        total_macs=sum(c.macs for c in per_node.values()),
        total_aux_ops=sum(c.aux_ops for c in per_node.values()),
        peak_activation_bytes=peak_activation_bytes(graph, order),
        total_weight_bytes=sum(c.weight_bytes for c in per_node.values()),
    )


def total_macs(graph: Graph) -> int:
    return sum(macs_of_node(n, graph.specs) for n in graph.nodes)


def format_table(graph: Graph, report: ComplexityReport) -> str:
    rows = [("node", "kind", "output shape", "MACs", "aux ops", "weight B", "act B")]
    for n in topo_sort(graph):
        c = report.per_node[n.id]
        rows.append((n.id, n.kind.value, "x".join(map(str, graph.spec(n.output).shape)),
                     f"{c.macs:,}", f"{c.aux_ops:,}", f"{c.weight_bytes:,}", f"{c.activation_bytes:,}"))
    rows.append(("TOTAL", "", "", f"{report.total_macs:,}", f"{report.total_aux_ops:,}",
                 f"{report.total_weight_bytes:,}", f"peak {report.peak_activation_bytes:,}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, r in enumerate(rows):
        cells = [r[i].ljust(widths[i]) if i < 3 else r[i].rjust(widths[i]) for i in range(len(r))]
        lines.append("  ".join(cells).rstrip())
        if k == 0 or k == len(rows) - 2:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
