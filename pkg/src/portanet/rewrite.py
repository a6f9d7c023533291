"""Portability rewrites: swap operators a device cannot accelerate for
supported compositions of similar function.

Rewrites are architectural. Replacement weights are freshly initialized from
the graph seed; only tensor shapes are preserved, not numerics.
"""
from __future__ import annotations

from enum import Enum

from .builder import make_weights
from .errors import UnsupportedStride
from .ir import Graph, Node, OpKind, check, infer_shapes, unique_name


class UpsampleTarget(str, Enum):
    DEPTH_TO_SPACE = "DEPTH_TO_SPACE"
    RESIZE_BILINEAR = "RESIZE_BILINEAR"


def _require_float(graph: Graph) -> None:
    if graph.quant:
        raise ValueError("rewrite the float graph before quantizing it")


class _Rebuild:
    """Accumulates replacement nodes and weights for one pass."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self.nodes: list[Node] = []
        self.weights = dict(graph.weights)
        self.seeds = dict(graph.weight_seeds)
        self.taken = {n.id for n in graph.nodes} | {n.output for n in graph.nodes} | set(graph.inputs)

    def fresh(self, base: str) -> str:
        name = unique_name(base, self.taken)
        self.taken.add(name)
        return name

    def drop_weights(self, node: Node) -> None:
        for w in node.weights:
            self.weights.pop(w, None)
            self.seeds.pop(w, None)

    def emit(self, node: Node, in_shapes=None) -> None:
        if node.weights:
            vals, seeds = make_weights(self.graph.seed, node, in_shapes)
            self.weights.update(vals)
            self.seeds.update(seeds)
        self.nodes.append(node)

    def finish(self) -> Graph:
        g = self.graph.replace(nodes=tuple(self.nodes), weights=self.weights, weight_seeds=self.seeds)
        check(g)
        if all(t in g.specs for t in g.inputs):
            return infer_shapes(g)
        return g


def _conv_node(nid, inp, out, k, c_out):
    return Node(nid, OpKind.CONV_2D, (inp,), out,
                dict(kernel_h=k, kernel_w=k, stride=1, padding="SAME", out_channels=c_out),
                (f"{nid}/filter", f"{nid}/bias"))


def replace_transpose_conv(graph: Graph, target=UpsampleTarget.DEPTH_TO_SPACE) -> Graph:
    """Replace every stride-2 TRANSPOSE_CONV_2D.

    DEPTH_TO_SPACE: 1x1 conv to 4*C_out, then a block-2 shuffle.
    RESIZE_BILINEAR: x2 bilinear resize, then a 3x3 conv to C_out.
    """
    target = UpsampleTarget(target)
    check(graph)
    _require_float(graph)
    tcs = [n for n in graph.nodes if n.kind is OpKind.TRANSPOSE_CONV_2D]
    if not tcs:
        return graph
    bad = [n.id for n in tcs if n.attrs["stride"] != 2]
    if bad:
        raise UnsupportedStride(f"only stride-2 transpose convs can be rewritten; offending: {', '.join(bad)}")
    rb = _Rebuild(graph)
    for n in graph.nodes:
        if n.kind is not OpKind.TRANSPOSE_CONV_2D:
            rb.nodes.append(n)
            continue
        c_in = graph.weights[n.weight("filter")].shape[2]
        c_out = n.attrs["out_channels"]
        rb.drop_weights(n)
        if target is UpsampleTarget.DEPTH_TO_SPACE:
            cid = rb.fresh(f"{n.id}_expand")
            rb.emit(_conv_node(cid, n.inputs[0], cid, 1, 4 * c_out), [(1, 1, 1, c_in)])
            rb.emit(Node(rb.fresh(f"{n.id}_d2s"), OpKind.DEPTH_TO_SPACE, (cid,), n.output,
                         dict(block_size=2)))
        else:
            rid = rb.fresh(f"{n.id}_resize")
            rb.emit(Node(rid, OpKind.RESIZE_BILINEAR, (n.inputs[0],), rid, dict(scale=2)))
            cid = rb.fresh(f"{n.id}_conv")
            rb.emit(_conv_node(cid, rid, n.output, 3, c_out), [(1, 1, 1, c_in)])
    return rb.finish()


def swap_activation(graph: Graph, from_kind=OpKind.RELU, to_kind=OpKind.PRELU) -> Graph:
    """Turn every ``from_kind`` activation into ``to_kind``.

    New PRELU slopes start at 0.25 per channel; slopes dropped by PRELU->RELU
    are not remembered.
    """
    from_kind, to_kind = OpKind(from_kind), OpKind(to_kind)
    acts = (OpKind.RELU, OpKind.PRELU)
    if from_kind not in acts or to_kind not in acts:
        raise ValueError("swap_activation only handles RELU and PRELU")
    check(graph)
    _require_float(graph)
    if from_kind is to_kind or not any(n.kind is from_kind for n in graph.nodes):
        return graph
    rb = _Rebuild(graph)
    for n in graph.nodes:
        if n.kind is not from_kind:
            rb.nodes.append(n)
            continue
        rb.drop_weights(n)
        if to_kind is OpKind.PRELU:
            c = graph.spec(n.inputs[0]).shape[3]
            new = Node(n.id, OpKind.PRELU, n.inputs, n.output, {}, (f"{n.id}/slope",))
            rb.emit(new, [(1, 1, 1, c)])
        else:
            rb.emit(Node(n.id, OpKind.RELU, n.inputs, n.output, {}))
    return rb.finish()


PASSES = {
    "tc2d2s": lambda g: replace_transpose_conv(g, UpsampleTarget.DEPTH_TO_SPACE),
    "tc2bilinear": lambda g: replace_transpose_conv(g, UpsampleTarget.RESIZE_BILINEAR),
    "relu2prelu": lambda g: swap_activation(g, OpKind.RELU, OpKind.PRELU),
    "prelu2relu": lambda g: swap_activation(g, OpKind.PRELU, OpKind.RELU),
}


def apply_pass(graph: Graph, name: str) -> Graph:
    try:
        return PASSES[name](graph)
    except KeyError:
        raise ValueError(f"unknown pass {name!r}; choose from {', '.join(PASSES)}") from None
