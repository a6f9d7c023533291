"""Incremental graph construction with seeded weight initialization."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import rng
from .ir import (
    WEIGHT_SLOTS,
    DataType,
    Graph,
    Node,
    OpKind,
    TensorSpec,
    _node_shape,
    expected_weight_shapes,
    fan_in,
    infer_shapes,
)

PRELU_INIT = 0.25


def init_weight(graph_seed: int, name: str, kind: OpKind, slot: str, shape, filter_shape=None):
    """Return (values, seed) for one weight tensor.

    PReLU slopes start at a constant 0.25 and carry no seed.
    """
    if slot == "slope":
        return np.full(shape, PRELU_INIT, dtype=np.float32), None
    seed = rng.derive_seed(graph_seed, name)
    fi = fan_in(kind, filter_shape if slot == "bias" else shape)
    return rng.init_uniform(seed, shape, fi), seed


def make_weights(graph_seed: int, node: Node, in_shapes) -> tuple[dict, dict]:
    """Fresh weights for every slot of ``node`` (names taken from node.weights)."""
    want = expected_weight_shapes(node, in_shapes)
    values, seeds = {}, {}
    filt = want.get("filter")
    for slot, name in zip(WEIGHT_SLOTS[node.kind], node.weights):
        v, s = init_weight(graph_seed, name, node.kind, slot, want[slot], filt)
        values[name] = v
        if s is not None:
            seeds[name] = s
    return values, seeds


class GraphBuilder:
    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.nodes: list[Node] = []
        self.inputs: list[str] = []
        self.shapes: dict[str, tuple[int, int, int, int]] = {}
        self.dtypes: dict[str, DataType] = {}
        self.weights: dict[str, np.ndarray] = {}
        self.weight_seeds: dict[str, int] = {}
        self._count = 0

    def input(self, name: str, shape, dtype: DataType = DataType.F32) -> str:
        self.inputs.append(name)
        self.shapes[name] = tuple(int(d) for d in shape)
        self.dtypes[name] = dtype
        return name

    def channels(self, tensor: str) -> int:
        return self.shapes[tensor][3]

    def add_node(self, kind: OpKind, inputs, attrs=None, name: Optional[str] = None,
                 prefix: Optional[str] = None) -> str:
        if name is None:
            name = f"{prefix or kind.value.lower()}_{self._count:03d}"
        self._count += 1
        slots = WEIGHT_SLOTS.get(kind, ())
        node = Node(name, kind, tuple(inputs), name, dict(attrs or {}),
                    tuple(f"{name}/{s}" for s in slots))
        ins = [self.shapes[t] for t in node.inputs]
        self.shapes[name] = _node_shape(node, ins)
        self.dtypes[name] = self.dtypes[node.inputs[0]]
        if slots:
            vals, seeds = make_weights(self.seed, node, ins)
            self.weights.update(vals)
            self.weight_seeds.update(seeds)
        self.nodes.append(node)
        return name

    def conv(self, x, out_channels, k=3, stride=1, padding="SAME", name=None):
        attrs = dict(kernel_h=k, kernel_w=k, stride=stride, padding=padding,
                     out_channels=int(out_channels))
        return self.add_node(OpKind.CONV_2D, [x], attrs, name, "conv")

    def tconv(self, x, out_channels, k=4, stride=2, name=None):
        attrs = dict(kernel_h=k, kernel_w=k, stride=stride, out_channels=int(out_channels))
        return self.add_node(OpKind.TRANSPOSE_CONV_2D, [x], attrs, name, "tconv")

    def d2s(self, x, block=2, name=None):
        return self.add_node(OpKind.DEPTH_TO_SPACE, [x], dict(block_size=block), name, "d2s")

    def s2d(self, x, block=2, name=None):
        return self.add_node(OpKind.SPACE_TO_DEPTH, [x], dict(block_size=block), name, "s2d")

    def resize(self, x, scale=2, bilinear=True, name=None):
        kind = OpKind.RESIZE_BILINEAR if bilinear else OpKind.RESIZE_NEAREST
        return self.add_node(kind, [x], dict(scale=scale), name, "resize")

    def concat(self, xs, name=None):
        return self.add_node(OpKind.CONCATENATION, xs, dict(axis=3), name, "concat")

    def add(self, a, b, name=None):
        return self.add_node(OpKind.ADD, [a, b], None, name, "add")

    def mul(self, a, b, name=None):
        return self.add_node(OpKind.MUL, [a, b], None, name, "mul")

    def act(self, x, kind: OpKind = OpKind.RELU, name=None):
        return self.add_node(kind, [x], None, name, "act")

    def pool(self, x, k=2, stride=2, kind: OpKind = OpKind.MAX_POOL_2D, padding="SAME", name=None):
        attrs = dict(kernel_h=k, kernel_w=k, stride=stride, padding=padding)
        return self.add_node(kind, [x], attrs, name, "pool")

    def fc(self, x, out_channels, name=None):
        return self.add_node(OpKind.FULLY_CONNECTED, [x], dict(out_channels=int(out_channels)),
                             name, "fc")

    def build(self, outputs) -> Graph:
        if isinstance(outputs, str):
            outputs = [outputs]
        g = Graph(
            nodes=tuple(self.nodes),
            inputs=tuple(self.inputs),
            outputs=tuple(outputs),
            weights=dict(self.weights),
            seed=self.seed,
            weight_seeds=dict(self.weight_seeds),
        )
        return infer_shapes(g, {t: TensorSpec(t, self.shapes[t], self.dtypes[t]) for t in self.inputs})
