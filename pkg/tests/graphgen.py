"""Seeded random graph generator shared by the oracle and property tests."""
from __future__ import annotations

import numpy as np

from portanet.builder import GraphBuilder
from portanet.ir import OpKind


def _shape(b: GraphBuilder, t: str):
    return b.shapes[t]


def random_graph(seed: int, max_nodes: int = 6, max_hw: int = 16, require_tc: bool = False,
                 tc_stride2_only: bool = False):
    """A small valid graph with at most ``max_nodes`` nodes.

    With ``require_tc`` the first node is a transpose conv so the graph always
    contains at least one.
    """
    r = np.random.default_rng(seed)
    b = GraphBuilder(seed)
    h = int(r.choice([s for s in (4, 6, 8, 12, 16) if s <= max_hw]))
    w = int(r.choice([s for s in (4, 6, 8, 12, 16) if s <= max_hw]))
    c = int(r.integers(1, 7))
    tensors = [b.input("x", (1, h, w, c))]
    n_nodes = int(r.integers(1, max_nodes + 1))
    for i in range(n_nodes):
        x = tensors[int(r.integers(len(tensors)))]
        _, hh, ww, cc = _shape(b, x)
        options = ["conv", "tconv", "relu", "prelu", "resize", "pool", "fc", "add", "concat", "mul"]
        if cc % 4 == 0:
            options.append("d2s")
        if hh % 2 == 0 and ww % 2 == 0 and hh * ww > 4:
            options.append("s2d")
        kind = "tconv" if (require_tc and i == 0) else str(r.choice(options))
        big = hh * ww > 24 * 24
        if kind == "conv":
            k = int(r.integers(1, 4))
            stride = int(r.integers(1, 3))
            pad = "VALID" if (min(hh, ww) >= k and r.random() < 0.3) else "SAME"
            y = b.conv(x, int(r.integers(1, 9)), k=k, stride=stride, padding=pad)
        elif kind == "tconv" and (not big or require_tc and i == 0):
            stride = 2 if tc_stride2_only else int(r.integers(1, 3))
            y = b.tconv(x, int(r.integers(1, 9)), k=int(r.integers(1, 5)), stride=stride)
        elif kind == "relu":
            y = b.act(x, OpKind.RELU)
        elif kind == "prelu":
            y = b.act(x, OpKind.PRELU)
        elif kind == "resize" and not big:
            y = b.resize(x, 2, bilinear=bool(r.random() < 0.5))
        elif kind == "pool":
            y = b.pool(x, int(r.integers(1, 4)), int(r.integers(1, 3)),
                       OpKind.MAX_POOL_2D if r.random() < 0.5 else OpKind.AVG_POOL_2D)
        elif kind == "fc" and hh * ww * cc <= 256:
            y = b.fc(x, int(r.integers(1, 9)))
        elif kind == "d2s":
            y = b.d2s(x, 2)
        elif kind == "s2d":
            y = b.s2d(x, 2)
        elif kind in ("add", "mul", "concat"):
            same = [t for t in tensors if _shape(b, t)[:3] == (1, hh, ww)]
            other = same[int(r.integers(len(same)))]
            if kind == "concat":
                y = b.concat([x, other])
            elif _shape(b, other) == _shape(b, x):
                y = b.add(x, other) if kind == "add" else b.mul(x, other)
            else:
                y = b.conv(x, _shape(b, other)[3], k=1)
        else:
            y = b.conv(x, int(r.integers(1, 9)), k=3)
        tensors.append(y)
    return b.build(tensors[-1])
