"""Reference executor for graphs on desk-scale tensors.

Kernels are deliberately plain: convolutions loop over kernel taps and do one
matrix product per tap, so the multiply counter sees exactly the work a naive
nested-loop kernel performs (padding taps included).

Precisions:

* ``F32``: float32 arithmetic.
* ``EMULATED_F16``: float32 arithmetic, every tensor rounded to the float16
  grid after each node (weights and inputs too). Accumulation stays float32.
* ``QUANT``: fixed-point execution per the graph's QuantSchemes. Conv-family
  ops accumulate integer products exactly (int32 range for 8-bit, int64 for
  16-bit) and requantize once; other ops requantize their real-valued result.
* ``FAKE_QUANT``: float32 execution with quantize/dequantize on every tensor.
"""
from __future__ import annotations

from enum import Enum
from typing import Mapping, Union

import numpy as np

from . import fixedpoint as fp
from .errors import MissingWeights, ShapeMismatch
from .ir import Graph, Node, OpKind, check, same_padding, topo_sort


class Precision(str, Enum):
    F32 = "F32"
    EMULATED_F16 = "EMULATED_F16"
    QUANT = "QUANT"
    FAKE_QUANT = "FAKE_QUANT"


class Counter:
    def __init__(self):
        self.multiplies = 0


def _pads(size, k, s, padding):
    if padding == "SAME":
        return same_padding(size, k, s), -(-size // s)
    return (0, 0), (size - k) // s + 1


def conv2d(x, w, b, stride, padding, counter=None):
    n, h, wd, c = x.shape
    kh, kw, _, co = w.shape
    (pt, pb), ho = _pads(h, kh, stride, padding)
    (pl, pr), wo = _pads(wd, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = np.zeros((n, ho, wo, co), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :]
            out += patch @ w[i, j]
            if counter is not None:
                counter.multiplies += n * ho * wo * c * co
    if b is not None:
        out += b
    return out


def transpose_conv2d(x, w, b, stride, counter=None):
    """Scatter form; output is exactly stride * input, cropped SAME-style."""
    n, h, wd, c = x.shape
    kh, kw, _, co = w.shape
    crop_h = max(kh - stride, 0) // 2
    crop_w = max(kw - stride, 0) // 2
    full_h = max((h - 1) * stride + kh, crop_h + stride * h)
    full_w = max((wd - 1) * stride + kw, crop_w + stride * wd)
    out = np.zeros((n, full_h, full_w, co), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + stride * (h - 1) + 1:stride, j:j + stride * (wd - 1) + 1:stride, :] += x @ w[i, j]
            if counter is not None:
                counter.multiplies += n * h * wd * c * co
    out = out[:, crop_h:crop_h + stride * h, crop_w:crop_w + stride * wd, :]
    if b is not None:
        out = out + b
    return out


def fully_connected(x, w, b, counter=None):
    n = x.shape[0]
    flat = x.reshape(n, -1)
    out = flat @ w
    if counter is not None:
        counter.multiplies += n * w.shape[0] * w.shape[1]
    if b is not None:
        out = out + b
    return out.reshape(n, 1, 1, -1)


def depth_to_space(x, b):
    n, h, w, c = x.shape
    co = c // (b * b)
    return x.reshape(n, h, w, b, b, co).transpose(0, 1, 3, 2, 4, 5).reshape(n, h * b, w * b, co)


def space_to_depth(x, b):
    n, h, w, c = x.shape
    return x.reshape(n, h // b, b, w // b, b, c).transpose(0, 1, 3, 2, 4, 5).reshape(
        n, h // b, w // b, b * b * c)


def _bilinear_axis(size, scale):
    src = (np.arange(size * scale) + 0.5) / scale - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), size - 1)
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, src - i0


def resize_bilinear(x, scale):
    """Half-pixel centers, no corner alignment; lerp form keeps constants exact."""
    _, h, w, _ = x.shape
    y0, y1, wy = _bilinear_axis(h, scale)
    x0, x1, wx = _bilinear_axis(w, scale)
    wy = wy.astype(x.dtype)[None, :, None, None]
    wx = wx.astype(x.dtype)[None, None, :, None]
    top = x[:, y0][:, :, x0] + wx * (x[:, y0][:, :, x1] - x[:, y0][:, :, x0])
    bot = x[:, y1][:, :, x0] + wx * (x[:, y1][:, :, x1] - x[:, y1][:, :, x0])
    return top + wy * (bot - top)


def resize_nearest(x, scale):
    return np.repeat(np.repeat(x, scale, axis=1), scale, axis=2)


def pool2d(x, k, stride, padding, mode):
    n, h, w, c = x.shape
    (pt, pb), ho = _pads(h, k[0], stride, padding)
    (pl, pr), wo = _pads(w, k[1], stride, padding)
    fill = -np.inf if mode == "max" else 0.0
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=fill)
    valid = np.pad(np.ones((1, h, w, 1), dtype=x.dtype), ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    acc = np.full((n, ho, wo, c), fill, dtype=x.dtype)
    cnt = np.zeros((1, ho, wo, 1), dtype=x.dtype)
    for i in range(k[0]):
        for j in range(k[1]):
            sl = (slice(None), slice(i, i + stride * (ho - 1) + 1, stride),
                  slice(j, j + stride * (wo - 1) + 1, stride), slice(None))
            if mode == "max":
                acc = np.maximum(acc, xp[sl])
            else:
                acc = acc + xp[sl]
                cnt = cnt + valid[sl]
    return acc if mode == "max" else acc / cnt


def prelu(x, slope):
    return np.where(x >= 0, x, slope * x)


class Interpreter:
    def __init__(self, graph: Graph, precision: Precision = Precision.F32):
        missing = sorted(w for n in graph.nodes for w in n.weights if w not in graph.weights)
        if missing:
            raise MissingWeights(f"weight {missing[0]!r} not in store")
        check(graph)
        self.graph = graph
        self.precision = Precision(precision)
        self.counter = Counter()
        self.order = topo_sort(graph)
        if self.precision in (Precision.QUANT, Precision.FAKE_QUANT) and not graph.quant:
            raise ValueError("graph carries no quantization schemes; run quantize_graph first")

    # -- weights ---------------------------------------------------------------
    def _w(self, name):
        try:
            return self.graph.weights[name]
        except KeyError:
            raise MissingWeights(f"weight {name!r} not in store") from None

    def _float_weight(self, node: Node, slot: str, in_scheme=None):
        name = node.weight(slot)
        w = self._w(name).astype(np.float32)
        if self.precision is Precision.EMULATED_F16:
            return w.astype(np.float16).astype(np.float32)
        if self.precision is Precision.FAKE_QUANT:
            if slot == "bias":
                fs = self.graph.quant[node.weight("filter")]
                s = fp.bias_scale(in_scheme, fs)
                return (fp.quantize_bias(w, in_scheme, fs) * s).astype(np.float32)
            return fp.fake_quant(w, self.graph.quant[name]).astype(np.float32)
        return w

    # -- entry -----------------------------------------------------------------
    def _inputs(self, inputs) -> dict:
        g = self.graph
        if not isinstance(inputs, Mapping):
            if len(g.inputs) != 1:
                raise ValueError("graph has several inputs; pass a mapping")
            inputs = {g.inputs[0]: inputs}
        out = {}
        for t in g.inputs:
            if t not in inputs:
                raise ShapeMismatch(f"missing input {t!r}")
            arr = np.asarray(inputs[t])
            if t in g.specs and tuple(arr.shape) != tuple(g.specs[t].shape):
                raise ShapeMismatch(f"input {t!r} has shape {arr.shape}, graph expects {g.specs[t].shape}")
            if arr.ndim != 4:
                raise ShapeMismatch(f"input {t!r} must be NHWC 4-d, got shape {arr.shape}")
            out[t] = arr
        return out

    def _env(self, inputs) -> dict:
        env = {}
        for t, arr in self._inputs(inputs).items():
            env[t] = self._enter(t, arr)
        for node in self.order:
            env[node.output] = self._exec(node, [env[t] for t in node.inputs])
        return env

    def run(self, inputs) -> dict[str, np.ndarray]:
        env = self._env(inputs)
        return {t: self._leave(t, env[t]) for t in self.graph.outputs}

    def trace(self, inputs) -> dict[str, np.ndarray]:
        """Every tensor (inputs and node outputs), in real-valued form."""
        env = self._env(inputs)
        return {t: self._leave(t, v) for t, v in env.items()}

    def _enter(self, t, arr):
        p = self.precision
        if p is Precision.QUANT:
            return fp.quantize(arr, self.graph.quant[t])
        x = np.asarray(arr, dtype=np.float32)
        if p is Precision.EMULATED_F16:
            return x.astype(np.float16).astype(np.float32)
        if p is Precision.FAKE_QUANT:
            return fp.fake_quant(x, self.graph.quant[t]).astype(np.float32)
        return x

    def _leave(self, t, v):
        if self.precision is Precision.QUANT:
            return fp.dequantize(v, self.graph.quant[t]).astype(np.float32)
        return v

    # -- float path ------------------------------------------------------------
    def _exec(self, node: Node, ins):
        if self.precision is Precision.QUANT:
            return self._exec_quant(node, ins)
        out = self._exec_float(node, ins)
        if self.precision is Precision.EMULATED_F16:
            out = out.astype(np.float16).astype(np.float32)
        elif self.precision is Precision.FAKE_QUANT:
            out = fp.fake_quant(out, self.graph.quant[node.output]).astype(np.float32)
        return out

    def _exec_float(self, node: Node, ins):
        k, a, x, c = node.kind, node.attrs, ins[0], self.counter
        in_scheme = self.graph.quant.get(node.inputs[0]) if self.precision is Precision.FAKE_QUANT else None
        if k is OpKind.CONV_2D:
            return conv2d(x, self._float_weight(node, "filter"), self._float_weight(node, "bias", in_scheme),
                          a["stride"], a["padding"], c)
        if k is OpKind.TRANSPOSE_CONV_2D:
            return transpose_conv2d(x, self._float_weight(node, "filter"),
                                    self._float_weight(node, "bias", in_scheme), a["stride"], c)
        if k is OpKind.FULLY_CONNECTED:
            return fully_connected(x, self._float_weight(node, "filter"),
                                   self._float_weight(node, "bias", in_scheme), c)
        if k is OpKind.PRELU:
            return prelu(x, self._float_weight(node, "slope")).astype(np.float32)
        return _structural(node, ins)

    # -- fixed-point path ------------------------------------------------------
    def _exec_quant(self, node: Node, ins):
        g = self.graph
        k, a = node.kind, node.attrs
        out_s = g.quant[node.output]
        in_s = [g.quant[t] for t in node.inputs]
        if k in (OpKind.CONV_2D, OpKind.TRANSPOSE_CONV_2D, OpKind.FULLY_CONNECTED):
            fname, bname = node.weight("filter"), node.weight("bias")
            fs = g.quant[fname]
            xq = (ins[0] - in_s[0].zero_point).astype(np.float64)
            wq = (g.qweights[fname].astype(np.int64) - fs.zero_point).astype(np.float64)
            _check_accumulator(node, xq, wq, in_s[0].bits)
            # products of small integers summed in float64 are exact below 2**53
            if k is OpKind.CONV_2D:
                acc = conv2d(xq, wq, None, a["stride"], a["padding"], self.counter)
            elif k is OpKind.TRANSPOSE_CONV_2D:
                acc = transpose_conv2d(xq, wq, None, a["stride"], self.counter)
            else:
                acc = fully_connected(xq, wq, None, self.counter)
            acc = np.rint(acc).astype(np.int64) + g.qweights[bname].astype(np.int64)
            mult = fp.bias_scale(in_s[0], fs) / out_s.scale
            return np.clip(np.rint(acc * mult) + out_s.zero_point, out_s.qmin, out_s.qmax).astype(np.int64)
        real = [fp.dequantize(q, s) for q, s in zip(ins, in_s)]
        if k is OpKind.PRELU:
            sname = node.weight("slope")
            slope = fp.dequantize(g.qweights[sname], g.quant[sname])
            return fp.requantize(prelu(real[0], slope), out_s)
        return fp.requantize(_structural(node, real), out_s)


def _check_accumulator(node, xq, wq, bits):
    if xq.size == 0 or wq.size == 0:
        return
    depth = wq.shape[0] if wq.ndim == 2 else wq.shape[0] * wq.shape[1] * wq.shape[2]
    bound = float(np.abs(xq).max()) * float(np.abs(wq).max()) * depth
    limit = fp.accumulator_limit(bits)
    if bound > limit:
        raise OverflowError(f"{node.id}: accumulator bound {bound:.3g} exceeds {limit:.3g}")


def _structural(node: Node, ins):
    """Weight-free ops, shared by the float and requantizing paths."""
    k, a, x = node.kind, node.attrs, ins[0]
    if k is OpKind.RELU:
        return np.maximum(x, 0).astype(x.dtype)
    if k is OpKind.ADD:
        return ins[0] + ins[1]
    if k is OpKind.MUL:
        return ins[0] * ins[1]
    if k is OpKind.CONCATENATION:
        return np.concatenate(ins, axis=3)
    if k is OpKind.DEPTH_TO_SPACE:
        return depth_to_space(x, a["block_size"])
    if k is OpKind.SPACE_TO_DEPTH:
        return space_to_depth(x, a["block_size"])
    if k is OpKind.RESIZE_BILINEAR:
        return resize_bilinear(x, a["scale"])
    if k is OpKind.RESIZE_NEAREST:
        return resize_nearest(x, a["scale"])
    if k is OpKind.MAX_POOL_2D:
        return pool2d(x, (a["kernel_h"], a["kernel_w"]), a["stride"], a["padding"], "max")
    if k is OpKind.AVG_POOL_2D:
        return pool2d(x, (a["kernel_h"], a["kernel_w"]), a["stride"], a["padding"], "avg")
    raise AssertionError(f"no structural kernel for {k}")


InputArg = Union[np.ndarray, Mapping[str, np.ndarray]]


def run(graph: Graph, inputs: InputArg, precision: Precision = Precision.F32) -> dict[str, np.ndarray]:
    return Interpreter(graph, precision).run(inputs)


def run_single(graph: Graph, inputs: InputArg, precision: Precision = Precision.F32) -> np.ndarray:
    """Convenience for single-output graphs."""
    return run(graph, inputs, precision)[graph.outputs[0]]


def count_multiplies(graph: Graph, inputs: InputArg) -> int:
    interp = Interpreter(graph, Precision.F32)
    interp.run(inputs)
    return interp.counter.multiplies


def random_inputs(graph: Graph, seed: int = 0, low: float = 0.0, high: float = 1.0) -> dict[str, np.ndarray]:
    r = np.random.default_rng(seed)
    return {t: r.uniform(low, high, size=graph.spec(t).shape).astype(np.float32) for t in graph.inputs}
