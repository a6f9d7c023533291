"""Post-training quantization: calibration, quantized-graph production and
cross-precision error reports.

Ranges are per tensor. Weights are calibrated from their stored values;
activations from interpreter passes over calibration inputs. The quantized
graph keeps the original float weights next to the integer copies so the
float reference can always be recovered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from . import fixedpoint as fp
from .errors import EmptyCalibration, MissingRange, TopologyMismatch
from .interpreter import Interpreter, Precision
from .ir import DataType, Graph, OpKind, TensorSpec, check, topo_sort
from .metrics import l2_per_pixel, psnr

Ranges = dict[str, tuple[float, float]]

_QTYPE = {8: DataType.Q8, 16: DataType.Q16}


def merge_ranges(a: Mapping[str, tuple], b: Mapping[str, tuple]) -> Ranges:
    """Associative, commutative union of two range maps."""
    out = dict(a)
    for t, (lo, hi) in b.items():
        if t in out:
            out[t] = (min(out[t][0], lo), max(out[t][1], hi))
        else:
            out[t] = (lo, hi)
    return out


def weight_ranges(graph: Graph) -> Ranges:
    return {w: (float(v.min()), float(v.max())) for w, v in graph.weights.items() if v.size}


def calibrate(graph: Graph, calib_inputs: Iterable) -> Ranges:
    """Running min/max of every tensor over float passes, plus weight ranges."""
    interp = Interpreter(graph, Precision.F32)
    ranges: Ranges = {}
    passes = 0
    for inp in calib_inputs:
        env = interp.trace(inp)
        ranges = merge_ranges(ranges, {t: (float(v.min()), float(v.max())) for t, v in env.items()})
        passes += 1
    if passes == 0:
        raise EmptyCalibration("calibration needs at least one input")
    return merge_ranges(ranges, weight_ranges(graph))


def quantize_graph(graph: Graph, bits: int, ranges: Mapping[str, tuple], mode: str = "PTQ") -> Graph:
    """Attach per-tensor schemes and integer weights; every tensor becomes Q8 or Q16.

    Bias vectors are stored as integers at scale ``s_input * s_filter``.
    """
    if bits not in _QTYPE:
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    check(graph)
    if graph.quant:
        raise ValueError("graph is already quantized")
    tensors = list(graph.inputs) + [n.output for n in topo_sort(graph)]
    missing = [t for t in tensors if t not in ranges]
    if missing:
        raise MissingRange(f"no calibrated range for {len(missing)} tensor(s), e.g. {missing[0]!r}")
    quant = {t: fp.choose_scheme(*ranges[t], bits, mode) for t in tensors}
    wr = weight_ranges(graph)
    qweights = {}
    for n in graph.nodes:
        if not n.weights:
            continue
        if n.kind is OpKind.PRELU:
            name = n.weight("slope")
            quant[name] = fp.choose_scheme(*ranges.get(name, wr[name]), bits, mode)
            qweights[name] = fp.quantize(graph.weights[name], quant[name])
            continue
        fname, bname = n.weight("filter"), n.weight("bias")
        quant[fname] = fp.choose_scheme(*ranges.get(fname, wr[fname]), bits, mode)
        qweights[fname] = fp.quantize(graph.weights[fname], quant[fname])
        qweights[bname] = fp.quantize_bias(graph.weights[bname], quant[n.inputs[0]], quant[fname])
    qtype = _QTYPE[bits]
    specs = {t: TensorSpec(s.name, s.shape, qtype) for t, s in graph.specs.items()}
    return graph.replace(specs=specs, quant=quant, qweights=qweights)


def fake_quant_run(graph: Graph, ranges: Mapping[str, tuple], inputs, bits: int = 8) -> dict:
    """Float execution with quantize/dequantize at every tensor boundary."""
    q = graph if graph.quant else quantize_graph(graph, bits, ranges, mode="FAKE_QUANT")
    return Interpreter(q, Precision.FAKE_QUANT).run(inputs)


def _topology(graph: Graph) -> tuple:
    return (tuple(graph.inputs), tuple(graph.outputs),
            tuple((n.id, n.kind, n.inputs, n.output) for n in topo_sort(graph)))


def _finite_std(values: list[float]) -> float:
    if all(math.isinf(v) for v in values):
        return 0.0
    if any(math.isinf(v) for v in values):
        return math.nan
    return float(np.std(values))


@dataclass(frozen=True)
class ErrorReport:
    psnr_db: float
    psnr_std_db: float
    l2_per_pixel: float
    l2_std: float
    per_image: list = field(default_factory=list)  # of (psnr_db, l2)
    precision: str = "QUANT"

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else str(v)
        return {
            "precision": self.precision,
            "psnr_db": num(self.psnr_db),
            "psnr_std_db": num(self.psnr_std_db),
            "l2_per_pixel": self.l2_per_pixel,
            "l2_std": self.l2_std,
            "per_image": [{"psnr_db": num(p), "l2_per_pixel": l} for p, l in self.per_image],
        }

    def format_text(self) -> str:
        p = "inf" if math.isinf(self.psnr_db) else f"{self.psnr_db:.2f} +- {self.psnr_std_db:.2f}"
        return (f"precision  PSNR (dB)           per-pixel L2\n"
                f"{self.precision:<10} {p:<19} {self.l2_per_pixel:.3e}")


def error_report(graph_float: Graph, graph_quant: Graph, probe_inputs: Iterable,
                 peak: float = 1.0, precision: Optional[Precision] = None) -> ErrorReport:
    """Compare the float reference against ``graph_quant`` on every probe.

    ``graph_quant`` runs in QUANT precision when it carries schemes, otherwise
    in ``precision`` (default F32, so ``error_report(g, g)`` is exact zero).
    """
    if _topology(graph_float) != _topology(graph_quant):
        raise TopologyMismatch("float and quantized graphs differ in structure")
    if precision is None:
        precision = Precision.QUANT if graph_quant.quant else Precision.F32
    ref = Interpreter(graph_float, Precision.F32)
    test = Interpreter(graph_quant, precision)
    per_image = []
    for inp in probe_inputs:
        a, b = ref.run(inp), test.run(inp)
        ya = np.concatenate([a[t].ravel() for t in graph_float.outputs])
        yb = np.concatenate([b[t].ravel() for t in graph_float.outputs])
        per_image.append((psnr(ya, yb, peak), l2_per_pixel(ya, yb)))
    if not per_image:
        raise EmptyCalibration("error_report needs at least one probe input")
    ps = [p for p, _ in per_image]
    ls = [l for _, l in per_image]
    return ErrorReport(
        psnr_db=float(np.mean(ps)),
        psnr_std_db=_finite_std(ps),
        l2_per_pixel=float(np.mean(ls)),
        l2_std=float(np.std(ls)),
        per_image=per_image,
        precision=Precision(precision).value,
    )
