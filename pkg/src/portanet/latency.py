"""Parametric latency estimates over a partition plan.

Per node: ``macs / engine_macs_per_ms + moved_bytes / engine_bytes_per_ms +
per_op_overhead_ms``; each boundary between accelerator and CPU segments adds
``transition_ms``. Moved bytes are the node's input, output and weight
elements at the plan's data-type width, so 0-MAC ops still cost bandwidth.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field

from .complexity import macs_of_node
from .devices import DeviceProfile, Engine, PartitionPlan, partition
from .errors import InconsistentPlan, InvalidResolution, ShapeMismatch
from .ir import BYTES_PER_ELEMENT, DataType, Graph, Node, resize_inputs, topo_sort
from . import zoo


@dataclass(frozen=True)
class LatencyEstimate:
    per_node_ms: dict = field(default_factory=dict)
    total_ms: float = 0.0
    transitions: int = 0
    accel_ms: float = 0.0
    cpu_ms: float = 0.0
    transition_ms: float = 0.0
    accel_macs: int = 0
    cpu_macs: int = 0

    @property
    def breakdown(self) -> dict:
        return {"accel_ms": self.accel_ms, "cpu_ms": self.cpu_ms, "transition_ms": self.transition_ms}

    def to_dict(self) -> dict:
        return {
            "total_ms": self.total_ms,
            "transitions": self.transitions,
            "breakdown": self.breakdown,
            "accel_macs": self.accel_macs,
            "cpu_macs": self.cpu_macs,
            "per_node_ms": dict(self.per_node_ms),
        }


def moved_bytes(node: Node, graph: Graph, dtype: DataType) -> int:
    width = BYTES_PER_ELEMENT[dtype]
    elems = sum(graph.spec(t).size for t in node.inputs) + graph.spec(node.output).size
    elems += sum(int(graph.weights[w].size) for w in node.weights)
    return elems * width


def estimate(graph: Graph, plan: PartitionPlan, profile: DeviceProfile) -> LatencyEstimate:
    order = topo_sort(graph)
    ids = tuple(n.id for n in order)
    if set(plan.assignment) != set(ids) or tuple(plan.order) != ids:
        raise InconsistentPlan("partition plan does not cover exactly this graph's nodes in topological order")
    c = profile.cost
    per_node, eng_ms = {}, {Engine.ACCEL: 0.0, Engine.CPU: 0.0}
    eng_macs = {Engine.ACCEL: 0, Engine.CPU: 0}
    for n in order:
        e = plan.assignment[n.id]
        macs = macs_of_node(n, graph.specs)
        nbytes = moved_bytes(n, graph, plan.dtype)
        if e is Engine.ACCEL:
            ms = macs / c.accel_macs_per_ms + nbytes / c.accel_bytes_per_ms
        else:
            ms = macs / c.cpu_macs_per_ms + nbytes / c.cpu_bytes_per_ms
        ms += c.per_op_overhead_ms
        per_node[n.id] = ms
        eng_ms[e] += ms
        eng_macs[e] += macs
    trans = plan.transitions
    trans_ms = trans * c.transition_ms
    return LatencyEstimate(
        per_node_ms=per_node,
        total_ms=eng_ms[Engine.ACCEL] + eng_ms[Engine.CPU] + trans_ms,
        transitions=trans,
        accel_ms=eng_ms[Engine.ACCEL],
        cpu_ms=eng_ms[Engine.CPU],
        transition_ms=trans_ms,
        accel_macs=eng_macs[Engine.ACCEL],
        cpu_macs=eng_macs[Engine.CPU],
    )


def estimate_graph(graph: Graph, profile: DeviceProfile, dtype=DataType.F16) -> LatencyEstimate:
    return estimate(graph, partition(graph, profile, dtype), profile)


# -- resolution sweeps -----------------------------------------------------------

NAMED_RESOLUTIONS = {
    "360p": (360, 640),
    "540p": (540, 960),
    "720p": (720, 1280),
    "900p": (900, 1600),
    "1080p": (1080, 1920),
}


def parse_resolution(label: str) -> tuple[int, int]:
    """``720p`` style names or explicit ``WIDTHxHEIGHT``; returns (height, width)."""
    label = label.strip()
    if label in NAMED_RESOLUTIONS:
        return NAMED_RESOLUTIONS[label]
    m = re.fullmatch(r"(\d+)x(\d+)", label)
    if m:
        w, h = int(m.group(1)), int(m.group(2))
        if w > 0 and h > 0:
            return h, w
    raise InvalidResolution(f"cannot parse resolution {label!r}")


@dataclass(frozen=True)
class SweepRow:
    label: str
    height: int
    width: int
    total_macs: int
    estimate: LatencyEstimate

    @property
    def pixels(self) -> int:
        return self.height * self.width


def _row(label, h, w, graph, profile, dtype) -> SweepRow:
    est = estimate_graph(graph, profile, dtype)
    return SweepRow(label, h, w, est.accel_macs + est.cpu_macs, est)


def resolution_sweep(spec: zoo.ArchSpec, profile: DeviceProfile, resolutions,
                     dtype=DataType.F16) -> list[SweepRow]:
    rows = []
    m = spec.spatial_multiple
    for label in resolutions:
        h, w = parse_resolution(label) if isinstance(label, str) else tuple(label)
        if h % m or w % m:
            raise InvalidResolution(f"{label}: {w}x{h} not divisible by {m} for {spec.family.value}")
        n, _, _, c = spec.input_shape
        g = zoo.build(spec.replace(input_shape=(n, h, w, c)))
        rows.append(_row(str(label), h, w, g, profile, dtype))
    return rows


def sweep_graph(graph: Graph, profile: DeviceProfile, resolutions, dtype=DataType.F16) -> list[SweepRow]:
    rows = []
    for label in resolutions:
        h, w = parse_resolution(label) if isinstance(label, str) else tuple(label)
        try:
            g = resize_inputs(graph, h, w)
        except ShapeMismatch as e:
            raise InvalidResolution(f"{label}: {e}") from None
        rows.append(_row(str(label), h, w, g, profile, dtype))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["resolution", "height", "width", "pixels", "total_macs", "total_ms",
                 "accel_ms", "cpu_ms", "transition_ms"])
    for r in rows:
        e = r.estimate
        wr.writerow([r.label, r.height, r.width, r.pixels, r.total_macs, f"{e.total_ms:.6f}",
                     f"{e.accel_ms:.6f}", f"{e.cpu_ms:.6f}", f"{e.transition_ms:.6f}"])
    return buf.getvalue()
