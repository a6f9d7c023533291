"""Variant enumeration and quality-proxy vs latency frontiers.

Every variant follows the same pipeline: build the transpose-conv/ReLU form
of the architecture, apply the upsampling and activation rewrites, prune at
full resolution, then quantize. Latency is estimated at the full resolution
of the base spec. Numeric error is measured at a small evaluation resolution
against the float execution of the same variant, so the quality axis is
labelled ``psnr_vs_float_db`` and is not a restoration PSNR.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import quantization, rewrite, zoo
from .complexity import total_macs
from .devices import DeviceProfile, deployment_failures, partition
from .errors import PortanetError, VariantCapExceeded
from .interpreter import Precision
from .ir import DataType, Graph, resize_inputs
from .latency import estimate
from .pruning import prune

DEFAULT_CAP = 256
QUANT_MODES = ("float", "8", "16")
_QUANT_DTYPE = {"float": DataType.F16, "8": DataType.Q8, "16": DataType.Q16}
_UP_PASS = {
    zoo.Upsample.TRANSPOSE_CONV: None,
    zoo.Upsample.DEPTH_TO_SPACE: "tc2d2s",
    zoo.Upsample.RESIZE_BILINEAR: "tc2bilinear",
}
_UP_SHORT = {zoo.Upsample.TRANSPOSE_CONV: "TC", zoo.Upsample.DEPTH_TO_SPACE: "D2S",
             zoo.Upsample.RESIZE_BILINEAR: "Bilinear"}
_ACT_SHORT = {zoo.Activation.RELU: "ReLU", zoo.Activation.PRELU: "PReLU"}


def _quant_mode(q) -> str:
    s = str(q).strip().lower()
    if s in ("f", "fp", "float", "f16", "f32"):
        return "float"
    if s in ("8", "16"):
        return s
    raise ValueError(f"unknown quantization mode {q!r}; use float, 8 or 16")


@dataclass(frozen=True)
class VariantId:
    upsample: zoo.Upsample
    activation: zoo.Activation
    prune_target: float
    quant: str

    def sort_key(self) -> tuple:
        return (list(zoo.Upsample).index(self.upsample), list(zoo.Activation).index(self.activation),
                self.prune_target, QUANT_MODES.index(self.quant))

    @property
    def label(self) -> str:
        return (f"{_UP_SHORT[self.upsample]}-{_ACT_SHORT[self.activation]}"
                f"/p{self.prune_target:.2f}/{self.quant}")

    def to_dict(self) -> dict:
        return {"upsample": self.upsample.value, "activation": self.activation.value,
                "prune_target": self.prune_target, "quant": self.quant}


@dataclass(frozen=True)
class DeviceResult:
    status: str  # OK | DeploymentFailed
    latency_ms: Optional[float]
    fallback_count: int
    transitions: int
    reasons: tuple = ()

    def to_dict(self) -> dict:
        d = {"status": self.status, "fallback_count": self.fallback_count,
             "transitions": self.transitions}
        if self.status == "OK":
            d["latency_ms_estimate"] = self.latency_ms
        else:
            d["reasons"] = list(self.reasons)
        return d


@dataclass(frozen=True)
class VariantReport:
    variant: VariantId
    total_macs: Optional[int] = None
    achieved_reduction: Optional[float] = None
    devices: dict = field(default_factory=dict)  # profile name -> DeviceResult
    psnr_vs_float_db: Optional[float] = None
    l2_per_pixel: Optional[float] = None
    provenance: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def id(self) -> str:
        return self.variant.label

    def latency(self, device: str) -> Optional[float]:
        r = self.devices.get(device)
        return None if r is None else r.latency_ms

    def to_dict(self) -> dict:
        psnr = self.psnr_vs_float_db
        return {
            "id": self.id,
            "variant": self.variant.to_dict(),
            "total_macs": self.total_macs,
            "achieved_reduction": self.achieved_reduction,
            "devices": {k: v.to_dict() for k, v in sorted(self.devices.items())},
            "numeric_error": {
                "psnr_vs_float_db": psnr if psnr is None or math.isfinite(psnr) else "inf",
                "l2_per_pixel": self.l2_per_pixel,
            },
            "provenance": self.provenance,
            "error": self.error,
        }


def _device_result(graph: Graph, profile: DeviceProfile, dtype: DataType) -> DeviceResult:
    plan = partition(graph, profile, dtype)
    fails = deployment_failures(graph, profile, dtype)
    if fails:
        return DeviceResult("DeploymentFailed", None, len(plan.fallback_nodes), plan.transitions, tuple(fails))
    est = estimate(graph, plan, profile)
    return DeviceResult("OK", est.total_ms, len(plan.fallback_nodes), plan.transitions)


def _inputs(graph: Graph, seed: int, stream: int, count: int) -> list:
    r = np.random.default_rng([seed, stream])
    return [{t: r.uniform(0.0, 1.0, graph.spec(t).shape).astype(np.float32) for t in graph.inputs}
            for _ in range(count)]


def _arch_graph(base: Graph, up: zoo.Upsample, act: zoo.Activation) -> tuple[Graph, list]:
    g, passes = base, []
    if _UP_PASS[up]:
        g = rewrite.apply_pass(g, _UP_PASS[up])
        passes.append(_UP_PASS[up])
    if act is zoo.Activation.PRELU:
        g = rewrite.apply_pass(g, "relu2prelu")
        passes.append("relu2prelu")
    return g, passes


def enumerate_and_evaluate(base_spec: zoo.ArchSpec, profiles: Sequence[DeviceProfile],
                           prune_targets: Sequence[float] = (0.0, 0.05, 0.5),
                           quant_modes: Sequence = QUANT_MODES,
                           upsamples: Sequence = tuple(zoo.Upsample),
                           activations: Sequence = tuple(zoo.Activation),
                           eval_size: tuple[int, int] = (64, 64),
                           n_calib: int = 4, n_probes: int = 4,
                           cap: int = DEFAULT_CAP, round_to: int = 4, min_channels: int = 4
                           ) -> list[VariantReport]:
    """Evaluate every (upsample, activation, prune target, quant mode) variant.

    The float, unpruned variant is always included. Module errors are recorded
    on the affected variants and never abort the sweep.
    """
    targets = sorted({0.0} | {float(t) for t in prune_targets})
    modes = sorted({"float"} | {_quant_mode(q) for q in quant_modes}, key=QUANT_MODES.index)
    ups = sorted({zoo.Upsample(u) for u in upsamples}, key=list(zoo.Upsample).index)
    acts = sorted({zoo.Activation(a) for a in activations}, key=list(zoo.Activation).index)
    count = len(ups) * len(acts) * len(targets) * len(modes)
    if count > cap:
        raise VariantCapExceeded(f"{count} variants exceed the cap of {cap}")
    if any(not 0 <= t < 1 for t in targets):
        raise ValueError("prune targets must lie in [0, 1)")

    spec = base_spec.replace(upsample=zoo.Upsample.TRANSPOSE_CONV, activation=zoo.Activation.RELU)
    base = zoo.build(spec)
    eh, ew = eval_size
    reports = []
    for up in ups:
        for act in acts:
            try:
                arch, passes = _arch_graph(base, up, act)
                arch_err = None
            except (PortanetError, ValueError) as e:
                arch, passes, arch_err = None, [], f"{type(e).__name__}: {e}"
            for t in targets:
                reports.extend(_evaluate_pruned(arch, passes, arch_err, up, act, t, modes, profiles,
                                                spec, (eh, ew), n_calib, n_probes, round_to, min_channels))
    reports.sort(key=lambda r: r.variant.sort_key())
    return reports


def _evaluate_pruned(arch, passes, err, up, act, target, modes, profiles, spec, eval_size,
                     n_calib, n_probes, round_to, min_channels) -> list[VariantReport]:
    ids = [VariantId(up, act, target, m) for m in modes]
    prov = {"family": spec.family.value, "seed": spec.seed, "input_shape": list(spec.input_shape),
            "eval_size": list(eval_size), "n_calib": n_calib, "n_probes": n_probes}
    if err is not None:
        return [VariantReport(v, provenance={**prov, "passes": passes}, error=err) for v in ids]
    g, achieved, steps = arch, 0.0, list(passes)
    try:
        if target > 0:
            res = prune(arch, target, round_to=round_to, min_channels=min_channels)
            g, achieved = res.graph, res.achieved_reduction
            steps.append(f"prune({target:g})")
        ge = resize_inputs(g, *eval_size)
        calib = _inputs(ge, spec.seed, 1, n_calib)
        probes = _inputs(ge, spec.seed, 2, n_probes)
        ranges = quantization.calibrate(ge, calib) if any(m != "float" for m in modes) else None
    except (PortanetError, ValueError, OverflowError) as e:
        return [VariantReport(v, provenance={**prov, "passes": steps}, error=f"{type(e).__name__}: {e}")
                for v in ids]
    macs = total_macs(g)
    out = []
    for v in ids:
        vsteps = steps + ([] if v.quant == "float" else [f"quantize({v.quant})"])
        try:
            dtype = _QUANT_DTYPE[v.quant]
            devices = {p.name: _device_result(g, p, dtype) for p in profiles}
            if v.quant == "float":
                rep = quantization.error_report(ge, ge, probes, precision=Precision.EMULATED_F16)
            else:
                qg = quantization.quantize_graph(ge, int(v.quant), ranges)
                rep = quantization.error_report(ge, qg, probes)
            out.append(VariantReport(v, macs, achieved, devices, rep.psnr_db, rep.l2_per_pixel,
                                     {**prov, "passes": vsteps}))
        except (PortanetError, ValueError, OverflowError) as e:
            out.append(VariantReport(v, macs, achieved, provenance={**prov, "passes": vsteps},
                                     error=f"{type(e).__name__}: {e}"))
    return out


# -- Pareto frontier -----------------------------------------------------------------

Key = Union[str, Callable]


def _getter(key: Key) -> Callable:
    return key if callable(key) else (lambda r: getattr(r, key))


def pareto(reports: Sequence, quality_key: Key = "psnr_vs_float_db",
           latency_key: Key = "latency_ms") -> list:
    """Reports not dominated in (higher quality, lower latency); input order kept.

    ``q`` dominates ``r`` when q has >= quality and < latency, or > quality
    and <= latency. Reports whose quality or latency is None are skipped.
    """
    qf, lf = _getter(quality_key), _getter(latency_key)
    pts = [(i, qf(r), lf(r)) for i, r in enumerate(reports)]
    pts = [p for p in pts if p[1] is not None and p[2] is not None]
    pts.sort(key=lambda p: (p[2], -p[1]))
    keep, best_before = [], -math.inf
    i = 0
    while i < len(pts):
        j = i
        while j < len(pts) and pts[j][2] == pts[i][2]:
            j += 1
        group_best = pts[i][1]  # sorted by descending quality within a latency tie
        if group_best > best_before:
            keep.extend(p[0] for p in pts[i:j] if p[1] == group_best)
        best_before = max(best_before, group_best)
        i = j
    keep.sort()
    return [reports[k] for k in keep]


def pareto_bruteforce(reports: Sequence, quality_key: Key = "psnr_vs_float_db",
                      latency_key: Key = "latency_ms") -> list:
    """O(n^2) dominance check; the oracle for ``pareto``."""
    qf, lf = _getter(quality_key), _getter(latency_key)
    valid = [r for r in reports if qf(r) is not None and lf(r) is not None]
    out = []
    for r in valid:
        dominated = any((qf(o) >= qf(r) and lf(o) < lf(r)) or (qf(o) > qf(r) and lf(o) <= lf(r))
                        for o in valid if o is not r)
        if not dominated:
            out.append(r)
    return out


def device_frontier(reports: Sequence[VariantReport], device: str) -> list[VariantReport]:
    return pareto(reports, "psnr_vs_float_db", lambda r: r.latency(device))


# -- output ----------------------------------------------------------------------------

def report_dict(reports: Sequence[VariantReport], profiles: Sequence[DeviceProfile]) -> dict:
    return {
        "quality_axis": "psnr_vs_float_db",
        "latency_axis": "latency_ms_estimate",
        "variants": [r.to_dict() for r in reports],
        "frontier": {p.name: [r.id for r in device_frontier(reports, p.name)] for p in profiles},
    }


def report_json(reports: Sequence[VariantReport], profiles: Sequence[DeviceProfile]) -> str:
    return json.dumps(report_dict(reports, profiles), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _opt_type(v: VariantId) -> str:
    if v.prune_target > 0 and v.quant != "float":
        return "Pruning + Quantization"
    if v.prune_target > 0:
        return "Pruning"
    if v.quant != "float":
        return "Quantization"
    return "Architecture"


def _setting(v: VariantId) -> str:
    parts = [f"{_UP_SHORT[v.upsample]}-{_ACT_SHORT[v.activation]}"]
    if v.prune_target > 0:
        parts.append(f"-{v.prune_target * 100:g}% MAC")
    if v.quant != "float":
        parts.append(f"{v.quant}-bit PTQ")
    return ", ".join(parts)


def format_table(reports: Sequence[VariantReport], profiles: Sequence[DeviceProfile]) -> str:
    names = [p.name for p in profiles]
    head = ["Optimization Type", "Setting", "MAC (G)", "PSNR vs float (dB)"] + [f"{n} (ms)" for n in names]
    rows = [head]
    for r in reports:
        v = r.variant
        if r.error:
            rows.append([_opt_type(v), _setting(v), "-", "-"] + ["error"] * len(names))
            continue
        psnr = r.psnr_vs_float_db
        cells = [_opt_type(v), _setting(v), f"{r.total_macs / 1e9:.1f}",
                 "inf" if math.isinf(psnr) else f"{psnr:.2f}"]
        for n in names:
            d = r.devices[n]
            cells.append("Failed" if d.status != "OK" else f"{d.latency_ms:.1f}")
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(row, widths))).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
