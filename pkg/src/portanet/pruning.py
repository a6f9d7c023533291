"""Structured channel pruning toward a MAC-reduction target.

Channel counts are tied together by a group analysis. Each conv-family output
opens a group. Elementwise ops (ADD, MUL) merge the groups of their operands.
Activations, pools and resizes pass their group through. CONCATENATION sums
groups, and DEPTH_TO_SPACE / SPACE_TO_DEPTH scale them. Groups that reach a
graph input or output are fixed.

The uniform policy scales every free group by one factor ``alpha`` (found by
bisection), rounds to a multiple of ``round_to`` and clamps at
``min_channels``. If rounding leaves the result outside tolerance, the group
whose one-step shrink removes the most MACs is reduced repeatedly, and a
last hill-climb moves groups one step up or down, singly or in swapped pairs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from .builder import make_weights
from .complexity import total_macs
from .errors import InfeasibleTarget, ToleranceWarning
from .ir import Graph, Node, OpKind, check, infer_shapes, topo_sort

DEFAULT_TOLERANCE = 0.02
_CHANNEL_MAKERS = (OpKind.CONV_2D, OpKind.TRANSPOSE_CONV_2D, OpKind.FULLY_CONNECTED)
_PASS_THROUGH = (OpKind.RELU, OpKind.PRELU, OpKind.MAX_POOL_2D, OpKind.AVG_POOL_2D,
                 OpKind.RESIZE_BILINEAR, OpKind.RESIZE_NEAREST)


@dataclass(frozen=True)
class PruneResult:
    graph: Graph
    target_reduction: float
    achieved_reduction: float
    per_layer: dict = field(default_factory=dict)  # node id -> (old_channels, new_channels)
    alpha: float = 1.0

    def to_dict(self) -> dict:
        return {
            "target_reduction": self.target_reduction,
            "achieved_reduction": self.achieved_reduction,
            "alpha": self.alpha,
            "total_macs": total_macs(self.graph),
            "per_layer": {k: list(v) for k, v in self.per_layer.items()},
        }


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def add(self, x: str) -> None:
        self.parent.setdefault(x, x)

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller name wins so the result does not depend on visit order
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


class ChannelGroups:
    """Channel-group analysis of a float graph with resolved shapes."""

    def __init__(self, graph: Graph, round_to: int = 4, min_channels: int = 4):
        self.graph = graph
        self.order = topo_sort(graph)
        uf = _UnionFind()
        expr: dict[str, dict[str, Fraction]] = {}
        size: dict[str, int] = {}
        fixed: set[str] = set()
        block: dict[str, int] = {}  # group -> required divisibility from D2S

        for t in graph.inputs:
            g = f"<input:{t}>"
            uf.add(g)
            size[g] = graph.spec(t).shape[3]
            fixed.add(g)
            expr[t] = {g: Fraction(1)}
        for n in self.order:
            k = n.kind
            if k in _CHANNEL_MAKERS:
                uf.add(n.id)
                size[n.id] = n.attrs["out_channels"]
                expr[n.output] = {n.id: Fraction(1)}
            elif k in _PASS_THROUGH:
                expr[n.output] = dict(expr[n.inputs[0]])
            elif k is OpKind.CONCATENATION:
                acc: dict[str, Fraction] = {}
                for t in n.inputs:
                    for g, f in expr[t].items():
                        acc[g] = acc.get(g, Fraction(0)) + f
                expr[n.output] = acc
            elif k in (OpKind.ADD, OpKind.MUL):
                a, b = expr[n.inputs[0]], expr[n.inputs[1]]
                if len(a) == 1 and len(b) == 1 and list(a.values()) == list(b.values()):
                    uf.union(next(iter(a)), next(iter(b)))
                elif a != b:
                    fixed.update(a)
                    fixed.update(b)
                expr[n.output] = dict(a)
            elif k is OpKind.DEPTH_TO_SPACE:
                bb = n.attrs["block_size"] ** 2
                for g in expr[n.inputs[0]]:
                    block[g] = math.lcm(block.get(g, 1), bb)
                expr[n.output] = {g: f / bb for g, f in expr[n.inputs[0]].items()}
            elif k is OpKind.SPACE_TO_DEPTH:
                bb = n.attrs["block_size"] ** 2
                expr[n.output] = {g: f * bb for g, f in expr[n.inputs[0]].items()}
            else:
                raise AssertionError(k)
        for t in graph.outputs:
            fixed.update(expr[t])

        self.uf = uf
        self._expr = expr
        roots = sorted({uf.find(g) for g in size})
        self.groups = roots
        self.fixed = {uf.find(g) for g in fixed}
        self.original = {r: 0 for r in roots}
        for g, s in size.items():
            self.original[uf.find(g)] = s
        self.step, self.floor = {}, {}
        for r in roots:
            b = 1
            for g, v in block.items():
                if uf.find(g) == r:
                    b = math.lcm(b, v)
            self.step[r] = round_to * b
            self.floor[r] = min(min_channels * b, self.original[r])
        self.free = [r for r in roots if r not in self.fixed]

    def channels(self, tensor: str, counts: dict[str, int]) -> int:
        total = sum(f * counts[self.uf.find(g)] for g, f in self._expr[tensor].items())
        if total.denominator != 1:
            raise AssertionError(f"non-integer channel count for {tensor}")
        return int(total)

    def identity(self) -> dict[str, int]:
        return dict(self.original)

    def scaled(self, alpha: float) -> dict[str, int]:
        counts = self.identity()
        for r in self.free:
            step, orig = self.step[r], self.original[r]
            n = step * math.floor(alpha * orig / step + 0.5)
            counts[r] = min(orig, max(self.floor[r], n))
        return counts

    def floors(self) -> dict[str, int]:
        counts = self.identity()
        for r in self.free:
            counts[r] = self.floor[r]
        return counts

    def macs(self, counts: dict[str, int]) -> int:
        """Total MACs implied by ``counts``; spatial sizes are unchanged by pruning."""
        g, total = self.graph, 0
        for n in self.order:
            if n.kind not in _CHANNEL_MAKERS:
                continue
            c_in = self.channels(n.inputs[0], counts)
            c_out = self.channels(n.output, counts)
            a = n.attrs
            if n.kind is OpKind.CONV_2D:
                _, ho, wo, _ = g.spec(n.output).shape
                total += g.spec(n.output).shape[0] * ho * wo * c_out * a["kernel_h"] * a["kernel_w"] * c_in
            elif n.kind is OpKind.TRANSPOSE_CONV_2D:
                nb, hi, wi, _ = g.spec(n.inputs[0]).shape
                total += nb * hi * wi * c_in * a["kernel_h"] * a["kernel_w"] * c_out
            else:
                nb, h, w, _ = g.spec(n.inputs[0]).shape
                total += nb * h * w * c_in * c_out
        return total


def _greedy(groups: ChannelGroups, counts: dict, base: int, target: float, tol: float):
    """Shrink the most MAC-heavy group one step at a time until within tolerance."""
    counts = dict(counts)
    trail = [dict(counts)]
    while 1 - groups.macs(counts) / base < target - tol:
        best, best_gain = None, 0
        cur = groups.macs(counts)
        for r in groups.free:
            n = counts[r] - groups.step[r]
            if n < groups.floor[r]:
                continue
            trial = dict(counts)
            trial[r] = n
            gain = cur - groups.macs(trial)
            if gain > best_gain:
                best, best_gain = r, gain
        if best is None:
            break
        counts[best] -= groups.step[best]
        trail.append(dict(counts))
    return trail


def _polish(groups: ChannelGroups, counts: dict, base: int, target: float, tol: float) -> dict:
    """Hill-climb on |reduction - target| with single-step moves and one-down/one-up swaps."""
    counts = dict(counts)

    def err(c):
        return abs(1 - groups.macs(c) / base - target)

    cur = err(counts)
    for _ in range(4 * len(groups.free) + 4):
        if cur <= tol:
            break
        moves = [{r: d} for r in groups.free for d in (-1, 1)]
        moves += [{a: -1, b: 1} for a in groups.free for b in groups.free if a != b]
        best, best_err = None, cur
        for mv in moves:
            trial = dict(counts)
            for r, d in mv.items():
                trial[r] += d * groups.step[r]
            if any(not groups.floor[r] <= trial[r] <= groups.original[r] for r in mv):
                continue
            e = err(trial)
            if e < best_err:
                best, best_err = trial, e
        if best is None:
            break
        counts, cur = best, best_err
    return counts


def _rebuild(graph: Graph, groups: ChannelGroups, counts: dict) -> tuple[Graph, dict]:
    weights = dict(graph.weights)
    seeds = dict(graph.weight_seeds)
    shapes = {t: graph.spec(t).shape for t in graph.inputs}
    nodes, per_layer = [], {}
    for n in groups.order:
        node = n
        if n.kind in _CHANNEL_MAKERS:
            new_c = groups.channels(n.output, counts)
            per_layer[n.id] = (n.attrs["out_channels"], new_c)
            if new_c != n.attrs["out_channels"]:
                node = Node(n.id, n.kind, n.inputs, n.output, {**n.attrs, "out_channels": new_c}, n.weights)
        ins = [shapes[t] for t in node.inputs]
        old = graph.spec(n.output).shape
        new_out = (old[0], old[1], old[2], groups.channels(n.output, counts))
        shapes[node.output] = new_out
        if node.weights:
            want_in = [graph.spec(t).shape for t in n.inputs]
            if ins != want_in or new_out != old:
                vals, ws = make_weights(graph.seed, node, ins)
                weights.update(vals)
                seeds.update(ws)
        nodes.append(node)
    specs = {t: graph.specs[t] for t in graph.inputs}
    g = graph.replace(nodes=tuple(nodes), weights=weights, weight_seeds=seeds, specs=specs)
    return infer_shapes(g), per_layer


def prune(graph: Graph, target: float, round_to: int = 4, min_channels: int = 4,
          tolerance: float = DEFAULT_TOLERANCE, policy: str = "uniform") -> PruneResult:
    """Prune channels so total MACs drop by ``target`` (a fraction in (0, 1))."""
    if not 0 < target < 1:
        raise ValueError(f"target must be in (0, 1), got {target}")
    if policy != "uniform":
        raise ValueError(f"unknown pruning policy {policy!r}")
    if round_to < 1 or min_channels < 1:
        raise ValueError("round_to and min_channels must be >= 1")
    check(graph)
    if graph.quant:
        raise ValueError("prune the float graph before quantizing it")
    groups = ChannelGroups(graph, round_to, min_channels)
    base = groups.macs(groups.identity())
    if base == 0:
        raise InfeasibleTarget("graph has no MACs to prune")

    def red(counts):
        return 1 - groups.macs(counts) / base

    best_possible = red(groups.floors())
    if best_possible < target - tolerance:
        raise InfeasibleTarget(f"target {target:.3f} unreachable: channel floors allow at most "
                               f"{best_possible:.3f} reduction")

    lo, hi = 0.0, 1.0  # red(scaled(lo)) >= target > red(scaled(hi)) once bracketed
    if red(groups.scaled(hi)) >= target:
        lo = hi
    else:
        for _ in range(50):
            mid = (lo + hi) / 2
            if red(groups.scaled(mid)) >= target:
                lo = mid
            else:
                hi = mid
    # identity first so that ties at tiny targets keep alpha = 1
    cands = [(groups.identity(), 1.0), (groups.scaled(hi), hi), (groups.scaled(lo), lo)]
    if min(abs(red(c) - target) for c, _ in cands) > tolerance:
        cands += [(c, hi) for c in _greedy(groups, cands[1][0], base, target, tolerance)]
    counts, alpha = min(cands, key=lambda ca: abs(red(ca[0]) - target))
    if abs(red(counts) - target) > tolerance:
        counts = _polish(groups, counts, base, target, tolerance)
    achieved = red(counts)
    if abs(achieved - target) > tolerance:
        warnings.warn(f"pruning reached {achieved:.4f} for target {target:.4f} "
                      f"(tolerance {tolerance})", ToleranceWarning, stacklevel=2)
    pruned, per_layer = _rebuild(graph, groups, counts)
    return PruneResult(pruned, float(target), float(achieved), per_layer, float(alpha))
