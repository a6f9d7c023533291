import itertools
import warnings

import pytest

from portanet import zoo
from portanet.builder import GraphBuilder
from portanet.complexity import total_macs
from portanet.errors import InfeasibleTarget, ToleranceWarning
from portanet.ir import OpKind, validate
from portanet.pruning import ChannelGroups, prune
from portanet.quantization import calibrate, quantize_graph
from portanet.interpreter import random_inputs


def _chain(c1=16, c2=16, hw=32):
    b = GraphBuilder(3)
    x = b.input("x", (1, hw, hw, 3))
    return b.build(b.conv(b.conv(b.conv(x, c1), c2), 3))


def _chain_oracle(target, step, hw=32):
    """Exhaustive search over rounded channel pairs for the 3->16->16->3 chain."""
    def macs(a, b):
        return hw * hw * 9 * (3 * a + a * b + b * 3)
    base = macs(16, 16)
    reds = [1 - macs(a, b) / base
            for a, b in itertools.product(range(4, 17, step), repeat=2)
            if a % step == 0 and b % step == 0]
    return min(reds, key=lambda r: abs(r - target))


@pytest.fixture(scope="module")
def unet_bilinear():
    # reductions depend only on channel counts, so 64x64 behaves like 720p
    return zoo.build(zoo.ArchSpec(input_shape=(1, 64, 64, 3), upsample="RESIZE_BILINEAR"))


def test_chain_round_to_2_hits_half():
    r = prune(_chain(), 0.5, round_to=2)
    assert abs(r.achieved_reduction - 0.5) <= 0.02
    assert abs(r.achieved_reduction - _chain_oracle(0.5, 2)) <= 0.02
    assert 1 - total_macs(r.graph) / total_macs(_chain()) == pytest.approx(r.achieved_reduction)


def test_chain_round_to_4_returns_best_feasible_with_warning():
    # no multiple-of-4 pair lands within 2 points of 0.5, so the closest one comes back with a warning
    best = _chain_oracle(0.5, 4)
    assert abs(best - 0.5) > 0.02
    with pytest.warns(ToleranceWarning):
        r = prune(_chain(), 0.5, round_to=4)
    assert r.achieved_reduction == pytest.approx(best)
    assert validate(r.graph) == []


def test_target_near_zero_is_identity():
    g = _chain()
    r = prune(g, 1e-6)
    assert r.alpha == 1.0
    assert all(old == new for old, new in r.per_layer.values())
    assert total_macs(r.graph) == total_macs(g)


def test_infeasible_target():
    with pytest.raises(InfeasibleTarget):
        prune(_chain(), 0.99)


def test_bad_arguments():
    for t in (0, 1, -0.2):
        with pytest.raises(ValueError):
            prune(_chain(), t)
    with pytest.raises(ValueError):
        prune(_chain(), 0.3, policy="magnitude")


def test_five_percent_on_unet_bilinear(unet_bilinear):
    r = prune(unet_bilinear, 0.05)
    assert 0.03 <= r.achieved_reduction <= 0.07
    assert validate(r.graph) == []


def test_per_layer_matches_graph(unet_bilinear):
    r = prune(unet_bilinear, 0.3)
    for nid, (_, new) in r.per_layer.items():
        node = r.graph.node(nid)
        assert node.attrs["out_channels"] == new == r.graph.spec(node.output).shape[3]
    groups = ChannelGroups(unet_bilinear)
    assert 1 - total_macs(r.graph) / groups.macs(groups.identity()) == pytest.approx(r.achieved_reduction)


def test_floor_and_rounding(unet_bilinear):
    r = prune(unet_bilinear, 0.5)
    changed = [new for old, new in r.per_layer.values() if new != old]
    assert changed and all(n >= 4 and n % 4 == 0 for n in changed)


def test_monotone_and_io_preserved(unet_bilinear):
    prev_red, prev_macs, prev_ch = -1.0, None, None
    for t in (0.05, 0.1, 0.2, 0.3, 0.5):
        r = prune(unet_bilinear, t)
        assert r.graph.input_specs == unet_bilinear.input_specs
        assert r.graph.output_specs == unet_bilinear.output_specs
        m = total_macs(r.graph)
        ch = sum(new for _, new in r.per_layer.values())
        assert r.achieved_reduction >= prev_red
        if prev_macs is not None:
            assert m <= prev_macs and ch <= prev_ch
        prev_red, prev_macs, prev_ch = r.achieved_reduction, m, ch


def test_skip_connections_share_groups():
    b = GraphBuilder()
    x = b.input("x", (1, 8, 8, 3))
    a = b.conv(x, 16, name="a")
    c = b.conv(a, 16, name="c")
    s = b.add(a, c)
    y = b.conv(s, 3, name="out")
    g = b.build(y)
    groups = ChannelGroups(g)
    assert groups.uf.find("a") == groups.uf.find("c")
    r = prune(g, 0.4, round_to=2)
    assert r.per_layer["a"][1] == r.per_layer["c"][1]
    assert validate(r.graph) == []


def test_concat_sums_channels():
    b = GraphBuilder()
    x = b.input("x", (1, 8, 8, 3))
    a = b.conv(x, 8, name="a")
    c = b.conv(x, 12, name="c")
    cat = b.concat([a, c])
    g = b.build(b.conv(cat, 3, name="out"))
    r = prune(g, 0.3, round_to=2, min_channels=2)
    assert r.graph.spec(cat).shape[3] == r.per_layer["a"][1] + r.per_layer["c"][1]


def test_d2s_groups_keep_divisibility():
    g = zoo.build(zoo.ArchSpec(input_shape=(1, 32, 32, 3), upsample="DEPTH_TO_SPACE", base_channels=16))
    r = prune(g, 0.3)
    for n in r.graph.nodes:
        if n.kind is OpKind.DEPTH_TO_SPACE:
            assert r.graph.spec(n.inputs[0]).shape[3] % 16 == 0
    assert validate(r.graph) == []


def test_prune_then_quantize(unet_bilinear):
    r = prune(unet_bilinear, 0.2)
    ranges = calibrate(r.graph, [random_inputs(r.graph, s) for s in range(2)])
    q = quantize_graph(r.graph, 8, ranges)
    assert validate(q) == []


def test_quantized_graph_rejected(unet_bilinear):
    ranges = calibrate(unet_bilinear, [random_inputs(unet_bilinear, 0)])
    with pytest.raises(ValueError):
        prune(quantize_graph(unet_bilinear, 8, ranges), 0.2)


def test_deterministic(unet_bilinear):
    a, b = prune(unet_bilinear, 0.2), prune(unet_bilinear, 0.2)
    assert a.to_dict() == b.to_dict()
