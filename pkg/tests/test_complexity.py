import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from portanet import zoo
from portanet.builder import GraphBuilder
from portanet.complexity import complexity, format_table, macs_of_node, peak_activation_bytes, total_macs
from portanet.errors import UnresolvedShape
from portanet.interpreter import count_multiplies, random_inputs
from portanet.ir import Graph, resize_inputs
from portanet.serialization import dumps, loads

from graphgen import random_graph


def _oracle_conv_macs(h, w, cin, cout, k, stride):
    """Scalar nested loops over a SAME-padded conv, counting each multiply."""
    ho, wo = -(-h // stride), -(-w // stride)
    count = 0
    for _ in range(ho):
        for _ in range(wo):
            for _ in range(cout):
                for _ in range(k * k * cin):
                    count += 1
    return count


def test_conv_example_18432(single_conv):
    assert _oracle_conv_macs(8, 8, 4, 8, 3, 1) == 18_432
    assert total_macs(single_conv) == 18_432
    assert count_multiplies(single_conv, random_inputs(single_conv)) == 18_432


def test_transpose_conv_example_2048():
    b = GraphBuilder()
    g = b.build(b.tconv(b.input("x", (1, 4, 4, 8)), 4, k=2, stride=2))
    assert total_macs(g) == 4 * 4 * 8 * 2 * 2 * 4 == 2_048
    assert count_multiplies(g, random_inputs(g)) == 2_048


def test_zero_mac_ops_and_aux():
    b = GraphBuilder()
    x = b.input("x", (1, 4, 4, 16))
    d = b.d2s(x, 2)
    r = b.resize(d, 2)
    g = b.build(b.act(r, name="act"))
    rep = complexity(g)
    assert rep.total_macs == 0 and count_multiplies(g, random_inputs(g)) == 0
    assert rep.per_node["resize_001"].aux_ops == 16 * 16 * 4
    assert rep.per_node["act"].aux_ops == 0


def test_fully_connected_macs():
    b = GraphBuilder()
    g = b.build(b.fc(b.input("x", (1, 2, 3, 4)), 5))
    assert total_macs(g) == 24 * 5 == count_multiplies(g, random_inputs(g))


def test_passthrough_graph_has_zero_macs():
    b = GraphBuilder()
    g = b.build(b.act(b.input("x", (1, 4, 4, 1))))
    assert complexity(g).total_macs == 0


def test_unresolved_shape():
    b = GraphBuilder()
    g = b.build(b.conv(b.input("x", (1, 4, 4, 1)), 2))
    bare = g.replace(specs={})
    with pytest.raises(UnresolvedShape):
        macs_of_node(bare.nodes[0], bare.specs)


def test_total_is_sum_of_nodes(small_unet):
    rep = complexity(small_unet)
    assert rep.total_macs == sum(c.macs for c in rep.per_node.values())
    assert all(c.macs >= 0 and c.weight_bytes >= 0 for c in rep.per_node.values())


def test_mac_linear_in_pixels(small_unet):
    doubled = resize_inputs(small_unet, 128, 64)
    assert total_macs(doubled) == 2 * total_macs(small_unet)


def test_macs_survive_round_trip_and_reordering(small_unet):
    assert total_macs(loads(dumps(small_unet))) == total_macs(small_unet)
    reordered = small_unet.replace(nodes=tuple(reversed(small_unet.nodes)))
    assert total_macs(reordered) == total_macs(small_unet)


def test_peak_activation_bounds(small_unet):
    g = small_unet
    sizes = [g.spec(t).nbytes for t in g.tensor_names()]
    peak = peak_activation_bytes(g)
    assert max(sizes) <= peak <= sum(sizes)


def test_peak_activation_chain():
    b = GraphBuilder()
    x = b.input("x", (1, 4, 4, 1))
    y = b.act(b.act(x))
    g = b.build(y)
    # at most two 64-byte tensors are live at once in a chain
    assert peak_activation_bytes(g) == 2 * 64


def test_format_table_has_total(small_unet):
    text = format_table(small_unet, complexity(small_unet))
    assert text.splitlines()[-1].startswith("TOTAL")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_random_graphs_match_multiply_counter(seed):
    g = random_graph(seed)
    assert count_multiplies(g, random_inputs(g, seed)) == total_macs(g)
