import pytest
from hypothesis import given, settings, strategies as st

from portanet import zoo
from portanet.builder import GraphBuilder
from portanet.complexity import total_macs
from portanet.devices import bundled_profile, partition
from portanet.errors import UnsupportedStride
from portanet.ir import DataType, OpKind, validate
from portanet.rewrite import UpsampleTarget, apply_pass, replace_transpose_conv, swap_activation
from portanet.serialization import graph_hash

from graphgen import random_graph


@pytest.fixture(scope="module")
def unet_tc():
    return zoo.build(zoo.ArchSpec(input_shape=(1, 128, 128, 3)))


def _kinds(g):
    return [n.kind for n in g.nodes]


def test_tc_to_d2s_reduces_macs(unet_tc):
    g = replace_transpose_conv(unet_tc, UpsampleTarget.DEPTH_TO_SPACE)
    assert OpKind.TRANSPOSE_CONV_2D not in _kinds(g)
    assert g.output_specs == unet_tc.output_specs
    assert total_macs(g) < total_macs(unet_tc)


def test_tc_to_bilinear_increases_macs(unet_tc):
    g = replace_transpose_conv(unet_tc, "RESIZE_BILINEAR")
    assert OpKind.TRANSPOSE_CONV_2D not in _kinds(g)
    assert g.output_specs == unet_tc.output_specs
    assert total_macs(g) > total_macs(unet_tc)


def test_rewrite_matches_builder_macs(unet_tc):
    for up in (zoo.Upsample.DEPTH_TO_SPACE, zoo.Upsample.RESIZE_BILINEAR):
        built = zoo.build(zoo.ArchSpec(input_shape=(1, 128, 128, 3), upsample=up))
        assert total_macs(replace_transpose_conv(unet_tc, up.value)) == total_macs(built)


def test_no_tc_is_identity():
    g = zoo.build(zoo.ArchSpec(input_shape=(1, 32, 32, 3), upsample="DEPTH_TO_SPACE"))
    assert graph_hash(replace_transpose_conv(g)) == graph_hash(g)


def test_idempotent(unet_tc):
    once = replace_transpose_conv(unet_tc)
    assert graph_hash(replace_transpose_conv(once)) == graph_hash(once)
    p = swap_activation(unet_tc)
    assert graph_hash(swap_activation(p)) == graph_hash(p)


def test_stride1_tc_is_rejected():
    b = GraphBuilder()
    g = b.build(b.tconv(b.input("x", (1, 4, 4, 2)), 3, k=3, stride=1, name="t1"))
    with pytest.raises(UnsupportedStride, match="t1"):
        replace_transpose_conv(g)


def test_rewrite_removes_mate30_fallbacks(unet_tc):
    p = bundled_profile("mate30-like")
    before = partition(unet_tc, p, DataType.F16).fallback_nodes
    after = partition(replace_transpose_conv(unet_tc), p, DataType.F16).fallback_nodes
    assert len(after) < len(before)


def test_relu_to_prelu(unet_tc):
    g = swap_activation(unet_tc, OpKind.RELU, OpKind.PRELU)
    n_act = sum(k is OpKind.RELU for k in _kinds(unet_tc))
    assert len(g.nodes) == len(unet_tc.nodes)
    assert len(g.weights) == len(unet_tc.weights) + n_act
    assert total_macs(g) == total_macs(unet_tc)
    slopes = [g.weights[n.weight("slope")] for n in g.nodes if n.kind is OpKind.PRELU]
    assert all((s == 0.25).all() for s in slopes)


def test_prelu_round_trip_restores_kinds(unet_tc):
    g = swap_activation(swap_activation(unet_tc), OpKind.PRELU, OpKind.RELU)
    assert _kinds(g) == _kinds(unet_tc)
    assert set(g.weights) == set(unet_tc.weights)


def test_swap_without_activations_is_identity():
    b = GraphBuilder()
    g = b.build(b.conv(b.input("x", (1, 4, 4, 2)), 2))
    assert graph_hash(swap_activation(g)) == graph_hash(g)


def test_swap_rejects_other_kinds(unet_tc):
    with pytest.raises(ValueError):
        swap_activation(unet_tc, OpKind.RELU, OpKind.ADD)


def test_apply_pass_names(unet_tc):
    assert OpKind.DEPTH_TO_SPACE in _kinds(apply_pass(unet_tc, "tc2d2s"))
    with pytest.raises(ValueError):
        apply_pass(unet_tc, "nope")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(list(UpsampleTarget)))
def test_random_tc_graphs_keep_output_shapes(seed, target):
    g = random_graph(seed, require_tc=True, tc_stride2_only=True)
    r = replace_transpose_conv(g, target)
    assert validate(r) == []
    assert OpKind.TRANSPOSE_CONV_2D not in _kinds(r)
    assert r.output_specs == g.output_specs
