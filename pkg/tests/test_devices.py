import pytest

from portanet import zoo
from portanet.builder import GraphBuilder
from portanet.devices import (BUNDLED, CostModel, Engine, bundled_profile, bundled_profile_text,
                              deployment_failures, fully_supported, load_profile, loads_profile, partition)
from portanet.errors import InvalidCost, ParseError
from portanet.ir import DataType, OpKind

COST = "[cost]\naccel_macs_per_ms = 100.0\ncpu_macs_per_ms = 10.0\naccel_bytes_per_ms = 10.0\ncpu_bytes_per_ms = 1.0\n"


@pytest.fixture(scope="module")
def unet_tc():
    return zoo.build(zoo.ArchSpec(input_shape=(1, 64, 64, 3)))


def _ids(g, kind):
    return {n.id for n in g.nodes if n.kind is kind}


def test_mate30_lacks_transpose_conv():
    p = bundled_profile("mate30-like")
    assert not p.supports(OpKind.TRANSPOSE_CONV_2D, DataType.F16)
    assert p.supports(OpKind.CONV_2D, DataType.F16)


def test_reno3_supports_every_unet_op(unet_tc):
    p = bundled_profile("reno3-like")
    assert all(p.supports(n.kind, DataType.F16) for n in unet_tc.nodes)


def test_mate30_fallback_is_exactly_tc(unet_tc):
    plan = partition(unet_tc, bundled_profile("mate30-like"), DataType.F16)
    assert plan.fallback_nodes == _ids(unet_tc, OpKind.TRANSPOSE_CONV_2D)
    assert {str(plan.fallback_reasons[n]) for n in plan.fallback_nodes} == {"UNSUPPORTED_KIND"}


def test_pixel4_taints_conv_after_concat(unet_tc):
    plan = partition(unet_tc, bundled_profile("pixel4-like"), DataType.F16)
    cats = _ids(unet_tc, OpKind.CONCATENATION)
    after = {n.id for n in unet_tc.nodes if n.kind is OpKind.CONV_2D and set(n.inputs) & cats}
    assert plan.fallback_nodes == _ids(unet_tc, OpKind.TRANSPOSE_CONV_2D) | cats | after
    assert all(str(plan.fallback_reasons[c]).startswith("TAINTED_BY(concat") for c in after)


def test_pixel4_quantized_concat_without_taint(unet_tc):
    g = zoo.build(zoo.ArchSpec(upsample="RESIZE_BILINEAR", input_shape=(1, 64, 64, 3)))
    plan = partition(g, bundled_profile("pixel4-like"), DataType.Q8)
    assert plan.fallback_nodes == _ids(g, OpKind.CONCATENATION)


def test_mate30_quantized_prelu_and_bilinear_fall_back():
    g = zoo.build(zoo.ArchSpec(upsample="RESIZE_BILINEAR", activation="PRELU", input_shape=(1, 64, 64, 3)))
    plan = partition(g, bundled_profile("mate30-like"), DataType.Q8)
    assert plan.fallback_nodes == _ids(g, OpKind.PRELU) | _ids(g, OpKind.RESIZE_BILINEAR)
    assert partition(g, bundled_profile("mate30-like"), DataType.F16).fallback_nodes == set()


def test_reno3_no_fallback(unet_tc):
    plan = partition(unet_tc, bundled_profile("reno3-like"), DataType.F16)
    assert plan.fallback_nodes == set() and len(plan.segments) == 1


def test_empty_profile_everything_falls_back(unet_tc):
    p = loads_profile('name = "empty"\n' + COST)
    plan = partition(unet_tc, p, DataType.F16)
    assert plan.fallback_nodes == {n.id for n in unet_tc.nodes}
    assert len(plan.segments) == 1 and plan.segments[0].engine is Engine.CPU


def test_segments_reconstruct_order(unet_tc):
    for p in map(bundled_profile, BUNDLED):
        plan = partition(unet_tc, p, DataType.F16)
        flat = [n for s in plan.segments for n in s.nodes]
        assert tuple(flat) == plan.order
        for a, b in zip(plan.segments, plan.segments[1:]):
            assert a.engine is not b.engine


def test_enlarging_support_never_adds_fallbacks(unet_tc):
    for p in map(bundled_profile, BUNDLED):
        for dt in (DataType.F16, DataType.Q8):
            small = partition(unet_tc, p, dt).fallback_nodes
            big = partition(unet_tc, fully_supported(p), dt).fallback_nodes
            assert big <= small and big == set()


def test_taint_chain_to_fixpoint():
    text = ('[supported]\nF32 = ["CONV_2D", "RELU"]\n'
            '[[taint]]\ntrigger = "MUL"\naffected = ["RELU"]\n'
            '[[taint]]\ntrigger = "RELU"\naffected = ["CONV_2D"]\n' + COST)
    p = loads_profile(text)
    b = GraphBuilder()
    x = b.input("x", (1, 4, 4, 2))
    m = b.mul(x, x, name="m")
    r = b.act(m, name="r")
    c = b.conv(r, 2, name="c")
    d = b.conv(c, 2, name="d")
    plan = partition(b.build(d), p, DataType.F32)
    assert plan.fallback_nodes == {"m", "r", "c"}
    assert str(plan.fallback_reasons["c"]) == "TAINTED_BY(r)"


def test_no_unsupported_kinds_means_no_taint():
    p = bundled_profile("pixel4-like")
    b = GraphBuilder()
    x = b.input("x", (1, 4, 4, 2))
    g = b.build(b.conv(b.act(b.conv(x, 4)), 2))
    assert partition(g, p, DataType.F16).fallback_nodes == set()


def test_deployment_failures():
    dbpn = zoo.build(zoo.ArchSpec(family="DBPN_LIKE", input_shape=(1, 32, 32, 3), base_channels=8))
    for name in BUNDLED:
        assert deployment_failures(dbpn, bundled_profile(name), DataType.F16)
    rdn = zoo.build(zoo.ArchSpec(family="RDN_LIKE", input_shape=(1, 16, 16, 3), base_channels=8, growth=4))
    assert deployment_failures(rdn, bundled_profile("pixel4-like"), DataType.F16)
    assert not deployment_failures(rdn, bundled_profile("reno3-like"), DataType.F16)
    unet = zoo.build(zoo.ArchSpec(input_shape=(1, 32, 32, 3)))
    assert deployment_failures(unet, bundled_profile("mate30-like"), DataType.Q16)
    assert not deployment_failures(unet, bundled_profile("reno3-like"), DataType.Q16)


def test_cost_validation():
    with pytest.raises(InvalidCost):
        CostModel(10.0, 10.0, 1.0, 1.0)
    with pytest.raises(InvalidCost):
        CostModel(10.0, 1.0, 1.0, 1.0, transition_ms=-1)
    with pytest.raises(InvalidCost):
        loads_profile(COST.replace("cpu_macs_per_ms = 10.0", "cpu_macs_per_ms = 0.0"))


def test_parse_errors():
    with pytest.raises(ParseError, match="FOO"):
        loads_profile('[supported]\nF16 = ["FOO"]\n' + COST)
    with pytest.raises(ParseError):
        loads_profile('[supported]\nF16 = ["CONV_2D"]\n')
    with pytest.raises(ParseError):
        loads_profile("this is = = not toml")


def test_profile_file_round_trip(tmp_path):
    for name in BUNDLED:
        path = tmp_path / f"{name}.toml"
        path.write_text(bundled_profile_text(name))
        assert load_profile(path) == bundled_profile(name)


def test_plan_to_dict(unet_tc):
    d = partition(unet_tc, bundled_profile("mate30-like"), "F16").to_dict()
    assert d["dtype"] == "F16" and set(d["assignment"].values()) == {"ACCEL", "CPU"}
