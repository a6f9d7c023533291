import math

import pytest

from portanet import zoo
from portanet.builder import GraphBuilder
from portanet.complexity import total_macs
from portanet.devices import (CostModel, DeviceProfile, bundled_profile, fully_supported,
                              partition)
from portanet.errors import InconsistentPlan, InvalidResolution
from portanet.ir import DataType, OpKind
from portanet.latency import (estimate, estimate_graph, moved_bytes, parse_resolution, resolution_sweep,
                              sweep_csv, sweep_graph)

INF = math.inf


def _profile(supported_kinds, accel=1e9, cpu=1e7, **cost):
    c = CostModel(accel, cpu, INF, INF, **cost)
    return DeviceProfile("t", frozenset((k, DataType.F16) for k in supported_kinds), c)


@pytest.fixture(scope="module")
def giga_conv():
    # 100*100 pixels * 100 in * 1000 out = 1e9 MACs
    b = GraphBuilder()
    return b.build(b.conv(b.input("x", (1, 100, 100, 100)), 1000, k=1, name="c"))


def test_one_gmac_on_accel_is_one_ms(giga_conv):
    assert total_macs(giga_conv) == 10**9
    est = estimate_graph(giga_conv, _profile([OpKind.CONV_2D]))
    assert est.total_ms == pytest.approx(1.0, rel=1e-12)
    assert est.per_node_ms == {"c": est.total_ms}


def test_same_node_on_cpu_is_100_ms(giga_conv):
    est = estimate_graph(giga_conv, _profile([]))
    assert est.total_ms == pytest.approx(100.0, rel=1e-12)
    assert est.cpu_ms == est.total_ms and est.accel_ms == 0.0


def test_overheads_and_transitions():
    b = GraphBuilder()
    x = b.input("x", (1, 4, 4, 4))
    y = b.conv(b.d2s(b.conv(x, 8), 2), 2)
    g = b.build(y)
    p = _profile([OpKind.CONV_2D], per_op_overhead_ms=0.5, transition_ms=3.0)
    est = estimate_graph(g, p)
    assert est.transitions == 2
    assert est.transition_ms == 6.0
    mac_ms = total_macs(g) / 1e9
    assert est.total_ms == pytest.approx(mac_ms + 3 * 0.5 + 6.0)


def test_total_is_sum_of_breakdown():
    g = zoo.build(zoo.ArchSpec(input_shape=(1, 64, 64, 3)))
    for name in ("mate30-like", "pixel4-like", "reno3-like"):
        est = estimate_graph(g, bundled_profile(name))
        b = est.breakdown
        assert est.total_ms == pytest.approx(b["accel_ms"] + b["cpu_ms"] + b["transition_ms"])
        assert min(b.values()) >= 0
        assert est.total_ms == pytest.approx(sum(est.per_node_ms.values()) + b["transition_ms"])


def test_zero_mac_ops_still_cost_bandwidth():
    b = GraphBuilder()
    g = b.build(b.d2s(b.input("x", (1, 8, 8, 8)), 2))
    assert moved_bytes(g.nodes[0], g, DataType.F16) == 2 * 2 * 512
    p = DeviceProfile("bw", frozenset(), CostModel(10.0, 1.0, 100.0, 10.0))
    assert estimate_graph(g, p).total_ms == pytest.approx(2048 / 10.0)


def test_linear_in_engine_macs():
    b = GraphBuilder()
    x = b.input("x", (1, 8, 8, 4))
    g = b.build(b.conv(b.conv(x, 8, name="a"), 4, name="b"))
    p = DeviceProfile("half", frozenset({(OpKind.CONV_2D, DataType.F16)}), CostModel(1e6, 1e3, INF, INF))
    est = estimate_graph(g, p)
    assert est.total_ms == pytest.approx(est.accel_macs / 1e6 + est.cpu_macs / 1e3)


def test_d2s_faster_than_tc_on_mate30():
    p = bundled_profile("mate30-like")
    base = zoo.ArchSpec(input_shape=(1, 128, 128, 3))
    tc = estimate_graph(zoo.build(base), p)
    d2s = estimate_graph(zoo.build(base.replace(upsample="DEPTH_TO_SPACE")), p)
    assert d2s.total_ms < tc.total_ms


def test_fully_supported_never_slower():
    g = zoo.build(zoo.ArchSpec(input_shape=(1, 64, 64, 3)))
    for name in ("mate30-like", "pixel4-like", "reno3-like"):
        p = bundled_profile(name)
        assert estimate_graph(g, fully_supported(p)).total_ms <= estimate_graph(g, p).total_ms


def test_inconsistent_plan():
    g = zoo.build(zoo.ArchSpec(input_shape=(1, 32, 32, 3)))
    other = zoo.build(zoo.ArchSpec(input_shape=(1, 32, 32, 3), upsample="DEPTH_TO_SPACE"))
    p = bundled_profile("reno3-like")
    with pytest.raises(InconsistentPlan):
        estimate(g, partition(other, p, DataType.F16), p)


def test_parse_resolution():
    assert parse_resolution("720p") == (720, 1280)
    assert parse_resolution("640x360") == (360, 640)
    for bad in ("huge", "0x10", "12"):
        with pytest.raises(InvalidResolution):
            parse_resolution(bad)


def test_sweep_increasing_in_pixels():
    rows = resolution_sweep(zoo.ArchSpec(), bundled_profile("mate30-like"), ["360p", "720p", "900p"])
    totals = [r.estimate.total_ms for r in rows]
    assert totals == sorted(totals) and len(set(totals)) == 3


def test_sweep_single_row_and_invalid():
    rows = resolution_sweep(zoo.ArchSpec(), bundled_profile("reno3-like"), ["64x64"])
    assert len(rows) == 1 and rows[0].pixels == 64 * 64
    with pytest.raises(InvalidResolution):
        resolution_sweep(zoo.ArchSpec(), bundled_profile("reno3-like"), ["63x64"])


def test_doubling_resolution_quadruples_mac_term():
    b = GraphBuilder()
    x = b.input("x", (1, 16, 16, 3))
    g = b.build(b.conv(b.conv(x, 8), 3))
    p = _profile([OpKind.CONV_2D])
    small, big = sweep_graph(g, p, ["16x16", "32x32"])
    assert big.estimate.total_ms == pytest.approx(4 * small.estimate.total_ms, rel=1e-12)
    assert big.total_macs == 4 * small.total_macs


def test_sweep_csv_shape():
    rows = sweep_graph(zoo.build(zoo.ArchSpec(input_shape=(1, 32, 32, 3))), bundled_profile("reno3-like"),
                       ["32x32", "64x64"])
    lines = sweep_csv(rows).splitlines()
    assert lines[0].startswith("resolution,height,width") and len(lines) == 3
