import json
import math
import random
from collections import namedtuple

import pytest
from hypothesis import given, settings, strategies as st

from portanet import zoo
from portanet.devices import BUNDLED, bundled_profile
from portanet.errors import VariantCapExceeded
from portanet.frontier import (VariantId, device_frontier, enumerate_and_evaluate, format_table, pareto,
                               pareto_bruteforce, report_dict, report_json)

P = namedtuple("P", "name psnr_vs_float_db latency_ms")
SPEC = zoo.ArchSpec(input_shape=(1, 128, 128, 3), base_channels=16, seed=7)


@pytest.fixture(scope="module")
def profiles():
    return [bundled_profile(n) for n in BUNDLED]


@pytest.fixture(scope="module")
def sweep(profiles):
    return enumerate_and_evaluate(SPEC, profiles, eval_size=(32, 32), n_calib=2, n_probes=2)


def test_cardinality_and_order(sweep):
    assert len(sweep) == 54
    keys = [r.variant.sort_key() for r in sweep]
    assert keys == sorted(keys) and len(set(keys)) == 54
    assert all(r.error is None for r in sweep)


def test_float_baseline_included(profiles):
    reps = enumerate_and_evaluate(SPEC, profiles, prune_targets=(0.05,), quant_modes=("8",),
                                  upsamples=["TRANSPOSE_CONV"], activations=["RELU"],
                                  eval_size=(32, 32), n_calib=1, n_probes=1)
    assert [r.id for r in reps] == ["TC-ReLU/p0.00/float", "TC-ReLU/p0.00/8",
                                    "TC-ReLU/p0.05/float", "TC-ReLU/p0.05/8"]


def test_mate30_fallbacks_by_upsample(sweep):
    for r in sweep:
        d = r.devices["mate30-like"]
        if r.variant.upsample is zoo.Upsample.TRANSPOSE_CONV:
            assert d.fallback_count > 0
        elif r.variant.upsample is zoo.Upsample.DEPTH_TO_SPACE and r.variant.quant == "float":
            assert d.fallback_count == 0


def test_failed_devices_have_no_latency(sweep):
    failed = [(r, d) for r in sweep for d in r.devices.values() if d.status == "DeploymentFailed"]
    assert failed
    for r, d in failed:
        assert d.latency_ms is None and "latency_ms_estimate" not in d.to_dict()


def test_quality_direction(sweep):
    by = {r.id: r for r in sweep}
    for up in ("TC", "D2S", "Bilinear"):
        for act in ("ReLU", "PReLU"):
            q8 = by[f"{up}-{act}/p0.00/8"].psnr_vs_float_db
            q16 = by[f"{up}-{act}/p0.00/16"].psnr_vs_float_db
            assert q16 > q8


def test_pruning_reduces_macs(sweep):
    by = {r.id: r for r in sweep}
    assert by["D2S-ReLU/p0.50/float"].total_macs < by["D2S-ReLU/p0.05/float"].total_macs \
        < by["D2S-ReLU/p0.00/float"].total_macs


def test_device_frontier_matches_oracle(sweep, profiles):
    for p in profiles:
        fast = device_frontier(sweep, p.name)
        slow = pareto_bruteforce(sweep, "psnr_vs_float_db", lambda r: r.latency(p.name))
        assert [r.id for r in fast] == [r.id for r in slow]
        ids = {r.id for r in sweep}
        assert all(r.id in ids for r in fast)


def test_report_json_round_trip(sweep, profiles):
    text = report_json(sweep, profiles)
    d = json.loads(text)
    assert d["quality_axis"] == "psnr_vs_float_db"
    assert len(d["variants"]) == 54 and set(d["frontier"]) == set(BUNDLED)
    assert report_dict(sweep, profiles)["frontier"] == d["frontier"]


def test_table_shape(sweep, profiles):
    lines = format_table(sweep, profiles).splitlines()
    assert lines[0].split()[:2] == ["Optimization", "Type"]
    assert len(lines) == 2 + 54
    assert any("Failed" in ln for ln in lines)


def test_cap(profiles):
    with pytest.raises(VariantCapExceeded):
        enumerate_and_evaluate(SPEC, profiles, cap=10)


def test_bad_quant_mode(profiles):
    with pytest.raises(ValueError):
        enumerate_and_evaluate(SPEC, profiles, quant_modes=("4",))


def test_pareto_single_and_dominated():
    a = P("a", 30.0, 5.0)
    assert pareto([a]) == [a]
    b = P("b", 31.0, 4.0)
    assert pareto([a, b]) == [b]


def test_pareto_ties():
    a, b, c = P("a", 30.0, 5.0), P("b", 30.0, 5.0), P("c", 30.0, 6.0)
    assert pareto([a, b, c]) == [a, b]
    inf = P("i", math.inf, 9.0)
    assert pareto([a, inf]) == [a, inf]


def test_pareto_skips_missing():
    a, none = P("a", 30.0, 5.0), P("n", None, 1.0)
    assert pareto([none, a]) == [a] == pareto_bruteforce([none, a])


@pytest.mark.parametrize("seed", range(10))
def test_pareto_twenty_random_vs_oracle(seed):
    r = random.Random(seed)
    pts = [P(str(i), float(r.randint(20, 30)), float(r.randint(1, 10))) for i in range(20)]
    assert pareto(pts) == pareto_bruteforce(pts)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=25))
def test_pareto_property(raw):
    pts = [P(str(i), float(q), float(l)) for i, (q, l) in enumerate(raw)]
    assert pareto(pts) == pareto_bruteforce(pts)


def test_variant_label():
    v = VariantId(zoo.Upsample.RESIZE_BILINEAR, zoo.Activation.PRELU, 0.05, "16")
    assert v.label == "Bilinear-PReLU/p0.05/16"
