"""Command-line entry point: ``portanet <command> ...``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import complexity, devices, frontier, latency, metrics, pruning, quantization, rewrite, zoo
from .errors import PortanetError
from .interpreter import Interpreter, Precision
from .ir import DataType, Graph, resize_inputs
from .serialization import dumps, load, read_tensor, save, write_tensor

_PRECISIONS = {"f32": Precision.F32, "f16": Precision.EMULATED_F16,
               "quant": Precision.QUANT, "fakequant": Precision.FAKE_QUANT}
_FAMILIES = {"unet": zoo.Family.UNET, "edsr": zoo.Family.EDSR_LIKE, "rdn": zoo.Family.RDN_LIKE,
             "dbpn": zoo.Family.DBPN_LIKE, "fpn": zoo.Family.FPN_LIKE, "sgn": zoo.Family.SGN_LIKE}
_ACTS = {"relu": zoo.Activation.RELU, "prelu": zoo.Activation.PRELU}


def _family(s: str) -> zoo.Family:
    key = s.lower()
    if key in _FAMILIES:
        return _FAMILIES[key]
    return zoo.Family(s.upper())


def _upsample(s: str) -> zoo.Upsample:
    return zoo.UPSAMPLE_ALIASES.get(s.lower()) or zoo.Upsample(s.upper())


def _dtype(s: str) -> DataType:
    return DataType(s.upper())


def _emit(doc, out=None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _tensors(source) -> list[np.ndarray]:
    p = Path(source)
    files = sorted(p.glob("*.bin")) if p.is_dir() else [p]
    if not files:
        raise PortanetError(f"no .bin tensors in {p}")
    return [read_tensor(f).astype(np.float32) for f in files]


def _fit(graph: Graph, arr: np.ndarray) -> Graph:
    """Re-infer shapes when a tensor's spatial size differs from the graph input."""
    spec = graph.spec(graph.inputs[0])
    if arr.ndim == 4 and arr.shape[1:3] != spec.shape[1:3]:
        return resize_inputs(graph, arr.shape[1], arr.shape[2])
    return graph


def _random_tensors(graph: Graph, count: int, seed: int) -> list[np.ndarray]:
    r = np.random.default_rng(seed)
    shape = graph.spec(graph.inputs[0]).shape
    return [r.uniform(0.0, 1.0, shape).astype(np.float32) for _ in range(count)]


def _profile(source) -> devices.DeviceProfile:
    profs = devices.load_profiles(source)
    if len(profs) != 1:
        raise PortanetError(f"{source} holds {len(profs)} profiles; pass a single file")
    return profs[0]


def _profiles(source) -> list[devices.DeviceProfile]:
    out = []
    for part in str(source).split(","):
        out.extend(devices.load_profiles(part.strip()))
    return out


# -- commands --------------------------------------------------------------------

def cmd_build(a) -> None:
    fam = _family(a.family)
    spec = zoo.ArchSpec(family=fam, upsample=_upsample(a.upsample), activation=_ACTS[a.act.lower()],
                        base_channels=a.channels, depth=a.depth, blocks=a.blocks,
                        input_shape=(1, a.height, a.width, 3), seed=a.seed)
    g = zoo.build(spec)
    if a.output:
        save(g, a.output)
    else:
        sys.stdout.write(dumps(g) + "\n")
    print(f"{fam.value}: {len(g.nodes)} nodes, {complexity.total_macs(g):,} MACs", file=sys.stderr)


def cmd_analyze(a) -> None:
    g = load(a.graph)
    rep = complexity.complexity(g)
    if a.json:
        _emit(rep.to_dict())
        return
    print(complexity.format_table(g, rep))
    if a.output:
        _emit(rep.to_dict(), a.output)


def cmd_partition(a) -> None:
    g = load(a.graph)
    prof = _profile(a.profile)
    plan = devices.partition(g, prof, _dtype(a.dtype))
    doc = plan.to_dict()
    doc["profile"] = prof.name
    doc["fallback_count"] = len(plan.fallback_nodes)
    doc["transitions"] = plan.transitions
    doc["deployment_failures"] = devices.deployment_failures(g, prof, plan.dtype)
    _emit(doc, a.output)


def cmd_latency(a) -> None:
    g = load(a.graph)
    prof = _profile(a.profile)
    dtype = _dtype(a.dtype)
    if not a.sweep:
        doc = latency.estimate_graph(g, prof, dtype).to_dict()
        doc["profile"] = prof.name
        _emit(doc, a.output)
        return
    rows = latency.sweep_graph(g, prof, [s.strip() for s in a.sweep.split(",")], dtype)
    doc = {"profile": prof.name, "dtype": dtype.value, "rows": [
        {"resolution": r.label, "height": r.height, "width": r.width, "total_macs": r.total_macs,
         **{k: v for k, v in r.estimate.to_dict().items() if k != "per_node_ms"}} for r in rows]}
    _emit(doc, a.output)
    csv_text = latency.sweep_csv(rows)
    if a.csv:
        Path(a.csv).write_text(csv_text, encoding="utf-8")
    elif a.output:
        sys.stdout.write(csv_text)


def cmd_rewrite(a) -> None:
    g = load(a.graph)
    for p in a.passes:
        g = rewrite.apply_pass(g, p)
    save(g, a.output)
    print(f"{' -> '.join(a.passes)}: {complexity.total_macs(g):,} MACs", file=sys.stderr)


def cmd_prune(a) -> None:
    g = load(a.graph)
    res = pruning.prune(g, a.target, round_to=a.round_to, min_channels=a.min_channels)
    save(res.graph, a.output)
    _emit(res.to_dict(), a.report)


def cmd_quantize(a) -> None:
    g = load(a.graph)
    calib = _tensors(a.calib) if a.calib else None
    cg = _fit(g, calib[0]) if calib else g
    if calib is None:
        calib = _random_tensors(cg, a.n_calib, a.seed)
    ranges = quantization.calibrate(cg, calib)
    save(quantization.quantize_graph(g, a.bits, ranges), a.output)


def cmd_qerror(a) -> None:
    gf, gq = load(a.float_graph), load(a.quant_graph)
    probes = _tensors(a.probes) if a.probes else None
    if probes:
        gf, gq = _fit(gf, probes[0]), _fit(gq, probes[0])
    else:
        probes = _random_tensors(gf, a.n_probes, a.seed)
    prec = _PRECISIONS[a.precision] if a.precision else None
    rep = quantization.error_report(gf, gq, probes, peak=a.peak, precision=prec)
    if a.json or a.output:
        _emit(rep.to_dict(), a.output)
    if not a.json:
        print(rep.format_text())


def cmd_run(a) -> None:
    g = load(a.graph)
    x = read_tensor(a.input).astype(np.float32)
    g = _fit(g, x)
    outs = Interpreter(g, _PRECISIONS[a.precision]).run(x)
    y = outs[g.outputs[0]]
    if a.output:
        write_tensor(a.output, y.astype(np.float32))
    print(f"{g.outputs[0]}: shape {y.shape}, min {y.min():.6g}, max {y.max():.6g}, mean {y.mean():.6g}")


def cmd_metric(a) -> None:
    x, y = read_tensor(a.a), read_tensor(a.b)
    want_all = not (a.psnr or a.ssim or a.l2)
    doc = {}
    if a.psnr or want_all:
        v = metrics.psnr(x, y, a.peak)
        doc["psnr_db"] = v if math.isfinite(v) else "inf"
    if a.ssim or want_all:
        doc["ssim"] = metrics.ssim(x, y, a.peak)
    if a.l2 or want_all:
        doc["l2_per_pixel"] = metrics.l2_per_pixel(x, y)
    _emit(doc)


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def cmd_frontier(a) -> None:
    profs = _profiles(a.profiles)
    spec = zoo.ArchSpec(family=_family(a.family), input_shape=(1, a.height, a.width, 3), seed=a.seed,
                        base_channels=a.channels)
    eh, ew = (int(v) for v in a.eval_size.lower().split("x"))
    reps = frontier.enumerate_and_evaluate(
        spec, profs, _floats(a.prune), [q.strip() for q in a.quant.split(",")],
        eval_size=(eh, ew), n_calib=a.n_calib, n_probes=a.n_probes, cap=a.cap)
    text = frontier.report_json(reps, profs)
    if a.output:
        Path(a.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    table = frontier.format_table(reps, profs)
    if a.table:
        Path(a.table).write_text(table + "\n", encoding="utf-8")
    print(table, file=sys.stderr if not a.output else sys.stdout)


def cmd_profiles(a) -> None:
    if a.action == "list":
        for name in devices.BUNDLED:
            print(name)
        return
    out = Path(a.directory)
    out.mkdir(parents=True, exist_ok=True)
    for name in devices.BUNDLED:
        (out / f"{name}.toml").write_text(devices.bundled_profile_text(name), encoding="utf-8")
        print(out / f"{name}.toml")


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="portanet", description="Graph analysis and optimization for mobile restoration networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a zoo architecture")
    p.add_argument("--family", default="unet", help="unet, edsr, rdn, dbpn, fpn or sgn")
    p.add_argument("--upsample", default="tc", help="tc, d2s or bilinear")
    p.add_argument("--act", default="relu", choices=sorted(_ACTS))
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--channels", type=int, default=None, help="base channel count")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("analyze", help="MAC and memory report")
    p.add_argument("graph")
    p.add_argument("--json", action="store_true", help="print JSON instead of the table")
    p.add_argument("-o", "--output", help="also write the JSON report here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("partition", help="accelerator/CPU partition plan")
    p.add_argument("graph")
    p.add_argument("--profile", required=True, help="profile .toml or bundled name")
    p.add_argument("--dtype", default="f16")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("latency", help="latency estimate, optionally over resolutions")
    p.add_argument("graph")
    p.add_argument("--profile", required=True)
    p.add_argument("--dtype", default="f16")
    p.add_argument("--sweep", help="comma list such as 360p,720p,1920x1080")
    p.add_argument("--csv", help="write the sweep as CSV here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_latency)

    p = sub.add_parser("rewrite", help="apply portability rewrites")
    p.add_argument("graph")
    p.add_argument("--pass", dest="passes", action="append", required=True, choices=sorted(rewrite.PASSES))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("prune", help="channel pruning to a MAC-reduction target")
    p.add_argument("graph")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--round-to", type=int, default=4)
    p.add_argument("--min-channels", type=int, default=4)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="write the PruneResult JSON here instead of stdout")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("quantize", help="calibrate and quantize to 8 or 16 bits")
    p.add_argument("graph")
    p.add_argument("--bits", type=int, choices=(8, 16), required=True)
    p.add_argument("--calib", help="directory of .bin tensors (random inputs when omitted)")
    p.add_argument("--n-calib", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("qerror", help="PSNR and per-pixel L2 between float and quantized graphs")
    p.add_argument("float_graph")
    p.add_argument("quant_graph")
    p.add_argument("--probes", help="directory of .bin tensors (random inputs when omitted)")
    p.add_argument("--n-probes", type=int, default=16)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--precision", choices=sorted(_PRECISIONS),
                   help="precision for the second graph (default: quant if it has schemes)")
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_qerror)

    p = sub.add_parser("run", help="execute a graph on one tensor")
    p.add_argument("graph")
    p.add_argument("--input", required=True, help="binary tensor file")
    p.add_argument("--precision", default="f32", choices=sorted(_PRECISIONS))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metric", help="compare two tensors")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--psnr", action="store_true")
    p.add_argument("--ssim", action="store_true")
    p.add_argument("--l2", action="store_true")
    p.add_argument("--peak", type=float, default=1.0)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("frontier", help="enumerate variants and report the frontier")
    p.add_argument("--family", default="unet")
    p.add_argument("--profiles", default=",".join(devices.BUNDLED),
                   help="directory, file or comma list of bundled names")
    p.add_argument("--prune", default="0,0.05,0.5")
    p.add_argument("--quant", default="float,8,16")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--eval-size", default="64x64", help="HxW used for numeric evaluation")
    p.add_argument("--n-calib", type=int, default=4)
    p.add_argument("--n-probes", type=int, default=4)
    p.add_argument("--cap", type=int, default=frontier.DEFAULT_CAP)
    p.add_argument("-o", "--output")
    p.add_argument("--table", help="write the text table here")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("profiles", help="list or export the bundled device profiles")
    p.add_argument("action", choices=("list", "export"))
    p.add_argument("directory", nargs="?", default="profiles")
    p.set_defaults(func=cmd_profiles)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (PortanetError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
