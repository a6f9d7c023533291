"""Graph file format (UTF-8 JSON) and the binary tensor format.

The canonical encoding sorts keys, uses compact separators and stores weights
as base64 little-endian payloads, so :func:`graph_hash` is stable across
save/load round trips.
"""
from __future__ import annotations

import base64
import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError
from .ir import DataType, Graph, Node, OpKind, QuantScheme, TensorSpec, check, topo_sort

FORMAT_VERSION = 1


def _b64(arr: np.ndarray, dtype: str) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=dtype).tobytes()).decode("ascii")


def to_dict(graph: Graph) -> dict[str, Any]:
    nodes = []
    for n in topo_sort(graph):
        nodes.append({
            "id": n.id,
            "kind": n.kind.value,
            "inputs": list(n.inputs),
            "output": n.output,
            "attrs": {k: (v if isinstance(v, str) else int(v)) for k, v in n.attrs.items()},
            "weights": list(n.weights),
        })
    inputs = []
    for t in graph.inputs:
        entry: dict[str, Any] = {"name": t}
        if t in graph.specs:
            s = graph.specs[t]
            entry["shape"] = list(s.shape)
            entry["dtype"] = s.dtype.value
        inputs.append(entry)
    weights = {}
    for name, v in graph.weights.items():
        entry = {"shape": list(v.shape), "data": _b64(v, "<f4")}
        if name in graph.weight_seeds:
            entry["seed"] = int(graph.weight_seeds[name])
        weights[name] = entry
    doc: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "seed": int(graph.seed),
        "inputs": inputs,
        "outputs": list(graph.outputs),
        "nodes": nodes,
        "weights": weights,
    }
    specs = {t: {"shape": list(s.shape), "dtype": s.dtype.value}
             for t, s in graph.specs.items() if t not in graph.inputs}
    if specs:
        doc["specs"] = specs
    if graph.quant:
        doc["quant"] = {t: {"bits": q.bits, "scale": float(q.scale),
                            "zero_point": int(q.zero_point), "mode": q.mode}
                        for t, q in graph.quant.items()}
    if graph.qweights:
        doc["qweights"] = {t: {"shape": list(v.shape), "data": _b64(v, "<i4")}
                           for t, v in graph.qweights.items()}
    return doc


def canonical_bytes(graph: Graph) -> bytes:
    return json.dumps(to_dict(graph), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def graph_hash(graph: Graph) -> str:
    return hashlib.sha256(canonical_bytes(graph)).hexdigest()


def graphs_equal(a: Graph, b: Graph) -> bool:
    return canonical_bytes(a) == canonical_bytes(b)


def dumps(graph: Graph) -> str:
    return json.dumps(to_dict(graph), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def save(graph: Graph, path) -> None:
    check(graph)
    Path(path).write_text(dumps(graph), encoding="utf-8")


def _req(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"missing key {key!r}", field=f"{where}.{key}" if where else key)
    return obj[key]


def _decode(entry, dtype, where) -> np.ndarray:
    shape = tuple(int(d) for d in _req(entry, "shape", where))
    try:
        raw = base64.b64decode(_req(entry, "data", where), validate=True)
    except (ValueError, TypeError) as e:
        raise ParseError(f"bad base64 payload: {e}", field=f"{where}.data") from None
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != int(np.prod(shape)):
        raise ParseError(f"payload has {arr.size} elements, shape {shape} needs {int(np.prod(shape))}",
                         field=f"{where}.data")
    return arr.astype(dtype[1:]).reshape(shape)


def _dtype(v, where) -> DataType:
    try:
        return DataType(v)
    except ValueError:
        raise ParseError(f"unknown dtype {v!r}", field=where) from None


def from_dict(doc: dict) -> Graph:
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    version = _req(doc, "version", "")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported version {version!r}", field="version")
    specs: dict[str, TensorSpec] = {}
    inputs = []
    for i, entry in enumerate(_req(doc, "inputs", "")):
        where = f"inputs[{i}]"
        name = _req(entry, "name", where)
        inputs.append(name)
        if "shape" in entry:
            specs[name] = TensorSpec(name, tuple(int(d) for d in entry["shape"]),
                                     _dtype(entry.get("dtype", "F32"), where + ".dtype"))
    nodes = []
    for i, entry in enumerate(_req(doc, "nodes", "")):
        where = f"nodes[{i}]"
        kind_name = _req(entry, "kind", where)
        try:
            kind = OpKind(kind_name)
        except ValueError:
            raise ParseError(f"unknown OpKind {kind_name!r}", field=f"{where}.kind") from None
        attrs = dict(entry.get("attrs", {}))
        for k, v in attrs.items():
            if isinstance(v, float) or isinstance(v, bool):
                raise ParseError(f"attribute values must be ints or strings, got {v!r}",
                                 field=f"{where}.attrs.{k}")
        nodes.append(Node(
            id=_req(entry, "id", where),
            kind=kind,
            inputs=tuple(_req(entry, "inputs", where)),
            output=_req(entry, "output", where),
            attrs=attrs,
            weights=tuple(entry.get("weights", ())),
        ))
    weights, seeds = {}, {}
    for name, entry in _req(doc, "weights", "").items():
        weights[name] = _decode(entry, "<f4", f"weights.{name}")
        if "seed" in entry:
            seeds[name] = int(entry["seed"])
    for t, entry in doc.get("specs", {}).items():
        specs[t] = TensorSpec(t, tuple(int(d) for d in _req(entry, "shape", f"specs.{t}")),
                              _dtype(entry.get("dtype", "F32"), f"specs.{t}.dtype"))
    quant = {}
    for t, e in doc.get("quant", {}).items():
        where = f"quant.{t}"
        quant[t] = QuantScheme(int(_req(e, "bits", where)), float(_req(e, "scale", where)),
                               int(_req(e, "zero_point", where)), e.get("mode", "PTQ"))
    qweights = {t: _decode(e, "<i4", f"qweights.{t}") for t, e in doc.get("qweights", {}).items()}
    return Graph(
        nodes=tuple(nodes),
        inputs=tuple(inputs),
        outputs=tuple(_req(doc, "outputs", "")),
        weights=weights,
        specs=specs,
        seed=int(doc.get("seed", 0)),
        weight_seeds=seeds,
        quant=quant,
        qweights=qweights,
    )


def loads(text: str) -> Graph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from None
    return from_dict(doc)


def load(path) -> Graph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8: {e}") from None
    return loads(text)


# Binary tensor files: magic, dtype code, four uint32 dims (NHWC), payload.
TENSOR_MAGIC = b"PNTB"
_HEADER = struct.Struct("<4sI4I")
_CODES = {0: "<f4", 1: "<f2", 2: "<u1", 3: "<i2", 4: "<i4"}
_CODE_OF = {np.dtype(v).newbyteorder("=").name: k for k, v in _CODES.items()}


def write_tensor(path, arr) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 4:
        raise ValueError(f"tensor files hold NHWC 4-d arrays, got {arr.ndim}-d")
    code = _CODE_OF.get(arr.dtype.name)
    if code is None:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(TENSOR_MAGIC, code, *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype=_CODES[code]).tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, code, *dims = _HEADER.unpack_from(data)
    if magic != TENSOR_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if code not in _CODES:
        raise ParseError(f"{path}: unknown dtype code {code}", field="dtype")
    dt = np.dtype(_CODES[code])
    payload = data[_HEADER.size:]
    want = int(np.prod(dims)) * dt.itemsize
    if len(payload) != want:
        raise ParseError(f"{path}: payload is {len(payload)} bytes, expected {want}")
    return np.frombuffer(payload, dtype=dt).astype(dt.newbyteorder("=")).reshape(dims)
