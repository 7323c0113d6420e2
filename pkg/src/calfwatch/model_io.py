"""Binary model artifacts for both classifier kinds.

Layout (all integers little-endian):

    magic "CWML" | version u16 | kind u8 | sections...

where kind is 1 for ridge and 2 for forest.  Each section is
``tag (4 ASCII bytes) | payload length u64 | payload``.  Array payloads are
``dtype u8 | ndim u8 | dims u64 * ndim | raw little-endian values``.

Section table, ridge (kind 1):
    META  canonical JSON: classes, alpha, alphas_grid, n_features_in
    KEPT  retained column indices      MU/SG  standardization vectors
    WGHT  weight matrix                BIAS   intercepts
    LOOE  LOO error curve (optional)   KSET   embedded kernel set (optional)

Section table, forest (kind 2):
    META  canonical JSON: classes, params, seed, n_features, feature subset
    TOFF tree offsets  NFTR/NTHR/NLFT/NRGT/NLEA/NVOT node arrays
    LCNT leaf class counts             TIMP per-tree importances

Loading a saved model reproduces its predictions bit for bit; equal-seed
forests serialize to equal bytes.
"""

import json
import struct

import numpy as np

from .errors import BadMagic, Truncated, VersionUnsupported
from .forest import ForestModel, ForestParams
from .ridge import RidgeModel
from .rocket import KernelSet

MAGIC = b"CWML"
VERSION = 1
KIND_RIDGE = 1
KIND_FOREST = 2

_DTYPES = {1: "<i2", 2: "<i4", 3: "<i8", 4: "<f8", 5: "<u1"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def _pack_array(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a)
    code = _DTYPE_CODES[a.dtype.newbyteorder("<")]
    head = struct.pack("<BB", code, a.ndim)
    dims = struct.pack(f"<{a.ndim}Q", *a.shape) if a.ndim else b""
    return head + dims + a.astype(_DTYPES[code], copy=False).tobytes()


def _unpack_array(payload: bytes) -> np.ndarray:
    if len(payload) < 2:
        raise Truncated("array payload shorter than its header")
    code, ndim = struct.unpack_from("<BB", payload, 0)
    if code not in _DTYPES:
        raise VersionUnsupported(f"unknown array dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}Q", payload, 2)
    data = payload[2 + 8 * ndim:]
    a = np.frombuffer(data, dtype=_DTYPES[code])
    if a.size != int(np.prod(dims)):
        raise Truncated("array payload size does not match its dims")
    return a.reshape(dims).copy()


def _sections(chunks: list[tuple[bytes, bytes]]) -> bytes:
    out = []
    for tag, payload in chunks:
        out.append(tag + struct.pack("<Q", len(payload)) + payload)
    return b"".join(out)


def _meta_bytes(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def pack_kernelset(ks: KernelSet) -> bytes:
    head = struct.pack("<HqiiI", 1, ks.seed, ks.input_length, ks.num_channels,
                       len(ks))
    return head + b"".join(
        _framed(a) for a in (ks.lengths.astype("<i4"), ks.weights,
                             ks.biases, ks.dilations.astype("<i4"),
                             ks.paddings.astype("<i4"), ks.channels.astype("<i4")))


def _framed(a: np.ndarray) -> bytes:
    body = _pack_array(a)
    return struct.pack("<Q", len(body)) + body


def _read_frame(buf: bytes, pos: int) -> tuple[np.ndarray, int]:
    if pos + 8 > len(buf):
        raise Truncated("kernel-set frame header runs past the end")
    (ln,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    if pos + ln > len(buf):
        raise Truncated("kernel-set frame runs past the end")
    return _unpack_array(buf[pos:pos + ln]), pos + ln


def unpack_kernelset(buf: bytes) -> KernelSet:
    if len(buf) < 22:
        raise Truncated("kernel-set section too short")
    sub_version, seed, input_length, num_channels, k = struct.unpack_from("<HqiiI", buf, 0)
    if sub_version != 1:
        raise VersionUnsupported(f"kernel-set sub-version {sub_version}")
    pos = 22
    arrays = []
    for _ in range(6):
        a, pos = _read_frame(buf, pos)
        arrays.append(a)
    lengths, weights, biases, dilations, paddings, channels = arrays
    if len(lengths) != k or weights.size != int(lengths.sum()):
        raise Truncated("kernel-set arrays inconsistent with its header")
    return KernelSet(lengths=lengths.astype(np.int32), weights=weights,
                     biases=biases, dilations=dilations.astype(np.int32),
                     paddings=paddings.astype(np.int32),
                     channels=channels.astype(np.int32), seed=int(seed),
                     input_length=int(input_length), num_channels=int(num_channels))


def save_model(m) -> bytes:
    if isinstance(m, RidgeModel):
        kind = KIND_RIDGE
        meta = {
            "classes": list(m.classes),
            "alpha": m.alpha,
            "alphas_grid": list(m.alphas_grid),
            "n_features_in": m.n_features_in,
        }
        chunks = [
            (b"META", _meta_bytes(meta)),
            (b"KEPT", _pack_array(m.kept.astype(np.int64))),
            (b"MU__", _pack_array(m.mu)),
            (b"SG__", _pack_array(m.sigma)),
            (b"WGHT", _pack_array(m.W)),
            (b"BIAS", _pack_array(m.b)),
        ]
        if m.loo_errors is not None:
            chunks.append((b"LOOE", _pack_array(np.asarray(m.loo_errors))))
        if m.kernelset is not None:
            chunks.append((b"KSET", pack_kernelset(m.kernelset)))
    elif isinstance(m, ForestModel):
        kind = KIND_FOREST
        meta = {
            "classes": list(m.classes),
            "params": {
                "n_trees": m.params.n_trees,
                "max_depth": m.params.max_depth,
                "min_samples_leaf": m.params.min_samples_leaf,
                "mtry": m.params.mtry,
            },
            "seed": m.seed,
            "n_features": m.n_features,
            "feature_subset": list(m.feature_subset) if m.feature_subset else None,
        }
        chunks = [
            (b"META", _meta_bytes(meta)),
            (b"TOFF", _pack_array(m.tree_offsets)),
            (b"NFTR", _pack_array(m.node_feature)),
            (b"NTHR", _pack_array(m.node_threshold)),
            (b"NLFT", _pack_array(m.node_left)),
            (b"NRGT", _pack_array(m.node_right)),
            (b"NLEA", _pack_array(m.node_leaf)),
            (b"NVOT", _pack_array(m.node_vote)),
            (b"LCNT", _pack_array(m.leaf_counts)),
            (b"TIMP", _pack_array(m.tree_importances)),
        ]
    else:
        raise TypeError(f"cannot serialize {type(m).__name__}")
    return MAGIC + struct.pack("<HB", VERSION, kind) + _sections(chunks)


def _parse_container(data: bytes) -> tuple[int, dict[bytes, bytes]]:
    if len(data) < 7:
        raise Truncated(f"{len(data)} bytes is shorter than the container header")
    if data[:4] != MAGIC:
        raise BadMagic(f"magic {data[:4]!r}, expected {MAGIC!r}")
    version, kind = struct.unpack_from("<HB", data, 4)
    if version != VERSION:
        raise VersionUnsupported(f"container version {version}")
    sections = {}
    pos = 7
    while pos < len(data):
        if pos + 12 > len(data):
            raise Truncated("section header runs past the end")
        tag = data[pos:pos + 4]
        (ln,) = struct.unpack_from("<Q", data, pos + 4)
        pos += 12
        if pos + ln > len(data):
            raise Truncated(f"section {tag!r} runs past the end")
        sections[tag] = data[pos:pos + ln]
        pos += ln
    return kind, sections


def _require(sections, tag):
    if tag not in sections:
        raise Truncated(f"missing section {tag!r}")
    return sections[tag]


def load_model(data: bytes):
    kind, sections = _parse_container(data)
    meta = json.loads(_require(sections, b"META"))
    if kind == KIND_RIDGE:
        loo = sections.get(b"LOOE")
        kset = sections.get(b"KSET")
        return RidgeModel(
            classes=tuple(meta["classes"]),
            n_features_in=meta["n_features_in"],
            kept=_unpack_array(_require(sections, b"KEPT")),
            mu=_unpack_array(_require(sections, b"MU__")),
            sigma=_unpack_array(_require(sections, b"SG__")),
            W=_unpack_array(_require(sections, b"WGHT")),
            b=_unpack_array(_require(sections, b"BIAS")),
            alpha=meta["alpha"],
            alphas_grid=tuple(meta["alphas_grid"]),
            loo_errors=_unpack_array(loo) if loo is not None else None,
            kernelset=unpack_kernelset(kset) if kset is not None else None,
        )
    if kind == KIND_FOREST:
        p = meta["params"]
        return ForestModel(
            classes=tuple(meta["classes"]),
            params=ForestParams(n_trees=p["n_trees"], max_depth=p["max_depth"],
                                min_samples_leaf=p["min_samples_leaf"],
                                mtry=p["mtry"]),
            seed=meta["seed"],
            n_features=meta["n_features"],
            tree_offsets=_unpack_array(_require(sections, b"TOFF")),
            node_feature=_unpack_array(_require(sections, b"NFTR")).astype(np.int32),
            node_threshold=_unpack_array(_require(sections, b"NTHR")),
            node_left=_unpack_array(_require(sections, b"NLFT")).astype(np.int32),
            node_right=_unpack_array(_require(sections, b"NRGT")).astype(np.int32),
            node_leaf=_unpack_array(_require(sections, b"NLEA")).astype(np.int32),
            node_vote=_unpack_array(_require(sections, b"NVOT")).astype(np.int16),
            leaf_counts=_unpack_array(_require(sections, b"LCNT")),
            tree_importances=_unpack_array(_require(sections, b"TIMP")),
            feature_subset=tuple(meta["feature_subset"]) if meta["feature_subset"] else None,
        )
    raise VersionUnsupported(f"unknown model kind {kind}")
