"""Model description format and the plaintext reference engine.

A model is an ordered list of layers over quantized ring weights.  The
on-disk container is a versioned binary: magic, version, JSON header
describing geometry, raw little-endian uint64 weight blobs, trailing
sha256 checksum.  ``plaintext_infer`` evaluates the graph with exactly
the arithmetic the secure path uses (mod-2^l accumulation, floor
division for truncation and pooling) and serves as the correctness
oracle for every secure-execution test.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .ring import FixedTensor, RingConfig, from_signed, to_signed

MAGIC = b"PINF"
VERSION = 1

LAYER_KINDS = ("fc", "conv2d", "batchnorm", "relu", "avgpool", "add_skip")

__all__ = [
    "LayerSpec",
    "ModelSpec",
    "ModelFormatError",
    "save_model",
    "load_model",
    "plaintext_infer",
    "validate_graph",
    "truncate_signed",
    "strip_weights",
    "build_mlp",
    "build_lenet5",
]


class ModelFormatError(ValueError):
    """Bad magic, version, checksum, or malformed header."""


@dataclass
class LayerSpec:
    """One layer: kind, geometry parameters, optional quantized blobs.

    ``weight``/``bias`` are uint64 ring encodings at the model's scale.
    For conv2d the weight shape is (out_ch, in_ch, kh, kw); for fc it is
    (out_dim, in_dim); for batchnorm both blobs are per-channel vectors
    of the folded constants.  ``add_skip`` carries params["source"], the
    0-based index of the earlier layer whose output is added (with -1
    meaning the model input).
    """

    kind: str
    params: dict = field(default_factory=dict)
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ModelFormatError(f"unknown layer kind {self.kind!r}")
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=np.uint64)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.uint64)


@dataclass
class ModelSpec:
    """Immutable ordered layer graph with its ring configuration."""

    name: str
    input_shape: tuple
    layers: list
    config: RingConfig = field(default_factory=RingConfig)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)


def _blob_entry(arr: np.ndarray | None, blobs: list, offset: int):
    if arr is None:
        return None, offset
    raw = np.ascontiguousarray(arr, dtype="<u8").tobytes()
    blobs.append(raw)
    entry = {"shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
    return entry, offset + len(raw)


def save_model(m: ModelSpec) -> bytes:
    """Serialize; identical ModelSpec always yields identical bytes."""
    blobs: list = []
    offset = 0
    layers_hdr = []
    for layer in m.layers:
        w_entry, offset = _blob_entry(layer.weight, blobs, offset)
        b_entry, offset = _blob_entry(layer.bias, blobs, offset)
        layers_hdr.append(
            {
                "kind": layer.kind,
                "params": layer.params,
                "weight": w_entry,
                "bias": b_entry,
            }
        )
    header = {
        "name": m.name,
        "input_shape": list(m.input_shape),
        "ring": {"bit_width": m.config.bit_width, "frac_bits": m.config.frac_bits},
        "layers": layers_hdr,
    }
    hdr_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    out = MAGIC + struct.pack("<HI", VERSION, len(hdr_bytes)) + hdr_bytes
    out += b"".join(blobs)
    return out + hashlib.sha256(out).digest()


def load_model(data: bytes) -> ModelSpec:
    """Parse and checksum-verify a serialized model."""
    if len(data) < len(MAGIC) + 6 + 32 or data[:4] != MAGIC:
        raise ModelFormatError("not a model container")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch (truncated or corrupted file)")
    version, hdr_len = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    hdr_end = 10 + hdr_len
    try:
        header = json.loads(body[10:hdr_end])
    except json.JSONDecodeError as e:
        raise ModelFormatError("malformed header") from e
    blob_base = hdr_end

    def read_blob(entry):
        if entry is None:
            return None
        start = blob_base + entry["offset"]
        raw = body[start : start + entry["nbytes"]]
        return np.frombuffer(raw, dtype="<u8").reshape(entry["shape"]).copy()

    layers = [
        LayerSpec(
            kind=lh["kind"],
            params=lh["params"],
            weight=read_blob(lh["weight"]),
            bias=read_blob(lh["bias"]),
        )
        for lh in header["layers"]
    ]
    cfg = RingConfig(header["ring"]["bit_width"], header["ring"]["frac_bits"])
    return ModelSpec(header["name"], tuple(header["input_shape"]), layers, cfg)


def truncate_signed(acc: np.ndarray, shift: int, cfg: RingConfig) -> np.ndarray:
    """Floor-divide the signed interpretation by 2^shift; the oracle
    counterpart of the faithful truncation protocol."""
    s = to_signed(acc & cfg.umask(), cfg)
    return from_signed(np.floor_divide(s, 1 << shift), cfg)


def floor_div_signed(acc: np.ndarray, divisor: int, cfg: RingConfig) -> np.ndarray:
    s = to_signed(acc & cfg.umask(), cfg)
    return from_signed(np.floor_divide(s, divisor), cfg)


# ---------------------------------------------------------------------------
# plaintext layer evaluation (the oracle)

def _fc_plain(layer: LayerSpec, x: np.ndarray, cfg: RingConfig) -> np.ndarray:
    w, b = layer.weight, layer.bias
    x = x.reshape(-1)
    acc = w @ x  # uint64 wraparound is exact mod 2^l
    if b is not None:
        acc = acc + b * np.uint64(cfg.scale)
    return truncate_signed(acc, cfg.frac_bits, cfg)


def conv2d_plain_acc(
    w: np.ndarray, x: np.ndarray, stride: int, padding: int
) -> np.ndarray:
    """Cross-correlation accumulator over uint64, pre-truncation."""
    oc, ic, kh, kw = w.shape
    c, h, wd = x.shape
    xp = np.zeros((c, h + 2 * padding, wd + 2 * padding), dtype=np.uint64)
    xp[:, padding : padding + h, padding : padding + wd] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((oc, oh, ow), dtype=np.uint64)
    for di in range(kh):
        for dj in range(kw):
            patch = xp[:, di : di + oh * stride : stride, dj : dj + ow * stride : stride]
            # (oc, ic) x (ic, oh*ow) contraction per kernel offset
            out += (w[:, :, di, dj] @ patch.reshape(c, -1)).reshape(oc, oh, ow)
    return out


def _conv2d_plain(layer: LayerSpec, x: np.ndarray, cfg: RingConfig) -> np.ndarray:
    p = layer.params
    acc = conv2d_plain_acc(layer.weight, x, p.get("stride", 1), p.get("padding", 0))
    if layer.bias is not None:
        acc = acc + layer.bias[:, None, None] * np.uint64(cfg.scale)
    return truncate_signed(acc, cfg.frac_bits, cfg)


def _batchnorm_plain(layer: LayerSpec, x: np.ndarray, cfg: RingConfig) -> np.ndarray:
    w = layer.weight.reshape((-1,) + (1,) * (x.ndim - 1))
    b = layer.bias.reshape((-1,) + (1,) * (x.ndim - 1))
    acc = w * x + b * np.uint64(cfg.scale)
    return truncate_signed(acc, cfg.frac_bits, cfg)


def _relu_plain(x: np.ndarray, cfg: RingConfig) -> np.ndarray:
    s = to_signed(x, cfg)
    return from_signed(np.maximum(s, 0), cfg)


def _avgpool_plain(layer: LayerSpec, x: np.ndarray, cfg: RingConfig) -> np.ndarray:
    kh, kw = layer.params["kh"], layer.params["kw"]
    c, h, w = x.shape
    if h % kh or w % kw:
        raise ValueError(f"pool {kh}x{kw} does not tile {h}x{w}")
    sums = x.reshape(c, h // kh, kh, w // kw, kw).sum(axis=(2, 4), dtype=np.uint64)
    return floor_div_signed(sums, kh * kw, cfg)


def _infer_one(m: ModelSpec, x: np.ndarray) -> np.ndarray:
    cfg = m.config
    outputs = [x & cfg.umask()]
    for layer in m.layers:
        x = outputs[-1]
        if layer.kind == "fc":
            y = _fc_plain(layer, x, cfg)
        elif layer.kind == "conv2d":
            y = _conv2d_plain(layer, x, cfg)
        elif layer.kind == "batchnorm":
            y = _batchnorm_plain(layer, x, cfg)
        elif layer.kind == "relu":
            y = _relu_plain(x, cfg)
        elif layer.kind == "avgpool":
            y = _avgpool_plain(layer, x, cfg)
        elif layer.kind == "add_skip":
            src = outputs[layer.params["source"] + 1]
            y = (x + src) & cfg.umask()
        outputs.append(y & cfg.umask())
    return outputs[-1]


def plaintext_infer(m: ModelSpec, x: FixedTensor) -> FixedTensor:
    """Fixed-point reference inference; bit-exact target for the secure path.

    Accepts a single sample shaped like the model input, or a batch with
    one extra leading axis.
    """
    if x.config != m.config:
        raise ValueError("input ring config differs from the model's")
    data = x.data
    if data.shape == m.input_shape:
        return FixedTensor(_infer_one(m, data), m.config)
    if data.shape[1:] == m.input_shape:
        return FixedTensor(
            np.stack([_infer_one(m, s) for s in data]), m.config
        )
    raise ValueError(f"input shape {data.shape} != model {m.input_shape}")


# ---------------------------------------------------------------------------
# graph validation

def _shape_after(layer: LayerSpec, shape: tuple, errors: list, idx: int):
    p = layer.params
    if layer.kind == "fc":
        flat = int(np.prod(shape))
        if layer.weight is None:
            errors.append(f"layer {idx}: fc without weights")
            return shape
        out_dim, in_dim = layer.weight.shape
        if in_dim != flat:
            errors.append(
                f"layer {idx}: fc expects {in_dim} inputs, gets {flat} from {shape}"
            )
        if layer.bias is not None and layer.bias.shape != (out_dim,):
            errors.append(f"layer {idx}: fc bias shape {layer.bias.shape}")
        return (out_dim,)
    if layer.kind == "conv2d":
        if layer.weight is None:
            errors.append(f"layer {idx}: conv2d without weights")
            return shape
        oc, ic, kh, kw = layer.weight.shape
        if len(shape) != 3:
            errors.append(f"layer {idx}: conv2d on non-3d input {shape}")
            return shape
        c, h, w = shape
        stride, pad = p.get("stride", 1), p.get("padding", 0)
        if c != ic:
            errors.append(f"layer {idx}: conv2d expects {ic} channels, gets {c}")
        oh = (h + 2 * pad - kh) // stride + 1
        ow = (w + 2 * pad - kw) // stride + 1
        if oh < 1 or ow < 1:
            errors.append(f"layer {idx}: kernel {kh}x{kw} larger than input")
        return (oc, max(oh, 1), max(ow, 1))
    if layer.kind == "batchnorm":
        if layer.weight is None or layer.bias is None:
            errors.append(f"layer {idx}: batchnorm missing folded constants")
        elif layer.weight.shape[0] != shape[0]:
            errors.append(
                f"layer {idx}: batchnorm over {layer.weight.shape[0]} channels "
                f"on {shape[0]}-channel input"
            )
        return shape
    if layer.kind == "avgpool":
        if len(shape) != 3:
            errors.append(f"layer {idx}: avgpool on non-3d input {shape}")
            return shape
        c, h, w = shape
        kh, kw = p.get("kh", 0), p.get("kw", 0)
        if kh < 1 or kw < 1:
            errors.append(f"layer {idx}: bad pool kernel {kh}x{kw}")
            return shape
        if h % kh or w % kw:
            errors.append(
                f"layer {idx}: pool {kh}x{kw} does not tile {h}x{w} "
                "(non-overlapping windows required)"
            )
        return (c, max(h // kh, 1), max(w // kw, 1))
    if layer.kind in ("relu",):
        return shape
    return shape  # add_skip checked by the caller


def validate_graph(m: ModelSpec) -> list:
    """All conformance violations at once; empty list means valid."""
    errors: list = []
    shapes = [m.input_shape]
    for idx, layer in enumerate(m.layers):
        if layer.kind == "add_skip":
            src = layer.params.get("source")
            if src is None or not (-1 <= src < idx):
                errors.append(f"layer {idx}: add_skip source {src} out of range")
            elif shapes[src + 1] != shapes[-1]:
                errors.append(
                    f"layer {idx}: add_skip shapes differ "
                    f"({shapes[src + 1]} vs {shapes[-1]})"
                )
            shapes.append(shapes[-1])
            continue
        if layer.kind in ("relu", "avgpool") and (
            layer.weight is not None or layer.bias is not None
        ):
            errors.append(f"layer {idx}: {layer.kind} must not carry weights")
        shapes.append(_shape_after(layer, shapes[-1], errors, idx))
    return errors


def strip_weights(m: ModelSpec) -> ModelSpec:
    """Architecture-only copy for the party that must not see weights.

    Geometry needed to build packing layouts is lifted from the blob
    shapes into params before the blobs are dropped.
    """
    layers = []
    for layer in m.layers:
        p = dict(layer.params)
        if layer.kind == "fc" and layer.weight is not None:
            p["out_dim"], p["in_dim"] = layer.weight.shape
            p["has_bias"] = layer.bias is not None
        elif layer.kind == "conv2d" and layer.weight is not None:
            p["out_ch"], p["in_ch"], p["kh"], p["kw"] = layer.weight.shape
            p["has_bias"] = layer.bias is not None
        elif layer.kind == "batchnorm" and layer.weight is not None:
            p["channels"] = int(layer.weight.shape[0])
        layers.append(LayerSpec(layer.kind, p))
    return ModelSpec(m.name, m.input_shape, layers, m.config)


# ---------------------------------------------------------------------------
# fixture models (hand-built, random weights)

def _q(rng, shape, cfg, spread=0.5):
    vals = rng.uniform(-spread, spread, size=shape)
    return FixedTensor.from_real(vals, cfg).data


def build_mlp(cfg: RingConfig | None = None, seed: int = 0,
              dims=(784, 64, 10)) -> ModelSpec:
    """Fully connected stack with ReLU between layers."""
    cfg = cfg or RingConfig()
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        spread = 1.0 / np.sqrt(fan_in)
        layers.append(
            LayerSpec(
                "fc",
                {"in_dim": dims[i], "out_dim": dims[i + 1]},
                weight=_q(rng, (dims[i + 1], dims[i]), cfg, spread),
                bias=_q(rng, (dims[i + 1],), cfg, spread),
            )
        )
        if i < len(dims) - 2:
            layers.append(LayerSpec("relu"))
    return ModelSpec("mlp-" + "-".join(map(str, dims)), (dims[0],), layers, cfg)


def build_lenet5(cfg: RingConfig | None = None, seed: int = 0) -> ModelSpec:
    """Classic 32x32 single-channel convolutional network."""
    cfg = cfg or RingConfig()
    rng = np.random.default_rng(seed)

    def conv(ic, oc, k):
        spread = 1.0 / np.sqrt(ic * k * k)
        return LayerSpec(
            "conv2d",
            {"stride": 1, "padding": 0},
            weight=_q(rng, (oc, ic, k, k), cfg, spread),
            bias=_q(rng, (oc,), cfg, spread),
        )

    def fc(i, o):
        spread = 1.0 / np.sqrt(i)
        return LayerSpec(
            "fc", {"in_dim": i, "out_dim": o},
            weight=_q(rng, (o, i), cfg, spread), bias=_q(rng, (o,), cfg, spread),
        )

    layers = [
        conv(1, 6, 5), LayerSpec("relu"),
        LayerSpec("avgpool", {"kh": 2, "kw": 2}),
        conv(6, 16, 5), LayerSpec("relu"),
        LayerSpec("avgpool", {"kh": 2, "kw": 2}),
        conv(16, 120, 5), LayerSpec("relu"),
        fc(120, 84), LayerSpec("relu"),
        fc(84, 10),
    ]
    return ModelSpec("lenet5", (1, 32, 32), layers, cfg)
