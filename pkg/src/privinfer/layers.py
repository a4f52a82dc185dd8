"""Secure forward evaluation of the supported layer types.

Linear layers (fc, conv2d) run over homomorphic encryption: the cloud
party encrypts its input share under its own key, the model owner
multiplies by packed plaintext weights, masks the result with a fresh
uniform polynomial, and returns it; the cloud decrypts its output
share.  Weights never leave the owner, the cloud's share never leaves
the ciphertext domain.  Nonlinear layers (relu, avgpool, batchnorm
rescale) run over the OT gadget protocols.  Both parties call the same
function per layer and stay in lockstep.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import gadgets
from .channel import BaseChannel, Tag
from .he import (
    HECiphertext,
    HEParams,
    PackedPlaintext,
    PublicKey,
    SecretKey,
    decrypt,
    encrypt,
    eval_add,
    eval_add_plain,
    eval_plain_mul,
    keygen,
)
from .model import LayerSpec, conv2d_plain_acc
from .ot.providers import CorrelatedRandomness
from .packing import Conv2dPlan, MatvecPlan
from .ring import RingConfig

MODEL_OWNER = 0
CLOUD = 1

__all__ = [
    "LayerContext",
    "setup_layer_context",
    "fc_forward",
    "conv2d_forward",
    "batchnorm_fold",
    "batchnorm_forward",
    "relu_forward",
    "avgpool_forward",
    "add_skip_forward",
]


@dataclass
class LayerContext:
    """Per-session state both parties carry through the layer stack.

    The cloud holds the HE secret key; the model owner holds only the
    public key plus the model weights.  Packed-weight polynomials and
    their NTT transforms are cached per layer object across inferences.
    """

    party: int
    chan: BaseChannel
    prov: CorrelatedRandomness
    config: RingConfig
    he_params: HEParams
    pk: PublicKey
    sk: SecretKey | None = None
    trunc_mode: str = "faithful"
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    _plan_cache: dict = field(default_factory=dict)


def setup_layer_context(
    party: int,
    chan: BaseChannel,
    prov: CorrelatedRandomness,
    config: RingConfig | None = None,
    he_params: HEParams | None = None,
    trunc_mode: str = "faithful",
    rng: np.random.Generator | None = None,
) -> LayerContext:
    """Cloud generates the keypair and publishes the public key."""
    config = config or RingConfig()
    he_params = he_params or HEParams(plain_modulus=config.modulus)
    if he_params.plain_modulus != config.modulus:
        raise ValueError("HE plaintext modulus must equal the share ring modulus")
    rng = rng or np.random.default_rng()
    if party == CLOUD:
        pk, sk = keygen(he_params, rng)
        chan.send_array(Tag.CONTROL, np.stack([pk.b_rns, pk.a_rns]))
    else:
        arr = chan.recv_array(Tag.CONTROL)
        pk, sk = PublicKey(he_params, arr[0], arr[1]), None
    return LayerContext(party, chan, prov, config, he_params, pk, sk,
                        trunc_mode, rng)


# ---------------------------------------------------------------------------
# ciphertext batching over the wire

def _send_cts(chan: BaseChannel, tag: Tag, cts: list):
    parts = [struct.pack("<I", len(cts))]
    for ct in cts:
        blob = ct.serialize()
        parts.append(struct.pack("<I", len(blob)) + blob)
    chan.send(tag, b"".join(parts))


def _recv_cts(chan: BaseChannel, tag: Tag, params: HEParams) -> list:
    _, payload = chan.recv(tag)
    (count,) = struct.unpack_from("<I", payload, 0)
    off = 4
    out = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", payload, off)
        off += 4
        out.append(HECiphertext.deserialize(payload[off : off + ln], params))
        off += ln
    return out


def _uniform_poly(ctx: LayerContext) -> np.ndarray:
    n = ctx.he_params.poly_degree
    lo = ctx.rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    hi = ctx.rng.integers(0, 1 << 32, size=n, dtype=np.uint64)
    return ((hi << np.uint64(32)) | lo) & ctx.config.umask()


def _truncate(ctx: LayerContext, acc: np.ndarray) -> np.ndarray:
    flat = acc.reshape(-1)
    out = gadgets.truncate(
        ctx.party, ctx.chan, ctx.prov, flat, ctx.config.frac_bits,
        ctx.config, ctx.trunc_mode,
    )
    return out.reshape(acc.shape)


# ---------------------------------------------------------------------------
# linear layers

def _fc_acc(ctx: LayerContext, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Shares of W x + b*scale before truncation."""
    cfg = ctx.config
    if ctx.party == MODEL_OWNER:
        out_dim, in_dim = layer.weight.shape
    else:
        out_dim, in_dim = layer.params["out_dim"], layer.params["in_dim"]
    x = x.reshape(-1)
    if x.shape != (in_dim,):
        raise ValueError(f"fc expects {in_dim} inputs, got {x.shape}")

    key = ("fc", id(layer))
    if key not in ctx._plan_cache:
        plan = MatvecPlan(ctx.he_params.poly_degree, out_dim, in_dim)
        wpolys = None
        if ctx.party == MODEL_OWNER:
            wpolys = [
                [PackedPlaintext(ctx.he_params, p) for p in group]
                for group in plan.pack_weights(layer.weight)
            ]
        ctx._plan_cache[key] = (plan, wpolys)
    plan, wpolys = ctx._plan_cache[key]

    if ctx.party == CLOUD:
        cts = [
            encrypt(ctx.pk, PackedPlaintext(ctx.he_params, p), ctx.rng)
            for p in plan.pack_input(x)
        ]
        _send_cts(ctx.chan, Tag.LIN_CT, cts)
        results = _recv_cts(ctx.chan, Tag.LIN_RESULT, ctx.he_params)
        polys = [decrypt(ctx.sk, ct).poly for ct in results]
        return plan.unpack(polys)

    cts = _recv_cts(ctx.chan, Tag.LIN_CT, ctx.he_params)
    masks = []
    out_cts = []
    for group in wpolys:
        acc_ct = None
        for c, wp in enumerate(group):
            term = eval_plain_mul(cts[c], wp)
            acc_ct = term if acc_ct is None else eval_add(acc_ct, term)
        mask = _uniform_poly(ctx)
        masks.append(mask)
        out_cts.append(eval_add_plain(acc_ct, PackedPlaintext(ctx.he_params, mask)))
    _send_cts(ctx.chan, Tag.LIN_RESULT, out_cts)
    acc = (layer.weight @ x) - plan.unpack(masks)
    if layer.bias is not None:
        acc = acc + layer.bias * np.uint64(cfg.scale)
    return acc & cfg.umask()


def fc_forward(ctx: LayerContext, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    return _truncate(ctx, _fc_acc(ctx, x, layer))


def _conv_acc(ctx: LayerContext, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    cfg = ctx.config
    p = layer.params
    stride, padding = p.get("stride", 1), p.get("padding", 0)
    if ctx.party == MODEL_OWNER:
        kshape = layer.weight.shape
    else:
        kshape = (p["out_ch"], p["in_ch"], p["kh"], p["kw"])

    key = ("conv", id(layer), x.shape)
    if key not in ctx._plan_cache:
        plan = Conv2dPlan(ctx.he_params.poly_degree, x.shape, kshape,
                          stride, padding)
        wpolys = None
        if ctx.party == MODEL_OWNER:
            wpolys = {
                k: PackedPlaintext(ctx.he_params, poly)
                for k, poly in plan.pack_weights(layer.weight).items()
            }
        ctx._plan_cache[key] = (plan, wpolys)
    plan, wpolys = ctx._plan_cache[key]
    keys = [(oc, bi) for oc in range(plan.c_out) for bi in range(len(plan.bands))]

    if ctx.party == CLOUD:
        packed = plan.pack_input(x)
        cts = [
            encrypt(ctx.pk, PackedPlaintext(ctx.he_params, packed[(bi, ci)]),
                    ctx.rng)
            for bi in range(len(plan.bands))
            for ci in range(plan.n_chunks)
        ]
        _send_cts(ctx.chan, Tag.LIN_CT, cts)
        results = _recv_cts(ctx.chan, Tag.LIN_RESULT, ctx.he_params)
        polys = {k: decrypt(ctx.sk, ct).poly for k, ct in zip(keys, results)}
        return plan.unpack(polys)

    cts = _recv_cts(ctx.chan, Tag.LIN_CT, ctx.he_params)
    ct_of = {
        (bi, ci): cts[bi * plan.n_chunks + ci]
        for bi in range(len(plan.bands))
        for ci in range(plan.n_chunks)
    }
    masks = {}
    out_cts = []
    for oc, bi in keys:
        acc_ct = None
        for ci in range(plan.n_chunks):
            term = eval_plain_mul(ct_of[(bi, ci)], wpolys[(oc, bi, ci)])
            acc_ct = term if acc_ct is None else eval_add(acc_ct, term)
        mask = _uniform_poly(ctx)
        masks[(oc, bi)] = mask
        out_cts.append(eval_add_plain(acc_ct, PackedPlaintext(ctx.he_params, mask)))
    _send_cts(ctx.chan, Tag.LIN_RESULT, out_cts)
    acc = conv2d_plain_acc(layer.weight, x, stride, padding) - plan.unpack(masks)
    if layer.bias is not None:
        acc = acc + layer.bias[:, None, None] * np.uint64(cfg.scale)
    return acc & cfg.umask()


def conv2d_forward(ctx: LayerContext, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    return _truncate(ctx, _conv_acc(ctx, x, layer))


# ---------------------------------------------------------------------------
# batchnorm

def batchnorm_fold(w_tilde, b_tilde, mu, sigma):
    """Absorb normalization into per-channel affine constants.

    Real-arithmetic fold, performed before quantization:
    W_c = w~ / sigma, b_c = b~ - mu * w~ / sigma.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("batchnorm sigma must be positive")
    w_c = np.asarray(w_tilde, dtype=np.float64) / sigma
    b_c = np.asarray(b_tilde, dtype=np.float64) - np.asarray(mu) * w_c
    return w_c, b_c


def batchnorm_forward(ctx: LayerContext, x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Per-channel affine with owner-held constants.

    The constants are model weights, so the scaling runs as a Beaver
    multiplication with the owner contributing (W_c, broadcast) and the
    cloud contributing zero; the cloud never sees the constants.
    """
    cfg = ctx.config
    if ctx.party == MODEL_OWNER:
        bshape = (-1,) + (1,) * (x.ndim - 1)
        w_full = np.broadcast_to(layer.weight.reshape(bshape), x.shape)
        w_share = np.ascontiguousarray(w_full).reshape(-1)
    else:
        w_share = np.zeros(x.size, dtype=np.uint64)
    acc = gadgets.secure_mul(
        ctx.party, ctx.chan, ctx.prov, x.reshape(-1), w_share, cfg
    ).reshape(x.shape)
    if ctx.party == MODEL_OWNER and layer.bias is not None:
        bshape = (-1,) + (1,) * (x.ndim - 1)
        acc = (acc + layer.bias.reshape(bshape) * np.uint64(cfg.scale)) & cfg.umask()
    return _truncate(ctx, acc)


# ---------------------------------------------------------------------------
# nonlinear layers

def relu_forward(ctx: LayerContext, x: np.ndarray) -> np.ndarray:
    flat = x.reshape(-1)
    out = gadgets.relu(ctx.party, ctx.chan, ctx.prov, flat, ctx.config)
    return out.reshape(x.shape)


def avgpool_forward(ctx: LayerContext, x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    c, h, w = x.shape
    if h % kh or w % kw:
        raise ValueError(f"pool {kh}x{kw} does not tile {h}x{w}")
    sums = x.reshape(c, h // kh, kh, w // kw, kw).sum(axis=(2, 4), dtype=np.uint64)
    flat = sums.reshape(-1) & ctx.config.umask()
    out = gadgets.divide_public(
        ctx.party, ctx.chan, ctx.prov, flat, kh * kw, ctx.config
    )
    return out.reshape(sums.shape)


def add_skip_forward(x: np.ndarray, skip: np.ndarray, cfg: RingConfig) -> np.ndarray:
    """Residual connection: local share addition, no communication."""
    return (x + skip) & cfg.umask()
