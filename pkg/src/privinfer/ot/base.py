"""1-out-of-2 base oblivious transfer.

Discrete-log key-agreement construction over the 2048-bit MODP group:
the sender publishes A = g^a; the receiver replies B = g^b (choice 0)
or A*g^b (choice 1).  The sender derives both session keys, the
receiver only the chosen one.  Used in small counts to seed the OT
extension; semi-honest model.
"""

from __future__ import annotations

import hashlib
import os

from ..channel import BaseChannel, Tag

try:
    from gmpy2 import powmod as _powmod
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _powmod = pow

# RFC 3526, 2048-bit MODP group (id 14)
P_HEX = (
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF"
)
GROUP_P = int(P_HEX, 16)
GROUP_G = 2
EXP_BITS = 256  # exponent size; DL security of the 2048-bit group

KEY_LEN = 16


def _rand_exp() -> int:
    return int.from_bytes(os.urandom(EXP_BITS // 8), "little") | 1


def _derive_key(index: int, a_pub: int, b_pub: int, shared: int) -> bytes:
    h = hashlib.sha256()
    h.update(index.to_bytes(4, "little"))
    h.update(a_pub.to_bytes(256, "little"))
    h.update(b_pub.to_bytes(256, "little"))
    h.update(shared.to_bytes(256, "little"))
    return h.digest()[:KEY_LEN]


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def base_ot_send(chan: BaseChannel, messages: list[tuple[bytes, bytes]]):
    """Transfer message pairs; the receiver learns one of each pair."""
    n = len(messages)
    exps = [_rand_exp() for _ in range(n)]
    pubs = [int(_powmod(GROUP_G, a, GROUP_P)) for a in exps]
    chan.send(Tag.OT_SETUP, b"".join(p.to_bytes(256, "little") for p in pubs))
    _, breply = chan.recv(Tag.OT_SETUP)
    blobs = []
    for i, (a, a_pub) in enumerate(zip(exps, pubs)):
        b_pub = int.from_bytes(breply[256 * i : 256 * (i + 1)], "little")
        k0 = _derive_key(i, a_pub, b_pub, int(_powmod(b_pub, a, GROUP_P)))
        binv_a = _powmod(b_pub * _powmod(a_pub, GROUP_P - 2, GROUP_P), a, GROUP_P)
        k1 = _derive_key(i, a_pub, b_pub, int(binv_a))
        m0, m1 = messages[i]
        if len(m0) != KEY_LEN or len(m1) != KEY_LEN:
            raise ValueError("base OT carries fixed 16-byte messages")
        blobs.append(_xor(m0, k0) + _xor(m1, k1))
    chan.send(Tag.OT_SETUP, b"".join(blobs))


def base_ot_recv(chan: BaseChannel, choices: list[int]) -> list[bytes]:
    """Receive the chosen message of each pair."""
    n = len(choices)
    _, areply = chan.recv(Tag.OT_SETUP)
    a_pubs = [
        int.from_bytes(areply[256 * i : 256 * (i + 1)], "little") for i in range(n)
    ]
    exps = [_rand_exp() for _ in range(n)]
    b_pubs = []
    for c, b, a_pub in zip(choices, exps, a_pubs):
        g_b = int(_powmod(GROUP_G, b, GROUP_P))
        b_pubs.append(g_b if c == 0 else (a_pub * g_b) % GROUP_P)
    chan.send(Tag.OT_SETUP, b"".join(p.to_bytes(256, "little") for p in b_pubs))
    _, blobs = chan.recv(Tag.OT_SETUP)
    out = []
    for i, (c, b, a_pub, b_pub) in enumerate(zip(choices, exps, a_pubs, b_pubs)):
        k = _derive_key(i, a_pub, b_pub, int(_powmod(a_pub, b, GROUP_P)))
        pair = blobs[2 * KEY_LEN * i : 2 * KEY_LEN * (i + 1)]
        chosen = pair[KEY_LEN:] if c else pair[:KEY_LEN]
        out.append(_xor(chosen, k))
    return out
