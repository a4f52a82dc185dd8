"""Four-phase inference orchestration.

Phase 1: the user derives a one-time session key and encapsulates it to
the cloud server's public key.  Phase 2: the query is routed to a model
server by capability tag.  Phase 3: the input is additively shared; one
share goes in plaintext to the model server, the other AEAD-encrypted
under the session key to the cloud, and the two servers run the secure
inference protocol.  Phase 4: the user decrypts the cloud's result
share, reconstructs the logits, and renders a response.

Shares travel directly between user and servers; the router only
returns endpoints.  Response text is produced by a template renderer by
default, with a pluggable external-chat backend behind the same
interface.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
from dataclasses import dataclass, field

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .ring import FixedTensor, RingConfig
from .sharing import share

__all__ = [
    "ServerEntry",
    "ServerRegistry",
    "RoutePlan",
    "SessionKey",
    "NoRouteError",
    "KeywordRouter",
    "ExternalChatRouter",
    "route_intent",
    "encapsulate_session_key",
    "decapsulate_session_key",
    "confirmation_mac",
    "ReplayGuard",
    "seal",
    "open_sealed",
    "USER_TO_CLOUD",
    "CLOUD_TO_USER",
    "split_input",
    "reconstruct_result",
    "compose_response",
    "sign_registry",
    "load_registry",
]


class NoRouteError(RuntimeError):
    """No registry entry matches the query's task."""


class RegistryError(ValueError):
    """Malformed or badly signed registry document."""


@dataclass(frozen=True)
class ServerEntry:
    server_id: str
    endpoint: str  # host:port
    tags: tuple
    pubkey: bytes | None = None  # X25519 public key, cloud entries only
    meta: tuple = ()  # sorted (key, value) pairs: input shape, labels, ...

    def meta_dict(self) -> dict:
        return dict(self.meta)

    @property
    def host(self) -> str:
        return self.endpoint.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.endpoint.rsplit(":", 1)[1])


@dataclass
class ServerRegistry:
    """Read-only server directory plus the shared transport key."""

    entries: list
    psk: bytes = b""

    def __post_init__(self):
        ids = [e.server_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise RegistryError("duplicate server ids")
        for e in self.entries:
            if not e.tags:
                raise RegistryError(f"entry {e.server_id} has no capability tags")

    def first_with_tag(self, tag: str) -> ServerEntry | None:
        for e in self.entries:  # registry order breaks ties
            if tag in e.tags:
                return e
        return None


@dataclass(frozen=True)
class RoutePlan:
    model_server: ServerEntry
    cloud_server: ServerEntry
    task_tag: str


@dataclass
class SessionKey:
    """One-time 32-byte key with direction-separated counter nonces."""

    key: bytes
    session_id: bytes
    _counters: dict = field(default_factory=dict)

    def next_nonce(self, direction: int) -> bytes:
        # 96-bit nonce: 4 direction bytes + 8 counter bytes
        c = self._counters.get(direction, 0)
        self._counters[direction] = c + 1
        return direction.to_bytes(4, "little") + c.to_bytes(8, "little")


# ---------------------------------------------------------------------------
# routing

DEFAULT_RULES = [
    ({"chest", "scan", "xray", "x-ray", "lung", "radiograph"}, "cnn-chest-xray"),
    ({"digit", "handwritten", "handwriting"}, "digits"),
    ({"image", "photo", "picture", "classify"}, "image-classify"),
]


class KeywordRouter:
    """Deterministic keyword-to-tag mapping; first matching rule wins."""

    def __init__(self, rules=None):
        self.rules = rules or DEFAULT_RULES

    def __call__(self, query: str) -> str | None:
        words = set(query.lower().replace("?", " ").replace(",", " ").split())
        for keywords, tag in self.rules:
            if words & keywords:
                return tag
        return None


class ExternalChatRouter:
    """Adapter for an external chat-completion endpoint.

    ``client`` is any callable text -> text; the reply is trimmed to the
    first whitespace-delimited token and validated against the registry
    by route_intent.  On client failure, falls back to keyword rules and
    sets ``fell_back``.
    """

    def __init__(self, client, fallback: KeywordRouter | None = None):
        self.client = client
        self.fallback = fallback or KeywordRouter()
        self.fell_back = False

    def __call__(self, query: str) -> str | None:
        try:
            reply = self.client(
                "Answer with a single capability tag for this request: " + query
            )
            return str(reply).strip().split()[0]
        except Exception:
            self.fell_back = True
            return self.fallback(query)


def route_intent(query: str, reg: ServerRegistry, router=None) -> RoutePlan:
    """Map a query to a (model server, cloud server) pair."""
    if not query.strip():
        raise NoRouteError("empty query")
    router = router or KeywordRouter()
    tag = router(query)
    if tag is None:
        raise NoRouteError(f"no rule matches query {query!r}")
    model = reg.first_with_tag(tag)
    if model is None:
        raise NoRouteError(f"no server offers capability {tag!r}")
    cloud = reg.first_with_tag("cloud")
    if cloud is None:
        raise NoRouteError("registry has no cloud-capable entry")
    return RoutePlan(model, cloud, tag)


# ---------------------------------------------------------------------------
# session key establishment

def _kem_wrap_key(shared: bytes, eph_pub: bytes, cloud_pub: bytes) -> bytes:
    return hashlib.sha256(b"kem-wrap" + shared + eph_pub + cloud_pub).digest()


def encapsulate_session_key(cloud_pub_bytes: bytes) -> tuple[SessionKey, bytes]:
    """Generate k and wrap it to the cloud's X25519 public key.

    Returns (session key, encapsulation blob).  The blob carries the
    ephemeral public key, the session id, and the AEAD-wrapped k.
    """
    k = os.urandom(32)
    sid = os.urandom(16)
    eph = X25519PrivateKey.generate()
    eph_pub = eph.public_key().public_bytes_raw()
    shared = eph.exchange(X25519PublicKey.from_public_bytes(cloud_pub_bytes))
    wrap = ChaCha20Poly1305(_kem_wrap_key(shared, eph_pub, cloud_pub_bytes))
    box = wrap.encrypt(b"\x00" * 12, k, sid)
    return SessionKey(k, sid), eph_pub + sid + box


class ReplayGuard:
    """Rejects encapsulations whose session id was already seen."""

    def __init__(self):
        self._seen: set = set()

    def check(self, session_id: bytes):
        if session_id in self._seen:
            raise ValueError("replayed session establishment rejected")
        self._seen.add(session_id)


def decapsulate_session_key(
    cloud_priv: X25519PrivateKey, blob: bytes, guard: ReplayGuard | None = None
) -> SessionKey:
    eph_pub, sid, box = blob[:32], blob[32:48], blob[48:]
    if guard is not None:
        guard.check(sid)
    cloud_pub = cloud_priv.public_key().public_bytes_raw()
    shared = cloud_priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    wrap = ChaCha20Poly1305(_kem_wrap_key(shared, eph_pub, cloud_pub))
    k = wrap.decrypt(b"\x00" * 12, box, sid)  # InvalidTag on tampering
    return SessionKey(k, sid)


def confirmation_mac(sk: SessionKey) -> bytes:
    """Key-confirmation tag proving possession of k for this session."""
    return hmac.new(sk.key, b"confirm" + sk.session_id, hashlib.sha256).digest()


# ---------------------------------------------------------------------------
# share transport AEAD

USER_TO_CLOUD = 1
CLOUD_TO_USER = 2


def seal(sk: SessionKey, direction: int, payload: bytes) -> bytes:
    nonce = sk.next_nonce(direction)
    return nonce + ChaCha20Poly1305(sk.key).encrypt(nonce, payload, sk.session_id)


def open_sealed(sk: SessionKey, blob: bytes) -> bytes:
    nonce, ct = blob[:12], blob[12:]
    return ChaCha20Poly1305(sk.key).decrypt(nonce, ct, sk.session_id)


# ---------------------------------------------------------------------------
# response composition

def compose_response(
    query: str, result: FixedTensor, labels: list, top_k: int = 3,
    chat_client=None,
) -> str:
    """Render the reconstructed logits as a textual answer.

    Default backend is a deterministic template naming the top-k
    classes.  A pluggable chat client may rephrase the summary; if it
    fails, the template output is returned with a warning suffix.
    """
    logits = result.to_real().reshape(-1)
    if len(labels) != len(logits):
        raise ValueError(
            f"{len(labels)} labels for {len(logits)} logits"
        )
    order = np.argsort(-logits, kind="stable")  # ties fall back to label order
    k = min(top_k, len(labels))
    top = [(labels[i], float(logits[i])) for i in order[:k]]
    tied = len(set(np.round(logits, 12))) == 1 and len(logits) > 1
    if tied:
        names = ", ".join(lbl for lbl, _ in top)
        summary = (
            f"The model scores are tied; the top {k} classes in label "
            f"order are: {names}."
        )
    else:
        best, score = top[0]
        rest = "; ".join(f"{lbl} ({val:.4f})" for lbl, val in top[1:])
        summary = f"The most likely finding is {best} (score {score:.4f})."
        if rest:
            summary += f" Runners-up: {rest}."
    if chat_client is not None:
        try:
            return str(chat_client(f"Query: {query}\nFindings: {summary}"))
        except Exception:
            return summary + " [external responder unavailable; template used]"
    return summary


# ---------------------------------------------------------------------------
# signed registry document

def sign_registry(entries: list, psk: bytes, signing_key: Ed25519PrivateKey) -> str:
    payload = {
        "psk": psk.hex(),
        "entries": [
            {
                "id": e.server_id,
                "endpoint": e.endpoint,
                "tags": list(e.tags),
                "pubkey": e.pubkey.hex() if e.pubkey else None,
                "meta": dict(e.meta),
            }
            for e in entries
        ],
    }
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    sig = signing_key.sign(body.encode())
    doc = {
        "payload": payload,
        "sig": sig.hex(),
        "verify_key": signing_key.public_key().public_bytes_raw().hex(),
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def load_registry(text: str) -> ServerRegistry:
    try:
        doc = json.loads(text)
        payload = doc["payload"]
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        vk = Ed25519PublicKey.from_public_bytes(bytes.fromhex(doc["verify_key"]))
        vk.verify(bytes.fromhex(doc["sig"]), body.encode())
    except InvalidSignature as e:
        raise RegistryError("registry signature verification failed") from e
    except (KeyError, ValueError, TypeError) as e:
        raise RegistryError(f"malformed registry document: {e}") from e
    entries = [
        ServerEntry(
            d["id"],
            d["endpoint"],
            tuple(d["tags"]),
            bytes.fromhex(d["pubkey"]) if d.get("pubkey") else None,
            tuple(sorted(d.get("meta", {}).items())),
        )
        for d in payload["entries"]
    ]
    return ServerRegistry(entries, bytes.fromhex(payload["psk"]))


# ---------------------------------------------------------------------------
# share dispatch helpers (transport-independent pieces used by the CLI)

def split_input(
    x: FixedTensor, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Phase 3 entry: share the input; x0 for the model server (plain),
    x1 for the cloud (to be sealed under the session key)."""
    st = share(x, rng or np.random.default_rng())
    return st.share0.values.data, st.share1.values.data


def reconstruct_result(
    res0: np.ndarray, res1: np.ndarray, cfg: RingConfig
) -> FixedTensor:
    return FixedTensor((res0 + res1) & cfg.umask(), cfg)
