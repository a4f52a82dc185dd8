"""Long-running party daemons and the user-side client flow.

The model server (party 0) holds the model and accepts user sessions;
per session it connects to the cloud server and drives the secure
inference as model owner.  The cloud server (party 1) decapsulates the
user's one-time session key, receives the sealed input share, plays the
cloud party, and returns the sealed result share.  All frames travel
over MAC'd socket channels keyed by the registry's shared transport
key; the user's share and result additionally ride inside AEAD
ciphertexts under the per-session key.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import json
import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from .channel import (
    ProtocolError,
    SocketChannel,
    Tag,
    pack_array,
    unpack_array,
)
from .he import HEParams
from .layers import setup_layer_context
from .model import ModelSpec, load_model, save_model, strip_weights
from .orchestrator import (
    CLOUD_TO_USER,
    USER_TO_CLOUD,
    ReplayGuard,
    RoutePlan,
    ServerRegistry,
    SessionKey,
    confirmation_mac,
    decapsulate_session_key,
    encapsulate_session_key,
    open_sealed,
    seal,
    split_input,
)
from .ot.providers import make_provider
from .ring import FixedTensor
from .runtime import run_secure_inference

__all__ = ["ModelServer", "CloudServer", "run_user_flow", "cloud_key_from_seed"]


def _dealer_seed(session_id: bytes) -> int:
    return int.from_bytes(
        hashlib.sha256(b"dealer-seed" + session_id).digest()[:8], "little"
    )


def cloud_key_from_seed(seed: int | None) -> X25519PrivateKey:
    """Static cloud identity key; seeded variants for reproducible tests."""
    if seed is None:
        return X25519PrivateKey.generate()
    raw = hashlib.sha256(b"cloud-identity" + seed.to_bytes(8, "little")).digest()
    return X25519PrivateKey.from_private_bytes(raw)


class _Daemon:
    """Accept loop shared by both server roles."""

    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self._sock.settimeout(0.2)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._threads: list = []

    def serve_forever(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._handle_safe, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)
        self._sock.close()

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t

    def stop(self):
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5)

    def _handle_safe(self, conn: socket.socket):
        try:
            self._handle(conn)
        except Exception as e:
            self.on_error(e)
            try:
                conn.close()
            except OSError:
                pass

    def on_error(self, e: Exception):
        pass

    def _handle(self, conn: socket.socket):
        raise NotImplementedError


class ModelServer(_Daemon):
    """Party 0 daemon: owns the weights, initiates the 2PC channel."""

    def __init__(self, host: str, port: int, model: ModelSpec, psk: bytes,
                 he_params: HEParams | None = None):
        super().__init__(host, port)
        self.model = model
        self.psk = psk
        self.he_params = he_params or HEParams(plain_modulus=model.config.modulus)
        self.arch_bytes = save_model(strip_weights(model))
        self.sessions_served = 0
        self.last_stats = None
        self.errors: list = []

    def on_error(self, e: Exception):
        self.errors.append(repr(e))

    def _handle(self, conn: socket.socket):
        chan = SocketChannel.accept(conn, self.psk)
        try:
            _, payload = chan.recv(Tag.CONTROL)
            msg = json.loads(payload)
            if msg.get("op") != "infer":
                raise ProtocolError(f"unexpected op {msg.get('op')!r}")
            x0 = chan.recv_array(Tag.SHARE)
            if x0.shape != self.model.input_shape and \
                    x0.shape[1:] != self.model.input_shape:
                chan.abort(f"input shape {x0.shape} does not match model")
                return
            sid = bytes.fromhex(msg["session"])
            host, port = msg["cloud"].rsplit(":", 1)
            cloud = SocketChannel.connect(host, int(port), self.psk,
                                          session_id=sid)
            try:
                cloud.send(Tag.CONTROL, json.dumps({
                    "op": "mpc",
                    "session": msg["session"],
                    "ot": msg.get("ot", "dealer"),
                    "trunc": msg.get("trunc", "faithful"),
                }).encode())
                cloud.send(Tag.CONTROL, self.arch_bytes)
                prov = make_provider(msg.get("ot", "dealer"), 0, cloud,
                                     _dealer_seed(sid))
                ctx = setup_layer_context(
                    0, cloud, prov, self.model.config, self.he_params,
                    msg.get("trunc", "faithful"),
                )
                t0 = time.perf_counter()
                res0 = run_secure_inference(ctx, self.model, x0)
                elapsed = time.perf_counter() - t0
            finally:
                cloud.close()
            stats = {
                "op": "result",
                "runtime_s": elapsed,
                "bytes_sent": cloud.stats.bytes_sent,
                "bytes_received": cloud.stats.bytes_received,
                "rounds": cloud.stats.rounds,
                "per_layer": cloud.stats.per_layer,
            }
            chan.send(Tag.CONTROL, json.dumps(stats).encode())
            chan.send_array(Tag.SHARE, res0)
            self.sessions_served += 1
            self.last_stats = stats
        finally:
            chan.close()


@dataclass
class _Session:
    key: SessionKey | None = None
    x1: np.ndarray | None = None
    res1: np.ndarray | None = None
    input_ready: threading.Event = field(default_factory=threading.Event)
    result_ready: threading.Event = field(default_factory=threading.Event)


class CloudServer(_Daemon):
    """Party 1 daemon: holds the HE secret key side of each session."""

    def __init__(self, host: str, port: int, identity: X25519PrivateKey,
                 psk: bytes, he_params: HEParams | None = None,
                 session_timeout: float = 120.0):
        super().__init__(host, port)
        self.identity = identity
        self.psk = psk
        self.he_params = he_params
        self.session_timeout = session_timeout
        self.guard = ReplayGuard()
        self._sessions: dict = {}
        self._lock = threading.Lock()
        self.errors: list = []

    def on_error(self, e: Exception):
        self.errors.append(repr(e))

    def _session(self, sid: bytes) -> _Session:
        with self._lock:
            return self._sessions.setdefault(sid, _Session())

    def _handle(self, conn: socket.socket):
        chan = SocketChannel.accept(conn, self.psk)
        try:
            _, payload = chan.recv(Tag.CONTROL)
            msg = json.loads(payload)
            op = msg.get("op")
            if op == "establish":
                self._handle_user(chan, msg)
            elif op == "mpc":
                self._handle_mpc(chan, msg)
            else:
                raise ProtocolError(f"unexpected op {op!r}")
        finally:
            chan.close()

    def _handle_user(self, chan: SocketChannel, msg: dict):
        try:
            sk = decapsulate_session_key(
                self.identity, bytes.fromhex(msg["blob"]), self.guard
            )
        except Exception:
            chan.abort("session key decapsulation failed")
            return
        sess = self._session(sk.session_id)
        sess.key = sk
        chan.send(Tag.CONTROL, json.dumps({
            "op": "confirm", "mac": confirmation_mac(sk).hex(),
        }).encode())
        _, payload = chan.recv(Tag.CONTROL)
        if json.loads(payload).get("op") != "input":
            raise ProtocolError("expected input op")
        _, sealed = chan.recv(Tag.SHARE)
        try:
            sess.x1 = unpack_array(open_sealed(sk, sealed))
        except Exception:
            chan.abort("input share failed authentication")
            return
        sess.input_ready.set()
        if not sess.result_ready.wait(self.session_timeout):
            chan.abort("inference timed out")
            return
        chan.send(Tag.CONTROL, json.dumps({"op": "result"}).encode())
        chan.send(Tag.SHARE, seal(sk, CLOUD_TO_USER, pack_array(sess.res1)))

    def _handle_mpc(self, chan: SocketChannel, msg: dict):
        sid = bytes.fromhex(msg["session"])
        _, arch_bytes = chan.recv(Tag.CONTROL)
        arch = load_model(arch_bytes)
        sess = self._session(sid)
        if not sess.input_ready.wait(self.session_timeout):
            chan.abort("no input share arrived for this session")
            return
        prov = make_provider(msg.get("ot", "dealer"), 1, chan, _dealer_seed(sid))
        he_params = self.he_params or HEParams(
            plain_modulus=arch.config.modulus
        )
        ctx = setup_layer_context(
            1, chan, prov, arch.config, he_params, msg.get("trunc", "faithful"),
        )
        sess.res1 = run_secure_inference(ctx, arch, sess.x1)
        sess.result_ready.set()


class SessionFailure(RuntimeError):
    """The user-side flow could not complete."""


def run_user_flow(
    plan: RoutePlan,
    reg: ServerRegistry,
    x_real: np.ndarray,
    config=None,
    ot: str = "dealer",
    trunc: str = "faithful",
    seed: int | None = None,
    timeout: float = 180.0,
):
    """Phases 1, 3 and 4 of one inference against live servers.

    Returns (result FixedTensor, stats dict from the model server).
    """
    from .ring import RingConfig

    cfg = config or RingConfig()
    if plan.cloud_server.pubkey is None:
        raise SessionFailure("cloud registry entry lacks a public key")
    sk, blob = encapsulate_session_key(plan.cloud_server.pubkey)
    x = FixedTensor.from_real(x_real, cfg)
    rng = np.random.default_rng(seed)
    x0, x1 = split_input(x, rng)

    cloud = SocketChannel.connect(
        plan.cloud_server.host, plan.cloud_server.port, reg.psk,
        session_id=sk.session_id, timeout=timeout,
    )
    try:
        cloud.send(Tag.CONTROL, json.dumps({
            "op": "establish", "blob": blob.hex(),
        }).encode())
        _, payload = cloud.recv(Tag.CONTROL)
        confirm = json.loads(payload)
        if not hmac_mod.compare_digest(
            bytes.fromhex(confirm.get("mac", "")), confirmation_mac(sk)
        ):
            raise SessionFailure("cloud failed key confirmation")
        cloud.send(Tag.CONTROL, json.dumps({"op": "input"}).encode())
        cloud.send(Tag.SHARE, seal(sk, USER_TO_CLOUD, pack_array(x1)))

        model = SocketChannel.connect(
            plan.model_server.host, plan.model_server.port, reg.psk,
            session_id=sk.session_id, timeout=timeout,
        )
        try:
            model.send(Tag.CONTROL, json.dumps({
                "op": "infer",
                "session": sk.session_id.hex(),
                "cloud": plan.cloud_server.endpoint,
                "ot": ot,
                "trunc": trunc,
            }).encode())
            model.send_array(Tag.SHARE, x0)
            _, payload = model.recv(Tag.CONTROL)
            stats = json.loads(payload)
            res0 = model.recv_array(Tag.SHARE)
        finally:
            model.close()

        _, payload = cloud.recv(Tag.CONTROL)
        if json.loads(payload).get("op") != "result":
            raise SessionFailure("cloud returned no result")
        _, sealed = cloud.recv(Tag.SHARE)
        res1 = unpack_array(open_sealed(sk, sealed))
    finally:
        cloud.close()
    return FixedTensor((res0 + res1) & cfg.umask(), cfg), stats
