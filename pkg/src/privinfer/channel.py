"""Two-party transport: framing, MACs, and communication accounting.

Every message is a frame: tag (1 byte), session id (16 bytes), payload
length (4 bytes little-endian), payload.  Socket channels append a
16-byte HMAC over the frame, keyed by a per-session key derived from a
pre-shared static key during the handshake.  An in-memory queue-pair
channel with the same interface backs the in-process tests.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

__all__ = [
    "Tag",
    "CommStats",
    "InMemoryChannel",
    "SocketChannel",
    "ProtocolError",
    "AuthenticationError",
    "pack_array",
    "unpack_array",
]

HEADER = struct.Struct("<B16sI")
MAC_LEN = 16


class Tag(IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    OT_SETUP = 3
    OT_EXTEND = 4
    OT_CORRECTION = 5
    CMP = 6
    MUX = 7
    DIV = 8
    TRIP = 9
    MULT = 10
    LIN_CT = 11
    LIN_RESULT = 12
    RELU = 13
    POOL = 14
    SHARE = 15
    CONTROL = 16
    ERROR = 17
    BYE = 18


class ProtocolError(RuntimeError):
    """Frame desync, unknown tag, or MAC failure; the session aborts."""


class AuthenticationError(ProtocolError):
    """Peer failed the static-key handshake."""


class ChannelClosed(ProtocolError):
    pass


_DTYPES = {0: "<u8", 1: "u1", 2: "<i8", 3: "<u4"}
_DTYPE_CODES = {np.dtype("uint64"): 0, np.dtype("uint8"): 1,
                np.dtype("int64"): 2, np.dtype("uint32"): 3}


def pack_array(arr: np.ndarray) -> bytes:
    """Shape header + little-endian raw values."""
    code = _DTYPE_CODES[arr.dtype]
    head = struct.pack("<BB", code, arr.ndim)
    head += b"".join(struct.pack("<I", d) for d in arr.shape)
    return head + np.ascontiguousarray(arr).astype(_DTYPES[code]).tobytes()


def unpack_array(data: bytes) -> np.ndarray:
    code, ndim = struct.unpack_from("<BB", data, 0)
    shape = struct.unpack_from(f"<{ndim}I", data, 2) if ndim else ()
    off = 2 + 4 * ndim
    arr = np.frombuffer(data[off:], dtype=_DTYPES[code])
    return arr.reshape(shape).copy()


@dataclass
class CommStats:
    """Byte and round accounting for one protocol session."""

    bytes_sent: int = 0
    bytes_received: int = 0
    rounds: int = 0
    per_layer: dict = field(default_factory=dict)
    phase_seconds: dict = field(default_factory=dict)
    _scope: str = "session"
    _last_dir_send: bool | None = None

    def record(self, n: int, sending: bool):
        if sending:
            self.bytes_sent += n
            if self._last_dir_send is not True:
                self.rounds += 1
        else:
            self.bytes_received += n
        self._last_dir_send = sending
        entry = self.per_layer.setdefault(self._scope, [0, 0])
        entry[0 if sending else 1] += n

    def scope(self, name: str):
        return _Scope(self, name)

    @property
    def total_bytes(self) -> int:
        return self.bytes_sent + self.bytes_received


class _Scope:
    def __init__(self, stats: CommStats, name: str):
        self.stats, self.name = stats, name

    def __enter__(self):
        self.prev = self.stats._scope
        self.stats._scope = self.name
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.stats._scope = self.prev
        self.stats.phase_seconds[self.name] = (
            self.stats.phase_seconds.get(self.name, 0.0)
            + time.perf_counter()
            - self.t0
        )


class BaseChannel:
    """Common framing logic; subclasses provide raw byte transport."""

    def __init__(self, session_id: bytes | None = None):
        self.session_id = session_id or os.urandom(16)
        self.stats = CommStats()
        self.transcript: list | None = None

    def record_transcript(self):
        self.transcript = []

    def send(self, tag: Tag, payload: bytes):
        frame = HEADER.pack(int(tag), self.session_id, len(payload)) + payload
        frame += self._mac(frame)
        self._write(frame)
        self.stats.record(len(frame), sending=True)
        if self.transcript is not None:
            self.transcript.append(("send", int(tag), payload))

    def recv(self, expect: Tag | None = None) -> tuple[Tag, bytes]:
        head = self._read(HEADER.size)
        tag_v, sid, length = HEADER.unpack(head)
        payload = self._read(length) if length else b""
        maclen = len(self._mac(b""))
        if maclen:
            mac = self._read(maclen)
            good = self._mac(head + payload)
            if not hmac.compare_digest(mac, good):
                raise ProtocolError("frame MAC verification failed")
        self.stats.record(HEADER.size + length + maclen, sending=False)
        try:
            tag = Tag(tag_v)
        except ValueError as e:
            raise ProtocolError(f"unknown frame tag {tag_v}") from e
        if sid != self.session_id:
            if self.session_id == b"\x00" * 16:
                self.session_id = sid  # responder adopts initiator's id
            else:
                raise ProtocolError("frame for a different session")
        if tag is Tag.ERROR:
            raise ProtocolError(f"peer abort: {payload[:200]!r}")
        if expect is not None and tag is not expect:
            raise ProtocolError(f"expected {expect.name}, got {tag.name}")
        if self.transcript is not None:
            self.transcript.append(("recv", int(tag), payload))
        return tag, payload

    def send_array(self, tag: Tag, arr: np.ndarray):
        self.send(tag, pack_array(arr))

    def recv_array(self, tag: Tag) -> np.ndarray:
        _, payload = self.recv(tag)
        return unpack_array(payload)

    def exchange_array(self, tag: Tag, arr: np.ndarray, party: int) -> np.ndarray:
        """Both parties send and receive one array; party 0 sends first."""
        if party == 0:
            self.send_array(tag, arr)
            return self.recv_array(tag)
        other = self.recv_array(tag)
        self.send_array(tag, arr)
        return other

    def abort(self, reason: str):
        try:
            self.send(Tag.ERROR, reason.encode()[:200])
        except Exception:
            pass

    def _mac(self, frame: bytes) -> bytes:
        return b""

    def _write(self, data: bytes):
        raise NotImplementedError

    def _read(self, n: int) -> bytes:
        raise NotImplementedError

    def close(self):
        pass


class InMemoryChannel(BaseChannel):
    """Queue-backed duplex channel for in-process two-party runs."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, session_id: bytes):
        super().__init__(session_id)
        self._inbox = inbox
        self._outbox = outbox
        self._buf = b""
        self.timeout = 60.0

    @classmethod
    def make_pair(cls, session_id: bytes | None = None):
        sid = session_id or os.urandom(16)
        q01, q10 = queue.Queue(), queue.Queue()
        return cls(q10, q01, sid), cls(q01, q10, sid)

    def _write(self, data: bytes):
        self._outbox.put(data)

    def _read(self, n: int) -> bytes:
        while len(self._buf) < n:
            try:
                chunk = self._inbox.get(timeout=self.timeout)
            except queue.Empty as e:
                raise ChannelClosed("peer silent past timeout") from e
            if chunk is None:
                raise ChannelClosed("channel closed")
            self._buf += chunk
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def close(self):
        self._outbox.put(None)


def derive_session_key(psk: bytes, nonce_a: bytes, nonce_b: bytes) -> bytes:
    return hmac.new(psk, b"session" + nonce_a + nonce_b, hashlib.sha256).digest()


class SocketChannel(BaseChannel):
    """TCP transport with per-frame HMAC under a handshake-derived key.

    The handshake exchanges fresh nonces in the clear; both sides derive
    the session key from the static pre-shared key and prove possession
    via the HELLO_ACK MAC.  A background writer thread keeps the channel
    full-duplex without send-side deadlock.
    """

    def __init__(self, sock: socket.socket, psk: bytes, is_initiator: bool,
                 session_id: bytes | None = None, timeout: float = 30.0):
        sock.settimeout(timeout)
        self._sock = sock
        self._psk = psk
        self._key: bytes | None = None
        self._sendq: queue.Queue = queue.Queue()
        self._send_exc: Exception | None = None
        self._writer = threading.Thread(target=self._writer_loop, daemon=True)
        super().__init__(session_id)
        self._writer.start()
        self._handshake(is_initiator)

    @classmethod
    def connect(cls, host: str, port: int, psk: bytes,
                session_id: bytes | None = None, timeout: float = 30.0):
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock, psk, is_initiator=True, session_id=session_id,
                   timeout=timeout)

    @classmethod
    def accept(cls, sock: socket.socket, psk: bytes, timeout: float = 30.0):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock, psk, is_initiator=False, session_id=b"\x00" * 16,
                   timeout=timeout)

    def _handshake(self, is_initiator: bool):
        nonce = os.urandom(32)
        if is_initiator:
            self.send(Tag.HELLO, nonce)
            _, peer_nonce = self.recv(Tag.HELLO)
            self._key = derive_session_key(self._psk, nonce, peer_nonce)
            self.send(Tag.HELLO_ACK, b"")
            try:
                self.recv(Tag.HELLO_ACK)
            except ProtocolError as e:
                raise AuthenticationError("peer key mismatch") from e
        else:
            _, peer_nonce = self.recv(Tag.HELLO)
            self.send(Tag.HELLO, nonce)
            self._key = derive_session_key(self._psk, peer_nonce, nonce)
            try:
                self.recv(Tag.HELLO_ACK)
            except ProtocolError as e:
                raise AuthenticationError("peer key mismatch") from e
            self.send(Tag.HELLO_ACK, b"")

    def _mac(self, frame: bytes) -> bytes:
        if self._key is None:
            return b"\x00" * MAC_LEN
        return hmac.new(self._key, frame, hashlib.sha256).digest()[:MAC_LEN]

    def _writer_loop(self):
        while True:
            data = self._sendq.get()
            if data is None:
                return
            try:
                self._sock.sendall(data)
            except OSError as e:
                self._send_exc = e
                return

    def _write(self, data: bytes):
        if self._send_exc:
            raise ChannelClosed(str(self._send_exc))
        self._sendq.put(data)

    def _read(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except socket.timeout as e:
                raise ChannelClosed("receive timeout") from e
            if not chunk:
                raise ChannelClosed("peer closed connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self):
        self._sendq.put(None)
        self._writer.join(timeout=5)
        try:
            self._sock.close()
        except OSError:
            pass
