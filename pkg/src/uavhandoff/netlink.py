"""Wire framing for inter-drone messages and the two transports that carry it.

Frame layout (little-endian)::

    magic  "SHK1"   4 bytes
    type            1 byte
    seq             4 bytes (u32)
    length          2 bytes (u16, payload length)
    payload         length bytes
    crc32           4 bytes, reflected poly 0xEDB88320 over type..payload
"""

from __future__ import annotations

import enum
import heapq
import itertools
import socket
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MAGIC = b"SHK1"
HEADER = struct.Struct("<4sBIH")
CRC = struct.Struct("<I")
MAX_PAYLOAD = 0xFFFF
# Largest UDP payload over IPv4.
MAX_DATAGRAM = 65507


class MsgType(enum.IntEnum):
    RELIEF_REQUEST = 0x01
    HELLO = 0x02
    HELLO_ACK = 0x03
    STATE_UPDATE = 0x04
    TEMPLATE_META = 0x05
    TEMPLATE_CHUNK = 0x06
    TEMPLATE_ACK = 0x07
    RETRY_TEMPLATE = 0x08
    MATCH_REPORT = 0x09
    ROLE_SWAP = 0x0A
    SWAP_ACK = 0x0B
    BYE = 0x0C


class PayloadTooLarge(ValueError):
    pass


class DecodeError(ValueError):
    pass


class BadMagic(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class BadLength(DecodeError):
    """Bytes left over after the declared frame."""


class BadChecksum(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class SocketUnavailable(OSError):
    pass


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    seq: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError(f"seq out of u32 range: {self.seq}")


def encode(m: WireMessage) -> bytes:
    if len(m.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(m.payload)} bytes exceeds {MAX_PAYLOAD}")
    head = HEADER.pack(MAGIC, int(m.msg_type), m.seq, len(m.payload))
    body = head[4:] + m.payload
    return MAGIC + body + CRC.pack(zlib.crc32(body))


def decode(data: bytes) -> WireMessage:
    """Parse one frame; raises a DecodeError subclass, never anything else."""
    data = bytes(data)
    if data[:4] != MAGIC[: len(data[:4])]:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < HEADER.size + CRC.size:
        raise Truncated(f"{len(data)} bytes is shorter than an empty frame")
    _, mtype, seq, length = HEADER.unpack_from(data)
    end = HEADER.size + length
    if len(data) < end + CRC.size:
        raise Truncated(f"declared payload {length} but only {len(data) - HEADER.size - CRC.size} bytes")
    if len(data) > end + CRC.size:
        raise BadLength(f"{len(data) - end - CRC.size} trailing bytes")
    (crc,) = CRC.unpack_from(data, end)
    if zlib.crc32(data[4:end]) != crc:
        raise BadChecksum("crc mismatch")
    try:
        kind = MsgType(mtype)
    except ValueError:
        raise UnknownType(f"unknown message type 0x{mtype:02x}") from None
    return WireMessage(kind, seq, data[HEADER.size : end])


@dataclass(frozen=True)
class ChannelParams:
    latency_ms: float = 50.0
    jitter_ms: float = 0.0
    loss_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")


@dataclass
class SimChannel:
    """One-way seeded lossy link; frames are encoded on send and decoded on
    delivery so every hop exercises the wire format."""

    params: ChannelParams
    rng: np.random.Generator = field(init=False)
    _queue: list = field(default_factory=list, init=False)
    _counter: itertools.count = field(default_factory=itertools.count, init=False)
    sent: int = field(default=0, init=False)
    dropped: int = field(default=0, init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.params.seed)

    def send(self, m: WireMessage, t_now: float) -> None:
        frame = encode(m)
        self.sent += 1
        # Both draws happen every send so the schedule does not depend on
        # which earlier messages were lost.
        lost = self.rng.random() < self.params.loss_prob
        jitter = self.rng.uniform(-1.0, 1.0) * self.params.jitter_ms
        if lost:
            self.dropped += 1
            return
        delay = max(0.0, (self.params.latency_ms + jitter) / 1000.0)
        heapq.heappush(self._queue, (t_now + delay, next(self._counter), frame))

    def poll(self, t_now: float) -> list[WireMessage]:
        out = []
        while self._queue and self._queue[0][0] <= t_now:
            _, _, frame = heapq.heappop(self._queue)
            out.append(decode(frame))
        return out

    def next_delivery(self) -> Optional[float]:
        return self._queue[0][0] if self._queue else None

    def __len__(self) -> int:
        return len(self._queue)


class DatagramTransport:
    """UDP endpoint carrying encoded frames. ``send`` blocks, ``poll`` does
    not; undecodable datagrams are counted and dropped."""

    def __init__(self, bind_addr: tuple[str, int], peer_addr: Optional[tuple[str, int]] = None):
        self.peer_addr = peer_addr
        self.rejected = 0
        try:
            self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self.sock.bind(bind_addr)
        except OSError as exc:
            raise SocketUnavailable(f"cannot bind {bind_addr}: {exc}") from exc
        self.sock.setblocking(False)

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def send(self, m: WireMessage, addr: Optional[tuple[str, int]] = None) -> None:
        frame = encode(m)
        if len(frame) > MAX_DATAGRAM:
            raise PayloadTooLarge(f"frame of {len(frame)} bytes exceeds one datagram")
        target = addr or self.peer_addr
        if target is None:
            raise ValueError("no destination address")
        self.sock.setblocking(True)
        try:
            self.sock.sendto(frame, target)
        finally:
            self.sock.setblocking(False)

    def poll(self) -> list[WireMessage]:
        out = []
        while True:
            try:
                data, _ = self.sock.recvfrom(MAX_DATAGRAM + 1)
            except (BlockingIOError, InterruptedError):
                break
            except ConnectionRefusedError:
                continue
            try:
                out.append(decode(data))
            except DecodeError:
                self.rejected += 1
        return out

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def datagram_transport(bind_addr: tuple[str, int], peer_addr: Optional[tuple[str, int]] = None) -> DatagramTransport:
    return DatagramTransport(bind_addr, peer_addr)
