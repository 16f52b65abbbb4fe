"""Handoff protocol between the outgoing (D1) and incoming (D2) drones.

Both sides are pure state machines: ``advance_outgoing(s, e)`` and
``advance_incoming(s, e)`` return the next state and a list of actions that
describe what the runner should do (send a message, fly somewhere, change
role, arm a timer, run a match, report a failure). Nothing here touches the
network, the clock or the world.

Message flow of a clean handoff::

    D1 Tracking      --RELIEF_REQUEST-->  D2 Idle -> NavigateToPeer
    D1 AwaitArrival  <--STATE_UPDATE(en_route)--
    D1               --STATE_UPDATE(live)-->        (periodic position)
    D1 MarkerAdvert. <--STATE_UPDATE(arrived)-- D2 MarkerAcquire
                     <--HELLO--                D2 Handshaking (marker seen)
    D1 Handshaking   --HELLO_ACK-->            D2 Receiving
    D1 Transferring  <--STATE_UPDATE(ready)--
                     --TEMPLATE_META, TEMPLATE_CHUNK x n-->
    D1 AwaitMatch    <--TEMPLATE_ACK--         D2 Matching
                     <--MATCH_REPORT--
                     --ROLE_SWAP-->            D2 Confirmed (PrimaryTracker)
    D1 SwapComplete  <--SWAP_ACK--
                     --BYE-->                  D2 PrimaryTracking
"""

from __future__ import annotations

import enum
import json
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .geometry import PeerPoseEstimate, RendezvousOffsets, WorldPoint, rendezvous_pose
from .metrics import BoundingBox
from .netlink import MsgType, WireMessage
from .world import Role


class IllegalTransition(Exception):
    """An event that cannot occur in the current phase; a harness bug."""


class ChunkOutOfRange(Exception):
    pass


class OutPhase(str, enum.Enum):
    TRACKING = "Tracking"
    RELIEF_REQUESTED = "ReliefRequested"
    AWAIT_ARRIVAL = "AwaitArrival"
    MARKER_ADVERTISE = "MarkerAdvertise"
    HANDSHAKING = "Handshaking"
    TRANSFERRING = "Transferring"
    AWAIT_MATCH_CONFIRM = "AwaitMatchConfirm"
    SWAP_COMPLETE = "SwapComplete"
    RETURNING_TO_BASE = "ReturningToBase"
    ABORTED = "Aborted"


class InPhase(str, enum.Enum):
    IDLE = "Idle"
    NAVIGATE_TO_PEER = "NavigateToPeer"
    MARKER_ACQUIRE = "MarkerAcquire"
    HANDSHAKING = "Handshaking"
    RECEIVING = "Receiving"
    MATCHING = "Matching"
    CONFIRMED = "Confirmed"
    PRIMARY_TRACKING = "PrimaryTracking"
    ABORTED = "Aborted"


class Status(enum.IntEnum):
    """STATE_UPDATE status byte."""

    LIVE = 0
    EN_ROUTE = 1
    ARRIVED = 2
    READY = 3


class ByeReason(enum.IntEnum):
    DONE = 0
    ABORT = 1
    RESERVE = 2


@dataclass(frozen=True)
class ProtocolConfig:
    timeout_s: float = 1.0
    retries: int = 5
    chunk_size: int = 1024
    theta_match: float = 0.3
    nav_timeout_s: float = 120.0
    state_period_s: float = 1.0
    relief_threshold: float = 0.30
    handoff_reserve: float = 0.15
    offsets: RendezvousOffsets = field(default_factory=lambda: RendezvousOffsets(2.0, 1.0))

    def __post_init__(self):
        if self.timeout_s <= 0 or self.nav_timeout_s <= 0 or self.state_period_s <= 0:
            raise ValueError("timeouts must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")
        if not 1 <= self.chunk_size <= 60000:
            raise ValueError("chunk_size must be in 1..60000")
        if not 0.0 <= self.theta_match <= 1.0:
            raise ValueError("theta_match must be in [0, 1]")


@dataclass(frozen=True)
class TrackingHandle:
    """Live tracking data handed across: the outgoing drone's box, the
    template crop (PGM bytes) and where it was cut, the target's surface
    position estimate and the drone's own pose (x, y, z, yaw)."""

    box: BoundingBox
    confidence: float
    template: bytes
    template_origin: tuple[int, int]
    shark_xy: tuple[float, float]
    drone_pose: tuple[float, float, float, float]
    timestamp: float


@dataclass(frozen=True)
class TemplateMeta:
    total_len: int
    n_chunks: int
    crc: int
    box: BoundingBox
    origin: tuple[int, int]
    shark_xy: tuple[float, float]
    timestamp: float
    confidence: float


# --- events ------------------------------------------------------------------


@dataclass(frozen=True)
class BatteryLow:
    t: float
    level: float
    handle: Optional[TrackingHandle] = None


@dataclass(frozen=True)
class PeerArrived:
    t: float


@dataclass(frozen=True)
class MarkerSeen:
    t: float
    estimate: PeerPoseEstimate


@dataclass(frozen=True)
class MsgReceived:
    t: float
    msg: WireMessage


@dataclass(frozen=True)
class Timeout:
    t: float


@dataclass(frozen=True)
class MatchResult:
    t: float
    confidence: float
    box: Optional[BoundingBox] = None


@dataclass(frozen=True)
class Tick:
    t: float
    handle: Optional[TrackingHandle] = None


HandoffEvent = Union[BatteryLow, PeerArrived, MarkerSeen, MsgReceived, Timeout, MatchResult, Tick]


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    msg: WireMessage


@dataclass(frozen=True)
class SetNavTarget:
    point: WorldPoint
    yaw: float


@dataclass(frozen=True)
class AssumeRole:
    role: Role


@dataclass(frozen=True)
class StartTimer:
    duration: float


@dataclass(frozen=True)
class RaiseFailure:
    reason: str


@dataclass(frozen=True)
class RequestMatch:
    """Ask the runner to match the received template in the next frame.
    ``box``/``shark_xy`` are the freshest hints from the outgoing drone."""

    attempt: int
    box: BoundingBox
    shark_xy: tuple[float, float]


HandoffAction = Union[Send, SetNavTarget, AssumeRole, StartTimer, RaiseFailure, RequestMatch]


# --- payloads ----------------------------------------------------------------

_SESSION = struct.Struct("<H")
_POSE = struct.Struct("<HB4d")  # session, status, x, y, z, yaw
_RELIEF = struct.Struct("<H6d")  # session, x, y, z, yaw, shark x, shark y
_HELLO = struct.Struct("<H3d")
_META = struct.Struct("<HIHI4d2i2d2d")
_CHUNK = struct.Struct("<HH")
_REMATCH = struct.Struct("<HH4d2d")
_GAPS = struct.Struct("<HBH")
_REPORT = struct.Struct("<HHd4d")
_BYE = struct.Struct("<HB")


def session_of(msg: WireMessage) -> Optional[int]:
    if len(msg.payload) < _SESSION.size:
        return None
    return _SESSION.unpack_from(msg.payload)[0]


def _box_tuple(b: Optional[BoundingBox]) -> tuple[float, float, float, float]:
    return (math.nan,) * 4 if b is None else (b.left, b.top, b.right, b.bottom)


def _box_from(vals) -> Optional[BoundingBox]:
    return None if any(math.isnan(v) for v in vals) else BoundingBox(*vals)


def encode_meta(session: int, h: TrackingHandle, chunk_size: int) -> bytes:
    n = max(1, math.ceil(len(h.template) / chunk_size))
    return _META.pack(
        session, len(h.template), n, zlib.crc32(h.template), *_box_tuple(h.box), *h.template_origin, *h.shark_xy, h.timestamp, h.confidence
    )


def decode_meta(payload: bytes) -> TemplateMeta:
    v = _META.unpack(payload)
    return TemplateMeta(v[1], v[2], v[3], BoundingBox(*v[4:8]), (v[8], v[9]), (v[10], v[11]), v[12], v[13])


def template_chunks(template: bytes, chunk_size: int) -> list[bytes]:
    return [template[i : i + chunk_size] for i in range(0, max(len(template), 1), chunk_size)]


# --- outgoing (D1) -------------------------------------------------------------

_OUT_TERMINAL = (OutPhase.RETURNING_TO_BASE,)
_OUT_PRE_SWAP = (
    OutPhase.RELIEF_REQUESTED,
    OutPhase.AWAIT_ARRIVAL,
    OutPhase.MARKER_ADVERTISE,
    OutPhase.HANDSHAKING,
    OutPhase.TRANSFERRING,
    OutPhase.AWAIT_MATCH_CONFIRM,
)

# phases in which the outgoing drone still counts as handing over: a battery
# at the reserve level sends it home from any of them
PRE_SWAP_PHASES = _OUT_PRE_SWAP

# phases in which the outgoing drone streams its position to the reliever
_OUT_STREAMING = _OUT_PRE_SWAP[1:]


@dataclass(frozen=True)
class OutgoingState:
    phase: OutPhase = OutPhase.TRACKING
    session: int = 0
    seq: int = 1
    retries_left: int = 0
    deadline: Optional[float] = None
    handle: Optional[TrackingHandle] = None
    attempt: int = 0
    swap_sent: bool = False
    last_update_t: float = -math.inf


class _Out:
    """Accumulates actions while a transition is being built."""

    def __init__(self, s, cfg: ProtocolConfig):
        self.s = s
        self.cfg = cfg
        self.actions: list[HandoffAction] = []

    def send(self, mtype: MsgType, payload: bytes):
        self.actions.append(Send(WireMessage(mtype, self.s.seq, payload)))
        self.s = replace(self.s, seq=self.s.seq + 1)

    def arm(self, t: float, duration: Optional[float] = None, reset_retries: bool = True):
        d = self.cfg.timeout_s if duration is None else duration
        self.actions.append(StartTimer(d))
        self.s = replace(self.s, deadline=t + d)
        if reset_retries:
            self.s = replace(self.s, retries_left=self.cfg.retries)

    def go(self, phase, **kw):
        self.s = replace(self.s, phase=phase, **kw)

    def act(self, a: HandoffAction):
        self.actions.append(a)

    def result(self):
        return self.s, self.actions


def _live_update(o: _Out, t: float):
    h = o.s.handle
    o.send(MsgType.STATE_UPDATE, _POSE.pack(o.s.session, Status.LIVE, *h.drone_pose))
    o.s = replace(o.s, last_update_t=t)


def _send_template(o: _Out, indices=None, meta=True):
    h = o.s.handle
    if meta:
        o.send(MsgType.TEMPLATE_META, encode_meta(o.s.session, h, o.cfg.chunk_size))
    chunks = template_chunks(h.template, o.cfg.chunk_size)
    for i in range(len(chunks)) if indices is None else indices:
        if 0 <= i < len(chunks):
            o.send(MsgType.TEMPLATE_CHUNK, _CHUNK.pack(o.s.session, i) + chunks[i])


def _rematch(o: _Out):
    h = o.s.handle
    o.send(MsgType.RETRY_TEMPLATE, _REMATCH.pack(o.s.session, o.s.attempt, *_box_tuple(h.box), *h.shark_xy))


def _out_abort(o: _Out, reason: str, bye: ByeReason = ByeReason.ABORT):
    o.send(MsgType.BYE, _BYE.pack(o.s.session, bye))
    o.act(RaiseFailure(reason))
    if o.s.swap_sent or bye is ByeReason.RESERVE:
        # The peer may already hold the primary role; never take it back.
        o.act(AssumeRole(Role.RETURNING_TO_BASE))
        o.go(OutPhase.RETURNING_TO_BASE, deadline=None)
    else:
        o.go(OutPhase.ABORTED, deadline=None)


def _enter_handshake(o: _Out, t: float):
    o.send(MsgType.HELLO_ACK, _SESSION.pack(o.s.session))
    o.go(OutPhase.HANDSHAKING)
    o.arm(t)


def _enter_transfer(o: _Out, t: float):
    o.go(OutPhase.TRANSFERRING)
    _send_template(o)
    o.arm(t)


def advance_outgoing(s: OutgoingState, e: HandoffEvent, cfg: ProtocolConfig = ProtocolConfig()):
    """One transition of the outgoing drone's machine."""
    o = _Out(s, cfg)
    ph = s.phase

    if isinstance(e, Tick):
        if e.handle is not None:
            o.s = replace(o.s, handle=e.handle)
        if ph is OutPhase.ABORTED:
            o.go(OutPhase.TRACKING, swap_sent=False, attempt=0)
        elif ph is OutPhase.SWAP_COMPLETE:
            o.go(OutPhase.RETURNING_TO_BASE)
        elif ph in _OUT_STREAMING and e.t - s.last_update_t >= cfg.state_period_s:
            _live_update(o, e.t)
        return o.result()

    if ph in _OUT_TERMINAL or ph is OutPhase.ABORTED:
        raise IllegalTransition(f"{type(e).__name__} in terminal phase {ph.value}")

    if isinstance(e, BatteryLow):
        if e.handle is not None:
            o.s = replace(o.s, handle=e.handle)
        if ph is OutPhase.TRACKING:
            if e.level > cfg.relief_threshold:
                raise IllegalTransition(f"BatteryLow at {e.level:.3f} above the relief threshold")
            if o.s.handle is None:
                raise IllegalTransition("relief requested without a tracking handle")
            h = o.s.handle
            o.go(OutPhase.RELIEF_REQUESTED, session=(s.session + 1) & 0xFFFF, swap_sent=False, attempt=0)
            o.send(MsgType.RELIEF_REQUEST, _RELIEF.pack(o.s.session, *h.drone_pose, *h.shark_xy))
            o.arm(e.t)
        elif e.level <= cfg.handoff_reserve and ph in _OUT_PRE_SWAP:
            _out_abort(o, "battery reached the handoff reserve", ByeReason.RESERVE)
        return o.result()

    if isinstance(e, Timeout):
        if ph is OutPhase.TRACKING or ph is OutPhase.SWAP_COMPLETE or s.deadline is None:
            raise IllegalTransition(f"Timeout in {ph.value}")
        if s.retries_left == 0:
            _out_abort(o, f"retries exhausted in {ph.value}")
            return o.result()
        o.s = replace(o.s, retries_left=s.retries_left - 1)
        if ph is OutPhase.RELIEF_REQUESTED:
            h = s.handle
            o.send(MsgType.RELIEF_REQUEST, _RELIEF.pack(s.session, *h.drone_pose, *h.shark_xy))
            o.arm(e.t, reset_retries=False)
        elif ph is OutPhase.AWAIT_ARRIVAL:
            _live_update(o, e.t)
            o.arm(e.t, cfg.nav_timeout_s, reset_retries=False)
        elif ph is OutPhase.MARKER_ADVERTISE:
            _live_update(o, e.t)
            o.arm(e.t, reset_retries=False)
        elif ph is OutPhase.HANDSHAKING:
            o.send(MsgType.HELLO_ACK, _SESSION.pack(s.session))
            o.arm(e.t, reset_retries=False)
        elif ph is OutPhase.TRANSFERRING:
            o.send(MsgType.TEMPLATE_META, encode_meta(s.session, s.handle, cfg.chunk_size))
            o.arm(e.t, reset_retries=False)
        elif ph is OutPhase.AWAIT_MATCH_CONFIRM:
            if s.swap_sent:
                o.send(MsgType.ROLE_SWAP, _SESSION.pack(s.session))
            else:
                _rematch(o)
            o.arm(e.t, reset_retries=False)
        return o.result()

    if isinstance(e, MatchResult):
        if ph is not OutPhase.AWAIT_MATCH_CONFIRM:
            raise IllegalTransition(f"MatchResult in {ph.value}")
        _on_report(o, e.t, s.attempt, e.confidence)
        return o.result()

    if isinstance(e, (PeerArrived, MarkerSeen)):
        raise IllegalTransition(f"{type(e).__name__} is not an outgoing-drone event")

    if not isinstance(e, MsgReceived):
        raise IllegalTransition(f"unknown event {e!r}")
    m = e.msg
    if ph is OutPhase.TRACKING or session_of(m) != s.session:
        return o.result()  # stale traffic from an earlier session
    mt = m.msg_type

    if mt is MsgType.STATE_UPDATE:
        status = _POSE.unpack(m.payload)[1]
        if status == Status.EN_ROUTE and ph is OutPhase.RELIEF_REQUESTED:
            o.go(OutPhase.AWAIT_ARRIVAL)
            _live_update(o, e.t)
            o.arm(e.t, cfg.nav_timeout_s)
        elif status == Status.ARRIVED and ph in (OutPhase.RELIEF_REQUESTED, OutPhase.AWAIT_ARRIVAL):
            o.go(OutPhase.MARKER_ADVERTISE)
            o.arm(e.t)
        elif status == Status.READY and ph is OutPhase.HANDSHAKING:
            _enter_transfer(o, e.t)
    elif mt is MsgType.HELLO:
        if ph in (OutPhase.RELIEF_REQUESTED, OutPhase.AWAIT_ARRIVAL, OutPhase.MARKER_ADVERTISE):
            _enter_handshake(o, e.t)
        elif ph is OutPhase.HANDSHAKING:
            o.send(MsgType.HELLO_ACK, _SESSION.pack(s.session))
    elif mt is MsgType.RETRY_TEMPLATE:
        _, need_meta, count = _GAPS.unpack_from(m.payload)
        idx = struct.unpack_from(f"<{count}H", m.payload, _GAPS.size)
        if ph is OutPhase.HANDSHAKING:
            _enter_transfer(o, e.t)
        elif ph is OutPhase.TRANSFERRING:
            _send_template(o, None if (need_meta and not idx) else idx, meta=bool(need_meta))
            o.arm(e.t)
    elif mt is MsgType.TEMPLATE_ACK:
        if ph is OutPhase.TRANSFERRING:
            o.go(OutPhase.AWAIT_MATCH_CONFIRM, attempt=0)
            o.arm(e.t)
    elif mt is MsgType.MATCH_REPORT:
        if ph is OutPhase.TRANSFERRING:
            # a report proves the template arrived; its ack was lost
            o.go(OutPhase.AWAIT_MATCH_CONFIRM, attempt=0)
            o.arm(e.t)
            ph = OutPhase.AWAIT_MATCH_CONFIRM
        if ph is OutPhase.AWAIT_MATCH_CONFIRM:
            _, attempt, conf, *_ = _REPORT.unpack(m.payload)
            _on_report(o, e.t, attempt, conf)
    elif mt is MsgType.SWAP_ACK:
        if ph is OutPhase.AWAIT_MATCH_CONFIRM and s.swap_sent:
            o.act(AssumeRole(Role.RETURNING_TO_BASE))
            o.send(MsgType.BYE, _BYE.pack(s.session, ByeReason.DONE))
            o.go(OutPhase.SWAP_COMPLETE, deadline=None)
    elif mt is MsgType.BYE:
        if ph in _OUT_PRE_SWAP:
            # the reliever only says BYE before it takes the primary role,
            # so reclaiming the role after a ROLE_SWAP is safe
            if s.swap_sent:
                o.act(AssumeRole(Role.PRIMARY_TRACKER))
            o.act(RaiseFailure("peer aborted the handoff"))
            o.go(OutPhase.ABORTED, deadline=None)
    return o.result()


def _on_report(o: _Out, t: float, attempt: int, conf: float):
    s = o.s
    if s.swap_sent:
        # the peer is still waiting for the swap
        o.send(MsgType.ROLE_SWAP, _SESSION.pack(s.session))
        return
    if attempt != s.attempt:
        return
    if conf >= o.cfg.theta_match:
        o.send(MsgType.ROLE_SWAP, _SESSION.pack(s.session))
        o.act(AssumeRole(Role.HANDOVER_PENDING))
        o.s = replace(o.s, swap_sent=True)
        o.arm(t)
    elif s.retries_left > 0:
        o.s = replace(o.s, attempt=s.attempt + 1, retries_left=s.retries_left - 1)
        _rematch(o)
        o.arm(t, reset_retries=False)
    else:
        _out_abort(o, f"match confidence {conf:.2f} below {o.cfg.theta_match} after all retries")


# --- incoming (D2) -------------------------------------------------------------

_IN_PRE_CONFIRM = (
    InPhase.NAVIGATE_TO_PEER,
    InPhase.MARKER_ACQUIRE,
    InPhase.HANDSHAKING,
    InPhase.RECEIVING,
    InPhase.MATCHING,
)


@dataclass(frozen=True)
class IncomingState:
    phase: InPhase = InPhase.IDLE
    session: Optional[int] = None
    seq: int = 1
    retries_left: int = 0
    deadline: Optional[float] = None
    peer: Optional[tuple[float, float, float, float]] = None
    shark_xy: Optional[tuple[float, float]] = None
    marker: Optional[PeerPoseEstimate] = None
    meta: Optional[TemplateMeta] = None
    chunks: dict = field(default_factory=dict)
    attempt: int = 0
    hint_box: Optional[BoundingBox] = None
    last_report: Optional[bytes] = None

    @property
    def received_chunks(self) -> tuple[bool, ...]:
        n = self.meta.n_chunks if self.meta else 0
        return tuple(i in self.chunks for i in range(n))

    @property
    def complete(self) -> bool:
        return self.meta is not None and len(self.chunks) == self.meta.n_chunks

    def template(self) -> bytes:
        return b"".join(self.chunks[i] for i in range(self.meta.n_chunks))


def _nav_target(peer, cfg: ProtocolConfig) -> SetNavTarget:
    x, y, z, yaw = peer
    pose = rendezvous_pose(PeerPoseEstimate(x, y, yaw), cfg.offsets, z)
    return SetNavTarget(pose.position, yaw)


def _in_abort(o: _Out, reason: str, notify: bool = True):
    if notify:
        o.send(MsgType.BYE, _BYE.pack(o.s.session, ByeReason.ABORT))
    o.act(RaiseFailure(reason))
    o.act(AssumeRole(Role.RETURNING_TO_BASE))
    o.go(InPhase.ABORTED, deadline=None)


def _status(o: _Out, status: Status):
    o.send(MsgType.STATE_UPDATE, _POSE.pack(o.s.session, status, 0.0, 0.0, 0.0, 0.0))


def _request_gaps(o: _Out):
    s = o.s
    if s.meta is None:
        o.send(MsgType.RETRY_TEMPLATE, _GAPS.pack(s.session, 1, 0))
        return
    missing = [i for i in range(s.meta.n_chunks) if i not in s.chunks][:1000]
    o.send(MsgType.RETRY_TEMPLATE, _GAPS.pack(s.session, 0, len(missing)) + struct.pack(f"<{len(missing)}H", *missing))


def _start_session(o: _Out, t: float, m: WireMessage):
    v = _RELIEF.unpack(m.payload)
    o.s = replace(
        o.s,
        session=v[0],
        peer=tuple(v[1:5]),
        shark_xy=(v[5], v[6]),
        marker=None,
        meta=None,
        chunks={},
        attempt=0,
        hint_box=None,
        last_report=None,
    )
    o.go(InPhase.NAVIGATE_TO_PEER)
    o.act(AssumeRole(Role.RELIEVER))
    o.act(_nav_target(o.s.peer, o.cfg))
    _status(o, Status.EN_ROUTE)
    o.arm(t, o.cfg.nav_timeout_s)


def _maybe_complete(o: _Out, t: float):
    s = o.s
    if not s.complete:
        return
    data = s.template()
    if len(data) != s.meta.total_len or zlib.crc32(data) != s.meta.crc:
        _in_abort(o, "assembled template fails its checksum")
        return
    o.send(MsgType.TEMPLATE_ACK, _SESSION.pack(s.session))
    o.go(InPhase.MATCHING, attempt=0, hint_box=s.meta.box, shark_xy=s.meta.shark_xy)
    o.act(RequestMatch(0, s.meta.box, s.meta.shark_xy))
    o.arm(t)


def _progress(o: _Out, t: float):
    if o.s.complete:
        _maybe_complete(o, t)
    else:
        o.arm(t)


def advance_incoming(s: IncomingState, e: HandoffEvent, cfg: ProtocolConfig = ProtocolConfig()):
    """One transition of the incoming drone's machine."""
    o = _Out(s, cfg)
    ph = s.phase

    if isinstance(e, Tick):
        return o.result()
    if ph is InPhase.ABORTED:
        raise IllegalTransition(f"{type(e).__name__} in terminal phase Aborted")
    if isinstance(e, BatteryLow):
        raise IllegalTransition("BatteryLow is not an incoming-drone event")

    if isinstance(e, PeerArrived):
        if ph is InPhase.NAVIGATE_TO_PEER:
            o.go(InPhase.MARKER_ACQUIRE)
            _status(o, Status.ARRIVED)
            o.arm(e.t)
        elif ph not in (InPhase.MARKER_ACQUIRE, InPhase.HANDSHAKING, InPhase.RECEIVING, InPhase.MATCHING):
            raise IllegalTransition(f"PeerArrived in {ph.value}")
        return o.result()

    if isinstance(e, MarkerSeen):
        if ph is InPhase.MARKER_ACQUIRE:
            est = e.estimate
            o.go(InPhase.HANDSHAKING, marker=est)
            o.send(MsgType.HELLO, _HELLO.pack(s.session, est.x, est.y, est.alpha))
            o.arm(e.t)
        elif ph not in (InPhase.HANDSHAKING, InPhase.RECEIVING, InPhase.MATCHING):
            raise IllegalTransition(f"MarkerSeen in {ph.value}")
        return o.result()

    if isinstance(e, MatchResult):
        if ph is not InPhase.MATCHING:
            raise IllegalTransition(f"MatchResult in {ph.value}")
        payload = _REPORT.pack(s.session, s.attempt, e.confidence, *_box_tuple(e.box))
        o.s = replace(o.s, last_report=payload)
        o.send(MsgType.MATCH_REPORT, payload)
        o.arm(e.t)
        return o.result()

    if isinstance(e, Timeout):
        if ph in (InPhase.IDLE, InPhase.PRIMARY_TRACKING) or s.deadline is None:
            raise IllegalTransition(f"Timeout in {ph.value}")
        if ph is InPhase.CONFIRMED:
            # the BYE that closes the session is optional
            o.go(InPhase.PRIMARY_TRACKING, deadline=None)
            return o.result()
        if s.retries_left == 0:
            _in_abort(o, f"retries exhausted in {ph.value}")
            return o.result()
        o.s = replace(o.s, retries_left=s.retries_left - 1)
        if ph is InPhase.NAVIGATE_TO_PEER:
            o.act(_nav_target(s.peer, cfg))
            _status(o, Status.EN_ROUTE)
            o.arm(e.t, cfg.nav_timeout_s, reset_retries=False)
        elif ph is InPhase.MARKER_ACQUIRE:
            o.act(_nav_target(s.peer, cfg))
            _status(o, Status.ARRIVED)
            o.arm(e.t, reset_retries=False)
        elif ph is InPhase.HANDSHAKING:
            est = s.marker
            o.send(MsgType.HELLO, _HELLO.pack(s.session, est.x, est.y, est.alpha))
            o.arm(e.t, reset_retries=False)
        elif ph is InPhase.RECEIVING:
            _request_gaps(o)
            o.arm(e.t, reset_retries=False)
        elif ph is InPhase.MATCHING:
            if s.last_report is not None:
                o.send(MsgType.MATCH_REPORT, s.last_report)
            else:
                o.act(RequestMatch(s.attempt, s.hint_box, s.shark_xy))
            o.arm(e.t, reset_retries=False)
        return o.result()

    if not isinstance(e, MsgReceived):
        raise IllegalTransition(f"unknown event {e!r}")
    m = e.msg
    mt = m.msg_type
    sess = session_of(m)

    if mt is MsgType.RELIEF_REQUEST:
        if ph is InPhase.IDLE or (ph in _IN_PRE_CONFIRM and sess != s.session):
            # a newer session supersedes an abandoned one
            _start_session(o, e.t, m)
        elif ph is InPhase.NAVIGATE_TO_PEER and sess == s.session:
            _status(o, Status.EN_ROUTE)
        return o.result()
    if ph is InPhase.IDLE or sess != s.session:
        return o.result()

    if mt is MsgType.BYE:
        if ph in _IN_PRE_CONFIRM:
            _in_abort(o, "peer aborted the handoff", notify=False)
        elif ph is InPhase.CONFIRMED:
            o.go(InPhase.PRIMARY_TRACKING, deadline=None)
    elif mt is MsgType.STATE_UPDATE:
        v = _POSE.unpack(m.payload)
        if v[1] == Status.LIVE and ph in _IN_PRE_CONFIRM:
            o.s = replace(o.s, peer=tuple(v[2:6]))
            o.act(_nav_target(o.s.peer, cfg))
    elif mt is MsgType.HELLO_ACK:
        if ph is InPhase.HANDSHAKING:
            o.go(InPhase.RECEIVING)
            _status(o, Status.READY)
            o.arm(e.t)
        elif ph is InPhase.RECEIVING and s.meta is None and not s.chunks:
            _status(o, Status.READY)
    elif mt is MsgType.TEMPLATE_META:
        if ph is InPhase.RECEIVING and s.meta is None:
            meta = decode_meta(m.payload)
            bad = [i for i in s.chunks if i >= meta.n_chunks]
            if bad:
                raise ChunkOutOfRange(f"chunk {bad[0]} of {meta.n_chunks}")
            o.s = replace(o.s, meta=meta)
            _progress(o, e.t)
        elif ph is InPhase.RECEIVING:
            # the sender is waiting on us: name the gaps now rather than at
            # our own timeout
            _request_gaps(o)
        elif ph is InPhase.MATCHING:
            o.send(MsgType.TEMPLATE_ACK, _SESSION.pack(s.session))
            o.s = replace(o.s, retries_left=cfg.retries)
    elif mt is MsgType.TEMPLATE_CHUNK:
        _, idx = _CHUNK.unpack_from(m.payload)
        if ph is InPhase.RECEIVING:
            if s.meta is not None and idx >= s.meta.n_chunks:
                raise ChunkOutOfRange(f"chunk {idx} of {s.meta.n_chunks}")
            if idx in s.chunks:
                return s, []  # duplicate: idempotent
            o.s = replace(o.s, chunks={**s.chunks, idx: m.payload[_CHUNK.size :]})
            _progress(o, e.t)
    elif mt is MsgType.RETRY_TEMPLATE:
        if ph is InPhase.MATCHING:
            v = _REMATCH.unpack(m.payload)
            attempt, box, shark = v[1], _box_from(v[2:6]), (v[6], v[7])
            if attempt == s.attempt and s.last_report is not None:
                o.send(MsgType.MATCH_REPORT, s.last_report)
            elif attempt > s.attempt:
                o.s = replace(o.s, attempt=attempt, hint_box=box or s.hint_box, shark_xy=shark, last_report=None)
                o.act(RequestMatch(attempt, o.s.hint_box, shark))
            o.arm(e.t)
    elif mt is MsgType.ROLE_SWAP:
        if ph is InPhase.MATCHING:
            o.send(MsgType.SWAP_ACK, _SESSION.pack(s.session))
            o.act(AssumeRole(Role.PRIMARY_TRACKER))
            o.go(InPhase.CONFIRMED)
            o.arm(e.t)
        elif ph in (InPhase.CONFIRMED, InPhase.PRIMARY_TRACKING):
            o.send(MsgType.SWAP_ACK, _SESSION.pack(s.session))
    return o.result()


# --- safety ------------------------------------------------------------------


class RoleViolation(Exception):
    pass


def role_swap_invariant_check(roles) -> Optional[str]:
    """None when exactly one drone is primary, or when none is but one is
    marked HandoverPending; otherwise a diagnostic string."""
    roles = list(roles)
    primaries = sum(r is Role.PRIMARY_TRACKER for r in roles)
    if primaries == 1:
        return None
    if primaries == 0:
        if any(r is Role.HANDOVER_PENDING for r in roles):
            return None
        return "coverage gap: no drone holds PrimaryTracker"
    return f"{primaries} drones hold PrimaryTracker"


# --- event log -----------------------------------------------------------------


def _msg_json(m: WireMessage) -> dict:
    return {"type": m.msg_type.name, "seq": m.seq, "len": len(m.payload)}


def event_json(e: HandoffEvent) -> dict:
    d = {"kind": type(e).__name__}
    if isinstance(e, MsgReceived):
        d["msg"] = _msg_json(e.msg)
    elif isinstance(e, BatteryLow):
        d["level"] = round(e.level, 6)
    elif isinstance(e, MatchResult):
        d["confidence"] = round(e.confidence, 6)
    elif isinstance(e, MarkerSeen):
        d["estimate"] = [round(v, 6) for v in e.estimate]
    return d


def action_json(a: HandoffAction) -> dict:
    d = {"kind": type(a).__name__}
    if isinstance(a, Send):
        d["msg"] = _msg_json(a.msg)
    elif isinstance(a, SetNavTarget):
        d["point"] = [round(v, 6) for v in a.point]
    elif isinstance(a, AssumeRole):
        d["role"] = a.role.value
    elif isinstance(a, StartTimer):
        d["duration"] = a.duration
    elif isinstance(a, RaiseFailure):
        d["reason"] = a.reason
    elif isinstance(a, RequestMatch):
        d["attempt"] = a.attempt
    return d


def log_line(t: float, drone: str, before, e: HandoffEvent, after, actions) -> str:
    return json.dumps(
        {
            "t": round(t, 6),
            "drone": drone,
            "phase_before": before.value,
            "event": event_json(e),
            "phase_after": after.value,
            "actions": [action_json(a) for a in actions],
        },
        sort_keys=True,
    )
