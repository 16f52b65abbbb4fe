"""A single scripted handoff, run over the simulated channel or loopback UDP.

The world is frozen: D1 hovers on station over a still target, D2 reaches
the rendezvous the moment it is told to go there, and the marker is seen as
soon as D2 looks for it. The template match is real (rendered frames, ORB,
RANSAC) and computed once per seed. What remains is the protocol itself,
which is what the demo exercises.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .geometry import (
    CameraPose,
    PeerPoseEstimate,
    estimate_peer_pose,
    project_world_to_pixel,
    OutOfView,
    rendezvous_pose,
    synthesize_marker_observation,
    tracking_station,
)
from .metrics import BoundingBox
from .netlink import ChannelParams, DatagramTransport, SimChannel
from .protocol import (
    AssumeRole,
    BatteryLow,
    IncomingState,
    InPhase,
    MarkerSeen,
    MatchResult,
    MsgReceived,
    OutgoingState,
    OutPhase,
    PeerArrived,
    ProtocolConfig,
    RaiseFailure,
    RequestMatch,
    Send,
    SetNavTarget,
    Tick,
    Timeout,
    TrackingHandle,
    advance_incoming,
    advance_outgoing,
    log_line,
    role_swap_invariant_check,
)
from .vision.handoff_match import MatchFailed, MatchParams, match_template, roi_features, roi_rect, template_crop
from .vision.image import decode_pgm, encode_pgm
from .vision.render import render_scene
from .world import Role, SharkState, target_box

DEMO_ALTITUDE = 8.0


@dataclass(frozen=True)
class DemoWorld:
    handle: TrackingHandle
    marker: PeerPoseEstimate
    match: Callable[[RequestMatch], tuple[float, Optional[BoundingBox]]]


@functools.lru_cache(maxsize=8)
def demo_world(seed: int = 7, padding: float = 70.0, match_params: MatchParams = MatchParams()) -> DemoWorld:
    shark = SharkState(0.0, 0.0, 0.6, 1.0)
    d1 = CameraPose(tracking_station(shark.position, 0.0, DEMO_ALTITUDE), yaw=0.0)
    d1_frame = render_scene(shark, d1, seed=seed, view=0)
    box = target_box(d1, shark)
    crop, origin = template_crop(d1_frame, box, padding)
    handle = TrackingHandle(box, 1.0, encode_pgm(crop), origin, (shark.x, shark.y), (*d1.position, d1.yaw), 0.0)

    d2 = rendezvous_pose(PeerPoseEstimate(d1.position.x, d1.position.y, d1.yaw), ProtocolConfig().offsets, DEMO_ALTITUDE)
    marker = estimate_peer_pose(d2, synthesize_marker_observation(d2, d1.position, d1.yaw))
    d2_frame = render_scene(shark, d2, seed=seed, view=1)

    @functools.lru_cache(maxsize=16)
    def match(req: RequestMatch):
        try:
            center = project_world_to_pixel(d2, (req.shark_xy[0], req.shark_xy[1], 0.0))
        except OutOfView:
            return 0.0, None
        rect = roi_rect(center, (req.box.width, req.box.height), d2_frame.shape, match_params.roi_margin_px)
        feats = roi_features(d2_frame, rect, match_params)
        try:
            out = match_template(decode_pgm(handle.template), handle.template_origin, req.box, feats, rect[:2], d2_frame.shape, match_params)
        except MatchFailed:
            return 0.0, None
        return out.confidence, out.box

    return DemoWorld(handle, marker, match)


class Endpoint:
    """One drone's logic loop around its protocol machine. Scripted world
    reactions are queued on a private agenda."""

    def __init__(self, name, state, advance, cfg, world: DemoWorld, transmit, role: Role):
        self.name = name
        self.state = state
        self.advance = advance
        self.cfg = cfg
        self.world = world
        self.transmit = transmit
        self.role = role
        self.log: list[str] = []
        self.failures: list[str] = []
        self._agenda: list = []
        self._order = itertools.count()

    def schedule(self, t: float, event):
        heapq.heappush(self._agenda, (t, next(self._order), event))

    def next_time(self) -> Optional[float]:
        times = [self._agenda[0][0]] if self._agenda else []
        if self.state.deadline is not None:
            times.append(self.state.deadline)
        return min(times) if times else None

    def handle(self, e):
        before = self.state.phase
        self.state, actions = self.advance(self.state, e, self.cfg)
        self.log.append(log_line(e.t, self.name, before, e, self.state.phase, actions))
        for a in actions:
            if isinstance(a, Send):
                self.transmit(a.msg, e.t)
            elif isinstance(a, AssumeRole):
                self.role = a.role
            elif isinstance(a, RaiseFailure):
                self.failures.append(a.reason)
            elif isinstance(a, SetNavTarget):
                self.schedule(e.t, PeerArrived(e.t))
            elif isinstance(a, RequestMatch):
                conf, box = self.world.match(a)
                self.schedule(e.t, (a.attempt, MatchResult(e.t, conf, box)))
        ph = self.state.phase
        if ph is InPhase.MARKER_ACQUIRE and before is not ph:
            self.schedule(e.t, MarkerSeen(e.t, self.world.marker))
        elif ph is OutPhase.SWAP_COMPLETE:
            self.schedule(e.t, Tick(e.t))
        elif ph is InPhase.ABORTED:
            # the reliever flies home and is available again
            self.state = IncomingState(seq=self.state.seq)
            self.role = Role.AT_BASE
        elif ph is OutPhase.ABORTED:
            # abort policy: back to tracking, then ask for relief again
            self.schedule(e.t, Tick(e.t))
            self.schedule(e.t, BatteryLow(e.t, self.cfg.relief_threshold, self.world.handle))

    def _fit(self, e) -> Optional[object]:
        """Drop scripted events that the machine has moved past."""
        ph = self.state.phase
        if isinstance(e, tuple):
            attempt, e = e
            ok = ph is InPhase.MATCHING and self.state.attempt == attempt
        elif isinstance(e, PeerArrived):
            ok = ph is InPhase.NAVIGATE_TO_PEER
        elif isinstance(e, MarkerSeen):
            ok = ph is InPhase.MARKER_ACQUIRE
        elif isinstance(e, BatteryLow):
            ok = ph is OutPhase.TRACKING
        else:
            ok = True
        return e if ok else None

    def run_due(self, t: float, messages):
        for m in messages:
            if not self.terminal:
                self.handle(MsgReceived(t, m))
        while self._agenda and self._agenda[0][0] <= t:
            _, _, e = heapq.heappop(self._agenda)
            e = self._fit(e)
            if e is not None:
                self.handle(e)
        if self.state.deadline is not None and self.state.deadline <= t and not self.terminal:
            self.handle(Timeout(t))

    @property
    def terminal(self) -> bool:
        # OutPhase and InPhase are str enums, so compare by identity
        return self.state.phase is OutPhase.RETURNING_TO_BASE

    @property
    def done(self) -> bool:
        return self.state.phase is OutPhase.RETURNING_TO_BASE or self.state.phase is InPhase.PRIMARY_TRACKING


@dataclass
class DemoResult:
    completed: bool
    log: list[str]
    d1_log: list[str]
    d2_log: list[str]
    violations: int
    double_primary_ticks: int
    failures: list[str] = field(default_factory=list)
    duration_s: float = 0.0


def _endpoints(cfg, world, tx1, tx2):
    d1 = Endpoint("D1", OutgoingState(), advance_outgoing, cfg, world, tx1, Role.PRIMARY_TRACKER)
    d2 = Endpoint("D2", IncomingState(), advance_incoming, cfg, world, tx2, Role.AT_BASE)
    return d1, d2


def _result(d1: Endpoint, d2: Endpoint, merged, violations, doubles, duration) -> DemoResult:
    completed = d1.state.phase is OutPhase.RETURNING_TO_BASE and d1.state.swap_sent and d2.state.phase is InPhase.PRIMARY_TRACKING
    return DemoResult(completed, merged, d1.log, d2.log, violations, doubles, d1.failures + d2.failures, duration)


def run_simulated(
    channel: ChannelParams = ChannelParams(),
    cfg: ProtocolConfig = ProtocolConfig(),
    seed: int = 7,
    time_limit_s: float = 600.0,
) -> DemoResult:
    """Discrete-event run; both directions get their own seeded channel."""
    world = demo_world(seed)
    to_d2 = SimChannel(ChannelParams(channel.latency_ms, channel.jitter_ms, channel.loss_prob, channel.seed * 2))
    to_d1 = SimChannel(ChannelParams(channel.latency_ms, channel.jitter_ms, channel.loss_prob, channel.seed * 2 + 1))
    d1, d2 = _endpoints(cfg, world, to_d2.send, to_d1.send)
    merged: list[str] = []
    violations = doubles = 0
    d1.schedule(0.0, BatteryLow(0.0, cfg.relief_threshold, world.handle))
    t = 0.0
    while not (d1.done and d2.done):
        nexts = [x for x in (d1.next_time(), d2.next_time(), to_d1.next_delivery(), to_d2.next_delivery()) if x is not None]
        if not nexts:
            break
        t = max(t, min(nexts))
        if t > time_limit_s:
            break
        n1, n2 = len(d1.log), len(d2.log)
        d1.run_due(t, to_d1.poll(t))
        d2.run_due(t, to_d2.poll(t))
        merged += d1.log[n1:] + d2.log[n2:]
        problem = role_swap_invariant_check([d1.role, d2.role])
        if problem is not None:
            violations += 1
            doubles += problem.endswith("hold PrimaryTracker")
    return _result(d1, d2, merged, violations, doubles, t)


def run_loopback(port: int, cfg: ProtocolConfig = ProtocolConfig(), seed: int = 7, time_limit_s: float = 30.0, host: str = "127.0.0.1") -> DemoResult:
    """Two threads, one per drone, talking only through UDP on ``port``
    (D1) and ``port + 1`` (D2)."""
    world = demo_world(seed)
    a1, a2 = (host, port), (host, port + 1)
    with DatagramTransport(a1, a2) as tr1, DatagramTransport(a2, a1) as tr2:
        d1, d2 = _endpoints(cfg, world, lambda m, t: tr1.send(m), lambda m, t: tr2.send(m))
        t0 = time.monotonic()
        d1.schedule(0.0, BatteryLow(0.0, cfg.relief_threshold, world.handle))
        errors: list[BaseException] = []

        def loop(ep: Endpoint, tr: DatagramTransport):
            try:
                linger = None
                while True:
                    t = time.monotonic() - t0
                    ep.run_due(t, tr.poll())
                    if ep.done:
                        # stay a moment to answer the peer's retransmissions
                        linger = t if linger is None else linger
                        if t - linger > 0.2:
                            return
                    if t > time_limit_s:
                        return
                    time.sleep(0.0005)
            except BaseException as exc:  # surfaced to the caller below
                errors.append(exc)

        threads = [threading.Thread(target=loop, args=(d1, tr1)), threading.Thread(target=loop, args=(d2, tr2))]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]
        duration = time.monotonic() - t0
    merged = sorted(d1.log + d2.log, key=lambda line: json.loads(line)["t"])
    return _result(d1, d2, merged, 0, 0, duration)


def transitions(lines: list[str]) -> list[dict]:
    """The log without timestamps: what golden comparisons look at."""
    out = []
    for line in lines:
        d = json.loads(line)
        d.pop("t")
        out.append(d)
    return out


def write_log(path, lines) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
