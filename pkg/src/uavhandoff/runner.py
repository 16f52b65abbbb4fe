"""Mission scenario: two drones keep one shark under continuous watch.

The loop runs at the physics rate. Every physics tick it delivers due
messages, fires due protocol timers, and moves the shark and the drones.
Every vision tick it also steps the trackers, feeds the protocol its
periodic inputs (Tick, BatteryLow, MarkerSeen) and writes one trace row.

Drones steer from the true shark position. The emulated tracker output is
scored and handed over but never closes the control loop, so the tracker's
calibrated error statistics are not distorted by feedback.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .geometry import (
    DegenerateObservation,
    NoIntersection,
    OutOfView,
    Pixel,
    RendezvousOffsets,
    WorldPoint,
    backproject_pixel_to_surface,
    estimate_peer_pose,
    project_world_to_pixel,
    rendezvous_pose,
    synthesize_marker_observation,
    tracking_station,
)
from .metrics import (
    BoundingBox,
    EmptyTrace,
    FrameRecord,
    accuracy_report,
    box_to_json,
    iou,
    report_dict,
    robustness_report,
)
from .netlink import ChannelParams, SimChannel
from .protocol import (
    PRE_SWAP_PHASES,
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
from .tracker_model import Mode, TrackerState, fit_params, step_tracker
from .bench import padded_rect
from .vision.handoff_match import MatchFailed, MatchParams, match_template, roi_features, roi_rect, template_crop
from .vision.image import PGMError, decode_pgm, encode_pgm
from .vision.render import render_region
from .world import (
    DroneState,
    EnergyModel,
    FlightParams,
    OcclusionSchedule,
    Role,
    SharkState,
    drain_battery,
    random_schedule,
    recharge_battery,
    step_drone,
    step_shark,
    target_box,
    visibility,
)

# phases in which the outgoing drone may still re-cut its template
_FRESH_TEMPLATE = (OutPhase.TRACKING, OutPhase.RELIEF_REQUESTED, OutPhase.AWAIT_ARRIVAL, OutPhase.MARKER_ADVERTISE, OutPhase.HANDSHAKING)

# outgoing phases that accept no messages until the next Tick
_OUT_DEAF = (OutPhase.RETURNING_TO_BASE, OutPhase.ABORTED)

# incoming phases in which the reliever sees the peer's marker
_MARKER_PHASES = (InPhase.MARKER_ACQUIRE, InPhase.HANDSHAKING, InPhase.RECEIVING, InPhase.MATCHING)

# the marker counts as acquired once the reliever holds its station this
# closely; single-scale features stop matching beyond about a quarter metre
_MARKER_LOCK_M = 0.25

# frames each drone keeps for timestamp-aligned matching
_HISTORY_FRAMES = 100


class ScenarioFailure(RuntimeError):
    """Battery depleted airborne, a safety violation, or a coverage gap."""


@dataclass
class ScenarioResult:
    summary: dict
    trace: list[str]
    protocol_log: list[str]


@dataclass
class _Drone:
    id: str
    index: int
    base: tuple[float, float]
    energy: EnergyModel
    flight: FlightParams
    state: DroneState
    rng: np.random.Generator
    out: OutgoingState = field(default_factory=OutgoingState)
    inc: IncomingState = field(default_factory=IncomingState)
    # which protocol machine is live: "out", "in", or None while grounded
    machine: Optional[str] = None
    setpoint: Optional[WorldPoint] = None
    yaw_setpoint: Optional[float] = None
    tracker: Optional[TrackerState] = None
    pred: Optional[BoundingBox] = None
    confidence: float = 0.0
    handle: Optional[TrackingHandle] = None
    shark_estimate: Optional[tuple[float, float]] = None
    match_box: Optional[BoundingBox] = None
    # latest marker-derived station: (t, position, velocity)
    marker_fix: Optional[tuple] = None
    tx: Optional[SimChannel] = None
    rx: Optional[SimChannel] = None

    @property
    def seq(self) -> int:
        return max(self.out.seq, self.inc.seq)

    @property
    def tracking(self) -> bool:
        return self.state.role in (Role.PRIMARY_TRACKER, Role.HANDOVER_PENDING)

    @property
    def phase(self):
        if self.machine == "out":
            return self.out.phase
        if self.machine == "in":
            return self.inc.phase
        return None


def _schedule(cfg: ScenarioConfig, rng: np.random.Generator) -> OcclusionSchedule:
    oc = cfg.occlusion
    if oc.intervals is not None:
        return OcclusionSchedule(oc.intervals)
    return random_schedule(rng, cfg.duration_s, oc.mean_gap_s, oc.mean_len_s)


def _r(x: float, nd: int = 4) -> float:
    return round(float(x), nd)


def _rbox(box: Optional[BoundingBox]) -> Optional[BoundingBox]:
    return None if box is None else BoundingBox(*(_r(v) for v in box_to_json(box)))


class Scenario:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        seed = cfg.seed
        self.shark_rng = np.random.default_rng([seed, 1])
        self.occlusions = _schedule(cfg, np.random.default_rng([seed, 2]))
        self.tracker_params = fit_params(cfg.target_stats, cfg.tracker.mean_lost_streak, lost_behavior=cfg.tracker.lost_behavior)
        m = cfg.matching
        self.match_params = MatchParams(
            theta_match=m.theta_match,
            ratio_max=m.ratio_max,
            ransac_iters=m.ransac_iters,
            ransac_tol_px=m.ransac_tol_px,
            roi_margin_px=m.roi_margin_px,
            seed=seed,
        )
        p = cfg.protocol
        d0 = next(d for d in cfg.drones if d.start == "station")
        self.proto = ProtocolConfig(
            timeout_s=p.timeout_s,
            retries=p.retries,
            chunk_size=p.chunk_size,
            theta_match=m.theta_match,
            nav_timeout_s=p.nav_timeout_s,
            state_period_s=p.state_period_s,
            relief_threshold=d0.energy.relief_threshold,
            handoff_reserve=d0.energy.handoff_reserve,
            offsets=RendezvousOffsets(*p.offsets),
        )
        sc = cfg.shark
        self.shark = SharkState(sc.start[0], sc.start[1], sc.heading, sc.speed)
        self.drones: list[_Drone] = []
        for i, dc in enumerate(cfg.drones):
            if dc.start == "station":
                pos = tracking_station(self.shark.position, 0.0, cfg.altitude)
                st = DroneState(dc.id, pos.x, pos.y, pos.z, 0.0, role=Role.PRIMARY_TRACKER)
                machine = "out"
            else:
                st = DroneState(dc.id, dc.base[0], dc.base[1], 0.0, 0.0, role=Role.AT_BASE)
                machine = None
            d = _Drone(dc.id, i, dc.base, dc.energy, dc.flight, st, np.random.default_rng([seed, 10 + i]), machine=machine)
            self.drones.append(d)
        ch = cfg.channel
        a, b = self.drones
        a.tx = b.rx = SimChannel(ChannelParams(ch.latency_ms, ch.jitter_ms, ch.loss_prob, seed * 2))
        b.tx = a.rx = SimChannel(ChannelParams(ch.latency_ms, ch.jitter_ms, ch.loss_prob, seed * 2 + 1))
        for d in self.drones:
            if d.tracking:
                gt = target_box(d.state.pose(), self.shark, self.cfg.shark.params)
                d.tracker = TrackerState(Mode.GOOD, gt)
                d.pred = gt

        self.trace: list[str] = []
        self.log: list[str] = []
        self.records: list[FrameRecord] = []
        self.events: list[str] = []
        self.failures: list[dict] = []
        self.handoffs = 0
        self.relief_requests = 0
        self.pending_frames = 0
        self.gap_frames = 0
        self.violations = 0
        self.t = 0.0
        self.frame = 0
        self.frame_dt = cfg.clock.physics_dt * cfg.clock.vision_every
        # recent (t, shark, visibility, poses) per vision frame
        self.history: dict[int, tuple] = {}

    # --- protocol plumbing ---------------------------------------------------

    def _peer(self, d: _Drone) -> _Drone:
        return self.drones[1 - d.index]

    def dispatch(self, d: _Drone, e) -> None:
        queue = deque([e])
        while queue:
            ev = queue.popleft()
            if d.machine == "out":
                before = d.out.phase
                d.out, actions = advance_outgoing(d.out, ev, self.proto)
                after = d.out.phase
            elif d.machine == "in":
                before = d.inc.phase
                d.inc, actions = advance_incoming(d.inc, ev, self.proto)
                after = d.inc.phase
            else:
                return
            if isinstance(ev, Tick) and not actions and before is after:
                continue  # periodic no-op; keeps the log readable
            self.log.append(log_line(ev.t, d.id, before, ev, after, actions))
            if before is not after:
                self.events.append(f"{d.id}:{after.value}")
            for a in actions:
                follow = self._apply(d, a, ev.t)
                if follow is not None:
                    queue.append(follow)
            self._after_transition(d, before, after, ev.t)

    def _apply(self, d: _Drone, a, t: float):
        if isinstance(a, Send):
            d.tx.send(a.msg, t)
        elif isinstance(a, SetNavTarget):
            d.setpoint, d.yaw_setpoint = a.point, a.yaw
        elif isinstance(a, AssumeRole):
            self._assume(d, a.role)
        elif isinstance(a, RaiseFailure):
            self.failures.append({"t": _r(t, 6), "drone": d.id, "reason": a.reason})
        elif isinstance(a, RequestMatch):
            conf, box = self._match(d, a, t)
            d.match_box = box
            return MatchResult(t, conf, box)
        return None

    def _assume(self, d: _Drone, role: Role) -> None:
        was_tracking = d.tracking
        d.state = replace(d.state, role=role)
        if role is Role.PRIMARY_TRACKER and not was_tracking:
            # the handed-over box seeds the new primary's tracker
            gt = target_box(d.state.pose(), self.shark, self.cfg.shark.params)
            box = d.match_box if d.match_box is not None else gt
            good = gt is not None and box is not None and box.contains(*gt.center)
            d.tracker = TrackerState(Mode.GOOD if good else Mode.POOR, box if box is not None else gt)
            d.pred = box
        elif role is Role.RETURNING_TO_BASE:
            d.setpoint = WorldPoint(d.base[0], d.base[1], 0.0)
            d.yaw_setpoint = None
            d.tracker = None
            d.pred = None

    def _after_transition(self, d: _Drone, before, after, t: float) -> None:
        if d.machine == "out":
            if after is OutPhase.RELIEF_REQUESTED and before is not after:
                self.relief_requests += 1
        elif d.machine == "in":
            if after is InPhase.PRIMARY_TRACKING:
                self.handoffs += 1
                self.events.append(f"{d.id}:handoff_complete")
                d.machine = "out"
                d.out = OutgoingState(seq=d.seq, session=d.out.session)
                d.setpoint = None
            elif after is InPhase.ABORTED:
                # fly home; available again once landed and recharged
                d.inc = IncomingState(seq=d.seq)
                d.machine = None
                self._assume(d, Role.RETURNING_TO_BASE)

    def _fresh_handle(self, d: _Drone, k: int, vis) -> Optional[TrackingHandle]:
        pose = d.state.pose()
        if d.pred is None:
            return d.handle
        try:
            pred = d.pred.clamped(pose.image_width, pose.image_height)
        except ValueError:
            return d.handle
        pad = self.cfg.matching.handoff_padding
        frame = render_region(self.shark, pose, padded_rect(pred, pad, pose), self.cfg.seed, t=self.t, vis=vis, view=d.index, frame=k, shark_params=self.cfg.shark.params)
        crop, origin = template_crop(frame, pred, pad)
        if crop.size == 0:
            return d.handle
        return TrackingHandle(pred, d.confidence, encode_pgm(crop), origin, d.shark_estimate, self._pose_tuple(d), self.t)

    @staticmethod
    def _pose_tuple(d: _Drone):
        s = d.state
        return (s.x, s.y, s.z, s.yaw)

    def _match(self, d: _Drone, req: RequestMatch, t: float):
        if not d.inc.complete or req.box is None or req.shark_xy is None:
            return 0.0, None
        # Match against the buffered frame taken when the template was cut:
        # the target turns too quickly for a similarity fit across even a
        # few hundred milliseconds of oblique view.
        k = int(round(d.inc.meta.timestamp / self.frame_dt))
        t, shark, vis, poses = self.history.get(k, (t, self.shark, visibility(self.occlusions, t), None))
        pose = d.state.pose() if poses is None else poses[d.index]
        if k not in self.history:
            k = self.frame
        try:
            center = project_world_to_pixel(pose, (req.shark_xy[0], req.shark_xy[1], 0.0))
        except OutOfView:
            return 0.0, None
        rect = roi_rect(center, (req.box.width, req.box.height), (pose.image_height, pose.image_width), self.match_params.roi_margin_px)
        frame = render_region(shark, pose, rect, self.cfg.seed, t=t, vis=vis, view=d.index, frame=k, shark_params=self.cfg.shark.params)
        # each attempt draws fresh RANSAC samples
        params = replace(self.match_params, seed=self.cfg.seed * 1000 + req.attempt)
        feats = roi_features(frame, rect, params)
        try:
            template = decode_pgm(d.inc.template())
            out = match_template(template, d.inc.meta.origin, req.box, feats, rect[:2], frame.shape, params)
        except (MatchFailed, PGMError):
            return 0.0, None
        return out.confidence, out.box

    # --- per-tick work -------------------------------------------------------

    def _deliver(self, t: float) -> None:
        for d in self.drones:
            for m in d.rx.poll(t):
                if d.machine == "out" and d.out.phase in _OUT_DEAF:
                    continue  # late traffic for a closed session
                if d.machine == "in" or d.machine == "out":
                    self.dispatch(d, MsgReceived(t, m))
            dl = self._deadline(d)
            if dl is not None and dl <= t:
                self.dispatch(d, Timeout(t))

    @staticmethod
    def _deadline(d: _Drone) -> Optional[float]:
        if d.machine == "out" and d.out.phase is not OutPhase.RETURNING_TO_BASE:
            return d.out.deadline
        if d.machine == "in":
            return d.inc.deadline
        return None

    def _vision(self, k: int) -> None:
        t = self.t
        vis = visibility(self.occlusions, t)
        self.history[k] = (t, self.shark, vis, tuple(d.state.pose() for d in self.drones))
        self.history.pop(k - _HISTORY_FRAMES, None)
        for d in self.drones:
            if d.tracking and d.tracker is not None:
                pose = d.state.pose()
                gt = target_box(pose, self.shark, self.cfg.shark.params)
                d.tracker, d.pred, d.confidence = step_tracker(d.tracker, gt, vis, self.tracker_params, d.rng)
                try:
                    p = d.pred.clamped(pose.image_width, pose.image_height).center
                    g = backproject_pixel_to_surface(pose, Pixel(*p))
                    d.shark_estimate = (g.x, g.y)
                except (ValueError, NoIntersection):
                    pass
        for d in self.drones:
            if d.machine != "out" or d.out.phase is OutPhase.RETURNING_TO_BASE:
                continue
            level = d.state.battery_fraction
            needs_handle = d.out.phase in _FRESH_TEMPLATE and (d.out.phase is not OutPhase.TRACKING or level <= self.proto.relief_threshold)
            if needs_handle:
                d.handle = self._fresh_handle(d, k, vis)
            elif d.handle is not None:
                d.handle = replace(d.handle, shark_xy=d.shark_estimate, drone_pose=self._pose_tuple(d))
            self.dispatch(d, Tick(t, d.handle))
            if d.machine == "out" and level <= self.proto.relief_threshold and d.handle is not None:
                if d.out.phase is OutPhase.TRACKING or (level <= self.proto.handoff_reserve and d.out.phase in PRE_SWAP_PHASES):
                    self.dispatch(d, BatteryLow(t, level, d.handle))
        for d in self.drones:
            if d.machine != "in" or d.inc.phase not in _MARKER_PHASES:
                d.marker_fix = None
            else:
                peer = self._peer(d)
                try:
                    obs = synthesize_marker_observation(d.state.pose(), peer.state.position, peer.state.yaw)
                    est = estimate_peer_pose(d.state.pose(), obs)
                except (OutOfView, DegenerateObservation):
                    continue
                station = rendezvous_pose(est, self.proto.offsets, peer.state.z).position
                vel = (0.0, 0.0, 0.0)
                if d.marker_fix is not None and t > d.marker_fix[0]:
                    t0, p0, _ = d.marker_fix
                    vel = tuple((a - b) / (t - t0) for a, b in zip(station, p0))
                d.marker_fix = (t, station, vel)
                d.yaw_setpoint = est.alpha
                if d.inc.phase is InPhase.MARKER_ACQUIRE and math.dist(d.state.position, station) <= _MARKER_LOCK_M:
                    self.dispatch(d, MarkerSeen(t, est))
        self._row(k, vis)

    def _row(self, k: int, vis) -> None:
        primary = [d for d in self.drones if d.state.role is Role.PRIMARY_TRACKER]
        pending = [d for d in self.drones if d.state.role is Role.HANDOVER_PENDING]
        active = primary[0] if primary else (pending[0] if pending else None)
        if not primary:
            if pending:
                self.pending_frames += 1
            else:
                self.gap_frames += 1
        gt = pred = None
        if active is not None:
            # the summary scores the rounded boxes the trace carries, so that
            # re-reading the trace reproduces it exactly
            gt = _rbox(target_box(active.state.pose(), self.shark, self.cfg.shark.params))
            pred = _rbox(active.pred)
        self.records.append(FrameRecord(k, gt, pred, active.id if active else ""))
        row = {
            "t": _r(self.t, 6),
            "frame_idx": k,
            "active_drone": active.id if active else "",
            "gt": box_to_json(gt),
            "pred": box_to_json(pred),
            "iou": None if gt is None or pred is None else _r(iou(gt, pred), 6),
            "occluded": vis.occluded,
            "drones": {
                d.id: {
                    "role": d.state.role.value,
                    "pose": [_r(d.state.x), _r(d.state.y), _r(d.state.z), _r(d.state.yaw)],
                    "battery": _r(d.state.battery_fraction, 6),
                    "phase": None if d.phase is None else d.phase.value,
                }
                for d in self.drones
            },
            "events": self.events,
        }
        self.events = []
        self.trace.append(json.dumps(row, sort_keys=True))

    def _check_roles(self) -> None:
        problem = role_swap_invariant_check(d.state.role for d in self.drones)
        if problem is not None:
            if not problem.startswith("coverage gap"):
                self.violations += 1
            raise ScenarioFailure(f"t={self.t:.2f}s: {problem}")

    def _physics(self, dt: float) -> None:
        self.shark = step_shark(self.shark, dt, self.shark_rng, self.cfg.shark.params)
        for d in self.drones:
            role = d.state.role
            if role is Role.AT_BASE:
                d.state = recharge_battery(d.state, d.energy, dt)
                if d.machine is None and d.state.battery_fraction >= 1.0:
                    # charged: listening for relief requests again
                    d.machine = "in"
                continue
            if d.tracking:
                target, yaw = tracking_station(self.shark.position, 0.0, self.cfg.altitude), 0.0
            elif d.marker_fix is not None:
                # hold station on the marker, leading by the estimated peer
                # velocity so the proportional loop does not trail behind
                t0, p0, v = d.marker_fix
                lead = self.t - t0 + 1.0 / d.flight.gain
                target, yaw = WorldPoint(*(a + b * lead for a, b in zip(p0, v))), d.yaw_setpoint
            else:
                target, yaw = d.setpoint, d.yaw_setpoint
            if target is not None:
                d.state, arrived = step_drone(d.state, target, dt, d.flight, yaw)
            else:
                arrived = False
            d.state, depleted = drain_battery(d.state, d.energy, dt)
            if depleted:
                raise ScenarioFailure(f"t={self.t:.2f}s: {d.id} battery depleted airborne")
            if arrived and role is Role.RELIEVER and d.machine == "in" and d.inc.phase is InPhase.NAVIGATE_TO_PEER:
                self.dispatch(d, PeerArrived(self.t))
            elif arrived and role is Role.RETURNING_TO_BASE and target is not None and target[2] == 0.0:
                self._land(d)

    def _land(self, d: _Drone) -> None:
        d.state = replace(d.state, x=d.base[0], y=d.base[1], z=0.0, velocity=(0.0, 0.0, 0.0), role=Role.AT_BASE)
        d.inc = IncomingState(seq=d.seq)
        d.out = OutgoingState(seq=d.seq, session=d.out.session)
        d.machine = None
        d.setpoint = d.yaw_setpoint = None
        d.handle = None
        self.events.append(f"{d.id}:landed")

    def run(self) -> None:
        c = self.cfg.clock
        n_ticks = int(round(self.cfg.duration_s / c.physics_dt))
        for tick in range(n_ticks):
            self.t = tick * c.physics_dt
            self._deliver(self.t)
            self._check_roles()
            if tick % c.vision_every == 0:
                self.frame = tick // c.vision_every
                self._vision(self.frame)
            self._physics(c.physics_dt)

    # --- results -------------------------------------------------------------

    def summary(self, failure: Optional[str] = None) -> dict:
        frames = len(self.records)
        out = {
            "seed": self.cfg.seed,
            "duration_s": self.cfg.duration_s,
            "frames": frames,
            "handoffs_completed": self.handoffs,
            "relief_requests": self.relief_requests,
            "protocol_failures": self.failures,
            "coverage_fraction": (frames - self.pending_frames - self.gap_frames) / frames if frames else 0.0,
            "handover_pending_frames": self.pending_frames,
            "uncovered_frames": self.gap_frames,
            "safety_violations": self.violations,
            "status": "failed" if failure else "ok",
            "failure": failure,
        }
        try:
            out["overall"] = report_dict(accuracy_report(self.records), robustness_report(self.records))
        except EmptyTrace:
            out["overall"] = None
        segments = []
        start = 0
        for i in range(1, frames + 1):
            if i == frames or self.records[i].active_drone != self.records[start].active_drone:
                seg = self.records[start:i]
                try:
                    rep = report_dict(accuracy_report(seg), robustness_report(seg))
                except EmptyTrace:
                    rep = None
                segments.append({"drone": seg[0].active_drone, "first_frame": seg[0].frame_idx, "last_frame": seg[-1].frame_idx, "report": rep})
                start = i
        out["segments"] = segments
        return out


def _write(out_dir, cfg: ScenarioConfig, result: ScenarioResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / cfg.outputs.trace).write_text("".join(line + "\n" for line in result.trace), encoding="utf-8")
    (out / cfg.outputs.protocol_log).write_text("".join(line + "\n" for line in result.protocol_log), encoding="utf-8")
    (out / cfg.outputs.summary).write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_scenario(cfg: ScenarioConfig = ScenarioConfig(), out_dir=None) -> ScenarioResult:
    """Run the mission; write trace, protocol log and summary to ``out_dir``
    when given (also on failure, so the run can be inspected).

    Raises:
        ScenarioFailure: a battery ran flat airborne, two drones held the
            primary role, or no drone was tracking.
    """
    sc = Scenario(cfg)
    try:
        sc.run()
    except ScenarioFailure as exc:
        result = ScenarioResult(sc.summary(str(exc)), sc.trace, sc.log)
        if out_dir is not None:
            _write(out_dir, cfg, result)
        exc.result = result
        raise
    result = ScenarioResult(sc.summary(), sc.trace, sc.log)
    if out_dir is not None:
        _write(out_dir, cfg, result)
    return result
