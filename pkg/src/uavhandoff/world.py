"""Seeded world model: shark motion, drone kinematics, batteries, occlusion.

Everything here is a plain value plus a pure step function; the scenario
runner owns the loop. Time advances in physics ticks (100 Hz by default) and
every ``vision_every``-th tick is a vision frame.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .geometry import DEFAULT_TILT, CameraPose, WorldPoint, wrap_angle
from .metrics import BoundingBox


class Role(str, enum.Enum):
    PRIMARY_TRACKER = "PrimaryTracker"
    RELIEVER = "Reliever"
    RETURNING_TO_BASE = "ReturningToBase"
    AT_BASE = "AtBase"
    # The outgoing drone after sending ROLE_SWAP and before SWAP_ACK arrives.
    HANDOVER_PENDING = "HandoverPending"


class OcclusionKind(str, enum.Enum):
    SUBMERGED = "submerged"
    GLARE = "glare"
    CLUTTER = "clutter"


# --- shark -------------------------------------------------------------------


@dataclass(frozen=True)
class SharkParams:
    max_speed: float = 2.0
    # heading noise intensity (rad / sqrt(s))
    kappa: float = 0.35
    mean_speed: float = 1.0
    speed_reversion: float = 0.2
    speed_noise: float = 0.15
    # Beyond home_radius the heading is pulled back toward home.
    home: tuple[float, float] = (0.0, 0.0)
    home_radius: float = 25.0
    home_pull: float = 0.4
    length_m: float = 3.5
    width_m: float = 1.2

    def __post_init__(self):
        if self.max_speed <= 0 or self.kappa < 0 or self.speed_noise < 0:
            raise ValueError("invalid shark parameters")


@dataclass(frozen=True)
class SharkState:
    x: float
    y: float
    heading: float
    speed: float

    @property
    def position(self) -> WorldPoint:
        return WorldPoint(self.x, self.y, 0.0)


def step_shark(s: SharkState, dt: float, rng: np.random.Generator, params: SharkParams = SharkParams()) -> SharkState:
    """Mean-reverting heading walk with an Ornstein-Uhlenbeck speed.

    With kappa = 0 and speed_noise = 0 the shark keeps its heading and, if it
    starts at mean_speed or with speed_reversion = 0, its speed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_heading, n_speed = rng.standard_normal(2)
    sq = math.sqrt(dt)
    heading = s.heading + params.kappa * n_heading * sq
    hx, hy = params.home[0] - s.x, params.home[1] - s.y
    if math.hypot(hx, hy) > params.home_radius:
        heading += params.home_pull * wrap_angle(math.atan2(hy, hx) - heading) * dt
    heading = wrap_angle(heading)
    speed = s.speed + params.speed_reversion * (params.mean_speed - s.speed) * dt + params.speed_noise * n_speed * sq
    speed = min(max(speed, 0.0), params.max_speed)
    return SharkState(s.x + speed * math.cos(heading) * dt, s.y + speed * math.sin(heading) * dt, heading, speed)


def shark_outline(s: SharkState, params: SharkParams = SharkParams(), n: int = 64) -> np.ndarray:
    """Points on the body ellipse, shape (n, 3)."""
    t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    a, b = params.length_m / 2.0, params.width_m / 2.0
    ch, sh = math.cos(s.heading), math.sin(s.heading)
    lx, ly = a * np.cos(t), b * np.sin(t)
    return np.stack([s.x + ch * lx - sh * ly, s.y + sh * lx + ch * ly, np.zeros(n)], axis=1)


def target_box(pose: CameraPose, s: SharkState, params: SharkParams = SharkParams()) -> Optional[BoundingBox]:
    """Ground-truth box: the projected body outline clipped to the image.

    Returns None when the body is behind the camera or entirely outside the
    frame.
    """
    fwd, right, down = (np.array(b) for b in pose.basis())
    rel = shark_outline(s, params) - np.array(pose.position)
    depth = rel @ fwd
    if np.any(depth <= 0.0):
        return None
    us = pose.cx + pose.focal_px * (rel @ right) / depth
    vs = pose.cy + pose.focal_px * (rel @ down) / depth
    left, right = max(float(us.min()), 0.0), min(float(us.max()), float(pose.image_width))
    top, bottom = max(float(vs.min()), 0.0), min(float(vs.max()), float(pose.image_height))
    if right - left < 1.0 or bottom - top < 1.0:
        return None
    return BoundingBox(left, top, right, bottom)


# --- drones ------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyModel:
    endurance_s: float = 1500.0
    relief_threshold: float = 0.30
    handoff_reserve: float = 0.15
    recharge_s: float = 600.0

    def __post_init__(self):
        if self.endurance_s <= 0 or self.recharge_s <= 0:
            raise ValueError("endurance and recharge times must be positive")
        if not 0.0 < self.handoff_reserve < self.relief_threshold < 1.0:
            raise ValueError("need 0 < handoff_reserve < relief_threshold < 1")


@dataclass(frozen=True)
class FlightParams:
    v_max: float = 8.0
    gain: float = 8.0
    arrival_radius: float = 1.0
    yaw_rate: float = math.pi / 2

    def __post_init__(self):
        if self.v_max <= 0 or self.gain <= 0 or self.arrival_radius < 0:
            raise ValueError("invalid flight parameters")


@dataclass(frozen=True)
class DroneState:
    id: str
    x: float
    y: float
    z: float
    yaw: float = 0.0
    tilt: float = DEFAULT_TILT
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    battery_fraction: float = 1.0
    role: Role = Role.AT_BASE
    depleted: bool = False

    @property
    def position(self) -> WorldPoint:
        return WorldPoint(self.x, self.y, self.z)

    @property
    def airborne(self) -> bool:
        return self.role is not Role.AT_BASE

    def pose(self, focal_px: float = 400.0) -> CameraPose:
        return CameraPose(WorldPoint(self.x, self.y, self.z), yaw=self.yaw, tilt=self.tilt, focal_px=focal_px)


def step_drone(
    d: DroneState,
    setpoint: WorldPoint,
    dt: float,
    params: FlightParams = FlightParams(),
    yaw_setpoint: Optional[float] = None,
) -> tuple[DroneState, bool]:
    """Proportional velocity command toward ``setpoint``, capped at v_max.

    Returns the new state and whether the drone is within the arrival radius.
    The step never overshoots (gain * dt <= 1 is enforced by capping the
    travelled distance at the remaining distance).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ex, ey, ez = setpoint[0] - d.x, setpoint[1] - d.y, setpoint[2] - d.z
    dist = math.sqrt(ex * ex + ey * ey + ez * ez)
    if dist > 0.0:
        speed = min(params.v_max, params.gain * dist)
        travel = min(speed * dt, dist)
        k = travel / dist
        vel = (ex * k / dt, ey * k / dt, ez * k / dt)
        nx, ny, nz = d.x + ex * k, d.y + ey * k, d.z + ez * k
        remaining = dist - travel
    else:
        vel, (nx, ny, nz), remaining = (0.0, 0.0, 0.0), (d.x, d.y, d.z), 0.0
    yaw = d.yaw
    if yaw_setpoint is not None:
        err = wrap_angle(yaw_setpoint - d.yaw)
        limit = params.yaw_rate * dt
        yaw = wrap_angle(d.yaw + max(-limit, min(limit, err)))
    return replace(d, x=nx, y=ny, z=nz, yaw=yaw, velocity=vel), remaining <= params.arrival_radius


def drain_battery(d: DroneState, model: EnergyModel, dt: float) -> tuple[DroneState, bool]:
    """Linear drain while airborne. The flag is True exactly once per sortie,
    on the step the battery reaches zero."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if not d.airborne or dt == 0:
        return d, False
    level = max(0.0, d.battery_fraction - dt / model.endurance_s)
    depleted_now = level == 0.0 and not d.depleted
    return replace(d, battery_fraction=level, depleted=d.depleted or depleted_now), depleted_now


def recharge_battery(d: DroneState, model: EnergyModel, dt: float) -> DroneState:
    if d.airborne:
        return d
    return replace(d, battery_fraction=min(1.0, d.battery_fraction + dt / model.recharge_s), depleted=False)


# --- occlusion ---------------------------------------------------------------


class Visibility(NamedTuple):
    occluded: bool
    kind: Optional[OcclusionKind] = None


VISIBLE = Visibility(False)


@dataclass(frozen=True)
class OcclusionSchedule:
    intervals: tuple[tuple[float, float, OcclusionKind], ...] = ()
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ivs = tuple((float(a), float(b), OcclusionKind(k)) for a, b, k in self.intervals)
        for (a, b, _), nxt in zip(ivs, ivs[1:] + ((math.inf, math.inf, None),)):
            if not a < b:
                raise ValueError(f"empty occlusion interval [{a}, {b})")
            if nxt[0] < b:
                raise ValueError("occlusion intervals must be sorted and non-overlapping")
        object.__setattr__(self, "intervals", ivs)
        object.__setattr__(self, "_starts", tuple(a for a, _, _ in ivs))


def visibility(schedule: OcclusionSchedule, t: float) -> Visibility:
    """Half-open interval lookup: occluded on [start, end)."""
    i = bisect.bisect_right(schedule._starts, t) - 1
    if i >= 0:
        a, b, kind = schedule.intervals[i]
        if a <= t < b:
            return Visibility(True, kind)
    return VISIBLE


def random_schedule(rng: np.random.Generator, duration_s: float, mean_gap_s: float = 120.0, mean_len_s: float = 4.0) -> OcclusionSchedule:
    """Poisson-spaced occlusions of exponential length."""
    out = []
    t = float(rng.exponential(mean_gap_s))
    kinds = list(OcclusionKind)
    while t < duration_s:
        length = max(0.2, float(rng.exponential(mean_len_s)))
        out.append((round(t, 2), round(t + length, 2), kinds[int(rng.integers(len(kinds)))]))
        t = out[-1][1] + float(rng.exponential(mean_gap_s))
    return OcclusionSchedule(tuple(out))


# --- clock -------------------------------------------------------------------


@dataclass
class SimClock:
    physics_dt: float = 0.01
    vision_every: int = 20
    tick: int = 0

    def __post_init__(self):
        if self.physics_dt <= 0:
            raise ValueError("physics_dt must be positive")
        if self.vision_every < 1:
            raise ValueError("vision_every must be at least 1")

    @property
    def t(self) -> float:
        # computed from the tick count so it never accumulates rounding
        return self.tick * self.physics_dt

    @property
    def is_vision_tick(self) -> bool:
        return self.tick % self.vision_every == 0

    @property
    def frame_idx(self) -> int:
        return self.tick // self.vision_every

    @property
    def vision_dt(self) -> float:
        return self.physics_dt * self.vision_every

    def advance(self) -> None:
        self.tick += 1
