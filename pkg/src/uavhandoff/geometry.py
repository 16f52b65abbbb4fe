"""Camera projection, sea-surface back-projection and peer-pose estimation.

World frame: x east, y north, z up, sea surface at z = 0. Yaw is measured
counter-clockwise from +x; tilt is the depression of the optical axis below
the horizon. Cameras are ideal pinholes with the principal point at the
image centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
DEFAULT_FOCAL_PX = 400.0
DEFAULT_TILT = math.pi / 4

# Half-length of the marker heading arm used to encode in-image orientation.
_MARKER_ARM_M = 0.25
# Pixel step used when recovering heading from an observed orientation.
_HEADING_STEP_PX = 10.0


class OutOfView(Exception):
    """Point is behind the camera or projects outside the image."""


class NoIntersection(Exception):
    """Viewing ray does not reach the target plane."""


class DegenerateObservation(Exception):
    """Marker ray misses the peer altitude plane."""


class WorldPoint(NamedTuple):
    x: float
    y: float
    z: float = 0.0


class Pixel(NamedTuple):
    u: float
    v: float


class PeerPoseEstimate(NamedTuple):
    x: float
    y: float
    alpha: float


class MarkerObservation(NamedTuple):
    """Synthesized fiducial detection: marker centre pixel plus the in-image
    direction (atan2(dv, du)) of the peer's forward axis, and the peer
    altitude reported over GPS."""

    center: Pixel
    angle: float
    peer_altitude: float


@dataclass(frozen=True)
class RendezvousOffsets:
    x_t: float = 2.0
    y_t: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.x_t) and math.isfinite(self.y_t)):
            raise ValueError("rendezvous offsets must be finite")


@dataclass(frozen=True)
class CameraPose:
    position: WorldPoint
    yaw: float = 0.0
    tilt: float = DEFAULT_TILT
    focal_px: float = DEFAULT_FOCAL_PX
    image_width: int = IMAGE_WIDTH
    image_height: int = IMAGE_HEIGHT

    def __post_init__(self):
        if not 0.0 < self.tilt < math.pi / 2:
            raise ValueError(f"tilt must be in (0, pi/2), got {self.tilt}")
        if not self.focal_px > 0:
            raise ValueError("focal_px must be positive")
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError("camera position must be finite")

    @property
    def cx(self) -> float:
        return self.image_width / 2.0

    @property
    def cy(self) -> float:
        return self.image_height / 2.0

    def basis(self) -> tuple[tuple[float, float, float], ...]:
        """Return (forward, right, down) unit vectors in world coordinates."""
        cy_, sy_ = math.cos(self.yaw), math.sin(self.yaw)
        ct, st = math.cos(self.tilt), math.sin(self.tilt)
        forward = (ct * cy_, ct * sy_, -st)
        right = (sy_, -cy_, 0.0)
        down = (-st * cy_, -st * sy_, -ct)
        return forward, right, down


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def in_bounds(pose: CameraPose, px: Pixel) -> bool:
    return 0.0 <= px.u < pose.image_width and 0.0 <= px.v < pose.image_height


def _project_raw(pose: CameraPose, p) -> Optional[Pixel]:
    """Pinhole projection without the image-bounds check; None if behind."""
    fwd, right, down = pose.basis()
    dx = p[0] - pose.position[0]
    dy = p[1] - pose.position[1]
    dz = p[2] - pose.position[2]
    depth = fwd[0] * dx + fwd[1] * dy + fwd[2] * dz
    if depth <= 0.0:
        return None
    xr = right[0] * dx + right[1] * dy
    yd = down[0] * dx + down[1] * dy + down[2] * dz
    return Pixel(pose.cx + pose.focal_px * xr / depth, pose.cy + pose.focal_px * yd / depth)


def project_world_to_pixel(pose: CameraPose, p) -> Pixel:
    """Project a world point into the image.

    Raises:
        OutOfView: the point is behind the camera plane or lands outside the
            640x480 frame.
    """
    px = _project_raw(pose, p)
    if px is None or not in_bounds(pose, px):
        raise OutOfView(f"{tuple(p)} not visible from {pose.position}")
    return px


def _ray(pose: CameraPose, u: float, v: float) -> tuple[float, float, float]:
    fwd, right, down = pose.basis()
    a = (u - pose.cx) / pose.focal_px
    b = (v - pose.cy) / pose.focal_px
    return (
        fwd[0] + a * right[0] + b * down[0],
        fwd[1] + a * right[1] + b * down[1],
        fwd[2] + a * right[2] + b * down[2],
    )


def _intersect_plane(pose: CameraPose, u: float, v: float, z: float) -> Optional[WorldPoint]:
    d = _ray(pose, u, v)
    h = z - pose.position[2]
    # Ray must head towards the plane, strictly.
    if d[2] == 0.0 or h / d[2] <= 0.0:
        return None
    s = h / d[2]
    return WorldPoint(pose.position[0] + s * d[0], pose.position[1] + s * d[1], z)


def backproject_pixel_to_surface(pose: CameraPose, px: Pixel) -> WorldPoint:
    """Intersect the viewing ray through ``px`` with the sea surface z = 0.

    Raises:
        NoIntersection: the ray points at or above the horizon.
    """
    if not in_bounds(pose, px):
        raise ValueError(f"pixel {tuple(px)} outside image")
    if pose.position[2] <= 0.0:
        raise NoIntersection("camera is not above the surface")
    hit = _intersect_plane(pose, px[0], px[1], 0.0)
    if hit is None:
        raise NoIntersection(f"ray through {tuple(px)} does not descend")
    return hit


def backproject_grid(pose: CameraPose, u: np.ndarray, v: np.ndarray, z: float = 0.0):
    """Vectorized back-projection of pixel arrays onto the plane ``z``.

    Returns (x, y, hit) arrays; ``hit`` is False where the ray never reaches
    the plane (x, y are NaN there).
    """
    fwd, right, down = (np.asarray(b) for b in pose.basis())
    a = (np.asarray(u, dtype=np.float64) - pose.cx) / pose.focal_px
    b = (np.asarray(v, dtype=np.float64) - pose.cy) / pose.focal_px
    dx = fwd[0] + a * right[0] + b * down[0]
    dy = fwd[1] + a * right[1] + b * down[1]
    dz = fwd[2] + a * right[2] + b * down[2]
    h = z - pose.position[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = h / dz
    hit = np.isfinite(s) & (s > 0)
    s = np.where(hit, s, np.nan)
    return pose.position[0] + s * dx, pose.position[1] + s * dy, hit


def synthesize_marker_observation(
    observer: CameraPose,
    peer_position: WorldPoint,
    alpha: float,
    noise_px: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> MarkerObservation:
    """Forward model standing in for fiducial detection on the peer drone."""
    center = project_world_to_pixel(observer, peer_position)
    arm = (
        peer_position[0] + _MARKER_ARM_M * math.cos(alpha),
        peer_position[1] + _MARKER_ARM_M * math.sin(alpha),
        peer_position[2],
    )
    tip = _project_raw(observer, arm)
    if tip is None:
        raise OutOfView("marker heading arm behind camera")
    if noise_px > 0.0:
        if rng is None:
            raise ValueError("noise requires an rng")
        n = rng.normal(0.0, noise_px, size=4)
        center = Pixel(center.u + n[0], center.v + n[1])
        tip = Pixel(tip.u + n[2], tip.v + n[3])
    angle = math.atan2(tip.v - center.v, tip.u - center.u)
    return MarkerObservation(center, angle, float(peer_position[2]))


def estimate_peer_pose(observer: CameraPose, obs: MarkerObservation) -> PeerPoseEstimate:
    """Recover the peer's (x, y, heading) from a marker observation.

    The marker centre is back-projected onto the peer's known altitude plane;
    a second pixel a few pixels along the observed orientation is
    back-projected too, and the heading is the bearing between the two.
    """
    alt = obs.peer_altitude
    if observer.position[2] <= alt:
        raise DegenerateObservation("observer must fly above the peer")
    c = _intersect_plane(observer, obs.center.u, obs.center.v, alt)
    if c is None:
        raise DegenerateObservation("marker ray misses the peer altitude plane")
    su = obs.center.u + _HEADING_STEP_PX * math.cos(obs.angle)
    sv = obs.center.v + _HEADING_STEP_PX * math.sin(obs.angle)
    tip = _intersect_plane(observer, su, sv, alt)
    if tip is None:
        raise DegenerateObservation("heading ray misses the peer altitude plane")
    alpha = math.atan2(tip.y - c.y, tip.x - c.x)
    return PeerPoseEstimate(c.x, c.y, wrap_angle(alpha))


def relative_heading(estimate: PeerPoseEstimate, observer: CameraPose) -> float:
    return wrap_angle(estimate.alpha - observer.yaw)


def rendezvous_pose(
    peer: PeerPoseEstimate,
    offsets: RendezvousOffsets,
    peer_altitude: float,
    tilt: float = DEFAULT_TILT,
    focal_px: float = DEFAULT_FOCAL_PX,
) -> CameraPose:
    """Station ``x_t`` behind the peer along its heading and ``y_t`` above,
    yawed parallel to it."""
    ca, sa = math.cos(peer.alpha), math.sin(peer.alpha)
    position = WorldPoint(peer.x - offsets.x_t * ca, peer.y - offsets.x_t * sa, peer_altitude + offsets.y_t)
    return CameraPose(position, yaw=peer.alpha, tilt=tilt, focal_px=focal_px)


def tracking_station(target: WorldPoint, yaw: float, altitude: float, tilt: float = DEFAULT_TILT) -> WorldPoint:
    """Drone position that puts a surface target on the optical axis."""
    reach = altitude / math.tan(tilt)
    return WorldPoint(target[0] - reach * math.cos(yaw), target[1] - reach * math.sin(yaw), altitude)
