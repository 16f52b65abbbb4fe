"""Procedural sea-surface frames with a dark elliptical target.

The water is a periodic multi-octave value-noise texture anchored in world
coordinates, so two drones looking at the same patch of sea see the same
features from different viewpoints. Per-view sensor noise and sun glints
differ between cameras.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geometry import CameraPose, backproject_grid
from ..world import VISIBLE, OcclusionKind, SharkParams, SharkState, Visibility

TEX_SIZE = 2048
TEX_RES_M = 0.04
# (cell size in texels, amplitude)
_OCTAVES = ((256, 0.35), (64, 0.25), (16, 0.25), (4, 0.15))
_BODY_TEX = (24, 64)


@dataclass(frozen=True)
class RenderParams:
    sea_mean: float = 110.0
    sea_contrast: float = 80.0
    target_level: float = 40.0
    target_contrast: float = 50.0
    # target opacity while submerged; below the FAST threshold in contrast
    submerged_alpha: float = 0.12
    glare_gain: float = 220.0
    glare_radius_px: float = 70.0
    clutter_blobs: int = 4
    noise_sigma: float = 3.0
    glint_fraction: float = 0.001
    current_mps: tuple[float, float] = (0.05, 0.02)


def _periodic_upsample(grid: np.ndarray, cell: int) -> np.ndarray:
    n = grid.shape[0]
    x = np.arange(TEX_SIZE) / cell
    i0 = np.floor(x).astype(np.int64) % n
    i1 = (i0 + 1) % n
    f = x - np.floor(x)
    f = f * f * (3.0 - 2.0 * f)
    rows = grid[i0] * (1.0 - f)[:, None] + grid[i1] * f[:, None]
    return rows[:, i0] * (1.0 - f)[None, :] + rows[:, i1] * f[None, :]


@functools.lru_cache(maxsize=4)
def sea_texture(seed: int) -> np.ndarray:
    """Periodic texture in [0, 1], TEX_SIZE^2 texels of TEX_RES_M metres."""
    rng = np.random.default_rng([seed, 0x5EA])
    tex = np.zeros((TEX_SIZE, TEX_SIZE))
    for cell, amp in _OCTAVES:
        g = rng.random((TEX_SIZE // cell, TEX_SIZE // cell))
        tex += amp * _periodic_upsample(g, cell)
    tex /= sum(a for _, a in _OCTAVES)
    # steepen mid-tones so the fine octaves produce crisp, cornered blobs
    tex = 0.5 + 0.5 * np.tanh(6.0 * (tex - 0.5))
    return tex.astype(np.float32)


@functools.lru_cache(maxsize=4)
def body_texture(seed: int) -> np.ndarray:
    """Blocky dorsal markings, 0/1 over the body's (across, along) grid."""
    rng = np.random.default_rng([seed, 0xB0D])
    h, w = _BODY_TEX
    spots = rng.random((h // 4, w // 4))
    return (np.kron(spots, np.ones((4, 4))) > 0.55).astype(np.float32)


def _sample(tex: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear lookup with periodic wrap (TEX_SIZE is a power of two)."""
    tx = x * (1.0 / TEX_RES_M)
    ty = y * (1.0 / TEX_RES_M)
    fx0 = np.floor(tx)
    fy0 = np.floor(ty)
    fx, fy = (tx - fx0).astype(np.float32), (ty - fy0).astype(np.float32)
    m = TEX_SIZE - 1
    x0 = fx0.astype(np.int64) & m
    y0 = fy0.astype(np.int64) & m
    x1, y1 = (x0 + 1) & m, (y0 + 1) & m
    flat = tex.ravel()
    r0, r1 = y0 * TEX_SIZE, y1 * TEX_SIZE
    top = flat.take(r0 + x0) * (1 - fx) + flat.take(r0 + x1) * fx
    bot = flat.take(r1 + x0) * (1 - fx) + flat.take(r1 + x1) * fx
    return top * (1 - fy) + bot * fy


@functools.lru_cache(maxsize=8)
def _pixel_grid(left: int, top: int, right: int, bottom: int):
    vv, uu = np.mgrid[top:bottom, left:right].astype(np.float64)
    return uu, vv


def _hash32(x: np.ndarray) -> np.ndarray:
    """lowbias32 integer hash, elementwise on uint32."""
    x = x ^ (x >> np.uint32(16))
    x = x * np.uint32(0x7FEB352D)
    x = x ^ (x >> np.uint32(15))
    x = x * np.uint32(0x846CA68B)
    return x ^ (x >> np.uint32(16))


def pixel_uniforms(seed: int, view: int, frame: int, uu: np.ndarray, vv: np.ndarray, stream: int) -> np.ndarray:
    """Uniform [0, 1) values keyed by (seed, view, frame, pixel, stream).

    Counter-based so any sub-window of a frame reproduces the full frame's
    values exactly.
    """
    with np.errstate(over="ignore"):
        key = np.uint32(0)
        for part in (seed, view, frame, stream):
            key = _hash32(np.uint32(key ^ np.uint32(part & 0xFFFFFFFF)) + np.uint32(0x9E3779B9))
        idx = vv.astype(np.uint32) * np.uint32(4096) + uu.astype(np.uint32)
        h = _hash32(idx ^ key)
    return h * (1.0 / 4294967296.0)


def render_scene(
    shark: SharkState,
    pose: CameraPose,
    seed: int = 0,
    t: float = 0.0,
    vis: Visibility = VISIBLE,
    view: int = 0,
    frame: int = 0,
    params: RenderParams = RenderParams(),
    shark_params: SharkParams = SharkParams(),
    return_mask: bool = False,
    window: Optional[tuple[int, int, int, int]] = None,
):
    """Render one 8-bit frame of the sea with the target.

    ``seed`` fixes the world (sea texture, body pattern, clutter); ``view``
    and ``frame`` seed the per-camera sensor noise and glints. With
    ``return_mask`` the boolean target footprint is returned as well.
    ``window`` = (left, top, right, bottom) renders only that sub-rectangle;
    the result equals the same crop of the full frame.
    """
    if window is None:
        window = (0, 0, pose.image_width, pose.image_height)
    uu, vv = _pixel_grid(*window)
    x, y, hit = backproject_grid(pose, uu, vv)
    x = np.where(hit, x, 0.0)
    y = np.where(hit, y, 0.0)
    cx, cy = params.current_mps
    sea = _sample(sea_texture(seed), x - cx * t, y - cy * t)
    img = params.sea_mean + params.sea_contrast * (sea - 0.5)

    # target body in its own frame
    a, b = shark_params.length_m / 2.0, shark_params.width_m / 2.0
    ch, sh = math.cos(shark.heading), math.sin(shark.heading)
    dx, dy = x - shark.x, y - shark.y
    lx = ch * dx + sh * dy
    ly = -sh * dx + ch * dy
    r2 = (lx / a) ** 2 + (ly / b) ** 2
    mask = hit & (r2 <= 1.0)
    alpha = np.clip((1.0 - r2) * 6.0, 0.0, 1.0)
    if vis.occluded and vis.kind is OcclusionKind.SUBMERGED:
        alpha = alpha * params.submerged_alpha
    bh, bw = _BODY_TEX
    bi = np.clip(((ly / b + 1.0) * 0.5 * bh).astype(np.int64), 0, bh - 1)
    bj = np.clip(((lx / a + 1.0) * 0.5 * bw).astype(np.int64), 0, bw - 1)
    body = params.target_level + params.target_contrast * body_texture(seed)[bi, bj]
    img = np.where(mask, (1.0 - alpha) * img + alpha * body, img)

    if vis.occluded and vis.kind is OcclusionKind.GLARE:
        # blown-out specular patch centred on the target
        fwd, right, down = pose.basis()
        rel = (shark.x - pose.position[0], shark.y - pose.position[1], -pose.position[2])
        depth = sum(f * r for f, r in zip(fwd, rel))
        if depth > 0:
            pu = pose.cx + pose.focal_px * sum(f * r for f, r in zip(right, rel)) / depth
            pv = pose.cy + pose.focal_px * sum(f * r for f, r in zip(down, rel)) / depth
            d2 = (uu - pu) ** 2 + (vv - pv) ** 2
            img = img + params.glare_gain * np.exp(-d2 / (2.0 * params.glare_radius_px**2))
    if vis.occluded and vis.kind is OcclusionKind.CLUTTER:
        crng = np.random.default_rng([seed, 0xC1, frame])
        for _ in range(params.clutter_blobs):
            ox, oy = crng.uniform(-6.0, 6.0, size=2)
            th = crng.uniform(0, math.pi)
            c2, s2 = math.cos(th), math.sin(th)
            ex, ey = x - shark.x - ox, y - shark.y - oy
            q = ((c2 * ex + s2 * ey) / a) ** 2 + ((-s2 * ex + c2 * ey) / b) ** 2
            img = np.where(hit & (q <= 1.0), params.target_level + 10.0, img)

    glints = pixel_uniforms(seed, view, frame, uu, vv, 0) < params.glint_fraction
    # uniform noise scaled to the requested standard deviation
    noise = (pixel_uniforms(seed, view, frame, uu, vv, 1) - 0.5) * (params.noise_sigma * math.sqrt(12.0))
    img = img + np.where(glints, 90.0, 0.0) + noise
    img = np.where(hit, img, 200.0)
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return (out, mask) if return_mask else out


def render_region(shark: SharkState, pose: CameraPose, region: tuple[int, int, int, int], seed: int = 0, **kw) -> np.ndarray:
    """Full-size frame with only ``region`` rendered and the rest black.

    Cheaper than a full render when only a crop inside ``region`` is read;
    the rendered part is identical to the full frame.
    """
    left, top, right, bottom = region
    out = np.zeros((pose.image_height, pose.image_width), dtype=np.uint8)
    if right > left and bottom > top:
        out[top:bottom, left:right] = render_scene(shark, pose, seed, window=region, **kw)
    return out


def projected_center(pose: CameraPose, shark: SharkState) -> Optional[tuple[float, float]]:
    from ..geometry import _project_raw

    px = _project_raw(pose, shark.position)
    return None if px is None else (px.u, px.v)
