"""Oriented FAST + rotated BRIEF, single octave, in numpy.

Detection is FAST-9 on the 16-pixel radius-3 circle, ranked by an integer
Harris response (Sobel gradients, 7x7 window, k = 1/25 so that
R = 25 det - tr^2 is exact). Orientation is the intensity centroid; BRIEF
pairs are steered by the orientation quantised to 30 bins and sampled on a
5x5 box-filtered image.
"""

from __future__ import annotations

import functools
import math
from typing import NamedTuple

import numpy as np

from ._brief_pattern import PATTERN
from .image import as_gray

# (du, dv) around the centre, clockwise starting straight up.
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)  # fmt: skip
BORDER = 19
HARRIS_HALF = 3
ORIENT_RADIUS = 15
ANGLE_BINS = 30
DEFAULT_THRESHOLD = 20
DEFAULT_MAX_KEYPOINTS = 500


class Keypoint(NamedTuple):
    u: int
    v: int
    response: int
    angle: float = 0.0


class Features(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    response: np.ndarray
    angle: np.ndarray
    descriptors: np.ndarray  # (n, 32) uint8

    def __len__(self) -> int:
        return len(self.u)

    def keypoints(self) -> list[Keypoint]:
        return [Keypoint(int(a), int(b), int(r), float(t)) for a, b, r, t in zip(self.u, self.v, self.response, self.angle)]

    def points(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=1).astype(np.float64)


class MatchPair(NamedTuple):
    index_a: int
    index_b: int
    hamming: int
    ratio: float


@functools.lru_cache(maxsize=None)
def arc_table(arc: int = 9) -> np.ndarray:
    """arc_table(n)[mask] is True iff the 16-bit ring mask has n contiguous
    set bits (circularly)."""
    m = np.arange(1 << 16, dtype=np.uint32)
    acc = np.full(m.shape, 0xFFFF, dtype=np.uint32)
    for k in range(arc):
        acc &= ((m >> k) | (m << (16 - k))) & 0xFFFF
    return acc != 0


def fast_corner_mask(img: np.ndarray, threshold: int = DEFAULT_THRESHOLD, arc: int = 9) -> np.ndarray:
    """Boolean map of FAST corners; pixels closer than BORDER to an edge are
    never corners."""
    if not 1 <= threshold <= 127:
        raise ValueError("threshold must be in 1..127")
    a = as_gray(img).astype(np.int16)
    h, w = a.shape
    out = np.zeros((h, w), dtype=bool)
    b = BORDER
    if h <= 2 * b or w <= 2 * b:
        return out
    c = a[b : h - b, b : w - b]
    hi, lo = c + threshold, c - threshold
    bright = np.zeros(c.shape, dtype=np.int32)
    dark = np.zeros(c.shape, dtype=np.int32)
    for k, (du, dv) in enumerate(CIRCLE):
        ring = a[b + dv : h - b + dv, b + du : w - b + du]
        bright |= (ring > hi).astype(np.int32) << k
        dark |= (ring < lo).astype(np.int32) << k
    table = arc_table(arc)
    out[b : h - b, b : w - b] = table[bright] | table[dark]
    return out


def harris_response(img: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Integer Harris score 25*det(M) - trace(M)^2 at the given pixels."""
    a = as_gray(img).astype(np.int64)
    h, w = a.shape
    ix = np.zeros((h, w), dtype=np.int64)
    iy = np.zeros((h, w), dtype=np.int64)
    ix[1:-1, 1:-1] = (a[:-2, 2:] + 2 * a[1:-1, 2:] + a[2:, 2:]) - (a[:-2, :-2] + 2 * a[1:-1, :-2] + a[2:, :-2])
    iy[1:-1, 1:-1] = (a[2:, :-2] + 2 * a[2:, 1:-1] + a[2:, 2:]) - (a[:-2, :-2] + 2 * a[:-2, 1:-1] + a[:-2, 2:])
    r = HARRIS_HALF

    def window_sum(x):
        s = np.zeros((h + 1, w + 1), dtype=np.int64)
        s[1:, 1:] = x.cumsum(0).cumsum(1)
        return s[vs + r + 1, us + r + 1] - s[vs - r, us + r + 1] - s[vs + r + 1, us - r] + s[vs - r, us - r]

    sxx, syy, sxy = window_sum(ix * ix), window_sum(iy * iy), window_sum(ix * iy)
    return 25 * (sxx * syy - sxy * sxy) - (sxx + syy) ** 2


def detect(img: np.ndarray, threshold: int = DEFAULT_THRESHOLD, max_keypoints: int = DEFAULT_MAX_KEYPOINTS, arc: int = 9):
    """FAST corners after 3x3 non-maximum suppression, strongest first.

    Returns (u, v, response) arrays. Equal responses are broken by raster
    order, both in suppression and in ranking.
    """
    mask = fast_corner_mask(img, threshold, arc)
    vs, us = np.nonzero(mask)
    if len(us) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    resp = harris_response(img, us, vs)
    h, w = mask.shape
    score = np.full((h + 2, w + 2), np.iinfo(np.int64).min, dtype=np.int64)
    score[vs + 1, us + 1] = resp
    keep = np.ones(len(us), dtype=bool)
    for dv in (-1, 0, 1):
        for du in (-1, 0, 1):
            if du == 0 and dv == 0:
                continue
            nb = score[vs + 1 + dv, us + 1 + du]
            earlier = dv < 0 or (dv == 0 and du < 0)
            keep &= (resp > nb) if earlier else (resp >= nb)
    us, vs, resp = us[keep], vs[keep], resp[keep]
    order = np.lexsort((vs * w + us, -resp))[:max_keypoints]
    return us[order].astype(np.int64), vs[order].astype(np.int64), resp[order]


def fast_detect(img: np.ndarray, threshold: int = DEFAULT_THRESHOLD, arc: int = 9, max_keypoints: int = DEFAULT_MAX_KEYPOINTS) -> list[Keypoint]:
    us, vs, resp = detect(img, threshold, max_keypoints, arc)
    return [Keypoint(int(u), int(v), int(r)) for u, v, r in zip(us, vs, resp)]


@functools.lru_cache(maxsize=None)
def _disk(radius: int):
    dv, du = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    inside = du * du + dv * dv <= radius * radius
    return du[inside], dv[inside]


def orientations(img: np.ndarray, us: np.ndarray, vs: np.ndarray, radius: int = ORIENT_RADIUS) -> np.ndarray:
    """Intensity-centroid angle atan2(m01, m10) in image (u right, v down)
    coordinates; a flat patch (zero moments) gets angle 0."""
    a = as_gray(img).astype(np.int64)
    du, dv = _disk(radius)
    patch = a[np.asarray(vs)[:, None] + dv, np.asarray(us)[:, None] + du]
    m10 = patch @ du
    m01 = patch @ dv
    return np.where((m10 == 0) & (m01 == 0), 0.0, np.arctan2(m01, m10))


def orientation(img: np.ndarray, kp, radius: int = ORIENT_RADIUS) -> float:
    return float(orientations(img, np.array([kp.u]), np.array([kp.v]), radius)[0])


@functools.lru_cache(maxsize=None)
def steered_patterns() -> np.ndarray:
    """(ANGLE_BINS, 256, 4) integer offsets of the pattern rotated by each bin."""
    p = np.array(PATTERN, dtype=np.float64)
    out = np.empty((ANGLE_BINS, len(p), 4), dtype=np.int64)
    for k in range(ANGLE_BINS):
        t = 2.0 * math.pi * k / ANGLE_BINS
        c, s = math.cos(t), math.sin(t)
        for j in (0, 2):
            out[k, :, j] = np.rint(c * p[:, j] - s * p[:, j + 1])
            out[k, :, j + 1] = np.rint(s * p[:, j] + c * p[:, j + 1])
    return out


def box_smooth(img: np.ndarray) -> np.ndarray:
    """5x5 box sums with edge replication (sums, not means, so comparisons
    are exact)."""
    a = np.pad(as_gray(img).astype(np.int32), 2, mode="edge")
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int32)
    s[1:, 1:] = a.cumsum(0).cumsum(1)
    return s[5:, 5:] - s[:-5, 5:] - s[5:, :-5] + s[:-5, :-5]


def angle_bin(angle) -> np.ndarray:
    return np.rint(np.asarray(angle) / (2.0 * math.pi / ANGLE_BINS)).astype(np.int64) % ANGLE_BINS


def describe(img: np.ndarray, us, vs, angles, smoothed: np.ndarray | None = None) -> np.ndarray:
    """Steered BRIEF descriptors, (n, 32) uint8, bit i little-endian within
    each byte."""
    sm = box_smooth(img) if smoothed is None else smoothed
    us, vs = np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64)
    pat = steered_patterns()[angle_bin(angles)]  # (n, 256, 4)
    a = sm[vs[:, None] + pat[:, :, 1], us[:, None] + pat[:, :, 0]]
    b = sm[vs[:, None] + pat[:, :, 3], us[:, None] + pat[:, :, 2]]
    return np.packbits(a < b, axis=1, bitorder="little")


def brief_describe(img: np.ndarray, kp) -> np.ndarray:
    return describe(img, [kp.u], [kp.v], [kp.angle])[0]


def orb(img: np.ndarray, threshold: int = DEFAULT_THRESHOLD, max_keypoints: int = DEFAULT_MAX_KEYPOINTS) -> Features:
    us, vs, resp = detect(img, threshold, max_keypoints)
    ang = orientations(img, us, vs) if len(us) else np.zeros(0)
    desc = describe(img, us, vs, ang) if len(us) else np.zeros((0, 32), dtype=np.uint8)
    return Features(us, vs, resp, ang, desc)


def hamming(a, b) -> int:
    return int(np.bitwise_count(np.bitwise_xor(np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8))).sum())


def hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    ba = np.unpackbits(da, axis=1).astype(np.float32)
    bb = np.unpackbits(db, axis=1).astype(np.float32)
    # |a xor b| = |a| + |b| - 2 a.b, exact in float32 for 256-bit vectors
    d = ba.sum(1)[:, None] + bb.sum(1)[None, :] - 2.0 * (ba @ bb.T)
    return np.rint(d).astype(np.int64)


def match_descriptors(da: np.ndarray, db: np.ndarray, ratio_max: float = 0.75, cross_check: bool = True) -> list[MatchPair]:
    """Brute-force nearest neighbours with Lowe's ratio test and a mutual
    nearest-neighbour check. A zero second-best distance (two exact hits)
    counts as ratio 1, i.e. ambiguous."""
    if len(da) == 0 or len(db) < 2:
        return []
    d = hamming_matrix(da, db)
    order = np.argsort(d, axis=1, kind="stable")
    best, second = order[:, 0], order[:, 1]
    rows = np.arange(len(da))
    d1, d2 = d[rows, best], d[rows, second]
    ratio = np.where(d2 > 0, d1 / np.maximum(d2, 1), 1.0)
    back = np.argmin(d, axis=0)
    out = []
    for i in range(len(da)):
        if ratio[i] >= ratio_max:
            continue
        if cross_check and back[best[i]] != i:
            continue
        out.append(MatchPair(i, int(best[i]), int(d1[i]), float(ratio[i])))
    return out
