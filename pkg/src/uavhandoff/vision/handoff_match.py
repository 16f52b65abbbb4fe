"""Two-stage cross-view re-identification used during a handoff.

Stage one crops a broad region of interest in the incoming drone's frame
around where the target is expected. Stage two matches a tight template
(the outgoing drone's box plus a small padding) into that region with ORB
and a RANSAC similarity, and maps the template box across.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..metrics import BoundingBox
from .orb import DEFAULT_MAX_KEYPOINTS, DEFAULT_THRESHOLD, Features, match_descriptors, orb
from .ransac import NoConsensus, estimate_transform_ransac

PADDINGS = (30, 50, 70)
ROI_MARGIN_PX = 300


class MatchFailed(Exception):
    pass


@dataclass(frozen=True)
class MatchParams:
    theta_match: float = 0.3
    ratio_max: float = 0.75
    ransac_iters: int = 500
    ransac_tol_px: float = 3.0
    fast_threshold: int = DEFAULT_THRESHOLD
    max_keypoints: int = DEFAULT_MAX_KEYPOINTS
    roi_margin_px: float = ROI_MARGIN_PX
    seed: int = 0


@dataclass(frozen=True)
class MatchOutcome:
    box: BoundingBox
    confidence: float
    inliers: int
    matches: int


def _int_rect(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    c = box.clamped(width, height)
    return int(np.floor(c.left)), int(np.floor(c.top)), int(np.ceil(c.right)), int(np.ceil(c.bottom))


def roi_rect(center: tuple[float, float], extent: tuple[float, float], shape, margin: float = ROI_MARGIN_PX):
    h, w = shape
    cu, cv = center
    ew, eh = extent
    box = BoundingBox(cu - ew / 2 - margin, cv - eh / 2 - margin, cu + ew / 2 + margin, cv + eh / 2 + margin)
    return _int_rect(box, w, h)


def roi_features(d2_frame: np.ndarray, rect, params: MatchParams = MatchParams()) -> Features:
    l, t, r, b = rect
    return orb(d2_frame[t:b, l:r], params.fast_threshold, params.max_keypoints)


def template_crop(d1_frame: np.ndarray, d1_box: BoundingBox, padding: float):
    h, w = d1_frame.shape
    l, t, r, b = _int_rect(d1_box.expanded(padding), w, h)
    return d1_frame[t:b, l:r], (l, t)


def match_template(
    template: np.ndarray,
    template_origin: tuple[int, int],
    d1_box: BoundingBox,
    roi: Features,
    roi_origin: tuple[int, int],
    frame_shape,
    params: MatchParams = MatchParams(),
) -> MatchOutcome:
    tf = orb(template, params.fast_threshold, params.max_keypoints)
    if len(tf) < 2 or len(roi) < 2:
        raise MatchFailed("too few keypoints")
    pairs = match_descriptors(tf.descriptors, roi.descriptors, params.ratio_max)
    try:
        tr, inl = estimate_transform_ransac(pairs, tf.points(), roi.points(), params.ransac_iters, params.ransac_tol_px, params.seed)
    except NoConsensus as exc:
        raise MatchFailed(str(exc)) from None
    conf = tr.inlier_count / len(pairs)
    if conf < params.theta_match:
        raise MatchFailed(f"confidence {conf:.2f} below {params.theta_match}")
    ou, ov = template_origin
    corners = np.array(
        [
            (d1_box.left - ou, d1_box.top - ov),
            (d1_box.right - ou, d1_box.top - ov),
            (d1_box.right - ou, d1_box.bottom - ov),
            (d1_box.left - ou, d1_box.bottom - ov),
        ]
    )
    mapped = tr.apply(corners) + np.asarray(roi_origin, dtype=np.float64)
    h, w = frame_shape
    box = BoundingBox(mapped[:, 0].min(), mapped[:, 1].min(), mapped[:, 0].max(), mapped[:, 1].max())
    try:
        box = box.clamped(w, h)
    except ValueError:
        raise MatchFailed("mapped box falls outside the frame") from None
    return MatchOutcome(box, conf, tr.inlier_count, len(pairs))


def two_stage_handoff_match(
    d1_frame: np.ndarray,
    d1_box: BoundingBox,
    d2_frame: np.ndarray,
    d2_roi_center: tuple[float, float],
    template_padding: float = 70,
    params: MatchParams = MatchParams(),
    roi: Optional[Features] = None,
) -> MatchOutcome:
    """Locate the outgoing drone's target in the incoming drone's frame.

    ``roi`` may carry precomputed region features (from :func:`roi_features`
    on the same rectangle) so several paddings can share one detection.

    Raises:
        MatchFailed: no consensus transform, or inlier ratio below
            ``params.theta_match``.
    """
    rect = roi_rect(d2_roi_center, (d1_box.width, d1_box.height), d2_frame.shape, params.roi_margin_px)
    if roi is None:
        roi = roi_features(d2_frame, rect, params)
    template, origin = template_crop(d1_frame, d1_box, template_padding)
    return match_template(template, origin, d1_box, roi, (rect[0], rect[1]), d2_frame.shape, params)
