"""Stochastic stand-in for a deep single-object tracker.

A three-state Markov chain (Good, Poor, Lost) picks the quality regime of
each frame; the regime decides how far the emitted box lands from ground
truth. Parameters are fitted so the chain's long-run regime fractions equal
a tracker's measured success and failure rates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metrics import BoundingBox, iou


class Mode(enum.IntEnum):
    GOOD = 0
    POOR = 1
    LOST = 2


class LostBehavior(enum.Enum):
    FREEZE_LAST_BOX = "freeze"
    JUMP_TO_DISTRACTOR = "distractor"


class InfeasibleStats(ValueError):
    pass


class NonConvergent(RuntimeError):
    pass


@dataclass(frozen=True)
class TargetStats:
    success_rate: float
    failure_rate: float
    mean_drift_px: float

    def __post_init__(self):
        if not (0.0 <= self.success_rate <= 1.0 and 0.0 <= self.failure_rate <= 1.0):
            raise InfeasibleStats("rates must be fractions")
        if self.success_rate + self.failure_rate > 1.0 + 1e-12:
            raise InfeasibleStats("success_rate + failure_rate exceeds 1")
        if self.mean_drift_px < 0:
            raise InfeasibleStats("mean_drift_px must be non-negative")


# Accuracy/robustness rows measured on 5200 annotated frames.
PRESETS = {
    "ostrack": TargetStats(0.748, 467 / 5200, 5.6),
    "mixformer": TargetStats(0.819, 512 / 5200, 6.2),
}


@dataclass(frozen=True)
class TrackerParams:
    transition: np.ndarray
    drift_sigma_px: float
    poor_iou_range: tuple[float, float] = (0.1, 0.5)
    lost_behavior: LostBehavior = LostBehavior.JUMP_TO_DISTRACTOR
    occlusion_force: float = 0.9
    # Decoy position relative to the target, in units of target width/height.
    decoy_offset: tuple[float, float] = (2.5, 1.5)

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=np.float64)
        if p.shape != (3, 3) or np.any(p < 0):
            raise ValueError("transition must be a non-negative 3x3 matrix")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must sum to 1")
        if not self.drift_sigma_px >= 0:
            raise ValueError("drift_sigma_px must be non-negative")
        object.__setattr__(self, "transition", p)


@dataclass
class TrackerState:
    mode: Mode
    last_box: BoundingBox
    confidence: float = 1.0


def fit_params(
    stats: TargetStats,
    mean_lost_streak: float = 12.0,
    mixing: float = 1.0,
    lost_behavior: LostBehavior = LostBehavior.JUMP_TO_DISTRACTOR,
) -> TrackerParams:
    """Build a chain whose stationary vector is (success, middle, failure).

    Lost persists for ``mean_lost_streak`` frames on average and exits into
    Good/Poor in proportion to their targets. Outside Lost, each frame enters
    Lost with the probability that balances that outflow; ``mixing`` in
    [0, 1] controls how quickly Good and Poor trade places (1 makes them
    conditionally independent frame to frame).
    """
    if mean_lost_streak < 1.0:
        raise InfeasibleStats("mean_lost_streak must be at least one frame")
    if not 0.0 < mixing <= 1.0:
        raise ValueError("mixing must be in (0, 1]")
    pi = np.array([stats.success_rate, 1.0 - stats.success_rate - stats.failure_rate, stats.failure_rate])
    pi[1] = max(pi[1], 0.0)
    s = pi[0] + pi[1]
    p = np.zeros((3, 3))
    if s <= 0.0:
        p[:, Mode.LOST] = 1.0
    else:
        exit_lost = 1.0 / mean_lost_streak
        enter_lost = pi[2] * exit_lost / s
        if enter_lost > 1.0:
            raise InfeasibleStats("failure rate too high for the requested streak length")
        for i in (Mode.GOOD, Mode.POOR):
            for j in (Mode.GOOD, Mode.POOR):
                p[i, j] = (1.0 - enter_lost) * ((1.0 - mixing) * (i == j) + mixing * pi[j] / s)
            p[i, Mode.LOST] = enter_lost
        p[Mode.LOST, Mode.LOST] = 1.0 - exit_lost
        p[Mode.LOST, Mode.GOOD] = exit_lost * pi[0] / s
        p[Mode.LOST, Mode.POOR] = exit_lost * pi[1] / s
    # rounding can leave rows a few ulps off
    p /= p.sum(axis=1, keepdims=True)
    sigma = stats.mean_drift_px * math.sqrt(math.pi / 2.0)
    return TrackerParams(p, drift_sigma_px=sigma, lost_behavior=lost_behavior)


def stationary_distribution(
    params: TrackerParams | np.ndarray,
    initial: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Left eigenvector for eigenvalue 1 by power iteration.

    For a reducible chain (e.g. the identity) the result depends on the
    starting vector, which is uniform unless ``initial`` is given; use
    :func:`is_irreducible` to detect that case. Periodic chains never settle
    and raise NonConvergent.
    """
    p = params.transition if isinstance(params, TrackerParams) else np.asarray(params, dtype=np.float64)
    v = np.full(p.shape[0], 1.0 / p.shape[0]) if initial is None else np.asarray(initial, dtype=np.float64)
    v = v / v.sum()
    done = 0
    while done < max_iter:
        # convergence is checked once per block of steps
        for _ in range(min(15, max_iter - done - 1)):
            v = v @ p
        nxt = v @ p
        done += min(16, max_iter - done)
        if np.abs(nxt - v).sum() < tol:
            return nxt / nxt.sum()
        v = nxt
    raise NonConvergent(f"power iteration did not converge in {max_iter} steps")


def is_irreducible(p: np.ndarray) -> bool:
    reach = (np.asarray(p) > 0).astype(np.int64) + np.eye(len(p), dtype=np.int64)
    for _ in range(len(p)):
        reach = np.minimum(reach @ reach, 1)
    return bool(reach.all())


def _poor_box(gt: BoundingBox, rng: np.random.Generator, lo: float, hi: float) -> BoundingBox:
    """Box whose IoU with ``gt`` lies in [lo, hi): a scaled copy pushed along
    a random direction to a uniformly drawn target IoU."""
    cu, cv = gt.center
    while True:
        target = rng.uniform(lo, hi)
        scale = rng.uniform(0.85, 1.2)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        w, h = gt.width * scale, gt.height * scale
        du, dv = math.cos(theta), math.sin(theta)
        near, far = 0.0, 2.0 * (gt.width + gt.height)
        # IoU is non-increasing along the ray, so bisect for the target.
        for _ in range(50):
            mid = 0.5 * (near + far)
            if iou(gt, BoundingBox.from_center(cu + mid * du, cv + mid * dv, w, h)) > target:
                near = mid
            else:
                far = mid
        box = BoundingBox.from_center(cu + far * du, cv + far * dv, w, h)
        if lo <= iou(gt, box) < hi:
            return box


def _good_box(gt: BoundingBox, sigma: float, rng: np.random.Generator) -> BoundingBox:
    for _ in range(32):
        r = abs(rng.normal(0.0, sigma))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        box = gt.translated(r * math.cos(theta), r * math.sin(theta))
        if iou(gt, box) > 0.5:
            return box
    return gt


def next_mode(state: TrackerState, params: TrackerParams, occluded: bool, rng: np.random.Generator) -> Mode:
    force = rng.random()
    row = params.transition[state.mode]
    u = rng.random()
    if occluded and force < params.occlusion_force:
        return Mode.LOST
    if u < row[0]:
        return Mode.GOOD
    if u < row[0] + row[1]:
        return Mode.POOR
    return Mode.LOST


def step_tracker(
    state: TrackerState,
    gt: Optional[BoundingBox],
    vis,
    params: TrackerParams,
    rng: np.random.Generator,
) -> tuple[TrackerState, BoundingBox, float]:
    """Advance one vision frame.

    ``vis`` is anything with a boolean ``occluded`` attribute. A missing
    ``gt`` (target outside the frame) forces Lost with a frozen box.
    """
    occluded = bool(getattr(vis, "occluded", False))
    if gt is None:
        conf = float(rng.uniform(0.0, 0.3))
        return TrackerState(Mode.LOST, state.last_box, conf), state.last_box, conf
    mode = next_mode(state, params, occluded, rng)
    if mode is Mode.GOOD:
        box = _good_box(gt, params.drift_sigma_px, rng)
        conf = float(rng.uniform(0.6, 0.95))
    elif mode is Mode.POOR:
        box = _poor_box(gt, rng, *params.poor_iou_range)
        conf = float(rng.uniform(0.2, 0.45))
    else:
        if params.lost_behavior is LostBehavior.FREEZE_LAST_BOX:
            box = state.last_box
        else:
            ou, ov = params.decoy_offset
            box = gt.translated(ou * gt.width, ov * gt.height)
        conf = float(rng.uniform(0.0, 0.3))
    return TrackerState(mode, box, conf), box, conf


@dataclass
class TrackerRun:
    """Convenience loop: frame-by-frame emulation over a ground-truth track."""

    params: TrackerParams
    seed: int = 0
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def run(self, gts, visibility=None):
        gts = list(gts)
        state = TrackerState(Mode.GOOD, gts[0])
        out = []
        for i, gt in enumerate(gts):
            vis = visibility[i] if visibility is not None else None
            state, box, conf = step_tracker(state, gt, vis, self.params, self.rng)
            out.append((state.mode, box, conf))
        return out
