"""Matching benchmark over a synthetic handoff sequence.

Each frame puts D1 on station over the moving target and D2 at the
rendezvous behind it. D1's box is the emulated tracker's prediction, so
poor and lost frames hand over a misplaced template, as in a real handoff.
The region of interest in D2's frame is centred on D1's box centre carried
across through the sea surface. A frame counts as covered when the box
mapped into D2's frame contains the true target centre.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .geometry import (
    CameraPose,
    NoIntersection,
    OutOfView,
    PeerPoseEstimate,
    Pixel,
    RendezvousOffsets,
    backproject_pixel_to_surface,
    project_world_to_pixel,
    rendezvous_pose,
    tracking_station,
)
from .metrics import BoundingBox, MatchingReport, MatchRecord, matching_report
from .tracker_model import PRESETS, Mode, TrackerState, fit_params, step_tracker
from .vision.handoff_match import PADDINGS, MatchFailed, MatchParams, roi_features, roi_rect, two_stage_handoff_match
from .vision.render import RenderParams, render_region, render_scene
from .world import SharkState, random_schedule, step_shark, target_box, visibility

BENCH_FRAMES = 500


@dataclass(frozen=True)
class BenchConfig:
    frames: int = BENCH_FRAMES
    altitude: float = 8.0
    physics_dt: float = 0.01
    vision_every: int = 20
    preset: str = "ostrack"
    offsets: RendezvousOffsets = RendezvousOffsets(2.0, 1.0)
    # the tracker preset already carries the footage's own failures, so
    # occlusions stay as rare as in the mission scenario
    occlusion_mean_gap_s: float = 120.0
    occlusion_mean_len_s: float = 4.0
    # D1 frame and box reused as D2's view: the trivially solvable case
    identity: bool = False


@dataclass(frozen=True)
class BenchFrame:
    idx: int
    t: float
    d1_frame: np.ndarray
    d1_box: BoundingBox
    d2_frame: np.ndarray
    d2_gt: Optional[BoundingBox]
    roi_center: Optional[tuple[float, float]]
    tracker_mode: Mode = Mode.GOOD
    occluded: bool = False


@dataclass(frozen=True)
class BenchRow:
    padding: float
    report: MatchingReport

    @property
    def target_cover(self) -> float:
        return self.report.target_cover

    @property
    def longest_streak(self) -> int:
        return self.report.longest_success_streak


def padded_rect(box: BoundingBox, pad: float, pose: CameraPose) -> tuple[int, int, int, int]:
    """Integer pixel rectangle holding ``box`` grown by ``pad``, clipped to
    the image; empty when the box lies outside it."""
    try:
        c = box.expanded(pad + 1).clamped(pose.image_width, pose.image_height)
    except ValueError:
        return 0, 0, 0, 0
    return int(c.left), int(c.top), int(np.ceil(c.right)), int(np.ceil(c.bottom))


def bench_sequence(
    seed: int = 7,
    cfg: BenchConfig = BenchConfig(),
    render: RenderParams = RenderParams(),
    d1_pad: Optional[float] = None,
) -> Iterator[BenchFrame]:
    """With ``d1_pad`` only D1's box plus that padding is rendered; the rest
    of D1's frame is left black. A window render equals the same crop of
    the full render, so templates up to that padding are unaffected."""
    rng = np.random.default_rng([seed, 0xBE])
    shark = SharkState(0.0, 0.0, float(rng.uniform(-np.pi, np.pi)), 1.0)
    dt_frame = cfg.physics_dt * cfg.vision_every
    schedule = random_schedule(rng, cfg.frames * dt_frame, cfg.occlusion_mean_gap_s, cfg.occlusion_mean_len_s)
    params = fit_params(PRESETS[cfg.preset])
    tracker = None
    for k in range(cfg.frames):
        t = k * dt_frame
        if k:
            for _ in range(cfg.vision_every):
                shark = step_shark(shark, cfg.physics_dt, rng)
        vis = visibility(schedule, t)
        d1 = CameraPose(tracking_station(shark.position, 0.0, cfg.altitude))
        gt1 = target_box(d1, shark)
        if tracker is None:
            tracker = TrackerState(Mode.GOOD, gt1)
        tracker, pred, _ = step_tracker(tracker, gt1, vis, params, rng)
        if d1_pad is None or cfg.identity:
            f1 = render_scene(shark, d1, seed, t, vis, view=0, frame=k, params=render)
        else:
            f1 = render_region(shark, d1, padded_rect(pred, d1_pad, d1), seed, t=t, vis=vis, view=0, frame=k, params=render)
        if cfg.identity:
            yield BenchFrame(k, t, f1, gt1, f1, gt1, gt1.center)
            continue
        d2 = rendezvous_pose(PeerPoseEstimate(d1.position.x, d1.position.y, d1.yaw), cfg.offsets, cfg.altitude)
        f2 = render_scene(shark, d2, seed, t, vis, view=1, frame=k, params=render)
        try:
            ground = backproject_pixel_to_surface(d1, Pixel(*pred.clamped(d1.image_width, d1.image_height).center))
            center = tuple(project_world_to_pixel(d2, ground))
        except (NoIntersection, OutOfView, ValueError):
            center = None
        yield BenchFrame(k, t, f1, pred, f2, target_box(d2, shark), center, tracker.mode, vis.occluded)


def match_bench(
    seed: int = 7,
    paddings: Sequence[float] = PADDINGS,
    cfg: BenchConfig = BenchConfig(),
    match: MatchParams = MatchParams(),
    render: RenderParams = RenderParams(),
) -> list[BenchRow]:
    """One row per padding: target cover and longest covered streak."""
    if not paddings:
        raise ValueError("paddings must be non-empty")
    records: dict[float, list[MatchRecord]] = {p: [] for p in paddings}
    for f in bench_sequence(seed, cfg, render, max(paddings)):
        roi = None
        if f.roi_center is not None:
            rect = roi_rect(f.roi_center, (f.d1_box.width, f.d1_box.height), f.d2_frame.shape, match.roi_margin_px)
            roi = roi_features(f.d2_frame, rect, match)
        for p in paddings:
            box = None
            if roi is not None:
                try:
                    box = two_stage_handoff_match(f.d1_frame, f.d1_box, f.d2_frame, f.roi_center, p, match, roi).box
                except MatchFailed:
                    pass
            records[p].append(MatchRecord(f.idx, f.d2_gt, box))
    return [BenchRow(p, matching_report(records[p])) for p in paddings]
