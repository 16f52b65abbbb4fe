"""Tracking and handover-matching metrics.

Boxes are half-open pixel rectangles ``[left, right) x [top, bottom)``.
Frames whose ground truth is absent cannot be scored and are dropped before
any statistic is computed; an absent prediction scores IoU 0 and counts as a
failure.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

SUCCESS_IOU = 0.5
FAILURE_IOU = 0.1
PRECISION_RADIUS_PX = 20.0


class EmptyTrace(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class _Box(NamedTuple):
    left: float
    top: float
    right: float
    bottom: float


class BoundingBox(_Box):
    __slots__ = ()

    def __new__(cls, left, top, right, bottom):
        if not (right > left and bottom > top):
            raise ValueError(f"degenerate box ({left}, {top}, {right}, {bottom})")
        return super().__new__(cls, float(left), float(top), float(right), float(bottom))

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0

    def contains(self, u: float, v: float) -> bool:
        return self.left <= u < self.right and self.top <= v < self.bottom

    def translated(self, du: float, dv: float) -> "BoundingBox":
        return BoundingBox(self.left + du, self.top + dv, self.right + du, self.bottom + dv)

    def expanded(self, pad: float) -> "BoundingBox":
        return BoundingBox(self.left - pad, self.top - pad, self.right + pad, self.bottom + pad)

    def clamped(self, width: float, height: float) -> "BoundingBox":
        return BoundingBox(max(self.left, 0.0), max(self.top, 0.0), min(self.right, width), min(self.bottom, height))

    @classmethod
    def from_center(cls, cu: float, cv: float, w: float, h: float) -> "BoundingBox":
        return cls(cu - w / 2.0, cv - h / 2.0, cu + w / 2.0, cv + h / 2.0)


def _intersection(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.right, b.right) - max(a.left, b.left)
    h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def gt_coverage(gt: BoundingBox, pred: BoundingBox) -> float:
    """Fraction of the ground-truth area covered by the prediction."""
    return _intersection(gt, pred) / gt.area


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    (au, av), (bu, bv) = a.center, b.center
    return math.hypot(au - bu, av - bv)


@dataclass(frozen=True)
class FrameRecord:
    frame_idx: int
    gt: Optional[BoundingBox]
    pred: Optional[BoundingBox]
    active_drone: str = ""


@dataclass(frozen=True)
class MatchRecord:
    frame_idx: int
    gt: Optional[BoundingBox]
    matched: Optional[BoundingBox]  # None encodes MatchFailed


@dataclass(frozen=True)
class AccuracyReport:
    frames: int
    mean_iou: float
    success_rate: float
    precision_20px: float
    gt_cover: float


@dataclass(frozen=True)
class RobustnessReport:
    frames: int
    failure_count: int
    failure_fraction: float
    longest_failure_streak: int
    avg_drift_20px: Optional[float]
    drift_valid_frames: int


@dataclass(frozen=True)
class MatchingReport:
    frames: int
    target_cover: float
    longest_success_streak: int


def _scored(trace: Iterable[FrameRecord]) -> list[FrameRecord]:
    rows = [r for r in trace if r.gt is not None]
    if not rows:
        raise EmptyTrace("trace has no frames with ground truth")
    return rows


def accuracy_report(trace: Sequence[FrameRecord]) -> AccuracyReport:
    rows = _scored(trace)
    ious, covers = [], []
    successes = precise = 0
    for r in rows:
        if r.pred is None:
            ious.append(0.0)
            covers.append(0.0)
            continue
        v = iou(r.gt, r.pred)
        ious.append(v)
        covers.append(gt_coverage(r.gt, r.pred))
        successes += v > SUCCESS_IOU
        precise += center_distance(r.gt, r.pred) <= PRECISION_RADIUS_PX
    n = len(rows)
    return AccuracyReport(
        frames=n,
        mean_iou=math.fsum(ious) / n,
        success_rate=successes / n,
        precision_20px=precise / n,
        gt_cover=math.fsum(covers) / n,
    )


def robustness_report(trace: Sequence[FrameRecord]) -> RobustnessReport:
    rows = _scored(trace)
    failures = streak = longest = 0
    drifts = []
    for r in rows:
        failed = r.pred is None or iou(r.gt, r.pred) < FAILURE_IOU
        if failed:
            failures += 1
            streak += 1
            longest = max(longest, streak)
        else:
            streak = 0
        if r.pred is not None:
            d = center_distance(r.gt, r.pred)
            if d <= PRECISION_RADIUS_PX:
                drifts.append(d)
    return RobustnessReport(
        frames=len(rows),
        failure_count=failures,
        failure_fraction=failures / len(rows),
        longest_failure_streak=longest,
        avg_drift_20px=math.fsum(drifts) / len(drifts) if drifts else None,
        drift_valid_frames=len(drifts),
    )


def matching_report(trace: Sequence[MatchRecord]) -> MatchingReport:
    rows = [r for r in trace if r.gt is not None]
    if not rows:
        raise EmptyTrace("matching trace has no frames with ground truth")
    covered = streak = longest = 0
    for r in rows:
        if r.matched is not None and r.matched.contains(*r.gt.center):
            covered += 1
            streak += 1
            longest = max(longest, streak)
        else:
            streak = 0
    return MatchingReport(frames=len(rows), target_cover=covered / len(rows), longest_success_streak=longest)


# --- JSONL trace files -----------------------------------------------------


def _box_from_json(value, line: int, key: str) -> Optional[BoundingBox]:
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != 4:
        raise ParseError(line, f"{key} must be [left, top, right, bottom] or null")
    try:
        return BoundingBox(*(float(x) for x in value))
    except (TypeError, ValueError) as exc:
        raise ParseError(line, f"{key}: {exc}") from None


def box_to_json(box: Optional[BoundingBox]):
    return None if box is None else [box.left, box.top, box.right, box.bottom]


def read_trace(path) -> tuple[list[FrameRecord], list[MatchRecord]]:
    """Parse a JSONL trace. Rows carrying a ``matched`` key also feed the
    matching trace."""
    frames: list[FrameRecord] = []
    matches: list[MatchRecord] = []
    last_idx = None
    lineno = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(row, dict) or "frame_idx" not in row or "gt" not in row:
                raise ParseError(lineno, "row needs frame_idx and gt")
            idx = row["frame_idx"]
            if not isinstance(idx, int) or isinstance(idx, bool):
                raise ParseError(lineno, "frame_idx must be an integer")
            if last_idx is not None and idx <= last_idx:
                raise ParseError(lineno, "frame_idx must be strictly increasing")
            last_idx = idx
            gt = _box_from_json(row["gt"], lineno, "gt")
            if "pred" in row:
                pred = _box_from_json(row["pred"], lineno, "pred")
                frames.append(FrameRecord(idx, gt, pred, str(row.get("active_drone", ""))))
            if "matched" in row:
                matches.append(MatchRecord(idx, gt, _box_from_json(row["matched"], lineno, "matched")))
    if not frames and not matches:
        raise ParseError(max(lineno, 1), "trace is empty")
    return frames, matches


def write_trace(path, records: Iterable[FrameRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            row = {"frame_idx": r.frame_idx, "gt": box_to_json(r.gt), "pred": box_to_json(r.pred), "active_drone": r.active_drone}
            fh.write(json.dumps(row) + "\n")


def report_dict(
    accuracy: Optional[AccuracyReport] = None,
    robustness: Optional[RobustnessReport] = None,
    matching: Optional[MatchingReport] = None,
) -> dict:
    """Flatten reports into one key-value mapping; ``frames`` is prefixed per
    report so keys stay unique."""
    out: dict = {}
    for prefix, rep in (("accuracy", accuracy), ("robustness", robustness), ("matching", matching)):
        if rep is None:
            continue
        for k, v in asdict(rep).items():
            out[f"{prefix}_frames" if k == "frames" else k] = v
    return out


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
