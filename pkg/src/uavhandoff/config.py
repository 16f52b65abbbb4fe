"""Scenario configuration: one JSON document mapped onto frozen dataclasses.

Unknown keys are rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .tracker_model import PRESETS, LostBehavior, TargetStats
from .world import EnergyModel, FlightParams, SharkParams


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class ClockConfig:
    physics_dt: float = 0.01
    vision_every: int = 20


@dataclass(frozen=True)
class SharkConfig:
    start: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.5
    speed: float = 1.0
    params: SharkParams = SharkParams()


@dataclass(frozen=True)
class DroneConfig:
    id: str
    base: tuple[float, float]
    # "station": airborne over the target as primary; "base": landed
    start: str = "base"
    energy: EnergyModel = EnergyModel()
    flight: FlightParams = FlightParams()


def _default_drones() -> tuple[DroneConfig, ...]:
    return (DroneConfig("D1", (-60.0, 0.0), "station"), DroneConfig("D2", (-60.0, 0.0), "base"))


@dataclass(frozen=True)
class ChannelConfig:
    latency_ms: float = 50.0
    jitter_ms: float = 10.0
    loss_prob: float = 0.0


@dataclass(frozen=True)
class TrackerConfig:
    preset: str = "ostrack"
    # used when preset is "custom"
    custom: Optional[TargetStats] = None
    mean_lost_streak: float = 12.0
    lost_behavior: LostBehavior = LostBehavior.JUMP_TO_DISTRACTOR


@dataclass(frozen=True)
class MatchingConfig:
    paddings: tuple[float, ...] = (30.0, 50.0, 70.0)
    handoff_padding: float = 70.0
    theta_match: float = 0.3
    ratio_max: float = 0.75
    ransac_iters: int = 500
    ransac_tol_px: float = 3.0
    roi_margin_px: float = 300.0


@dataclass(frozen=True)
class ProtocolSettings:
    timeout_s: float = 1.0
    retries: int = 5
    chunk_size: int = 1024
    nav_timeout_s: float = 120.0
    state_period_s: float = 1.0
    offsets: tuple[float, float] = (2.0, 1.0)


@dataclass(frozen=True)
class OcclusionConfig:
    mean_gap_s: float = 120.0
    mean_len_s: float = 4.0
    # explicit (start, end, kind) intervals replace the random schedule
    intervals: Optional[tuple[tuple[float, float, str], ...]] = None


@dataclass(frozen=True)
class OutputConfig:
    trace: str = "trace.jsonl"
    protocol_log: str = "protocol.jsonl"
    summary: str = "summary.json"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 7
    duration_s: float = 4500.0
    altitude: float = 8.0
    clock: ClockConfig = ClockConfig()
    shark: SharkConfig = SharkConfig()
    drones: tuple[DroneConfig, ...] = field(default_factory=_default_drones)
    channel: ChannelConfig = ChannelConfig()
    tracker: TrackerConfig = TrackerConfig()
    matching: MatchingConfig = MatchingConfig()
    protocol: ProtocolSettings = ProtocolSettings()
    occlusion: OcclusionConfig = OcclusionConfig()
    outputs: OutputConfig = OutputConfig()

    def __post_init__(self):
        if self.duration_s <= 0 or self.altitude <= 0:
            raise ConfigInvalid("duration_s and altitude must be positive")
        if len(self.drones) != 2:
            raise ConfigInvalid("a scenario flies exactly two drones")
        if len({d.id for d in self.drones}) != 2:
            raise ConfigInvalid("drone ids must be unique")
        starts = sorted(d.start for d in self.drones)
        if starts != ["base", "station"]:
            raise ConfigInvalid('one drone starts at "station", the other at "base"')
        if self.tracker.preset == "custom":
            if self.tracker.custom is None:
                raise ConfigInvalid('tracker preset "custom" needs tracker.custom stats')
        elif self.tracker.preset not in PRESETS:
            raise ConfigInvalid(f"unknown tracker preset {self.tracker.preset!r}; known: {sorted(PRESETS)} or custom")
        if not self.matching.paddings:
            raise ConfigInvalid("matching.paddings must be non-empty")
        if not 0.0 <= self.channel.loss_prob <= 1.0 or self.channel.latency_ms < 0 or self.channel.jitter_ms < 0:
            raise ConfigInvalid("channel needs latency >= 0, jitter >= 0, 0 <= loss_prob <= 1")
        if self.clock.physics_dt <= 0 or self.clock.vision_every < 1:
            raise ConfigInvalid("clock needs physics_dt > 0 and vision_every >= 1")

    @property
    def target_stats(self) -> TargetStats:
        return self.tracker.custom if self.tracker.preset == "custom" else PRESETS[self.tracker.preset]


def _convert(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, where)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigInvalid(f"{where}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{where}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigInvalid(f"{where}: expected {len(args)} items")
        return tuple(_convert(a, v, f"{where}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if isinstance(tp, type) and issubclass(tp, LostBehavior):
        try:
            return LostBehavior(value)
        except ValueError:
            raise ConfigInvalid(f"{where}: unknown lost behavior {value!r}") from None
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(f"{where}: expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(f"{where}: expected an integer")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigInvalid(f"{where}: expected a string")
        return value
    raise ConfigInvalid(f"{where}: unsupported field type {tp}")


def _build(cls, data, where: str = "config"):
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigInvalid(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigInvalid:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data)


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON at line {exc.lineno} ({exc.msg})") from None
    return config_from_dict(data)


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value) if f.init}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, LostBehavior):
        return value.value
    return value


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`config_from_dict`."""
    return _plain(cfg)
