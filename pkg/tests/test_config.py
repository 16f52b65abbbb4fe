import json

import pytest

from uavhandoff.config import (
    ConfigInvalid,
    DroneConfig,
    ScenarioConfig,
    TrackerConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from uavhandoff.tracker_model import LostBehavior, TargetStats


def test_defaults_round_trip():
    cfg = ScenarioConfig()
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_round_trip_through_json(tmp_path):
    cfg = config_from_dict({"seed": 3, "channel": {"loss_prob": 0.2}, "tracker": {"preset": "mixformer", "lost_behavior": "freeze"}})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(config_to_dict(cfg)))
    back = load_config(p)
    assert back == cfg
    assert back.seed == 3 and back.channel.loss_prob == 0.2
    assert back.tracker.lost_behavior is LostBehavior.FREEZE_LAST_BOX


def test_partial_document_keeps_defaults():
    cfg = config_from_dict({"duration_s": 100})
    assert cfg.duration_s == 100.0
    assert cfg.matching == ScenarioConfig().matching


def test_nested_drone_list():
    cfg = config_from_dict(
        {
            "drones": [
                {"id": "A", "base": [0, 0], "start": "station", "energy": {"endurance_s": 300}},
                {"id": "B", "base": [5, 5]},
            ]
        }
    )
    assert [d.id for d in cfg.drones] == ["A", "B"]
    assert cfg.drones[0].energy.endurance_s == 300.0
    assert cfg.drones[1].base == (5.0, 5.0)


def test_custom_preset_needs_stats():
    with pytest.raises(ConfigInvalid, match="custom"):
        config_from_dict({"tracker": {"preset": "custom"}})
    cfg = config_from_dict({"tracker": {"preset": "custom", "custom": {"success_rate": 0.7, "failure_rate": 0.1, "mean_drift_px": 4.0}}})
    assert cfg.target_stats == TargetStats(0.7, 0.1, 4.0)


@pytest.mark.parametrize(
    "doc, needle",
    [
        ({"sede": 7}, "unknown key"),
        ({"channel": {"loss": 0.1}}, "unknown key"),
        ({"seed": "7"}, "integer"),
        ({"seed": True}, "integer"),
        ({"duration_s": "long"}, "number"),
        ({"duration_s": -1}, "positive"),
        ({"tracker": {"preset": "siamrpn"}}, "unknown tracker preset"),
        ({"tracker": {"lost_behavior": "explode"}}, "lost behavior"),
        ({"matching": {"paddings": []}}, "paddings"),
        ({"channel": {"loss_prob": 1.5}}, "loss_prob"),
        ({"clock": {"vision_every": 0}}, "vision_every"),
        ({"drones": [{"id": "A", "base": [0, 0], "start": "station"}]}, "exactly two"),
        ({"drones": [{"id": "A", "base": [0, 0], "start": "station"}, {"id": "A", "base": [0, 0]}]}, "unique"),
        ({"drones": [{"id": "A", "base": [0, 0]}, {"id": "B", "base": [0, 0]}]}, "station"),
        ({"drones": [{"id": "A", "base": [0], "start": "station"}, {"id": "B", "base": [0, 0]}]}, "2 items"),
        ({"drones": [{"id": "A", "base": [0, 0], "start": "station", "energy": {"handoff_reserve": 0.5}}, {"id": "B", "base": [0, 0]}]}, "reserve"),
        ([], "object"),
    ],
)
def test_invalid_documents(doc, needle):
    with pytest.raises(ConfigInvalid, match=needle):
        config_from_dict(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigInvalid, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"seed\": ,\n}")
    with pytest.raises(ConfigInvalid, match="line 2"):
        load_config(bad)


def test_direct_construction_is_validated():
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(tracker=TrackerConfig(preset="nope"))
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(drones=(DroneConfig("A", (0.0, 0.0), "station"),))
