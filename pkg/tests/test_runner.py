import json
from dataclasses import replace

import pytest

from uavhandoff.config import ChannelConfig, DroneConfig, OcclusionConfig, ScenarioConfig
from uavhandoff.protocol import InPhase, OutPhase
from uavhandoff.runner import Scenario, ScenarioFailure, run_scenario
from uavhandoff.world import EnergyModel, Role

# A miniature mission: short endurance and a near base so that several
# handoffs fit into a few simulated minutes.
ENERGY = EnergyModel(endurance_s=200.0, recharge_s=60.0)
DRONES = (DroneConfig("D1", (-30.0, 0.0), "station", ENERGY), DroneConfig("D2", (-30.0, 0.0), "base", ENERGY))
SHORT = ScenarioConfig(duration_s=600.0, drones=DRONES)


@pytest.fixture(scope="module")
def short_run():
    return run_scenario(SHORT)


def rows(result):
    return [json.loads(line) for line in result.trace]


def test_one_trace_row_per_vision_tick(short_run):
    r = rows(short_run)
    assert len(r) == 600.0 / 0.2
    assert [x["frame_idx"] for x in r] == list(range(len(r)))
    ts = [x["t"] for x in r]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert set(r[0]) == {"t", "frame_idx", "active_drone", "gt", "pred", "iou", "occluded", "drones", "events"}
    assert set(r[0]["drones"]["D1"]) == {"role", "pose", "battery", "phase"}


def test_short_mission_hands_off_repeatedly(short_run):
    s = short_run.summary
    assert s["status"] == "ok"
    assert s["handoffs_completed"] >= 2
    assert s["coverage_fraction"] >= 0.99
    assert s["safety_violations"] == 0
    assert s["frames"] == 3000


def test_segments_alternate_and_tile_the_trace(short_run):
    segs = short_run.summary["segments"]
    assert [g["drone"] for g in segs[:3]] == ["D1", "D2", "D1"]
    assert segs[0]["first_frame"] == 0 and segs[-1]["last_frame"] == 2999
    for a, b in zip(segs, segs[1:]):
        assert b["first_frame"] == a["last_frame"] + 1
    assert sum(g["report"]["accuracy_frames"] for g in segs) == short_run.summary["overall"]["accuracy_frames"]


def test_exactly_one_primary_in_every_row(short_run):
    for x in rows(short_run):
        roles = [d["role"] for d in x["drones"].values()]
        assert roles.count(Role.PRIMARY_TRACKER.value) <= 1
        if roles.count(Role.PRIMARY_TRACKER.value) == 0:
            assert Role.HANDOVER_PENDING.value in roles


def test_batteries_stay_positive_and_relief_precedes_handoff(short_run):
    r = rows(short_run)
    assert min(d["battery"] for x in r for d in x["drones"].values()) > 0.0
    events = [e for x in r for e in x["events"]]
    first_relief = events.index("D1:ReliefRequested")
    first_handoff = events.index("D2:handoff_complete")
    assert first_relief < first_handoff
    assert "D1:landed" in events[first_handoff:]


def test_trace_active_drone_matches_role(short_run):
    for x in rows(short_run)[::50]:
        if x["active_drone"]:
            assert x["drones"][x["active_drone"]]["role"] in (Role.PRIMARY_TRACKER.value, Role.HANDOVER_PENDING.value)


def test_deterministic_trace():
    cfg = replace(SHORT, duration_s=150.0)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.trace == b.trace
    assert a.protocol_log == b.protocol_log
    assert a.summary == b.summary


def test_seed_changes_the_run():
    cfg = replace(SHORT, duration_s=20.0)
    assert run_scenario(cfg).trace != run_scenario(replace(cfg, seed=8)).trace


def test_outputs_written(tmp_path):
    cfg = replace(SHORT, duration_s=20.0)
    res = run_scenario(cfg, tmp_path)
    assert (tmp_path / "trace.jsonl").read_text().splitlines() == res.trace
    assert (tmp_path / "protocol.jsonl").read_text().splitlines() == res.protocol_log
    assert json.loads((tmp_path / "summary.json").read_text()) == json.loads(json.dumps(res.summary))


def test_total_loss_fails_with_coverage_gap(tmp_path):
    cfg = replace(SHORT, channel=ChannelConfig(loss_prob=1.0))
    with pytest.raises(ScenarioFailure, match="coverage gap") as info:
        run_scenario(cfg, tmp_path)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["status"] == "failed" and "coverage gap" in s["failure"]
    assert s["handoffs_completed"] == 0
    assert s["safety_violations"] == 0
    assert info.value.result.summary == s


def test_lossy_link_still_hands_off_safely():
    cfg = replace(SHORT, duration_s=300.0, channel=ChannelConfig(100.0, 50.0, 0.2))
    s = run_scenario(cfg).summary
    assert s["handoffs_completed"] >= 1
    assert s["safety_violations"] == 0


def test_depletion_airborne_is_a_failure():
    sc = Scenario(replace(SHORT, duration_s=10.0))
    d1 = sc.drones[0]
    d1.state = replace(d1.state, battery_fraction=1e-6)
    with pytest.raises(ScenarioFailure, match="depleted"):
        sc._physics(0.01)


def test_double_primary_is_a_safety_failure():
    sc = Scenario(replace(SHORT, duration_s=10.0))
    sc.drones[1].state = replace(sc.drones[1].state, role=Role.PRIMARY_TRACKER)
    with pytest.raises(ScenarioFailure, match="2 drones hold PrimaryTracker"):
        sc._check_roles()
    assert sc.violations == 1


def test_reliever_holds_station_before_handshake():
    sc = Scenario(replace(SHORT, duration_s=200.0))
    seen = []
    original = sc.dispatch

    def spy(d, e):
        if d.machine == "in" and d.inc.phase is InPhase.MARKER_ACQUIRE and type(e).__name__ == "MarkerSeen":
            peer = sc.drones[1 - d.index]
            seen.append((d.state.position, peer.state.position))
        original(d, e)

    sc.dispatch = spy
    sc.run()
    assert seen
    for (x2, y2, z2), (x1, y1, z1) in seen:
        # two metres behind along yaw 0 and one metre above, within the lock
        assert abs((x1 - x2) - 2.0) < 0.3 and abs(y1 - y2) < 0.3 and abs((z2 - z1) - 1.0) < 0.3


def test_explicit_occlusions_reach_the_trace():
    cfg = replace(SHORT, duration_s=20.0, occlusion=OcclusionConfig(intervals=((5.0, 7.0, "glare"),)))
    r = rows(run_scenario(cfg))
    occ = [x["t"] for x in r if x["occluded"]]
    assert occ[0] == 5.0 and occ[-1] == pytest.approx(6.8)


def test_mission_ends_with_an_outgoing_machine_on_station(short_run):
    last = json.loads(short_run.trace[-1])
    phases = {d["phase"] for d in last["drones"].values()}
    assert phases & {OutPhase.TRACKING.value, OutPhase.RELIEF_REQUESTED.value, OutPhase.AWAIT_ARRIVAL.value, OutPhase.MARKER_ADVERTISE.value,
                     OutPhase.HANDSHAKING.value, OutPhase.TRANSFERRING.value, OutPhase.AWAIT_MATCH_CONFIRM.value}
