import json
import math
import struct
import zlib
from dataclasses import replace

import pytest

from uavhandoff.geometry import PeerPoseEstimate
from uavhandoff.metrics import BoundingBox
from uavhandoff.netlink import ChannelParams, MsgType, WireMessage
from uavhandoff.protocol import (
    AssumeRole,
    BatteryLow,
    ChunkOutOfRange,
    IllegalTransition,
    IncomingState,
    InPhase,
    MarkerSeen,
    MatchResult,
    MsgReceived,
    OutgoingState,
    OutPhase,
    PeerArrived,
    ProtocolConfig,
    RaiseFailure,
    RequestMatch,
    Send,
    SetNavTarget,
    StartTimer,
    Tick,
    Timeout,
    TrackingHandle,
    advance_incoming,
    advance_outgoing,
    decode_meta,
    encode_meta,
    role_swap_invariant_check,
    template_chunks,
)
from uavhandoff.demo import demo_world, run_loopback, run_simulated, transitions
from uavhandoff.world import Role

CFG = ProtocolConfig()
BOX = BoundingBox(300.0, 200.0, 340.0, 230.0)
TEMPLATE = bytes(range(256)) * 10  # 2560 bytes: three chunks of 1024
HANDLE = TrackingHandle(BOX, 0.9, TEMPLATE, (280, 180), (1.0, 2.0), (1.0, 2.0, 8.0, 0.0), 0.0)
MARKER = PeerPoseEstimate(1.0, 2.0, 0.0)


def sends(actions):
    return [a.msg.msg_type for a in actions if isinstance(a, Send)]


def kinds(actions):
    return [type(a) for a in actions]


def msg(mtype, payload, seq=1):
    return MsgReceived(0.0, WireMessage(mtype, seq, payload))


def out_at(phase, **kw):
    return OutgoingState(phase=phase, session=1, handle=HANDLE, retries_left=CFG.retries, deadline=1.0, **kw)


# --- scripted pair, no channel -------------------------------------------------


def pump(t=0.0):
    """Drive both machines to D2 Receiving, passing every message directly."""
    d1, a1 = advance_outgoing(OutgoingState(), BatteryLow(t, 0.3, HANDLE))
    d2, a2 = advance_incoming(IncomingState(), MsgReceived(t, a1[0].msg))
    return d1, d2, a2


def to_receiving():
    d1, d2, a2 = pump()
    d2, _ = advance_incoming(d2, PeerArrived(0.0))
    d2, acts = advance_incoming(d2, MarkerSeen(0.0, MARKER))
    d1, acts = advance_outgoing(d1, MsgReceived(0.0, acts[0].msg))  # HELLO
    assert d1.phase is OutPhase.HANDSHAKING
    d2, acts = advance_incoming(d2, MsgReceived(0.0, acts[0].msg))  # HELLO_ACK
    assert d2.phase is InPhase.RECEIVING
    d1, acts = advance_outgoing(d1, MsgReceived(0.0, acts[0].msg))  # READY
    assert d1.phase is OutPhase.TRANSFERRING
    return d1, d2, [a.msg for a in acts if isinstance(a, Send)]


# --- outgoing transitions ----------------------------------------------------------


def test_tracking_battery_low_requests_relief():
    s, acts = advance_outgoing(OutgoingState(), BatteryLow(0.0, 0.3, HANDLE))
    assert s.phase is OutPhase.RELIEF_REQUESTED
    assert sends(acts) == [MsgType.RELIEF_REQUEST]
    assert StartTimer(CFG.timeout_s) in acts
    assert s.retries_left == CFG.retries and s.deadline == CFG.timeout_s


def test_battery_above_threshold_is_illegal():
    with pytest.raises(IllegalTransition):
        advance_outgoing(OutgoingState(), BatteryLow(0.0, 0.31, HANDLE))


def test_low_match_retries_then_aborts():
    s = out_at(OutPhase.AWAIT_MATCH_CONFIRM)
    for k in range(CFG.retries):
        s, acts = advance_outgoing(s, MatchResult(0.0, 0.1))
        assert s.phase is OutPhase.AWAIT_MATCH_CONFIRM
        assert sends(acts) == [MsgType.RETRY_TEMPLATE]
        assert s.retries_left == CFG.retries - k - 1
        assert s.attempt == k + 1
    s, acts = advance_outgoing(s, MatchResult(0.0, 0.1))
    assert s.phase is OutPhase.ABORTED
    assert RaiseFailure in kinds(acts)


def test_good_match_sends_role_swap_then_swap_ack_completes():
    s = out_at(OutPhase.AWAIT_MATCH_CONFIRM)
    s, acts = advance_outgoing(s, MatchResult(0.0, 0.3))
    assert sends(acts) == [MsgType.ROLE_SWAP]
    assert AssumeRole(Role.HANDOVER_PENDING) in acts and s.swap_sent
    s, acts = advance_outgoing(s, msg(MsgType.SWAP_ACK, struct.pack("<H", 1)))
    assert s.phase is OutPhase.SWAP_COMPLETE
    assert AssumeRole(Role.RETURNING_TO_BASE) in acts
    s, acts = advance_outgoing(s, Tick(0.1))
    assert s.phase is OutPhase.RETURNING_TO_BASE and acts == []


@pytest.mark.parametrize("phase", [p for p in OutPhase if p not in (OutPhase.TRACKING, OutPhase.SWAP_COMPLETE, OutPhase.RETURNING_TO_BASE, OutPhase.ABORTED)])
def test_outgoing_timeout_with_no_retries_aborts(phase):
    s = replace(out_at(phase), retries_left=0)
    s2, acts = advance_outgoing(s, Timeout(1.0))
    assert s2.phase is OutPhase.ABORTED
    assert RaiseFailure in kinds(acts)
    assert sends(acts) == [MsgType.BYE]


@pytest.mark.parametrize("phase", [p for p in OutPhase if p not in (OutPhase.TRACKING, OutPhase.SWAP_COMPLETE, OutPhase.RETURNING_TO_BASE, OutPhase.ABORTED)])
def test_outgoing_timeout_with_retries_resends(phase):
    s2, acts = advance_outgoing(out_at(phase), Timeout(1.0))
    assert s2.phase is phase
    assert s2.retries_left == CFG.retries - 1
    assert len(sends(acts)) == 1 and StartTimer in kinds(acts)


def test_handshaking_timeout_exhausted():
    s = replace(out_at(OutPhase.HANDSHAKING), retries_left=0)
    s, acts = advance_outgoing(s, Timeout(1.0))
    assert s.phase is OutPhase.ABORTED and RaiseFailure in kinds(acts)


def test_abort_after_role_swap_never_reclaims_primary():
    s = replace(out_at(OutPhase.AWAIT_MATCH_CONFIRM), retries_left=0, swap_sent=True)
    s, acts = advance_outgoing(s, Timeout(1.0))
    assert s.phase is OutPhase.RETURNING_TO_BASE
    assert AssumeRole(Role.RETURNING_TO_BASE) in acts
    assert AssumeRole(Role.PRIMARY_TRACKER) not in acts


def test_reserve_battery_sends_d1_home():
    s, acts = advance_outgoing(out_at(OutPhase.TRANSFERRING), BatteryLow(0.0, 0.15))
    assert s.phase is OutPhase.RETURNING_TO_BASE and RaiseFailure in kinds(acts)


def test_aborted_tick_resumes_tracking():
    s = replace(out_at(OutPhase.ABORTED), deadline=None)
    s, acts = advance_outgoing(s, Tick(2.0))
    assert s.phase is OutPhase.TRACKING and acts == []
    s, acts = advance_outgoing(s, BatteryLow(2.0, 0.29))
    assert s.phase is OutPhase.RELIEF_REQUESTED and s.session == 2


def test_peer_bye_before_swap_lets_d1_keep_primary():
    s = replace(out_at(OutPhase.AWAIT_MATCH_CONFIRM), swap_sent=True)
    s, acts = advance_outgoing(s, msg(MsgType.BYE, struct.pack("<HB", 1, 2)))
    assert s.phase is OutPhase.ABORTED
    assert AssumeRole(Role.PRIMARY_TRACKER) in acts


def test_live_updates_stream_on_tick():
    s = replace(out_at(OutPhase.TRANSFERRING), last_update_t=0.0)
    s, acts = advance_outgoing(s, Tick(0.5))
    assert acts == []
    s, acts = advance_outgoing(s, Tick(1.0))
    assert sends(acts) == [MsgType.STATE_UPDATE] and s.last_update_t == 1.0


@pytest.mark.parametrize(
    "state,event",
    [
        (OutgoingState(), Timeout(1.0)),
        (OutgoingState(), PeerArrived(0.0)),
        (OutgoingState(), MarkerSeen(0.0, MARKER)),
        (out_at(OutPhase.TRANSFERRING), MatchResult(0.0, 0.9)),
        (replace(out_at(OutPhase.HANDSHAKING), deadline=None), Timeout(1.0)),
        (out_at(OutPhase.RETURNING_TO_BASE), MsgReceived(0.0, WireMessage(MsgType.HELLO, 1, b"\x01\x00"))),
        (out_at(OutPhase.ABORTED), BatteryLow(0.0, 0.1)),
        (OutgoingState(), BatteryLow(0.0, 0.2)),  # no tracking handle
    ],
)
def test_outgoing_illegal(state, event):
    with pytest.raises(IllegalTransition):
        advance_outgoing(state, event)


def test_stale_session_traffic_ignored():
    s = out_at(OutPhase.HANDSHAKING)
    s2, acts = advance_outgoing(s, msg(MsgType.TEMPLATE_ACK, struct.pack("<H", 9)))
    assert s2 == s and acts == []


# --- incoming transitions ----------------------------------------------------------


def test_relief_request_starts_navigation():
    d1, d2, acts = pump()
    assert d2.phase is InPhase.NAVIGATE_TO_PEER
    nav = [a for a in acts if isinstance(a, SetNavTarget)]
    assert len(nav) == 1
    # the rendezvous sits behind and above D1's reported pose
    p = nav[0].point
    assert (p.x, p.y, p.z) == pytest.approx((1.0 - 2.0, 2.0, 9.0))
    assert AssumeRole(Role.RELIEVER) in acts
    assert d2.shark_xy == (1.0, 2.0) and d2.peer == (1.0, 2.0, 8.0, 0.0)


def test_marker_acquire_timeout_reissues_nav():
    d1, d2, _ = pump()
    d2, _ = advance_incoming(d2, PeerArrived(0.0))
    assert d2.phase is InPhase.MARKER_ACQUIRE
    d2b, acts = advance_incoming(d2, Timeout(1.0))
    assert d2b.phase is InPhase.MARKER_ACQUIRE
    assert SetNavTarget in kinds(acts) and StartTimer(CFG.timeout_s) in acts
    assert d2b.retries_left == d2.retries_left - 1


def test_receiving_duplicate_chunk_is_a_noop():
    d1, d2, frames = to_receiving()
    chunk = next(m for m in frames if m.msg_type is MsgType.TEMPLATE_CHUNK)
    d2, _ = advance_incoming(d2, MsgReceived(0.0, chunk))
    d2b, acts = advance_incoming(d2, MsgReceived(0.1, chunk))
    assert d2b is d2 and acts == []


def test_chunks_out_of_order_before_meta_assemble():
    d1, d2, frames = to_receiving()
    meta, *chunks = frames
    assert len(chunks) == math.ceil(len(TEMPLATE) / CFG.chunk_size) == 3
    for c in reversed(chunks):
        d2, acts = advance_incoming(d2, MsgReceived(0.0, c))
        assert d2.phase is InPhase.RECEIVING
    assert d2.received_chunks == ()
    d2, acts = advance_incoming(d2, MsgReceived(0.0, meta))
    assert d2.phase is InPhase.MATCHING
    assert d2.template() == TEMPLATE
    assert sends(acts) == [MsgType.TEMPLATE_ACK]
    assert RequestMatch(0, BOX, (1.0, 2.0)) in acts


def test_bitmap_full_iff_complete():
    d1, d2, frames = to_receiving()
    meta, *chunks = frames
    d2, _ = advance_incoming(d2, MsgReceived(0.0, meta))
    for i, c in enumerate(chunks):
        assert d2.complete == all(d2.received_chunks)
        assert sum(d2.received_chunks) == i
        d2, _ = advance_incoming(d2, MsgReceived(0.0, c))
    assert d2.complete and d2.phase is InPhase.MATCHING


def test_gaps_requested_by_index():
    d1, d2, frames = to_receiving()
    meta, c0, c1, c2 = frames
    for m in (meta, c0, c2):
        d2, _ = advance_incoming(d2, MsgReceived(0.0, m))
    d2, acts = advance_incoming(d2, Timeout(5.0))
    (req,) = [a.msg for a in acts if isinstance(a, Send)]
    assert req.msg_type is MsgType.RETRY_TEMPLATE
    sess, need_meta, count = struct.unpack_from("<HBH", req.payload)
    assert (need_meta, count) == (0, 1)
    assert struct.unpack_from("<H", req.payload, 5) == (1,)
    d1, acts = advance_outgoing(d1, MsgReceived(5.0, req))
    assert [m.msg.payload[:4] for m in acts if isinstance(m, Send)] == [struct.pack("<HH", sess, 1)]


def test_chunk_out_of_range():
    d1, d2, frames = to_receiving()
    meta = frames[0]
    d2, _ = advance_incoming(d2, MsgReceived(0.0, meta))
    bad = WireMessage(MsgType.TEMPLATE_CHUNK, 99, struct.pack("<HH", d2.session, 3) + b"x")
    with pytest.raises(ChunkOutOfRange):
        advance_incoming(d2, MsgReceived(0.0, bad))


def test_chunk_out_of_range_discovered_at_meta():
    d1, d2, frames = to_receiving()
    bad = WireMessage(MsgType.TEMPLATE_CHUNK, 99, struct.pack("<HH", d2.session, 7) + b"x")
    d2, _ = advance_incoming(d2, MsgReceived(0.0, bad))
    with pytest.raises(ChunkOutOfRange):
        advance_incoming(d2, MsgReceived(0.0, frames[0]))


def test_corrupted_template_aborts():
    d1, d2, frames = to_receiving()
    meta, c0, c1, c2 = frames
    forged = WireMessage(c1.msg_type, c1.seq, c1.payload[:-1] + bytes([c1.payload[-1] ^ 1]))
    for m in (meta, c0, forged, c2):
        d2, acts = advance_incoming(d2, MsgReceived(0.0, m))
    assert d2.phase is InPhase.ABORTED and RaiseFailure in kinds(acts)


def test_meta_round_trip():
    m = decode_meta(encode_meta(4, HANDLE, 1024))
    assert (m.n_chunks, m.total_len, m.crc) == (3, len(TEMPLATE), zlib.crc32(TEMPLATE))
    assert m.box == BOX and m.shark_xy == (1.0, 2.0)
    assert b"".join(template_chunks(TEMPLATE, 1024)) == TEMPLATE


def test_role_swap_makes_d2_primary_then_bye_settles():
    d2 = IncomingState(phase=InPhase.MATCHING, session=1, retries_left=5, deadline=1.0)
    d2, acts = advance_incoming(d2, msg(MsgType.ROLE_SWAP, struct.pack("<H", 1)))
    assert d2.phase is InPhase.CONFIRMED
    assert sends(acts) == [MsgType.SWAP_ACK] and AssumeRole(Role.PRIMARY_TRACKER) in acts
    d2b, _ = advance_incoming(d2, msg(MsgType.BYE, struct.pack("<HB", 1, 0)))
    assert d2b.phase is InPhase.PRIMARY_TRACKING
    d2c, _ = advance_incoming(d2, Timeout(2.0))
    assert d2c.phase is InPhase.PRIMARY_TRACKING


@pytest.mark.parametrize(
    "state,event",
    [
        (IncomingState(), BatteryLow(0.0, 0.2)),
        (IncomingState(), Timeout(0.0)),
        (IncomingState(), PeerArrived(0.0)),
        (IncomingState(), MarkerSeen(0.0, MARKER)),
        (IncomingState(), MatchResult(0.0, 0.5)),
        (IncomingState(phase=InPhase.ABORTED), PeerArrived(0.0)),
        (IncomingState(phase=InPhase.PRIMARY_TRACKING), Timeout(0.0)),
    ],
)
def test_incoming_illegal(state, event):
    with pytest.raises(IllegalTransition):
        advance_incoming(state, event)


@pytest.mark.parametrize("phase", [InPhase.NAVIGATE_TO_PEER, InPhase.MARKER_ACQUIRE, InPhase.RECEIVING, InPhase.MATCHING])
def test_incoming_timeout_exhausted_aborts(phase):
    s = IncomingState(phase=phase, session=1, retries_left=0, deadline=1.0, peer=(0, 0, 8, 0))
    s, acts = advance_incoming(s, Timeout(1.0))
    assert s.phase is InPhase.ABORTED and RaiseFailure in kinds(acts)
    assert AssumeRole(Role.RETURNING_TO_BASE) in acts


# --- safety ------------------------------------------------------------------------


def test_invariant_check():
    P, R, H = Role.PRIMARY_TRACKER, Role.RELIEVER, Role.HANDOVER_PENDING
    assert role_swap_invariant_check([P, R]) is None
    assert role_swap_invariant_check([H, R]) is None
    assert role_swap_invariant_check([R, Role.AT_BASE]).startswith("coverage gap")
    assert role_swap_invariant_check([P, P]) == "2 drones hold PrimaryTracker"


def test_forced_double_assume_is_caught():
    d2 = IncomingState(phase=InPhase.MATCHING, session=1, retries_left=5, deadline=1.0)
    # harness bug: deliver ROLE_SWAP to D2 without D1 ever sending it
    d2, acts = advance_incoming(d2, msg(MsgType.ROLE_SWAP, struct.pack("<H", 1)))
    roles = [Role.PRIMARY_TRACKER] + [a.role for a in acts if isinstance(a, AssumeRole)]
    assert role_swap_invariant_check(roles) is not None


# --- end to end ------------------------------------------------------------------


def golden():
    """The lossless scripted handoff, one tuple per transition: drone, phase
    before, event, phase after, action summary."""
    n = math.ceil(len(demo_world(7).handle.template) / CFG.chunk_size)
    rows = [
        ("D1", "Tracking", "BatteryLow", "ReliefRequested", ["Send:RELIEF_REQUEST", "StartTimer"]),
        ("D2", "Idle", "RELIEF_REQUEST", "NavigateToPeer", ["AssumeRole:Reliever", "SetNavTarget", "Send:STATE_UPDATE", "StartTimer"]),
        ("D2", "NavigateToPeer", "PeerArrived", "MarkerAcquire", ["Send:STATE_UPDATE", "StartTimer"]),
        ("D2", "MarkerAcquire", "MarkerSeen", "Handshaking", ["Send:HELLO", "StartTimer"]),
        ("D1", "ReliefRequested", "STATE_UPDATE", "AwaitArrival", ["Send:STATE_UPDATE", "StartTimer"]),
        ("D1", "AwaitArrival", "STATE_UPDATE", "MarkerAdvertise", ["StartTimer"]),
        ("D1", "MarkerAdvertise", "HELLO", "Handshaking", ["Send:HELLO_ACK", "StartTimer"]),
        ("D2", "Handshaking", "STATE_UPDATE", "Handshaking", ["SetNavTarget"]),
        ("D2", "Handshaking", "HELLO_ACK", "Receiving", ["Send:STATE_UPDATE", "StartTimer"]),
        ("D1", "Handshaking", "STATE_UPDATE", "Transferring", ["Send:TEMPLATE_META"] + ["Send:TEMPLATE_CHUNK"] * n + ["StartTimer"]),
        ("D2", "Receiving", "TEMPLATE_META", "Receiving", ["StartTimer"]),
    ]
    rows += [("D2", "Receiving", "TEMPLATE_CHUNK", "Receiving", ["StartTimer"])] * (n - 1)
    rows += [
        ("D2", "Receiving", "TEMPLATE_CHUNK", "Matching", ["Send:TEMPLATE_ACK", "RequestMatch", "StartTimer"]),
        ("D2", "Matching", "MatchResult", "Matching", ["Send:MATCH_REPORT", "StartTimer"]),
        ("D1", "Transferring", "TEMPLATE_ACK", "AwaitMatchConfirm", ["StartTimer"]),
        ("D1", "AwaitMatchConfirm", "MATCH_REPORT", "AwaitMatchConfirm", ["Send:ROLE_SWAP", "AssumeRole:HandoverPending", "StartTimer"]),
        ("D2", "Matching", "ROLE_SWAP", "Confirmed", ["Send:SWAP_ACK", "AssumeRole:PrimaryTracker", "StartTimer"]),
        ("D1", "AwaitMatchConfirm", "SWAP_ACK", "SwapComplete", ["AssumeRole:ReturningToBase", "Send:BYE"]),
        ("D1", "SwapComplete", "Tick", "ReturningToBase", []),
        ("D2", "Confirmed", "BYE", "PrimaryTracking", []),
    ]
    return rows


def summarize(lines):
    out = []
    for d in transitions(lines):
        ev = d["event"]
        name = ev["msg"]["type"] if ev["kind"] == "MsgReceived" else ev["kind"]
        acts = []
        for a in d["actions"]:
            tag = a["kind"]
            if "msg" in a:
                tag += ":" + a["msg"]["type"]
            if "role" in a:
                tag += ":" + a["role"]
            acts.append(tag)
        out.append((d["drone"], d["phase_before"], name, d["phase_after"], acts))
    return out


def test_log_lines_are_json_with_required_fields():
    r = run_simulated()
    for line in r.log:
        d = json.loads(line)
        assert set(d) == {"t", "drone", "phase_before", "event", "phase_after", "actions"}


def test_lossless_simulated_matches_golden():
    r = run_simulated()
    assert r.completed and r.violations == 0 and r.failures == []
    assert summarize(r.log) == golden()


def test_loopback_matches_golden_per_drone():
    r = run_loopback(47613)
    assert r.completed
    g = golden()
    for drone in ("D1", "D2"):
        assert summarize(r.d1_log if drone == "D1" else r.d2_log) == [x for x in g if x[0] == drone]
    assert transitions(r.d1_log) == transitions(run_simulated().d1_log)
    assert transitions(r.d2_log) == transitions(run_simulated().d2_log)


def test_lossy_run_completes_with_retries_only():
    r = run_simulated(ChannelParams(100, 50, 0.2, seed=3))
    assert r.completed and r.double_primary_ticks == 0
    got = summarize(r.log)
    assert len(got) > len(golden())
    # no phase off the golden path is visited, order is kept, and both
    # drones end where the lossless run ends; lost status messages may let
    # a drone skip a waiting phase
    for drone in ("D1", "D2"):
        want = [a for d, _, _, a, _ in golden() if d == drone]
        seen = [a for d, b, _, a, _ in got if d == drone and b != a]
        it = iter(want)
        assert all(phase in it for phase in seen)
        assert seen[-1] == want[-1]


def test_total_loss_never_completes_and_stays_safe():
    r = run_simulated(ChannelParams(50, 0, 1.0, seed=1), time_limit_s=200)
    assert not r.completed
    assert r.double_primary_ticks == 0
    assert r.failures


def test_replay_is_pure():
    """Recording every event a drone saw and replaying it through a fresh
    machine reproduces the exact state and action sequence."""
    recorded = {advance_outgoing: [], advance_incoming: []}

    def recorder(fn):
        def wrapped(s, e, cfg):
            out = fn(s, e, cfg)
            recorded[fn].append((e, out))
            return out

        return wrapped

    import uavhandoff.demo as demo

    orig = demo._endpoints

    def endpoints(cfg, world, tx1, tx2):
        d1, d2 = orig(cfg, world, tx1, tx2)
        d1.advance, d2.advance = recorder(advance_outgoing), recorder(advance_incoming)
        return d1, d2

    demo._endpoints = endpoints
    try:
        r = demo.run_simulated(ChannelParams(100, 50, 0.2, seed=11))
    finally:
        demo._endpoints = orig
    assert r.completed
    for fn, start in ((advance_outgoing, OutgoingState()), (advance_incoming, IncomingState())):
        s = start
        for e, (s_want, a_want) in recorded[fn]:
            if fn is advance_incoming and s.phase is InPhase.ABORTED:
                s = IncomingState(seq=s.seq)  # the harness resets an aborted reliever
            s, acts = fn(s, e, CFG)
            assert s == s_want and acts == a_want


def test_template_integrity_under_loss():
    want = demo_world(7).handle.template
    for seed in range(20):
        r = run_simulated(ChannelParams(100, 50, 0.2, seed=seed))
        assert r.completed
    # the machine only reaches Matching after the checksum over the whole
    # assembled template passes, so completion implies bit-identical bytes
    d1, d2, frames = to_receiving()
    for m in frames:
        d2, _ = advance_incoming(d2, MsgReceived(0.0, m))
    assert d2.template() == TEMPLATE and want


def test_liveness_small_sample():
    ok = sum(run_simulated(ChannelParams(100, 50, 0.2, seed=s)).completed for s in range(60))
    assert ok >= 59
