"""Command line: simulate, metrics, match-bench, handoff-demo.

Exit codes: 0 success, 2 scenario failure, 1 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bench import BENCH_FRAMES, BenchConfig, bench_sequence, match_bench
from .config import ConfigInvalid, ScenarioConfig, load_config
from .demo import run_loopback, run_simulated, transitions, write_log
from .metrics import (
    BoundingBox,
    EmptyTrace,
    MatchRecord,
    ParseError,
    accuracy_report,
    box_to_json,
    matching_report,
    read_trace,
    report_dict,
    robustness_report,
    write_report,
)
from .netlink import ChannelParams
from .protocol import ProtocolConfig
from .runner import ScenarioFailure, run_scenario
from .vision.handoff_match import MatchFailed, MatchParams, roi_features, roi_rect, two_stage_handoff_match
from .vision.image import PGMError, read_pgm

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scenario_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _scenario_config(args)
    try:
        result = run_scenario(cfg, args.out)
    except ScenarioFailure as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    s = result.summary
    print(f"handoffs {s['handoffs_completed']}  coverage {s['coverage_fraction']:.4f}  frames {s['frames']}  -> {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    frames, matches = read_trace(args.trace)
    try:
        acc = accuracy_report(frames) if frames else None
        rob = robustness_report(frames) if frames else None
    except EmptyTrace:
        acc = rob = None
    try:
        mat = matching_report(matches) if matches else None
    except EmptyTrace:
        mat = None
    report = report_dict(acc, rob, mat)
    out = Path(args.out) if args.out else Path(args.trace).with_suffix(".report.json")
    write_report(out, report)
    for k in sorted(report):
        print(f"{k:24s} {report[k]}")
    return EXIT_OK


def _match_pair(args) -> int:
    d1, d2 = (read_pgm(p) for p in args.pair)
    box = BoundingBox(*args.box)
    center = tuple(args.center) if args.center else box.center
    rows = []
    for p in args.paddings:
        try:
            out = two_stage_handoff_match(d1, box, d2, center, p, MatchParams(seed=args.seed))
            rows.append({"padding": p, "box": box_to_json(out.box), "confidence": out.confidence, "inliers": out.inliers})
        except MatchFailed as exc:
            rows.append({"padding": p, "box": None, "error": str(exc)})
    for r in rows:
        print(json.dumps(r))
    if args.out:
        write_report(args.out, {"pairs": rows})
    return EXIT_OK


def cmd_match_bench(args) -> int:
    if not args.paddings:
        print("match-bench: at least one padding is required", file=sys.stderr)
        return EXIT_USAGE
    if args.pair:
        return _match_pair(args)
    cfg = BenchConfig(frames=args.frames)
    rows = match_bench(args.seed, args.paddings, cfg)
    print(f"{'padding':>8} {'target cover':>13} {'longest streak':>15}")
    for r in rows:
        print(f"{r.padding:>8g} {r.target_cover:>13.4f} {r.longest_streak:>15d}")
    table = [{"padding": r.padding, "target_cover": r.target_cover, "longest_success_streak": r.longest_streak, "frames": r.report.frames} for r in rows]
    if args.out:
        write_report(args.out, {"seed": args.seed, "frames": args.frames, "rows": table})
    if args.trace:
        _write_match_trace(args, cfg)
    return EXIT_OK


def _write_match_trace(args, cfg: BenchConfig) -> None:
    """JSONL rows with gt and matched columns at the largest padding, for
    ``metrics`` to read back."""
    pad = max(args.paddings)
    params = MatchParams()
    with open(args.trace, "w", encoding="utf-8") as fh:
        for f in bench_sequence(args.seed, cfg, d1_pad=pad):
            box = None
            if f.roi_center is not None:
                rect = roi_rect(f.roi_center, (f.d1_box.width, f.d1_box.height), f.d2_frame.shape, params.roi_margin_px)
                try:
                    roi = roi_features(f.d2_frame, rect, params)
                    box = two_stage_handoff_match(f.d1_frame, f.d1_box, f.d2_frame, f.roi_center, pad, params, roi).box
                except MatchFailed:
                    pass
            rec = MatchRecord(f.idx, f.d2_gt, box)
            fh.write(json.dumps({"frame_idx": rec.frame_idx, "gt": box_to_json(rec.gt), "matched": box_to_json(rec.matched)}) + "\n")


def cmd_handoff_demo(args) -> int:
    cfg = ProtocolConfig()
    if args.mode == "loopback":
        result = run_loopback(args.port, cfg, args.seed)
    else:
        result = run_simulated(ChannelParams(args.latency_ms, args.jitter_ms, args.loss, args.seed), cfg, args.seed)
    if args.out:
        write_log(args.out, result.log)
    for row in transitions(result.log):
        if row["phase_before"] != row["phase_after"]:
            print(f"{row['drone']}: {row['phase_before']} -> {row['phase_after']} ({row['event']['kind']})")
    print("handoff complete" if result.completed else "handoff did not complete")
    return EXIT_OK if result.completed else EXIT_SCENARIO


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavhandoff", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run the two-drone mission scenario")
    s.add_argument("--config", help="scenario JSON (defaults built in)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("metrics", help="accuracy, robustness and matching reports for a JSONL trace")
    m.add_argument("trace")
    m.add_argument("--out", help="report path (default: <trace>.report.json)")
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("match-bench", help="target cover per template padding")
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--paddings", type=float, nargs="*", default=[30.0, 50.0, 70.0])
    b.add_argument("--frames", type=int, default=BENCH_FRAMES)
    b.add_argument("--out", help="write the table as JSON")
    b.add_argument("--trace", help="write per-frame gt/matched rows (largest padding) as JSONL")
    b.add_argument("--pair", nargs=2, metavar=("D1_PGM", "D2_PGM"), help="match one image pair instead of the synthetic sequence")
    b.add_argument("--box", type=float, nargs=4, metavar=("L", "T", "R", "B"), help="target box in the D1 image (with --pair)")
    b.add_argument("--center", type=float, nargs=2, metavar=("U", "V"), help="ROI centre in the D2 image (with --pair)")
    b.set_defaults(func=cmd_match_bench)

    h = sub.add_parser("handoff-demo", help="one scripted handoff over the simulated or loopback link")
    h.add_argument("--mode", choices=("simulated", "loopback"), default="simulated")
    h.add_argument("--seed", type=int, default=7)
    h.add_argument("--port", type=int, default=47600)
    h.add_argument("--loss", type=float, default=0.0)
    h.add_argument("--latency-ms", type=float, default=50.0)
    h.add_argument("--jitter-ms", type=float, default=0.0)
    h.add_argument("--out", help="write the protocol log as JSONL")
    h.set_defaults(func=cmd_handoff_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "match-bench" and args.pair and args.box is None:
        parser.error("--pair needs --box")
    try:
        return args.func(args)
    except (ConfigInvalid, ParseError, PGMError, ValueError, OSError) as exc:
        # SocketUnavailable is an OSError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
