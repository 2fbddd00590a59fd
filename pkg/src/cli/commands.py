"""
Command-line entry point: ``zfcount <command> [--config FILE] [--set key=value ...]``.

Exit status is 0 on success, 1 when a stage fails (diagnostic on stderr) and 2 on
usage errors.
"""
import argparse
import sys
from typing import Optional, Sequence

from src.config.pipeline_config import load_config
from src.exception import ConfigError, CustomException
from src.logger import logging
from src.services import pipeline_service


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key-value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zfcount", description="Event-camera zebrafish counting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a scene to EVS1 plus ground truth")
    _common(p)
    p.add_argument("--events-out", required=True)
    p.add_argument("--gt-out")
    p.add_argument("--dark-out", help="also write a fish-free dark capture of the scene")

    p = sub.add_parser("frames", help="render mode and mixed frames for every window")
    _common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("preprocess", help="suppress hot pixels and undistort a stream")
    _common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dark", help="dark capture (EVS1); overrides preprocess.dark_events")
    p.add_argument("--model-out", help="save the hot-pixel model (.npz)")

    p = sub.add_parser("detect", help="detect fish in every window")
    _common(p)
    p.add_argument("--events")
    p.add_argument("--out", required=True)

    p = sub.add_parser("track", help="track a detection CSV")
    _common(p)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--first-frame", type=int)
    p.add_argument("--last-frame", type=int)

    p = sub.add_parser("count", help="windowed counts of a track CSV")
    _common(p)
    p.add_argument("--tracks", required=True)
    p.add_argument("--true", dest="true_count", type=int, help="known number of fish")
    p.add_argument("--first-frame", type=int, default=0,
                   help="frame the first window starts at; frames without rows count 0 (default 0)")
    p.add_argument("--last-frame", type=int, help="last frame counted (default: the last row)")

    p = sub.add_parser("eval", help="CLEAR-MOT evaluation of track files")
    _common(p)
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--hyp", action="append", required=True)

    p = sub.add_parser("pipeline", help="run every stage and write a summary report")
    _common(p)
    p.add_argument("--events", help="EVS1 input; the configured scene is simulated when omitted")
    p.add_argument("--gt", help="ground-truth track file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--frames-out", help="also export every window's frames here")
    return parser


def _kv(pairs) -> str:
    return "".join(f"{k}: {v}\n" for k, v in pairs)


def run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> str:
    config = load_config(args.config, args.overrides)
    service = pipeline_service
    if args.command == "simulate":
        result = service.simulate_scene(config, args.events_out, args.gt_out, args.dark_out)
        return _kv([("frames", result.n_frames), ("events", len(result.events)),
                    ("noise_events", int(result.is_noise.sum())), ("ground_truth_rows", len(result.ground_truth))])
    if args.command == "frames":
        return _kv([("windows", service.render_frames(config, args.events, args.out))])
    if args.command == "preprocess":
        return _kv(service.preprocess_stream(config, args.events, args.out, args.dark, args.model_out).items())
    if args.command == "detect":
        if config.detection.detector == "blob" and not args.events:
            parser.error("detect needs --events with the blob detector")
        return _kv([("detections", len(service.detect_stream(config, args.events, args.out)))])
    if args.command == "track":
        snapshots = service.track_file(config, args.detections, args.out, args.first_frame, args.last_frame)
        return _kv([("frames", len(snapshots)), ("rows", sum(len(s.rows()) for s in snapshots))])
    if args.command == "count":
        reports, accuracy = service.count_file(config, args.tracks, args.true_count,
                                               args.first_frame, args.last_frame)
        return service.format_counts(reports, accuracy)
    if args.command == "eval":
        if len(args.gt) != len(args.hyp):
            parser.error("eval needs one --hyp per --gt")
        return service.evaluate_files(config, list(zip(args.gt, args.hyp)))
    if args.command == "pipeline":
        return service.run_pipeline(config, args.out, args.events, args.gt, args.frames_out).summary()
    parser.error(f"unknown command {args.command}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        sys.stdout.write(run(args, parser))
        return 0
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        sys.stderr.write(f"zfcount: config error: {e}\n")
        return 1
    except CustomException as e:
        sys.stderr.write(f"zfcount {args.command}: {e.cause if e.cause is not None else e}\n")
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
