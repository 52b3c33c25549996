"""Command-line entry point.

Exit codes: 0 success, 1 validation failures (or a session that cannot be
synchronized), 2 usage error, 3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .diagnostics import histogram_csv, session_report
from .errors import (
    ClockMismatch,
    InvalidConfig,
    IoFailure,
    MalformedLine,
    MarsError,
    MissingFile,
    NonMonotonicTimestamp,
)
from .formats import export_slam_layout, is_synced_layout, read_session, read_synced, write_synced
from .model import validate_session
from .simulator import SimConfig, config_from_pairs, load_config, simulate_session, write_simulation
from .sync import synchronize_session

log = logging.getLogger("marskit")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class SyncFailure(MarsError):
    """A readable session that cannot be aligned as asked."""


def _synchronize(session, target_clock):
    # reader-side ClockMismatch means a corrupt file (exit 3); here it is content
    try:
        return synchronize_session(session, target_clock)
    except ClockMismatch as exc:
        raise SyncFailure(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--quiet", action="store_true", default=default(False), help="no informational output")
    parser.add_argument("--seed", type=int, default=default(None), help="override the simulator seed")
    parser.add_argument("--format", choices=("json", "text"), default=default("text"), help="result format on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marskit", description="Parse, validate, synchronize, simulate and export visual-inertial sensor logs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="{simulate,validate,stats,sync,export}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic session and its ground truth")
    p.add_argument("--config", type=Path, help="key = value file of SimConfig fields")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable)")

    p = sub.add_parser("validate", parents=[common], help="report invariant violations")
    p.add_argument("session", type=Path)

    p = sub.add_parser("stats", parents=[common], help="sampling-interval diagnostics")
    p.add_argument("session", type=Path)
    p.add_argument("--hist", type=Path, help="histogram CSV path; one file per stream, named <stem>_<stream><suffix>")
    p.add_argument("--plot", type=Path, metavar="DIR", help="render interval figures into DIR")
    p.add_argument("--gap-multiplier", type=float, default=1.5)

    p = sub.add_parser("sync", parents=[common], help="align frames to the IMU clock")
    p.add_argument("session", type=Path)
    p.add_argument("--target-clock", required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("export", parents=[common], help="write imu0/ and cam0/ SLAM layout")
    p.add_argument("session", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--target-clock", help="clock to sync to when the input is not yet synced")
    return parser


def _emit(args, payload: dict, text: str):
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _require_dir(path: Path):
    if not path.is_dir():
        raise MissingFile(path)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else SimConfig()
    pairs = {}
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    if pairs:
        cfg = config_from_pairs(pairs, cfg)
    session, truth = simulate_session(cfg)
    write_simulation(session, truth, args.out)
    log.info("wrote %d frames, %s to %s", len(session.frames),
             f"{len(session.imu_combined)} IMU samples" if session.imu_combined is not None
             else f"{len(session.gyro_raw)} gyro / {len(session.accel_raw)} accel samples", args.out)
    _emit(args, {"out": str(args.out), "ground_truth": truth.to_dict()}, str(args.out))
    return EXIT_OK


def cmd_validate(args) -> int:
    _require_dir(args.session)
    violations = validate_session(read_session(args.session, strict=False))
    _emit(
        args,
        {"valid": not violations, "violations": [vars(v) for v in violations]},
        "\n".join(map(str, violations)) if violations else "ok",
    )
    return EXIT_INVALID if violations else EXIT_OK


def _text_report(report) -> str:
    lines = [f"device {report.device} ({report.os_family})"]
    for name, rep in report.streams.items():
        if rep is None:
            lines.append(f"{name:>7}: absent")
            continue
        s = rep.stats
        lines.append(
            f"{name:>7}: n={s.count + 1} rate={s.achieved_rate_hz:.3f} Hz mean={s.mean_ns / 1e6:.3f} ms "
            f"std={s.std_ns / 1e6:.3f} ms min={s.min_ns / 1e6:.3f} max={s.max_ns / 1e6:.3f} "
            f"p99={s.p99_ns / 1e6:.3f} ms gaps={len(rep.gaps.gaps)}"
        )
    m = report.metadata
    if m["frame_count"]:
        lines.append(f" optics: {m['measured_fraction']:.1%} measured, {m['empirical_fraction']:.1%} empirical")
    return "\n".join(lines)


def cmd_stats(args) -> int:
    _require_dir(args.session)
    report = session_report(read_session(args.session), args.gap_multiplier)
    if args.hist is not None:
        for name, rep in report.streams.items():
            if rep is None:
                continue
            path = args.hist.with_name(f"{args.hist.stem}_{name}{args.hist.suffix or '.csv'}")
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(histogram_csv(rep.histogram), encoding="utf-8", newline="\n")
            except OSError as exc:
                raise IoFailure(f"cannot write {path}: {exc}") from exc
            log.info("histogram %s -> %s", name, path)
    if args.plot is not None:
        from .plotting import render_report_figures

        try:
            for path in render_report_figures(report, args.plot):
                log.info("figure -> %s", path)
        except OSError as exc:
            raise IoFailure(f"cannot write figures to {args.plot}: {exc}") from exc
    _emit(args, report.to_dict(), _text_report(report))
    return EXIT_OK


def cmd_sync(args) -> int:
    _require_dir(args.session)
    synced = _synchronize(read_session(args.session), args.target_clock)
    write_synced(synced, args.out)
    log.info("synced %d frames, %d IMU samples onto %s (scale %r, offset %d ns)", len(synced.frames),
             len(synced.imu_combined), synced.clock_map.target, synced.clock_map.scale, synced.clock_map.offset_ns)
    _emit(args, {"out": str(args.out), "clock_map": synced.clock_map.to_dict(),
                 "dropped_gyro": synced.dropped.total}, str(args.out))
    return EXIT_OK


def cmd_export(args) -> int:
    _require_dir(args.session)
    if is_synced_layout(args.session):
        synced = read_synced(args.session)
    else:
        synced = _synchronize(read_session(args.session), args.target_clock)
    export_slam_layout(synced, args.out)
    log.info("exported %d frames, %d IMU rows to %s", len(synced.frames), len(synced.imu_combined), args.out)
    _emit(args, {"out": str(args.out), "frames": len(synced.frames), "imu": len(synced.imu_combined)}, str(args.out))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "stats": cmd_stats,
    "sync": cmd_sync,
    "export": cmd_export,
}


def _exit_code(exc: MarsError) -> int:
    if isinstance(exc, (MalformedLine, MissingFile, IoFailure, NonMonotonicTimestamp)):
        return EXIT_IO
    if isinstance(exc, ClockMismatch):
        return EXIT_IO
    if isinstance(exc, InvalidConfig):
        return EXIT_USAGE
    return EXIT_INVALID


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"marskit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MarsError as exc:
        print(f"marskit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"marskit: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(run())
