"""Command-line front end.

Subcommands:
  run          build the configured scenario, run it, write trace CSVs
  validate     parse a config file and report problems
  dump-config  print the effective configuration after overrides
  report       render figures from a previously written trace

Exit codes: 0 success, 1 runtime failure, 2 configuration problem,
3 I/O problem. Flags always win over config-file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .engine import EngineError, emit_trace, run
from .scenarios import (
    ConfigError,
    ScenarioConfig,
    build_world,
    dump_frame,
    load_scenario_config,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltsdem",
        description="Rigid-body DEM with per-cluster local time stepping.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write its trace")
    _add_config_arg(run_p)
    _add_override_args(run_p)
    run_p.add_argument(
        "--trace-dir",
        default="trace",
        help="directory for sweep.csv, cluster_updates.csv, and frames (default: trace)",
    )
    run_p.add_argument(
        "--frames-every",
        type=int,
        default=0,
        metavar="N",
        help="dump an OBJ frame every N sweeps (0 disables, default)",
    )
    run_p.add_argument(
        "--verbose", action="store_true", help="print one progress line per sweep"
    )

    val_p = sub.add_parser("validate", help="check a config file")
    _add_config_arg(val_p)

    dump_p = sub.add_parser(
        "dump-config", help="print the effective configuration as key = value lines"
    )
    _add_config_arg(dump_p)
    _add_override_args(dump_p)

    rep_p = sub.add_parser("report", help="render figures from trace CSVs")
    rep_p.add_argument(
        "--trace-dir",
        default="trace",
        help="directory holding sweep.csv and cluster_updates.csv (default: trace)",
    )
    rep_p.add_argument(
        "--out-dir",
        default=None,
        help="where to write figures (default: the trace directory)",
    )
    return parser


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="flat key = value config file")


def _add_override_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=("local", "global"), default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--t-final", type=float, default=None)
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="zero all timing columns so traces are byte-reproducible",
    )


def _effective_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = load_scenario_config(args.config)
    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.t_final is not None:
        overrides["t_final"] = args.t_final
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_run(args: argparse.Namespace) -> int:
    if args.threads < 1:
        raise ConfigError(f"--threads must be at least 1, got {args.threads}")
    if args.frames_every < 0:
        raise ConfigError(f"--frames-every must be >= 0, got {args.frames_every}")
    cfg = _effective_config(args)
    world = build_world(cfg, threads=args.threads, deterministic=args.deterministic)
    trace_dir = Path(args.trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    frames_dir = trace_dir / "frames"
    if args.frames_every:
        frames_dir.mkdir(exist_ok=True)
        dump_frame(world, frames_dir / "frame_000000.obj")

    def on_sweep(world, row):
        if args.frames_every and world.sweep % args.frames_every == 0:
            dump_frame(world, frames_dir / f"frame_{world.sweep:06d}.obj")
        if args.verbose:
            print(
                f"sweep {row.sweep}: t_min={row.global_t_min:.6f} "
                f"active {row.n_active}/{row.n_clusters}"
            )

    run(world, cfg.t_final, on_sweep=on_sweep)
    sweep_path, cluster_path = emit_trace(world.trace, trace_dir)
    print(f"{cfg.scenario}: {world.sweep} sweeps to t={cfg.t_final}")
    print(f"wrote {sweep_path} and {cluster_path}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_scenario_config(args.config)
    print(f"ok: {cfg.scenario} scenario, mode {cfg.mode}, t_final {cfg.t_final}")
    return 0


def _cmd_dump_config(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    for field in dataclasses.fields(ScenarioConfig):
        print(f"{field.name} = {getattr(cfg, field.name)}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    # imported here so runs do not pay the matplotlib import
    from .report import render_report

    written = render_report(args.trace_dir, args.out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "validate": _cmd_validate,
    "dump-config": _cmd_dump_config,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except (EngineError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
