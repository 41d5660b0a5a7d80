"""Command-line front end.

Exit codes: 0 on success, 1 for usage errors (bad flags, missing or
invalid config), 2 for runtime failures.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import engine, metrics, snapshot
from .config import load_config
from .substrate import render_rgb

log = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so codes stay ours."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="evoca", description="Evolving cellular ecosystem simulator")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    runp = sub.add_parser("run", help="run headless")
    runp.add_argument("--config", required=True, help="JSON config file")
    runp.add_argument("--steps", type=int, default=None, help="override run.steps")
    runp.add_argument("--seed", type=int, default=None, help="override seed")
    runp.add_argument("--workers", type=int, default=1)
    runp.add_argument("--snapshot-out", default=None, help="write final state here")
    runp.add_argument("--metrics-out", default=None, help="write metrics CSV here")
    runp.add_argument("--frames-out", default=None, help="directory for PNG frames")

    servep = sub.add_parser("serve", help="run with the steering endpoint")
    servep.add_argument("--config", required=True)
    servep.add_argument("--host", default=None, help="override serve.host")
    servep.add_argument("--port", type=int, default=None, help="override serve.port")
    servep.add_argument("--seed", type=int, default=None)
    servep.add_argument("--workers", type=int, default=1)

    mscp = sub.add_parser("msc", help="structural complexity of a snapshot")
    mscp.add_argument("--snapshot", required=True)
    mscp.add_argument("--channel", default="infrastructure")

    rend = sub.add_parser("render", help="render a snapshot to PNG")
    rend.add_argument("--snapshot", required=True)
    rend.add_argument("--out", default=None, help="output path (default: alongside input)")
    rend.add_argument("--norm-energy", type=float, default=1.0)
    rend.add_argument("--norm-infrastructure", type=float, default=1.0)

    return p


def _load(path: str, seed):
    cfg = load_config(path)
    if seed is not None:
        if seed < 0:
            raise ValueError("seed must be >= 0")
        cfg.seed = seed
    return cfg


def _write_png(frame, path: Path) -> None:
    from PIL import Image

    img = Image.frombytes("RGBA", (frame.width, frame.height), frame.tobytes())
    img.save(path)


def _cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    steps = cfg.run.steps if args.steps is None else args.steps
    if steps < 0:
        raise ValueError("--steps must be >= 0")
    state = engine.new_state(cfg, workers=args.workers)

    hooks = []
    writer = None
    if args.metrics_out:
        writer = metrics.MetricsWriter(args.metrics_out)
        hooks.append(engine.Hook(cfg.run.metrics_every, lambda s: writer.sample(s.substrate, s.pool)))
    if args.frames_out:
        frames_dir = Path(args.frames_out)
        frames_dir.mkdir(parents=True, exist_ok=True)

        def dump_frame(s):
            _write_png(render_rgb(s.substrate), frames_dir / f"step_{s.t:08d}.png")

        hooks.append(engine.Hook(cfg.run.frame_every, dump_frame))
    if args.snapshot_out and cfg.run.snapshot_every:
        hooks.append(
            engine.Hook(cfg.run.snapshot_every, lambda s: snapshot.save_snapshot(s, args.snapshot_out))
        )

    try:
        engine.run(state, steps, hooks=tuple(hooks))
    finally:
        if writer is not None:
            writer.close()

    if args.snapshot_out:
        snapshot.save_snapshot(state, args.snapshot_out)
    row = metrics.census(state.substrate, state.pool)
    print(
        f"step {row.step}: {row.live_genomes} live genomes, "
        f"energy {row.total_energy:.3f}, infrastructure {row.total_infrastructure:.3f}"
    )
    return 0


def _cmd_serve(args) -> int:
    from . import server

    cfg = _load(args.config, args.seed)
    if args.host is not None:
        cfg.serve.host = args.host
    if args.port is not None:
        cfg.serve.port = args.port
    cfg.serve.validate()
    state = engine.new_state(cfg, workers=args.workers)
    server.serve_forever(state)
    return 0


def _cmd_msc(args) -> int:
    state = snapshot.load_snapshot(args.snapshot)
    report = metrics.msc_of_substrate(state.substrate, args.channel)
    print(f"channel {report.channel}, {report.side}x{report.side} crop")
    for k, c in enumerate(report.contributions):
        print(f"  scale {k}: {c:.9g}")
    print(f"total: {report.total:.9g}")
    return 0


def _cmd_render(args) -> int:
    state = snapshot.load_snapshot(args.snapshot)
    out = Path(args.out) if args.out else Path(args.snapshot).with_suffix(".png")
    frame = render_rgb(state.substrate, args.norm_energy, args.norm_infrastructure)
    _write_png(frame, out)
    print(f"wrote {out}")
    return 0


_COMMANDS = {"run": _cmd_run, "serve": _cmd_serve, "msc": _cmd_msc, "render": _cmd_render}


def cli_main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a command is required")
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1

    try:
        return _COMMANDS[args.command](args)
    except (_UsageError, ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as e:  # runtime failure
        log.exception("command failed")
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
