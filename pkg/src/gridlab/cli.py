"""Command-line entry point: map generation, interactive play, batch runs,
single-stressor sweeps, trajectory analysis, and replay verification.

Every flag can also be supplied through a GRIDLAB_<FLAG> environment
variable; explicit flags win. Exit codes: 0 success, 1 usage, 2 runtime.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import deque
from dataclasses import fields
from pathlib import Path

from . import analysis
from .dynamics import event_line, step
from .harness import (
    SWEEP_FACTORS,
    TrajectoryRecord,
    read_trajectory,
    run_batch,
    sweep,
)
from .observation import EVENT_LIMIT, HISTORY_LIMIT, build_observation, render_text
from .world import EpisodeConfig, Outcome, parse_config_value, parse_token, world_hash
from .worldgen import GenerationError, dump_map, generate_map


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _env(name: str, default: str | None = None) -> str | None:
    return os.environ.get(f"GRIDLAB_{name.upper()}", default)


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    for f in fields(EpisodeConfig):
        if f.name == "seed":
            continue  # every subcommand registers --seed explicitly
        parser.add_argument(
            f"--{f.name}",
            default=_env(f.name),
            metavar="V",
            help=argparse.SUPPRESS,
        )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=int(_env("seed", "0") or 0))
    parser.add_argument("--out", default=_env("out"))
    _add_config_overrides(parser)


def build_parser() -> _Parser:
    parser = _Parser(prog="gridlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate one map and dump it as text")
    p.add_argument("--size", type=int, default=int(_env("size", "8") or 8))
    _add_common(p)

    p = sub.add_parser("play", help="line-based interactive episode driver")
    p.add_argument("--size", type=int, default=int(_env("size", "8") or 8))
    _add_common(p)

    p = sub.add_parser("run", help="batch evaluation with sampled instances")
    p.add_argument("--agent", default=_env("agent", "random"))
    p.add_argument("--sizes", default=_env("sizes", "6,8,10"))
    p.add_argument("--n", type=int, default=int(_env("n", "50") or 50))
    p.add_argument("--workers", type=int, default=int(_env("workers", "1") or 1))
    p.add_argument("--budget", type=int, default=None, help="step budget override")
    _add_common(p)

    p = sub.add_parser("sweep", help="single-stressor sweep, all else disabled")
    p.add_argument("--factor", required=True, choices=sorted(SWEEP_FACTORS))
    p.add_argument("--values", required=True, help="comma list; teleport accepts 'never'")
    p.add_argument("--n", type=int, default=int(_env("n", "5") or 5))
    p.add_argument("--agent", default=_env("agent", "random"))
    p.add_argument("--size", type=int, default=int(_env("size", "8") or 8))
    p.add_argument("--workers", type=int, default=int(_env("workers", "1") or 1))
    _add_common(p)

    p = sub.add_parser("analyze", help="profiles, features, and attribution CSVs")
    p.add_argument("traj_dir")
    p.add_argument("--out", default=_env("out"))
    p.add_argument("--horizon", type=int, default=200)

    p = sub.add_parser("replay", help="re-render a trajectory and verify hashes")
    p.add_argument("trajectory")
    p.add_argument("--quiet", action="store_true", help="verify only, no rendering")
    return parser


def build_config(args: argparse.Namespace) -> EpisodeConfig:
    try:
        data: dict = {}
        for f in fields(EpisodeConfig):
            raw = getattr(args, f.name, None)
            if raw is not None:
                data[f.name] = parse_config_value(f.name, str(raw))
        if getattr(args, "size", None) is not None:
            data["grid_size"] = args.size
        if getattr(args, "budget", None) is not None:
            data["step_budget"] = args.budget
        if getattr(args, "seed", None) is not None:
            data.setdefault("seed", args.seed)
        return EpisodeConfig(**data)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _check_agent_spec(spec: str) -> None:
    from .agents import make_agent

    try:
        make_agent(spec).close()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_gen(args) -> int:
    config = build_config(args)
    world, report = generate_map(config)
    dump = dump_map(world)
    if args.out:
        Path(args.out).write_text(dump, encoding="utf-8")
    else:
        sys.stdout.write(dump)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_play(args) -> int:
    config = build_config(args)
    world, _ = generate_map(config)
    history: deque[str] = deque(maxlen=HISTORY_LIMIT)
    recent: deque[str] = deque(maxlen=EVENT_LIMIT)
    print("gridlab play: type an action token (or q to quit)")
    while world.terminated is Outcome.RUNNING:
        obs = build_observation(world, list(history), list(recent), unicode_arrows=True)
        print(render_text(obs))
        line = sys.stdin.readline()
        if not line or line.strip().lower() == "q":
            print("bye")
            return 0
        token = line.strip()
        result = step(world, token)
        history.append(token if parse_token(token) else "(invalid)")
        for e in result.events:
            recent.append(event_line(e))
            print(f"  * {event_line(e)}")
    print(f"outcome: {world.terminated.value}  score: {world.score}  steps: {world.step}")
    return 0


def cmd_run(args) -> int:
    config = build_config(args)
    _check_agent_spec(args.agent)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --sizes: {exc}") from exc
    out_dir = Path(args.out or "runs")
    rows = run_batch(
        args.agent,
        sizes,
        args.n,
        out_dir,
        root_seed=args.seed,
        base_config=config,
        workers=args.workers,
    )
    from .harness import format_metrics_csv

    sys.stdout.write(format_metrics_csv(rows))
    return 0


def _parse_sweep_values(factor: str, text: str) -> list:
    values = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk.lower() == "never":
            if factor != "teleport":
                raise UsageError(f"'never' is only valid for the teleport factor, not {factor}")
            values.append(None)
        elif factor == "teleport":
            values.append(int(chunk))
        else:
            values.append(float(chunk))
    if not values:
        raise UsageError("empty --values list")
    return values


def cmd_sweep(args) -> int:
    config = build_config(args)
    _check_agent_spec(args.agent)
    values = _parse_sweep_values(args.factor, args.values)
    out_dir = Path(args.out or "sweeps")
    points = sweep(
        args.factor,
        values,
        n_per_point=args.n,
        agent_spec=args.agent,
        out_dir=out_dir,
        root_seed=args.seed,
        size=args.size,
        base_config=config,
        workers=args.workers,
    )
    from .harness import SWEEP_HEADER

    print(SWEEP_HEADER)
    for p in points:
        print(",".join(p.csv_cells()))
    return 0


def cmd_analyze(args) -> int:
    traj_dir = Path(args.traj_dir)
    paths = sorted(traj_dir.rglob("*.jsonl"))
    if not paths:
        print(f"error: no trajectories under {traj_dir}", file=sys.stderr)
        return 2
    records = [read_trajectory(p) for p in paths]
    per_agent: dict[str, list[TrajectoryRecord]] = {}
    for rec in records:
        per_agent.setdefault(rec.agent_id, []).append(rec)

    out_dir = Path(args.out or traj_dir / "analysis")
    out_dir.mkdir(parents=True, exist_ok=True)
    profiles = {
        agent: analysis.action_profile(recs, horizon=args.horizon)
        for agent, recs in per_agent.items()
    }
    (out_dir / "profiles.csv").write_text(analysis.profiles_csv(profiles), encoding="utf-8")
    (out_dir / "features.csv").write_text(analysis.features_csv(records), encoding="utf-8")
    entries = analysis.attribution_report(per_agent)
    (out_dir / "coefficients.csv").write_text(analysis.coefficients_csv(entries), encoding="utf-8")
    (out_dir / "normalization.json").write_text(
        json.dumps(analysis.normalization_json(entries), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    for e in entries:
        if e.error:
            print(f"note: attribution skipped for {e.agent}: {e.error}", file=sys.stderr)
    print(f"wrote profiles.csv, features.csv, coefficients.csv to {out_dir}")
    return 0


def cmd_replay(args) -> int:
    path = Path(args.trajectory)
    try:
        record = read_trajectory(path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if record.world_source != "generated":
        print("error: trajectory world was injected; cannot regenerate it", file=sys.stderr)
        return 2
    world, _ = generate_map(record.config)
    history: deque[str] = deque(maxlen=HISTORY_LIMIT)
    recent: deque[str] = deque(maxlen=EVENT_LIMIT)
    for rec_step in record.steps:
        obs = build_observation(world, list(history), list(recent))
        if not args.quiet:
            print(render_text(obs))
            print(f"> {rec_step.action}")
        result = step(world, rec_step.action)
        history.append(rec_step.action if parse_token(rec_step.action) else "(invalid)")
        for e in result.events:
            recent.append(event_line(e))
            if not args.quiet:
                print(f"  * {event_line(e)}")
        if world_hash(world) != rec_step.state_hash:
            print(
                f"error: state hash mismatch at step {rec_step.step}: trajectory is corrupt "
                "or was produced by a different build",
                file=sys.stderr,
            )
            return 2
    if record.aborted:
        print(f"episode aborted: {record.error}")
    print(f"outcome: {record.outcome}  score: {record.final_score}  steps: {record.total_steps}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "play": cmd_play,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (GenerationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
