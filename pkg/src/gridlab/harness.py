"""Episode execution, trajectory persistence, instance parameter sampling,
batch evaluation, and single-stressor sweeps.

Trajectories are line-delimited JSON: a header line, one line per step, and
a footer line; one file per episode under out_dir/<agent>/<size>/<seed>.jsonl.
Per-episode seeds derive from the root seed and the episode index, so worker
scheduling never changes results.
"""

from __future__ import annotations

import json
import re
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .agents import Agent, make_agent
from .dynamics import Event, event_line, step
from .observation import EVENT_LIMIT, HISTORY_LIMIT, build_observation, extract_window
from .protocol import AgentChannelError
from .world import (
    EpisodeConfig,
    Outcome,
    RngStream,
    WorldState,
    derive_seed,
    draw_uniform,
    parse_token,
    world_hash,
)
from .worldgen import generate_map

NOISE_RANGE = (0.0, 0.2)
MOVE_FAIL_RANGE = (0.0, 0.1)
LATENT_RANGE = (0.0, 0.2)


@dataclass
class StepRecord:
    step: int
    action: str
    succeeded: bool
    events: list[Event]
    reward_delta: int
    energy: int
    keys: int
    score: int
    view: list[str]  # 3x3 ground-truth view after the step
    state_hash: str

    def to_dict(self) -> dict:
        return {
            "type": "step",
            "step": self.step,
            "action": self.action,
            "succeeded": self.succeeded,
            "events": [e.to_dict() for e in self.events],
            "reward_delta": self.reward_delta,
            "energy": self.energy,
            "keys": self.keys,
            "score": self.score,
            "view": self.view,
            "hash": self.state_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StepRecord":
        return cls(
            step=data["step"],
            action=data["action"],
            succeeded=data["succeeded"],
            events=[Event.from_dict(e) for e in data["events"]],
            reward_delta=data["reward_delta"],
            energy=data["energy"],
            keys=data["keys"],
            score=data["score"],
            view=list(data["view"]),
            state_hash=data["hash"],
        )


@dataclass
class TrajectoryRecord:
    config: EpisodeConfig
    seed: int
    agent_id: str
    steps: list[StepRecord] = field(default_factory=list)
    outcome: str = Outcome.TIMEOUT.value
    total_steps: int = 0
    final_score: int = 0
    aborted: bool = False
    error: str = ""
    world_source: str = "generated"
    transcript: list = field(default_factory=list)  # raw wire exchanges, external agents only

    @property
    def won(self) -> bool:
        return self.outcome == Outcome.EXIT_SUCCESS.value

    def to_lines(self) -> list[str]:
        header = {
            "type": "header",
            "agent": self.agent_id,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "world_source": self.world_source,
        }
        footer = {
            "type": "footer",
            "outcome": self.outcome,
            "steps": self.total_steps,
            "score": self.final_score,
            "aborted": self.aborted,
            "error": self.error,
        }
        if self.transcript:
            footer["transcript"] = [list(pair) for pair in self.transcript]
        dump = lambda obj: json.dumps(obj, separators=(",", ":"), sort_keys=True)
        return [dump(header)] + [dump(s.to_dict()) for s in self.steps] + [dump(footer)]

    @classmethod
    def from_lines(cls, lines: list[str]) -> "TrajectoryRecord":
        def parse(i: int, raw: str) -> dict:
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"bad trajectory line {i + 1}: {exc}") from exc

        rows = [parse(i, raw) for i, raw in enumerate(lines) if raw.strip()]
        if not rows or rows[0].get("type") != "header":
            raise ValueError("bad trajectory line 1: missing header")
        if rows[-1].get("type") != "footer":
            raise ValueError(f"bad trajectory line {len(rows)}: missing footer")
        header, footer = rows[0], rows[-1]
        steps = []
        for i, row in enumerate(rows[1:-1], start=2):
            if row.get("type") != "step":
                raise ValueError(f"bad trajectory line {i}: expected a step record")
            steps.append(StepRecord.from_dict(row))
        return cls(
            config=EpisodeConfig.from_dict(header["config"]),
            seed=header["seed"],
            agent_id=header["agent"],
            steps=steps,
            outcome=footer["outcome"],
            total_steps=footer["steps"],
            final_score=footer["score"],
            aborted=footer.get("aborted", False),
            error=footer.get("error", ""),
            world_source=header.get("world_source", "generated"),
            transcript=[tuple(pair) for pair in footer.get("transcript", [])],
        )


def write_trajectory(record: TrajectoryRecord, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(record.to_lines()) + "\n", encoding="utf-8")


def read_trajectory(path: Path) -> TrajectoryRecord:
    return TrajectoryRecord.from_lines(path.read_text(encoding="utf-8").splitlines())


def run_episode(
    config: EpisodeConfig,
    agent: Agent,
    seed: int | None = None,
    world: WorldState | None = None,
) -> TrajectoryRecord:
    """Generate a map (unless one is injected), then loop decide/step until
    termination. A broken agent channel aborts the episode, which is
    recorded as a timeout-equivalent failure with the error preserved.
    """
    cfg = replace(config, seed=seed) if seed is not None else config
    source = "generated"
    if world is None:
        world, _ = generate_map(cfg)
    else:
        cfg = world.config
        source = "injected"
    record = TrajectoryRecord(config=cfg, seed=cfg.seed, agent_id=agent.name, world_source=source)
    history: deque[str] = deque(maxlen=HISTORY_LIMIT)
    recent: deque[str] = deque(maxlen=EVENT_LIMIT)
    try:
        agent.reset(cfg.seed)
        agent.on_episode_start(cfg)
        while world.terminated is Outcome.RUNNING:
            obs = build_observation(world, list(history), list(recent))
            token = agent.decide(obs, world if agent.needs_truth else None)
            result = step(world, token)
            history.append(token if parse_token(token) else "(invalid)")
            for e in result.events:
                recent.append(event_line(e))
            record.steps.append(
                StepRecord(
                    step=world.step,
                    action=token,
                    succeeded=result.action_succeeded,
                    events=result.events,
                    reward_delta=result.reward_delta,
                    energy=world.energy,
                    keys=world.keys,
                    score=world.score,
                    view=extract_window(world, 1),
                    state_hash=world_hash(world),
                )
            )
    except AgentChannelError as exc:
        record.aborted = True
        record.error = str(exc)
        world.terminated = Outcome.TIMEOUT
    record.outcome = world.terminated.value
    record.total_steps = world.step
    record.final_score = world.score
    try:
        agent.on_episode_end(record.outcome, record.final_score, record.total_steps)
    except AgentChannelError:
        pass
    record.transcript = list(getattr(agent, "transcript", []))
    return record


# ---------------------------------------------------------------------------
# Instance sampling and batch evaluation
# ---------------------------------------------------------------------------


def sample_instance_params(base: EpisodeConfig, seed: int) -> EpisodeConfig:
    """Per-instance stochastic rates drawn uniformly (noise from U(0,0.2),
    move fail from U(0,0.1), latent fraction from U(0,0.2)); the observation
    window and the shift/teleport/drift schedules stay at their defaults."""
    stream = RngStream(seed, "params")
    return replace(
        base,
        noise_rate=draw_uniform(stream, *NOISE_RANGE),
        move_fail=draw_uniform(stream, *MOVE_FAIL_RANGE),
        latent_fraction=draw_uniform(stream, *LATENT_RANGE),
        obs_radius=2,
        shift_interval=25,
        teleport_interval=50,
        drift_step=100,
        seed=seed,
    )


@dataclass
class MetricsRow:
    agent: str
    size: int
    n: int
    acc: float
    score: float | None  # mean over successful episodes, None when acc == 0
    steps: float | None

    def csv_cells(self) -> list[str]:
        fmt = lambda v: "-" if v is None else f"{v:.6g}"
        return [self.agent, str(self.size), str(self.n), f"{self.acc:.6g}", fmt(self.score), fmt(self.steps)]


METRICS_HEADER = "agent,size,n,acc,score,steps"


def metrics_row(agent: str, size: int, episodes: list[dict]) -> MetricsRow:
    """Aggregate per the headline-table semantics: Score and Steps average
    over successful episodes only and render as '-' when there are none."""
    n = len(episodes)
    wins = [e for e in episodes if e["outcome"] == Outcome.EXIT_SUCCESS.value]
    acc = len(wins) / n if n else 0.0
    score = sum(e["score"] for e in wins) / len(wins) if wins else None
    steps = sum(e["steps"] for e in wins) / len(wins) if wins else None
    return MetricsRow(agent=agent, size=size, n=n, acc=acc, score=score, steps=steps)


def format_metrics_csv(rows: list[MetricsRow]) -> str:
    return "\n".join([METRICS_HEADER] + [",".join(r.csv_cells()) for r in rows]) + "\n"


def agent_slug(agent_id: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9._-]+", "_", agent_id).strip("_")
    return slug[:60] or "agent"


def _episode_summary(record: TrajectoryRecord) -> dict:
    return {
        "outcome": record.outcome,
        "score": record.final_score,
        "steps": record.total_steps,
        "aborted": record.aborted,
    }


def _run_one_job(args: tuple) -> dict:
    agent_spec, config_dict, out_path = args
    config = EpisodeConfig.from_dict(config_dict)
    agent = make_agent(agent_spec)
    try:
        record = run_episode(config, agent)
    finally:
        agent.close()
    if out_path:
        write_trajectory(record, Path(out_path))
    return _episode_summary(record)


def _run_jobs(jobs: list[tuple], workers: int) -> list[dict]:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one_job, jobs))
    return [_run_one_job(job) for job in jobs]


def run_batch(
    agent_spec: str,
    sizes: list[int],
    n_per_size: int,
    out_dir: Path,
    root_seed: int = 0,
    base_config: EpisodeConfig | None = None,
    workers: int = 1,
) -> list[MetricsRow]:
    """n episodes per grid size with per-instance sampled parameters.
    Writes one trajectory file per episode plus metrics.csv in out_dir."""
    if not sizes:
        raise ValueError("run_batch needs at least one grid size")
    if n_per_size < 1:
        raise ValueError("run_batch needs n_per_size >= 1")
    base = base_config if base_config is not None else EpisodeConfig()
    slug = agent_slug(agent_spec)
    jobs = []
    for size in sizes:
        for i in range(n_per_size):
            ep_seed = derive_seed(root_seed, f"ep:{size}:{i}")
            cfg = sample_instance_params(replace(base, grid_size=size), ep_seed)
            path = Path(out_dir) / slug / str(size) / f"{ep_seed}.jsonl"
            jobs.append((agent_spec, cfg.to_dict(), str(path)))
    summaries = _run_jobs(jobs, workers)
    rows = []
    idx = 0
    for size in sizes:
        chunk = summaries[idx : idx + n_per_size]
        idx += n_per_size
        rows.append(metrics_row(agent_spec, size, chunk))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(format_metrics_csv(rows), encoding="utf-8")
    (out / "config.txt").write_text(base.to_kv_text(), encoding="utf-8")
    return rows


# ---------------------------------------------------------------------------
# Single-stressor sweeps
# ---------------------------------------------------------------------------

SWEEP_FACTORS = {
    "noise": "noise_rate",
    "latent": "latent_fraction",
    "hazard_spread": "hazard_spread_p",
    "teleport": "teleport_interval",
}

SWEEP_HEADER = "agent,factor,value,n,win_rate"


def stressors_off(config: EpisodeConfig) -> EpisodeConfig:
    """All perturbations disabled: no noise, slips, latent cells, hazard
    spread, shifts, teleports, or drift."""
    return replace(
        config,
        noise_rate=0.0,
        move_fail=0.0,
        latent_fraction=0.0,
        hazard_spread_p=0.0,
        shift_interval=None,
        teleport_interval=None,
        drift_step=None,
    )


@dataclass
class SweepPoint:
    agent: str
    factor: str
    value: float | int | None
    n: int
    win_rate: float

    def csv_cells(self) -> list[str]:
        value = "never" if self.value is None else f"{self.value:.6g}"
        return [self.agent, self.factor, value, str(self.n), f"{self.win_rate:.6g}"]


def sweep(
    factor: str,
    values: list,
    n_per_point: int = 5,
    agent_spec: str = "random",
    out_dir: Path | None = None,
    root_seed: int = 0,
    size: int = 8,
    base_config: EpisodeConfig | None = None,
    workers: int = 1,
) -> list[SweepPoint]:
    """Sweep one factor with every other stressor disabled; report win rate
    per point (n_per_point episodes each)."""
    if factor not in SWEEP_FACTORS:
        raise ValueError(f"unknown sweep factor {factor!r}; choose from {sorted(SWEEP_FACTORS)}")
    base = stressors_off(base_config if base_config is not None else EpisodeConfig())
    base = replace(base, grid_size=size)
    field_name = SWEEP_FACTORS[factor]
    slug = agent_slug(agent_spec)
    jobs = []
    for value in values:
        for i in range(n_per_point):
            ep_seed = derive_seed(root_seed, f"sweep:{factor}:{value}:{i}")
            cfg = replace(base, **{field_name: value}, seed=ep_seed)
            path = None
            if out_dir is not None:
                tag = "never" if value is None else str(value)
                path = str(Path(out_dir) / slug / factor / tag / f"{ep_seed}.jsonl")
            jobs.append((agent_spec, cfg.to_dict(), path))
    summaries = _run_jobs(jobs, workers)
    points = []
    idx = 0
    for value in values:
        chunk = summaries[idx : idx + n_per_point]
        idx += n_per_point
        wins = sum(1 for s in chunk if s["outcome"] == Outcome.EXIT_SUCCESS.value)
        points.append(SweepPoint(agent_spec, factor, value, n_per_point, wins / n_per_point))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text = "\n".join([SWEEP_HEADER] + [",".join(p.csv_cells()) for p in points]) + "\n"
        (out / "sweep.csv").write_text(text, encoding="utf-8")
    return points
