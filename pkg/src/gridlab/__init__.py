"""gridlab: a deterministic, seedable gridworld stress-test environment with
an evaluation harness and win/loss attribution analytics."""

from .world import (
    Action,
    Direction,
    EpisodeConfig,
    Outcome,
    Position,
    RngStream,
    Tile,
    Weather,
    WorldState,
    direction_delta,
    draw_uniform,
    shortest_path_len,
    world_hash,
)
from .worldgen import GenReport, GenerationError, dump_map, generate_map, parse_map, validate_solvable
from .dynamics import Event, EventKind, StepResult, effective_slip, rule_tile_outcome, step
from .observation import Observation, build_observation, corrupt, render_text, render_window
from .agents import Agent, OraclePlanner, RandomAgent, SenseThenActAgent, make_agent
from .harness import (
    MetricsRow,
    TrajectoryRecord,
    read_trajectory,
    run_batch,
    run_episode,
    sample_instance_params,
    sweep,
    write_trajectory,
)
from .analysis import (
    ActionProfile,
    LogisticModel,
    action_profile,
    attribution_report,
    featurize,
    fit_logistic,
    post_key_profile,
)

__version__ = "0.1.0"
