"""Agent-facing partial observations: window extraction, per-cell noise
corruption, and the canonical text block."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import SCAN_BOOST
from .world import (
    ARROW_ASCII,
    ARROW_UNICODE,
    Action,
    EpisodeConfig,
    RngStream,
    Tile,
    WorldState,
)

HISTORY_LIMIT = 10
EVENT_LIMIT = 5

# Glyphs a corrupted cell may be misread as ('?' is handled separately).
SUBSTITUTE_GLYPHS = ".#ekhRP"


@dataclass
class Observation:
    window: list[str]  # glyph rows, agent arrow at the exact center
    radius: int
    step: int
    energy: int
    keys: int
    score: int
    available_actions: list[str]
    goal_text: str
    history: list[str] = field(default_factory=list)  # oldest first, <= 10
    recent_events: list[str] = field(default_factory=list)  # oldest first, <= 5


def goal_text(config: EpisodeConfig) -> str:
    return (
        f"Collect {config.keys_required} key fragments (k), then open the exit "
        "door (D) by INTERACTing with it while facing it."
    )


def available_actions(config: EpisodeConfig) -> list[str]:
    tokens = [a.value for a in Action]
    if config.latent_fraction <= 0:
        tokens.remove(Action.MEASURE.value)
    return tokens


def extract_window(world: WorldState, radius: int, unicode_arrows: bool = False) -> list[str]:
    """Truth glyph window of the given radius centered on the agent.
    Cells beyond the map render as '#'; the center is the facing arrow."""
    arrows = ARROW_UNICODE if unicode_arrows else ARROW_ASCII
    rows = []
    for dr in range(-radius, radius + 1):
        row_chars = []
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                row_chars.append(arrows[world.facing])
                continue
            c, r = world.agent_pos.col + dc, world.agent_pos.row + dr
            if 0 <= c < world.size and 0 <= r < world.size:
                row_chars.append(world.grid[r][c].glyph)
            else:
                row_chars.append(Tile.WALL.glyph)
        rows.append("".join(row_chars))
    return rows


def render_window(world: WorldState, unicode_arrows: bool = False) -> tuple[list[str], int]:
    """Extract the (2R+1) x (2R+1) observation window.

    R is the configured radius, plus the scan boost when one is pending
    (the pending flag is cleared by this call).
    """
    radius = world.config.obs_radius
    if world.scan_boost_pending:
        radius += SCAN_BOOST
        world.scan_boost_pending = False
    return extract_window(world, radius, unicode_arrows), radius


def corrupt(window: list[str], rate: float, rng: RngStream) -> list[str]:
    """Independently corrupt each non-center cell with probability `rate`:
    half the corruptions become '?', half a uniformly random wrong glyph.
    The center (agent) cell is never corrupted.
    """
    if rate <= 0:
        return window
    size = len(window)
    center = size // 2
    out = []
    for r, row in enumerate(window):
        chars = list(row)
        for c in range(len(chars)):
            if r == center and c == center:
                continue
            if rng.chance(rate):
                if rng.chance(0.5):
                    chars[c] = "?"
                else:
                    chars[c] = rng.choice(SUBSTITUTE_GLYPHS)
        out.append("".join(chars))
    return out


def build_observation(
    world: WorldState,
    history: list[str] | None = None,
    recent_events: list[str] | None = None,
    unicode_arrows: bool = False,
) -> Observation:
    """Render the full agent-facing view for the current world state."""
    window, radius = render_window(world, unicode_arrows)
    window = corrupt(window, world.config.noise_rate, world.rng_noise)
    return Observation(
        window=window,
        radius=radius,
        step=world.step,
        energy=world.energy,
        keys=world.keys,
        score=world.score,
        available_actions=available_actions(world.config),
        goal_text=goal_text(world.config),
        history=list(history or [])[-HISTORY_LIMIT:],
        recent_events=list(recent_events or [])[-EVENT_LIMIT:],
    )


def state_line(obs: Observation) -> str:
    return f"Step: {obs.step} | Energy: {obs.energy} | Keys: {obs.keys} | Score: {obs.score}"


def render_text(obs: Observation) -> str:
    """Canonical text block: goal, view with state vector, recent events,
    previous actions, available actions. Byte-deterministic."""
    sections = [
        obs.goal_text,
        "OBSERVATION (partial, local):\n" + "\n".join(obs.window) + "\n" + state_line(obs),
        "RECENT EVENTS:" + ("\n" + "\n".join(f"- {ln}" for ln in obs.recent_events) if obs.recent_events else ""),
        "PREVIOUS ACTIONS (recent):" + ("\n" + ", ".join(obs.history) if obs.history else ""),
        "AVAILABLE ACTIONS:\n" + ", ".join(obs.available_actions),
    ]
    return "\n\n".join(sections) + "\n"
