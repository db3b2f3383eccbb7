"""Core world types: tiles, directions, actions, episode configuration,
deterministic RNG streams, and grid search utilities.

Everything stochastic in an episode goes through labeled :class:`RngStream`
instances so that toggling one source of randomness (say, observation noise)
never perturbs another (say, hazard spread) under the same seed.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Callable, Sequence


class Tile(Enum):
    """Ground-truth cell content. Exactly one per grid cell."""

    WALL = "#"
    EMPTY = "."
    ENERGY = "e"
    KEY = "k"
    DOOR = "D"
    HAZARD = "h"
    RULE = "R"
    PAD = "P"
    LATENT = "o"

    @property
    def glyph(self) -> str:
        return self.value


GLYPH_TO_TILE = {t.value: t for t in Tile}


class Direction(Enum):
    # (dcol, drow) in screen coordinates: row grows downward.
    N = (0, -1)
    S = (0, 1)
    E = (1, 0)
    W = (-1, 0)


# Priority order used for deterministic tie-breaking in planners.
DIRECTION_ORDER = (Direction.N, Direction.S, Direction.E, Direction.W)

ARROW_ASCII = {Direction.N: "^", Direction.S: "v", Direction.E: ">", Direction.W: "<"}
ARROW_UNICODE = {Direction.N: "▲", Direction.S: "▼", Direction.E: "▶", Direction.W: "◀"}


def direction_delta(d: Direction) -> tuple[int, int]:
    """Unit displacement (dcol, drow) for a facing direction."""
    return d.value


class Action(Enum):
    MOVE_N = "MOVE_N"
    MOVE_S = "MOVE_S"
    MOVE_E = "MOVE_E"
    MOVE_W = "MOVE_W"
    INTERACT = "INTERACT"
    SCAN = "SCAN"
    MEASURE = "MEASURE"


CANONICAL_TOKENS = tuple(a.value for a in Action)
_TOKEN_TO_ACTION = {a.value: a for a in Action}

MOVE_DIRECTIONS = {
    Action.MOVE_N: Direction.N,
    Action.MOVE_S: Direction.S,
    Action.MOVE_E: Direction.E,
    Action.MOVE_W: Direction.W,
}


def parse_token(token: str) -> Action | None:
    """Case-sensitive exact-match parse of an action token. None if unknown."""
    return _TOKEN_TO_ACTION.get(token)


@dataclass(frozen=True)
class Position:
    col: int
    row: int

    def shifted(self, d: Direction) -> "Position":
        dc, dr = d.value
        return Position(self.col + dc, self.row + dr)

    def neighbors4(self) -> list["Position"]:
        return [self.shifted(d) for d in DIRECTION_ORDER]

    def chebyshev(self, other: "Position") -> int:
        return max(abs(self.col - other.col), abs(self.row - other.row))


# ---------------------------------------------------------------------------
# Deterministic RNG
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, label: str) -> int:
    """Stable 64-bit sub-seed from a root seed and a label string."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class RngStream:
    """Counter-based deterministic random stream.

    The same (seed, label) pair always yields the identical draw sequence,
    and streams with distinct labels never perturb each other: each draw
    advances only this stream's counter.
    """

    seed: int
    label: str
    counter: int = 0

    def __post_init__(self) -> None:
        self._base = derive_seed(self.seed, self.label)

    def _next_u64(self) -> int:
        self.counter += 1
        return _splitmix((self._base + self.counter * _GOLDEN) & _MASK64)

    def random(self) -> float:
        """Float in [0, 1) with 53 bits of precision."""
        return (self._next_u64() >> 11) * 2.0**-53

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self._next_u64() % n

    def choice(self, seq: Sequence):
        return seq[self.randrange(len(seq))]

    def chance(self, p: float) -> bool:
        return self.random() < p


def draw_uniform(stream: RngStream, lo: float, hi: float) -> float:
    """One uniform draw in [lo, hi); degenerate lo == hi returns lo."""
    if lo > hi:
        raise ValueError(f"draw_uniform: lo={lo} > hi={hi}")
    if lo == hi:
        return lo
    return lo + (hi - lo) * stream.random()


# ---------------------------------------------------------------------------
# Episode configuration
# ---------------------------------------------------------------------------

NEVER = None  # sentinel for disabled schedules, serialized as "never"


@dataclass
class EpisodeConfig:
    """Every tunable knob of one episode.

    Schedules (shift/teleport/drift) use None to mean "never fires".
    """

    grid_size: int = 8
    obs_radius: int = 2
    keys_required: int = 3
    step_budget: int = 200
    noise_rate: float = 0.0
    move_fail: float = 0.0
    latent_fraction: float = 0.0
    hazard_spread_p: float = 0.02
    shift_interval: int | None = 25
    teleport_interval: int | None = 50
    drift_step: int | None = 100
    wall_density: float = 0.18
    hazard_density: float = 0.08
    energy_density: float = 0.04
    rule_density: float = 0.0
    n_doors: int = 1
    n_pads: int = 1
    n_energy: int = 1
    n_rules: int = 2
    n_keys: int = 2
    initial_energy: int = 10
    energy_gain: int = 5
    scan_cost: int = 2
    measure_cost: int = 2
    interact_cost: int = 1
    neutralize_cost: int = 3
    neutralize_success: float = 0.7
    high_energy: int = 5
    low_energy: int = 2
    storm_slip: float = 0.08
    drift_slip: float = 0.10
    slip_cap: float = 0.9
    key_score: int = 5
    exit_score: int = 20
    hazard_penalty: int = 10
    step_score: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grid_size < 4:
            raise ValueError("grid_size must be >= 4 (border walls need a 2x2 interior)")
        if self.keys_required < 1:
            raise ValueError("keys_required must be >= 1")
        if self.step_budget < 1:
            raise ValueError("step_budget must be >= 1")
        if self.obs_radius < 1:
            raise ValueError("obs_radius must be >= 1")
        for name in ("noise_rate", "move_fail", "latent_fraction", "hazard_spread_p",
                     "wall_density", "hazard_density", "energy_density", "rule_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("shift_interval", "teleport_interval", "drift_step"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1 or never")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_kv_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={'never' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv_text(cls, text: str) -> "EpisodeConfig":
        types = {f.name: f.type for f in fields(cls)}
        data: dict = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in types:
                raise ValueError(f"unknown config key: {key}")
            data[key] = parse_config_value(key, value)
        return cls(**data)


_INT_FIELDS = {
    "grid_size", "obs_radius", "keys_required", "step_budget", "n_doors", "n_pads",
    "n_energy", "n_rules", "n_keys", "initial_energy", "energy_gain", "scan_cost",
    "measure_cost", "interact_cost", "neutralize_cost", "high_energy", "low_energy",
    "key_score", "exit_score", "hazard_penalty", "step_score", "seed",
}
_OPTIONAL_INT_FIELDS = {"shift_interval", "teleport_interval", "drift_step"}


def parse_config_value(key: str, value: str):
    """Parse one EpisodeConfig field from its text form ("never" allowed)."""
    if key in _OPTIONAL_INT_FIELDS:
        if value.lower() in ("never", "none", "null"):
            return None
        return int(value)
    if key in _INT_FIELDS:
        return int(value)
    return float(value)


# ---------------------------------------------------------------------------
# World state
# ---------------------------------------------------------------------------


class Weather(Enum):
    CALM = "Calm"
    STORM = "Storm"


class Outcome(Enum):
    RUNNING = "Running"
    EXIT_SUCCESS = "ExitSuccess"
    TIMEOUT = "Timeout"


@dataclass
class WorldState:
    """Full ground truth for one episode. Owned by a single runner."""

    config: EpisodeConfig
    grid: list[list[Tile]]
    agent_pos: Position
    facing: Direction
    energy: int
    keys: int = 0
    score: int = 0
    step: int = 0
    weather: Weather = Weather.CALM
    drift_active: bool = False
    scan_boost_pending: bool = False
    terminated: Outcome = Outcome.RUNNING
    scan_cost: int = 2
    measure_cost: int = 2
    rng_gen: RngStream = field(default=None)  # type: ignore[assignment]
    rng_dynamics: RngStream = field(default=None)  # type: ignore[assignment]
    rng_noise: RngStream = field(default=None)  # type: ignore[assignment]
    rng_collapse: RngStream = field(default=None)  # type: ignore[assignment]

    @property
    def size(self) -> int:
        return len(self.grid)

    def tile_at(self, pos: Position) -> Tile:
        return self.grid[pos.row][pos.col]

    def set_tile(self, pos: Position, tile: Tile) -> None:
        self.grid[pos.row][pos.col] = tile

    def in_bounds(self, pos: Position) -> bool:
        return 0 <= pos.col < self.size and 0 <= pos.row < self.size


def make_streams(seed: int) -> dict[str, RngStream]:
    """The four labeled streams an episode owns."""
    return {label: RngStream(seed, label) for label in ("gen", "dynamics", "noise", "collapse")}


def grid_rows(grid: Sequence[Sequence[Tile]]) -> list[str]:
    return ["".join(t.glyph for t in row) for row in grid]


def world_hash(world: WorldState) -> str:
    """Stable digest of the simulation ground truth.

    Excludes RNG counters and the scan-boost presentation flag so that
    rendering observations (which consumes noise draws) provably leaves
    the simulated world unchanged.
    """
    h = hashlib.sha256()
    for row in grid_rows(world.grid):
        h.update(row.encode())
        h.update(b"\n")
    h.update(
        f"{world.agent_pos.col},{world.agent_pos.row},{world.facing.name},"
        f"{world.energy},{world.keys},{world.score},{world.step},"
        f"{world.weather.value},{int(world.drift_active)},"
        f"{world.scan_cost},{world.measure_cost},{world.terminated.value}".encode()
    )
    return h.hexdigest()[:16]


def find_tiles(grid: Sequence[Sequence[Tile]], kind: Tile) -> list[Position]:
    """All positions holding `kind`, in row-major order."""
    out = []
    for r, row in enumerate(grid):
        for c, t in enumerate(row):
            if t is kind:
                out.append(Position(c, r))
    return out


def shortest_path_len(
    grid: Sequence[Sequence[Tile]],
    start: Position,
    goal: Position,
    passable: Callable[[Tile], bool],
) -> int | None:
    """4-connected BFS distance in steps, or None when unreachable.

    Intermediate cells must satisfy `passable`; the goal cell itself is
    always enterable (distance counts the step into it).
    """
    size = len(grid)
    for p in (start, goal):
        if not (0 <= p.col < size and 0 <= p.row < size):
            raise ValueError(f"endpoint out of bounds: {p}")
    if start == goal:
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        pos, dist = queue.popleft()
        for nxt in pos.neighbors4():
            if not (0 <= nxt.col < size and 0 <= nxt.row < size) or nxt in seen:
                continue
            if nxt == goal:
                return dist + 1
            if passable(grid[nxt.row][nxt.col]):
                seen.add(nxt)
                queue.append((nxt, dist + 1))
    return None


def reachable_cells(
    grid: Sequence[Sequence[Tile]],
    start: Position,
    passable: Callable[[Tile], bool],
) -> set[Position]:
    """Flood fill of cells enterable from `start` (start always included)."""
    size = len(grid)
    seen = {start}
    queue = deque([start])
    while queue:
        pos = queue.popleft()
        for nxt in pos.neighbors4():
            if not (0 <= nxt.col < size and 0 <= nxt.row < size) or nxt in seen:
                continue
            if passable(grid[nxt.row][nxt.col]):
                seen.add(nxt)
                queue.append(nxt)
    return seen
