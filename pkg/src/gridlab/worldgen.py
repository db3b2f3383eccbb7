"""Procedural map generation: border walls, sampled interior walls, corridor
carving via short random walks, object placement, latent masking, and a
solvability screen with rejection sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

from .world import (
    DIRECTION_ORDER,
    Direction,
    EpisodeConfig,
    GLYPH_TO_TILE,
    Position,
    RngStream,
    Tile,
    WorldState,
    derive_seed,
    find_tiles,
    grid_rows,
    make_streams,
    reachable_cells,
    shortest_path_len,
)

MAX_GENERATION_ATTEMPTS = 100


class GenerationError(RuntimeError):
    def __init__(self, message: str, report: "GenReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class GenReport:
    attempts: int
    reachable_keys: int
    reachable_rules: int
    reachable_latents: int
    door_reachable: bool
    agent_door_dist: int | None

    def to_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "reachable_keys": self.reachable_keys,
            "reachable_rules": self.reachable_rules,
            "reachable_latents": self.reachable_latents,
            "door_reachable": self.door_reachable,
            "agent_door_dist": self.agent_door_dist,
        }


def _blank_grid(n: int) -> list[list[Tile]]:
    grid = [[Tile.EMPTY] * n for _ in range(n)]
    for i in range(n):
        grid[0][i] = Tile.WALL
        grid[n - 1][i] = Tile.WALL
        grid[i][0] = Tile.WALL
        grid[i][n - 1] = Tile.WALL
    return grid


def _interior(n: int) -> list[Position]:
    return [Position(c, r) for r in range(1, n - 1) for c in range(1, n - 1)]


def carve_corridors(grid: list[list[Tile]], rng: RngStream) -> list[list[Tile]]:
    """Run N random walks of length 2N from random interior cells, turning
    visited interior Wall cells into Empty. The border is never touched.
    """
    n = len(grid)
    walks = n
    length = 2 * n
    for _ in range(walks):
        pos = Position(rng.randrange(n - 2) + 1, rng.randrange(n - 2) + 1)
        if grid[pos.row][pos.col] is Tile.WALL:
            grid[pos.row][pos.col] = Tile.EMPTY
        for _ in range(length):
            d: Direction = rng.choice(DIRECTION_ORDER)
            nxt = pos.shifted(d)
            if not (1 <= nxt.col < n - 1 and 1 <= nxt.row < n - 1):
                continue  # stay put rather than step onto the border
            pos = nxt
            if grid[pos.row][pos.col] is Tile.WALL:
                grid[pos.row][pos.col] = Tile.EMPTY
    return grid


def _place_objects(grid: list[list[Tile]], config: EpisodeConfig, rng: RngStream) -> bool:
    """Fixed-count unique objects on distinct Empty cells, then density
    extras, then latent masking. False when there is not enough room.
    """
    free = find_tiles(grid, Tile.EMPTY)
    placements = (
        [Tile.DOOR] * config.n_doors
        + [Tile.PAD] * config.n_pads
        + [Tile.ENERGY] * config.n_energy
        + [Tile.RULE] * config.n_rules
        + [Tile.KEY] * config.n_keys
    )
    if len(free) < len(placements) + 1:  # +1 keeps a cell for the agent
        return False
    for tile in placements:
        pos = free.pop(rng.randrange(len(free)))
        grid[pos.row][pos.col] = tile

    # Density-driven extras on the remaining free cells.
    for pos in list(free):
        roll = rng.random()
        if roll < config.hazard_density:
            grid[pos.row][pos.col] = Tile.HAZARD
            free.remove(pos)
        elif roll < config.hazard_density + config.energy_density:
            grid[pos.row][pos.col] = Tile.ENERGY
            free.remove(pos)
        elif roll < config.hazard_density + config.energy_density + config.rule_density:
            grid[pos.row][pos.col] = Tile.RULE
            free.remove(pos)

    if config.latent_fraction > 0 and len(free) > 1:
        # Keep one cell for the agent start.
        eligible = len(free) - 1
        n_latent = min(eligible, round(config.latent_fraction * eligible))
        for _ in range(n_latent):
            pos = free.pop(rng.randrange(len(free)))
            grid[pos.row][pos.col] = Tile.LATENT
    return True


def validate_solvable(world: WorldState, config: EpisodeConfig) -> tuple[bool, GenReport]:
    """Screen a generated map: the door must be adjacent-reachable from the
    start, and reachable key sources (placed keys + rule tiles + latent
    cells) must add up to at least keys_required + 1.

    The +1 margin hedges the stochastic sources; it does not make every
    accepted map winnable in every playthrough.
    """
    passable = lambda t: t is not Tile.WALL and t is not Tile.DOOR
    doors = find_tiles(world.grid, Tile.DOOR)
    door = doors[0]
    dist = shortest_path_len(world.grid, world.agent_pos, door, passable)
    reach = reachable_cells(world.grid, world.agent_pos, passable)
    n_keys = sum(1 for p in find_tiles(world.grid, Tile.KEY) if p in reach)
    n_rules = sum(1 for p in find_tiles(world.grid, Tile.RULE) if p in reach)
    n_latents = sum(1 for p in find_tiles(world.grid, Tile.LATENT) if p in reach)
    report = GenReport(
        attempts=1,
        reachable_keys=n_keys,
        reachable_rules=n_rules,
        reachable_latents=n_latents,
        door_reachable=dist is not None,
        agent_door_dist=dist,
    )
    ok = dist is not None and (n_keys + n_rules + n_latents) >= config.keys_required + 1
    return ok, report


def _build_candidate(config: EpisodeConfig, seed: int) -> WorldState | None:
    n = config.grid_size
    rng = RngStream(seed, "gen")
    grid = _blank_grid(n)
    for pos in _interior(n):
        if rng.chance(config.wall_density):
            grid[pos.row][pos.col] = Tile.WALL
    carve_corridors(grid, rng)
    if not _place_objects(grid, config, rng):
        return None
    free = find_tiles(grid, Tile.EMPTY)
    if not free:
        return None
    start = free[rng.randrange(len(free))]
    facing = rng.choice(DIRECTION_ORDER)
    streams = make_streams(config.seed)
    streams["gen"] = rng
    return WorldState(
        config=config,
        grid=grid,
        agent_pos=start,
        facing=facing,
        energy=config.initial_energy,
        scan_cost=config.scan_cost,
        measure_cost=config.measure_cost,
        rng_gen=streams["gen"],
        rng_dynamics=streams["dynamics"],
        rng_noise=streams["noise"],
        rng_collapse=streams["collapse"],
    )


def generate_map(config: EpisodeConfig) -> tuple[WorldState, GenReport]:
    """Generate a map that passes the solvability screen, regenerating with
    a derived sub-seed on failure (up to MAX_GENERATION_ATTEMPTS).
    """
    last_report: GenReport | None = None
    for attempt in range(1, MAX_GENERATION_ATTEMPTS + 1):
        seed = config.seed if attempt == 1 else derive_seed(config.seed, f"gen_retry:{attempt}")
        world = _build_candidate(config, seed)
        if world is None:
            continue
        ok, report = validate_solvable(world, config)
        report.attempts = attempt
        last_report = report
        if ok:
            return world, report
    raise GenerationError(
        f"no solvable map in {MAX_GENERATION_ATTEMPTS} attempts (seed={config.seed})",
        last_report,
    )


# ---------------------------------------------------------------------------
# Text dump format: one glyph row per line, then "agent <col> <row> <facing>".
# ---------------------------------------------------------------------------


def dump_map(world: WorldState) -> str:
    lines = grid_rows(world.grid)
    lines.append(f"agent {world.agent_pos.col} {world.agent_pos.row} {world.facing.name}")
    return "\n".join(lines) + "\n"


def parse_map(text: str, config: EpisodeConfig | None = None) -> WorldState:
    """Inverse of dump_map; streams are seeded from the config (default one)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[-1].startswith("agent "):
        raise ValueError("map dump missing trailing agent line")
    *rows, agent_line = lines
    grid = []
    for ln in rows:
        try:
            grid.append([GLYPH_TO_TILE[ch] for ch in ln])
        except KeyError as exc:
            raise ValueError(f"unknown glyph in map dump: {exc}") from exc
    n = len(grid)
    if any(len(row) != n for row in grid):
        raise ValueError("map dump is not square")
    parts = agent_line.split()
    if len(parts) != 4:
        raise ValueError(f"bad agent line: {agent_line!r}")
    col, row = int(parts[1]), int(parts[2])
    facing = Direction[parts[3]]
    cfg = config if config is not None else EpisodeConfig(grid_size=n)
    streams = make_streams(cfg.seed)
    return WorldState(
        config=cfg,
        grid=grid,
        agent_pos=Position(col, row),
        facing=facing,
        energy=cfg.initial_energy,
        scan_cost=cfg.scan_cost,
        measure_cost=cfg.measure_cost,
        rng_gen=streams["gen"],
        rng_dynamics=streams["dynamics"],
        rng_noise=streams["noise"],
        rng_collapse=streams["collapse"],
    )
