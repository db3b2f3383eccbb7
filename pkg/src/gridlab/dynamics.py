"""Single-step transition engine.

One `step` call applies the agent's action (move with slip, interact, scan,
measure), then the scheduled world events (hazard spread, weather shift,
teleport, drift), then checks termination. All stochastic choices go through
the world's "dynamics" stream except latent-cell collapse, which uses the
dedicated "collapse" stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .world import (
    Action,
    Direction,
    MOVE_DIRECTIONS,
    Outcome,
    Position,
    RngStream,
    Tile,
    Weather,
    WorldState,
    find_tiles,
    parse_token,
)

# Fixed rule-tile and collapse behavior (not configuration).
RULE_KEY_PROBABILITY = 0.5
MEASURE_RADIUS = 2  # Chebyshev range of one MEASURE
SCAN_BOOST = 2  # extra observation radius after SCAN
COLLAPSE_TABLE = (
    (Tile.EMPTY, 0.40),
    (Tile.HAZARD, 0.25),
    (Tile.ENERGY, 0.15),
    (Tile.RULE, 0.10),
    (Tile.KEY, 0.10),
)


class EventKind(Enum):
    MOVE_OK = "MoveOk"
    MOVE_SLIP = "MoveSlip"
    BLOCKED = "Blocked"
    KEY_PICKUP = "KeyPickup"
    ENERGY_PICKUP = "EnergyPickup"
    HAZARD_HIT = "HazardHit"
    DOOR_OPENED = "DoorOpened"
    DOOR_LOCKED = "DoorLocked"
    RULE_TRIGGERED = "RuleTriggered"
    RULE_OUTCOME = "RuleOutcome"
    HAZARD_NEUTRALIZED = "HazardNeutralized"
    NEUTRALIZE_FAILED = "NeutralizeFailed"
    SCAN_USED = "ScanUsed"
    MEASURE_USED = "MeasureUsed"
    INSUFFICIENT_ENERGY = "InsufficientEnergy"
    ENV_SHIFT = "EnvShift"
    TELEPORT = "Teleport"
    HAZARD_SPREAD = "HazardSpread"
    DRIFT = "Drift"
    INVALID_ACTION = "InvalidAction"
    TIMEOUT = "Timeout"


_KIND_BY_NAME = {k.value: k for k in EventKind}

# Kinds that mark the step's action as failed.
FAILURE_KINDS = frozenset(
    {
        EventKind.MOVE_SLIP,
        EventKind.BLOCKED,
        EventKind.DOOR_LOCKED,
        EventKind.NEUTRALIZE_FAILED,
        EventKind.INSUFFICIENT_ENERGY,
        EventKind.INVALID_ACTION,
    }
)


@dataclass
class Event:
    kind: EventKind
    step: int
    detail: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "step": self.step, "detail": self.detail}

    @classmethod
    def from_dict(cls, data: dict) -> "Event":
        return cls(_KIND_BY_NAME[data["kind"]], data["step"], data.get("detail", ""))


def event_line(event: Event) -> str:
    """Human/agent-facing one-line rendering of an event."""
    k, d = event.kind, event.detail
    if k is EventKind.MOVE_OK:
        return f"MOVE_{d} succeeded"
    if k is EventKind.MOVE_SLIP:
        return "MOVE failed (slip)"
    if k is EventKind.BLOCKED:
        return f"MOVE_{d} blocked"
    if k is EventKind.KEY_PICKUP:
        return "picked up a key fragment"
    if k is EventKind.ENERGY_PICKUP:
        return f"picked up energy (+{d})"
    if k is EventKind.HAZARD_HIT:
        return f"stepped on a hazard (-{d} score)"
    if k is EventKind.DOOR_OPENED:
        return "door opened (exit)"
    if k is EventKind.DOOR_LOCKED:
        return f"door locked ({d} keys)"
    if k is EventKind.RULE_TRIGGERED:
        return "rule tile triggered"
    if k is EventKind.RULE_OUTCOME:
        return f"rule tile became {Tile[d.upper()].glyph if d else '?'}"
    if k is EventKind.HAZARD_NEUTRALIZED:
        return "hazard neutralized"
    if k is EventKind.NEUTRALIZE_FAILED:
        return "neutralize attempt failed"
    if k is EventKind.SCAN_USED:
        return "SCAN: view radius boosted for next observation"
    if k is EventKind.MEASURE_USED:
        return f"MEASURE: {d} latent cell(s) collapsed"
    if k is EventKind.INSUFFICIENT_ENERGY:
        return "not enough energy"
    if k is EventKind.ENV_SHIFT:
        return f"ENV SHIFT ({d})"
    if k is EventKind.TELEPORT:
        return "teleported to the pad"
    if k is EventKind.HAZARD_SPREAD:
        return "hazards spread"
    if k is EventKind.DRIFT:
        return "DRIFT: action reliability and costs changed"
    if k is EventKind.INVALID_ACTION:
        return "invalid action"
    if k is EventKind.TIMEOUT:
        return "step budget exhausted"
    return k.value


@dataclass
class StepResult:
    events: list[Event] = field(default_factory=list)
    reward_delta: int = 0
    energy_delta: int = 0
    terminated: Outcome = Outcome.RUNNING
    action_succeeded: bool = True


def effective_slip(world: WorldState) -> float:
    """Movement failure probability under the current regime."""
    cfg = world.config
    p = cfg.move_fail
    if world.weather is Weather.STORM:
        p += cfg.storm_slip
    if world.energy <= cfg.low_energy:
        p *= 2
    if world.drift_active:
        p += cfg.drift_slip
    return min(max(p, 0.0), cfg.slip_cap)


def _hazard_adjacent(world: WorldState, pos: Position) -> bool:
    return any(
        world.in_bounds(n) and world.tile_at(n) is Tile.HAZARD for n in pos.neighbors4()
    )


def rule_tile_outcome(
    energy: int,
    hazard_adjacent: bool,
    rng: RngStream,
    high_energy: int = 5,
) -> Tile:
    """Hidden rule-tile policy: high energy yields a key half the time,
    low energy next to a hazard turns hostile, otherwise the tile empties.
    """
    if energy >= high_energy:
        return Tile.KEY if rng.chance(RULE_KEY_PROBABILITY) else Tile.EMPTY
    if hazard_adjacent:
        return Tile.HAZARD
    return Tile.EMPTY


def collapse_draw(rng: RngStream) -> Tile:
    """One draw from the latent-cell collapse distribution."""
    roll = rng.random()
    acc = 0.0
    for tile, weight in COLLAPSE_TABLE:
        acc += weight
        if roll < acc:
            return tile
    return COLLAPSE_TABLE[-1][0]


def apply_move(world: WorldState, d: Direction) -> list[Event]:
    cfg = world.config
    world.facing = d
    events: list[Event] = []
    if world.rng_dynamics.chance(effective_slip(world)):
        events.append(Event(EventKind.MOVE_SLIP, world.step, d.name))
        return events
    target = world.agent_pos.shifted(d)
    tile = world.tile_at(target)
    if tile in (Tile.WALL, Tile.DOOR):
        events.append(Event(EventKind.BLOCKED, world.step, d.name))
        return events
    world.agent_pos = target
    events.append(Event(EventKind.MOVE_OK, world.step, d.name))
    if tile is Tile.KEY:
        world.keys += 1
        world.score += cfg.key_score
        world.set_tile(target, Tile.EMPTY)
        events.append(Event(EventKind.KEY_PICKUP, world.step, str(world.keys)))
    elif tile is Tile.ENERGY:
        world.energy += cfg.energy_gain
        world.set_tile(target, Tile.EMPTY)
        events.append(Event(EventKind.ENERGY_PICKUP, world.step, str(cfg.energy_gain)))
    elif tile is Tile.HAZARD:
        world.score -= cfg.hazard_penalty
        events.append(Event(EventKind.HAZARD_HIT, world.step, str(cfg.hazard_penalty)))
    if world.weather is Weather.STORM:
        world.energy = max(0, world.energy - 1)  # storm drain on successful moves
    return events


def apply_interact(world: WorldState) -> list[Event]:
    cfg = world.config
    events: list[Event] = []
    target = world.agent_pos.shifted(world.facing)
    world.energy = max(0, world.energy - cfg.interact_cost)
    tile = world.tile_at(target)
    if tile is Tile.DOOR:
        if world.keys >= cfg.keys_required:
            world.score += cfg.exit_score
            world.terminated = Outcome.EXIT_SUCCESS
            events.append(Event(EventKind.DOOR_OPENED, world.step))
        else:
            events.append(
                Event(EventKind.DOOR_LOCKED, world.step, f"{world.keys}/{cfg.keys_required}")
            )
    elif tile is Tile.RULE:
        events.append(Event(EventKind.RULE_TRIGGERED, world.step))
        outcome = rule_tile_outcome(
            world.energy, _hazard_adjacent(world, target), world.rng_dynamics, cfg.high_energy
        )
        world.set_tile(target, outcome)
        events.append(Event(EventKind.RULE_OUTCOME, world.step, outcome.name.capitalize()))
    elif tile is Tile.HAZARD:
        if world.energy >= cfg.neutralize_cost:
            world.energy -= cfg.neutralize_cost
            if world.rng_dynamics.chance(cfg.neutralize_success):
                world.set_tile(target, Tile.EMPTY)
                events.append(Event(EventKind.HAZARD_NEUTRALIZED, world.step))
            else:
                events.append(Event(EventKind.NEUTRALIZE_FAILED, world.step))
        else:
            events.append(Event(EventKind.INSUFFICIENT_ENERGY, world.step, "neutralize"))
    return events


def apply_scan(world: WorldState) -> list[Event]:
    if world.energy >= world.scan_cost:
        world.energy -= world.scan_cost
        world.scan_boost_pending = True
        return [Event(EventKind.SCAN_USED, world.step)]
    return [Event(EventKind.INSUFFICIENT_ENERGY, world.step, "scan")]


def apply_measure(world: WorldState) -> list[Event]:
    if world.energy < world.measure_cost:
        return [Event(EventKind.INSUFFICIENT_ENERGY, world.step, "measure")]
    world.energy -= world.measure_cost
    collapsed = 0
    for pos in find_tiles(world.grid, Tile.LATENT):
        if pos.chebyshev(world.agent_pos) <= MEASURE_RADIUS:
            world.set_tile(pos, collapse_draw(world.rng_collapse))
            collapsed += 1
    return [Event(EventKind.MEASURE_USED, world.step, str(collapsed))]


def spread_hazards(world: WorldState, snapshot: list[Position] | None = None) -> list[Event]:
    """Each hazard in the snapshot may convert one uniformly chosen 4-neighbor
    from Empty to Hazard. Hazards born this step never spread this step.
    """
    cfg = world.config
    if snapshot is None:
        snapshot = find_tiles(world.grid, Tile.HAZARD)
    events: list[Event] = []
    for pos in snapshot:
        if world.tile_at(pos) is not Tile.HAZARD:
            continue  # neutralized since the snapshot
        if not world.rng_dynamics.chance(cfg.hazard_spread_p):
            continue
        target = world.rng_dynamics.choice(pos.neighbors4())
        if world.in_bounds(target) and world.tile_at(target) is Tile.EMPTY:
            world.set_tile(target, Tile.HAZARD)
            events.append(
                Event(EventKind.HAZARD_SPREAD, world.step, f"{target.col},{target.row}")
            )
    return events


def weather_shift(world: WorldState) -> Event:
    world.weather = Weather.STORM if world.weather is Weather.CALM else Weather.CALM
    return Event(EventKind.ENV_SHIFT, world.step, world.weather.value)


def teleport(world: WorldState) -> Event:
    pads = find_tiles(world.grid, Tile.PAD)
    if pads:
        world.agent_pos = pads[0]  # facing unchanged, no on-enter effects
    return Event(EventKind.TELEPORT, world.step)


def drift(world: WorldState) -> Event:
    world.drift_active = True
    world.scan_cost += 1
    world.measure_cost += 1
    return Event(EventKind.DRIFT, world.step)


def step(world: WorldState, action: Action | str) -> StepResult:
    """Advance the world by one step. `action` may be an Action or a raw
    token string; unknown tokens consume the step as InvalidAction.
    """
    if world.terminated is not Outcome.RUNNING:
        raise RuntimeError("step() on a terminated world")
    cfg = world.config
    world.step += 1
    score_before = world.score
    energy_before = world.energy
    world.score -= cfg.step_score

    hazards_at_start = find_tiles(world.grid, Tile.HAZARD)

    parsed = action if isinstance(action, Action) else parse_token(action)
    events: list[Event] = []
    if parsed is None:
        token = action if isinstance(action, str) else str(action)
        events.append(Event(EventKind.INVALID_ACTION, world.step, token[:40]))
    elif parsed in MOVE_DIRECTIONS:
        events.extend(apply_move(world, MOVE_DIRECTIONS[parsed]))
    elif parsed is Action.INTERACT:
        events.extend(apply_interact(world))
    elif parsed is Action.SCAN:
        events.extend(apply_scan(world))
    elif parsed is Action.MEASURE:
        if cfg.latent_fraction <= 0:
            events.append(Event(EventKind.INVALID_ACTION, world.step, "MEASURE disabled"))
        else:
            events.extend(apply_measure(world))

    if world.terminated is Outcome.RUNNING:
        events.extend(spread_hazards(world, hazards_at_start))
        if cfg.shift_interval is not None and world.step % cfg.shift_interval == 0:
            events.append(weather_shift(world))
        if cfg.teleport_interval is not None and world.step % cfg.teleport_interval == 0:
            events.append(teleport(world))
        if cfg.drift_step is not None and world.step == cfg.drift_step:
            events.append(drift(world))
        if world.step >= cfg.step_budget:
            world.terminated = Outcome.TIMEOUT
            events.append(Event(EventKind.TIMEOUT, world.step))

    return StepResult(
        events=events,
        reward_delta=world.score - score_before,
        energy_delta=world.energy - energy_before,
        terminated=world.terminated,
        action_succeeded=not any(e.kind in FAILURE_KINDS for e in events),
    )


def replay_score(events: list[Event], total_steps: int, config: EpisodeConfig) -> int:
    """Recompute a final score from the event ledger alone."""
    score = -config.step_score * total_steps
    for e in events:
        if e.kind is EventKind.KEY_PICKUP:
            score += config.key_score
        elif e.kind is EventKind.DOOR_OPENED:
            score += config.exit_score
        elif e.kind is EventKind.HAZARD_HIT:
            score -= config.hazard_penalty
    return score
