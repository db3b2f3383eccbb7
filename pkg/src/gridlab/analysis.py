"""Post-hoc analytics over trajectories: action-frequency profiles,
progress-conditioned profiles, the 9-feature episode descriptor, and a
from-scratch regularized logistic regression for win/loss attribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .harness import TrajectoryRecord
from .world import Action, Tile, find_tiles, shortest_path_len
from .worldgen import generate_map

ACTION_CATEGORIES = tuple(a.value for a in Action)
NON_MOVEMENT = (Action.INTERACT.value, Action.SCAN.value, Action.MEASURE.value)

FEATURE_NAMES = (
    "width",
    "noise",
    "move_fail",
    "latent",
    "hazard_spread",
    "teleport_rate",
    "shift_rate",
    "hr",
    "agent_door_dist",
)


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Action profiles
# ---------------------------------------------------------------------------


@dataclass
class ActionProfile:
    """Per-step action-category frequencies among episodes still active at
    that step. Rows where no episode is active carry zero frequencies and
    active == 0. Offsets start at 1."""

    frequencies: np.ndarray  # shape (T, 7)
    active: np.ndarray  # shape (T,), denominator per step
    categories: tuple[str, ...] = ACTION_CATEGORIES
    episodes: int = 0

    def nonmovement(self) -> np.ndarray:
        idx = [self.categories.index(c) for c in NON_MOVEMENT]
        return self.frequencies[:, idx]


def _profile_from_sequences(sequences: list[list[str]], horizon: int) -> ActionProfile:
    freq = np.zeros((horizon, len(ACTION_CATEGORIES)))
    active = np.zeros(horizon, dtype=int)
    index = {c: i for i, c in enumerate(ACTION_CATEGORIES)}
    for seq in sequences:
        for t, token in enumerate(seq[:horizon]):
            col = index.get(token)
            if col is None:
                continue  # non-canonical token: excluded from both sides
            freq[t, col] += 1
            active[t] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(active[:, None] > 0, freq / np.maximum(active[:, None], 1), 0.0)
    return ActionProfile(frequencies=out, active=active, episodes=len(sequences))


def action_profile(trajectories: list[TrajectoryRecord], horizon: int = 200) -> ActionProfile:
    """Frequencies of the 7 action categories at each step t in [1, horizon],
    with episodes shorter than t excluded from the denominator at t."""
    if horizon <= 0:
        raise AnalysisError("profile horizon must be positive")
    if not trajectories:
        raise AnalysisError("no trajectories to profile")
    sequences = [[s.action for s in rec.steps] for rec in trajectories]
    return _profile_from_sequences(sequences, horizon)


def post_key_profile(
    trajectories: list[TrajectoryRecord], level: int, window: int = 10
) -> ActionProfile:
    """Profile over the `window` steps following the first step at which the
    key count reaches `level` (level 0 aligns at episode start). Episodes
    that never reach the level are excluded; if none qualify the returned
    profile has episodes == 0 rather than fabricated zeros."""
    if window < 1:
        raise AnalysisError("window must be >= 1")
    if level < 0:
        raise AnalysisError("level must be >= 0")
    sequences = []
    for rec in trajectories:
        if level == 0:
            milestone = 0
        else:
            milestone = next((s.step for s in rec.steps if s.keys >= level), None)
            if milestone is None:
                continue
        tail = [s.action for s in rec.steps if milestone < s.step <= milestone + window]
        sequences.append(tail)
    return _profile_from_sequences(sequences, window)


# ---------------------------------------------------------------------------
# Episode features
# ---------------------------------------------------------------------------


def featurize_world(world) -> np.ndarray:
    """Raw 9-component descriptor in the fixed order width, noise,
    move_fail, latent, hazard_spread, teleport_rate, shift_rate, hr,
    agent_door_dist, computed on an initial world.

    Schedules are encoded as rates (budget / interval, 0 when never) so that
    "more frequent" increases monotonically. hr counts rule tiles with at
    least one hazard 4-neighbor; the door distance is the BFS distance from
    the start with walls impassable.
    """
    cfg = world.config
    rate = lambda interval: 0.0 if interval is None else cfg.step_budget / interval
    hr = 0
    for pos in find_tiles(world.grid, Tile.RULE):
        neighbors = [n for n in pos.neighbors4() if world.in_bounds(n)]
        if any(world.tile_at(n) is Tile.HAZARD for n in neighbors):
            hr += 1
    door = find_tiles(world.grid, Tile.DOOR)[0]
    dist = shortest_path_len(
        world.grid, world.agent_pos, door, lambda t: t not in (Tile.WALL, Tile.DOOR)
    )
    if dist is None:
        raise AnalysisError("door unreachable on a validated map")
    return np.array(
        [
            float(cfg.grid_size),
            cfg.noise_rate,
            cfg.move_fail,
            cfg.latent_fraction,
            cfg.hazard_spread_p,
            rate(cfg.teleport_interval),
            rate(cfg.shift_interval),
            float(hr),
            float(dist),
        ]
    )


def featurize(record: TrajectoryRecord) -> np.ndarray:
    """Features of one recorded episode; the initial world is regenerated
    deterministically from the recorded config."""
    if record.world_source != "generated":
        raise AnalysisError("cannot featurize an episode with an injected world")
    world, _ = generate_map(record.config)
    return featurize_world(world)


def featurize_many(records: list[TrajectoryRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack raw feature vectors and win labels for a trajectory set."""
    X = np.stack([featurize(r) for r in records])
    y = np.array([1.0 if r.won else 0.0 for r in records])
    return X, y


def minmax_normalize(X: np.ndarray, mins=None, maxs=None):
    """Column-wise min-max scaling to [0, 1]; constant columns map to 0.
    Returns (scaled, mins, maxs) so the constants can be recorded."""
    X = np.asarray(X, dtype=float)
    if mins is None:
        mins = X.min(axis=0)
    if maxs is None:
        maxs = X.max(axis=0)
    span = np.where(maxs > mins, maxs - mins, 1.0)
    return (X - mins) / span, mins, maxs


# ---------------------------------------------------------------------------
# Logistic regression (full-batch gradient descent, L2 on weights only)
# ---------------------------------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    mins: np.ndarray
    maxs: np.ndarray
    lam: float
    iterations: int
    final_loss: float
    heldout_accuracy: float | None = None
    loss_trace: list[float] = field(default_factory=list)  # sampled every 100 iters

    def predict_proba(self, X_raw: np.ndarray) -> np.ndarray:
        Xn, _, _ = minmax_normalize(X_raw, self.mins, self.maxs)
        return _sigmoid(Xn @ self.weights + self.bias)

    def predict(self, X_raw: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X_raw) >= 0.5).astype(float)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> float:
    """Mean binary cross-entropy plus (lam/2)*||w||^2; the bias is not
    regularized. Computed via logaddexp for numerical stability."""
    z = X @ w + b
    bce = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(bce + 0.5 * lam * np.dot(w, w))


def logistic_gradient(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float
) -> tuple[np.ndarray, float]:
    p = _sigmoid(X @ w + b)
    err = p - y
    grad_w = X.T @ err / len(y) + lam * w
    grad_b = float(np.mean(err))
    return grad_w, grad_b


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    lam: float = 0.01,
    learning_rate: float = 0.1,
    max_iterations: int = 50_000,
    grad_tolerance: float = 1e-6,
    heldout_fraction: float = 0.0,
    split_seed: int = 0,
    mins: np.ndarray | None = None,
    maxs: np.ndarray | None = None,
) -> LogisticModel:
    """Fit by full-batch gradient descent on min-max scaled features until
    the gradient max-norm falls below `grad_tolerance` or the iteration cap.

    X is taken raw; scaling constants are fitted here and recorded on the
    model (pass mins/maxs to reuse precomputed constants).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    classes = np.unique(y)
    if classes.size < 2:
        raise AnalysisError(
            f"logistic fit needs both classes; labels contain only {classes.tolist()}"
        )
    Xn, mins, maxs = minmax_normalize(X, mins, maxs)

    test_idx = np.array([], dtype=int)
    if heldout_fraction > 0:
        rng = np.random.default_rng(split_seed)
        order = rng.permutation(len(y))
        n_test = max(1, int(round(heldout_fraction * len(y))))
        test_idx, train_idx = order[:n_test], order[n_test:]
        if np.unique(y[train_idx]).size < 2:
            raise AnalysisError("train split lost a class; use more data")
        X_train, y_train = Xn[train_idx], y[train_idx]
    else:
        X_train, y_train = Xn, y

    w = np.zeros(X.shape[1])
    b = 0.0
    trace = []
    iterations = 0
    for it in range(1, max_iterations + 1):
        grad_w, grad_b = logistic_gradient(X_train, y_train, w, b, lam)
        if it % 100 == 1:
            trace.append(logistic_loss(X_train, y_train, w, b, lam))
        if max(np.max(np.abs(grad_w)), abs(grad_b)) < grad_tolerance:
            iterations = it
            break
        w -= learning_rate * grad_w
        b -= learning_rate * grad_b
        iterations = it

    final_loss = logistic_loss(X_train, y_train, w, b, lam)
    heldout_acc = None
    if test_idx.size:
        preds = (_sigmoid(Xn[test_idx] @ w + b) >= 0.5).astype(float)
        heldout_acc = float(np.mean(preds == y[test_idx]))
    return LogisticModel(
        weights=w,
        bias=float(b),
        mins=mins,
        maxs=maxs,
        lam=lam,
        iterations=iterations,
        final_loss=final_loss,
        heldout_accuracy=heldout_acc,
        loss_trace=trace,
    )


# ---------------------------------------------------------------------------
# Attribution report
# ---------------------------------------------------------------------------


@dataclass
class AttributionEntry:
    agent: str
    model: LogisticModel | None
    n_episodes: int
    error: str = ""


def attribution_report(
    per_agent: dict[str, list[TrajectoryRecord]],
    lam: float = 0.01,
    heldout_fraction: float = 0.2,
) -> list[AttributionEntry]:
    """One logistic fit per agent over its pooled episodes. A failed fit
    (for example a single-class label set) becomes an error entry without
    aborting the other agents."""
    entries = []
    for agent in sorted(per_agent):
        records = per_agent[agent]
        try:
            X, y = featurize_many(records)
            model = fit_logistic(X, y, lam=lam, heldout_fraction=heldout_fraction)
            entries.append(AttributionEntry(agent, model, len(records)))
        except (AnalysisError, ValueError) as exc:
            entries.append(AttributionEntry(agent, None, len(records), error=str(exc)))
    return entries


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def profiles_csv(per_agent: dict[str, ActionProfile]) -> str:
    lines = ["agent,step,category,frequency,active"]
    for agent in sorted(per_agent):
        profile = per_agent[agent]
        for t in range(profile.frequencies.shape[0]):
            for c, cat in enumerate(profile.categories):
                lines.append(
                    f"{agent},{t + 1},{cat},{profile.frequencies[t, c]:.9g},{profile.active[t]}"
                )
    return "\n".join(lines) + "\n"


def features_csv(records: list[TrajectoryRecord]) -> str:
    lines = ["agent,seed,win," + ",".join(FEATURE_NAMES)]
    for rec in records:
        vec = featurize(rec)
        cells = [rec.agent_id, str(rec.seed), str(int(rec.won))]
        cells += [f"{v:.9g}" for v in vec]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def coefficients_csv(entries: list[AttributionEntry]) -> str:
    header = ["agent", "n", "accuracy", "bias"] + [f"w_{n}" for n in FEATURE_NAMES] + ["lambda", "iterations", "final_loss", "error"]
    lines = [",".join(header)]
    for e in entries:
        if e.model is None:
            cells = [e.agent, str(e.n_episodes)] + [""] * (len(header) - 3) + [e.error.replace(",", ";")]
        else:
            m = e.model
            acc = "" if m.heldout_accuracy is None else f"{m.heldout_accuracy:.6g}"
            cells = (
                [e.agent, str(e.n_episodes), acc, f"{m.bias:.9g}"]
                + [f"{w:.9g}" for w in m.weights]
                + [f"{m.lam:.6g}", str(m.iterations), f"{m.final_loss:.9g}", ""]
            )
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def normalization_json(entries: list[AttributionEntry]) -> dict:
    out = {}
    for e in entries:
        if e.model is not None:
            out[e.agent] = {
                "mins": [float(v) for v in e.model.mins],
                "maxs": [float(v) for v in e.model.maxs],
                "features": list(FEATURE_NAMES),
            }
    return out
