"""Line-delimited JSON wire protocol for external agent processes.

One message per line over the child process's stdin/stdout. The engine sends
`episode_start`, one `observation` per step, and `episode_end`; the agent
answers each observation with one `action` message. Unknown fields are
ignored by both sides.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from queue import Empty, Queue

from .agents import Agent
from .observation import Observation, render_text
from .world import CANONICAL_TOKENS, EpisodeConfig

DEFAULT_DECIDE_TIMEOUT = 60.0


class AgentChannelError(RuntimeError):
    """The external agent process is gone or its channel broke."""


def parse_strict_token(text: str) -> str | None:
    """Accept exactly one canonical action token, allowing only surrounding
    whitespace. Anything else is rejected."""
    token = text.strip()
    return token if token in CANONICAL_TOKENS else None


def observation_message(obs: Observation) -> dict:
    return {
        "type": "observation",
        "step": obs.step,
        "text": render_text(obs),
        "state": {"step": obs.step, "energy": obs.energy, "keys": obs.keys, "score": obs.score},
        "actions": list(obs.available_actions),
        "view": list(obs.window),
        "events": list(obs.recent_events),
        "history": list(obs.history),
    }


def episode_start_message(config: EpisodeConfig, agent_name: str) -> dict:
    cfg = config.to_dict()
    cfg.pop("seed", None)  # the map must not be reconstructible agent-side
    return {"type": "episode_start", "config": cfg, "agent": agent_name}


def episode_end_message(outcome: str, score: int, steps: int) -> dict:
    return {"type": "episode_end", "outcome": outcome, "score": score, "steps": steps}


def encode_message(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"), sort_keys=True)


def parse_action_message(line: str) -> str | None:
    """Token from an agent's action message, or None when malformed."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(msg, dict) or msg.get("type") != "action":
        return None
    action = msg.get("action")
    if not isinstance(action, str):
        return None
    return parse_strict_token(action)


class _LineReader:
    """Background reader so decide() can time out without blocking."""

    def __init__(self, stream):
        self._queue: Queue = Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream) -> None:
        for line in stream:
            self._queue.put(line)
        self._queue.put(None)  # EOF marker

    def readline(self, timeout: float) -> str | None:
        try:
            return self._queue.get(timeout=timeout)
        except Empty:
            raise TimeoutError("no reply from external agent")


class ExternalAgent(Agent):
    """Adapter that runs one child process per episode and exchanges
    protocol messages with it. Malformed or late replies surface as an
    unparseable token, which the engine records as InvalidAction.
    """

    needs_truth = False

    def __init__(self, command: str, timeout: float = DEFAULT_DECIDE_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self.name = f"cmd:{command}"
        self._proc: subprocess.Popen | None = None
        self._reader: _LineReader | None = None
        self.transcript: list[tuple[str, str]] = []  # (direction, line)

    def reset(self, seed: int) -> None:
        self.close()
        self._proc = subprocess.Popen(
            shlex.split(self.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._reader = _LineReader(self._proc.stdout)
        self.transcript = []

    def _send(self, msg: dict) -> None:
        if self._proc is None or self._proc.stdin is None:
            raise AgentChannelError("external agent not started")
        line = encode_message(msg)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AgentChannelError(f"broken pipe to external agent: {exc}") from exc
        self.transcript.append(("out", line))

    def on_episode_start(self, config: EpisodeConfig) -> None:
        self._send(episode_start_message(config, self.name))

    def decide(self, obs: Observation, world=None) -> str:
        self._send(observation_message(obs))
        try:
            line = self._reader.readline(self.timeout)
        except TimeoutError:
            return ""  # engine records InvalidAction for this step
        if line is None:
            raise AgentChannelError("external agent closed its output")
        self.transcript.append(("in", line.rstrip("\n")))
        token = parse_action_message(line)
        return token if token is not None else ""

    def on_episode_end(self, outcome: str, score: int, steps: int) -> None:
        try:
            self._send(episode_end_message(outcome, score, steps))
        except AgentChannelError:
            pass  # already gone; the episode result stands

    def close(self) -> None:
        if self._proc is not None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None
            self._reader = None

    def outbound_bytes(self) -> str:
        return "\n".join(line for direction, line in self.transcript if direction == "out")
