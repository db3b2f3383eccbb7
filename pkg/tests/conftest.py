from __future__ import annotations

from pathlib import Path

import pytest

from gridlab.world import EpisodeConfig
from gridlab.worldgen import parse_map

FIXTURES = Path(__file__).parent / "fixtures"


def make_world(rows, col, row, facing="E", **overrides):
    """Hand-built world from glyph rows; streams seeded from the config."""
    cfg = EpisodeConfig(grid_size=len(rows), **overrides)
    text = "\n".join(rows) + f"\nagent {col} {row} {facing}\n"
    return parse_map(text, cfg)


class StubStream:
    """Deterministic stand-in for RngStream in unit tests: random() pops
    `randoms`, choice()/randrange() pop indices from `picks`."""

    def __init__(self, randoms=(), picks=()):
        self.randoms = list(randoms)
        self.picks = list(picks)
        self.counter = 0

    def random(self):
        self.counter += 1
        return self.randoms.pop(0)

    def chance(self, p):
        return self.random() < p

    def randrange(self, n):
        self.counter += 1
        return self.picks.pop(0) % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]


@pytest.fixture
def fixtures_dir():
    return FIXTURES
