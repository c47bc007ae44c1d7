"""Sparse-reward 21x21 gridworld maze."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import InputError, StateError

# up, down, left, right as (d_row, d_col)
MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])


def default_layout() -> str:
    return resources.files("mppo.envs").joinpath("layouts/maze21.txt").read_text()


def parse_layout(text: str, size: int = 21) -> tuple[np.ndarray, tuple[int, int], tuple[int, int]]:
    """Parse a text grid of ``#``, ``.``, ``S``, ``G``; returns (wall mask, start, goal)."""
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    if len(lines) != size or any(len(ln) != size for ln in lines):
        raise InputError(f"maze layout must be exactly {size}x{size}")
    walls = np.zeros((size, size), dtype=bool)
    start = goal = None
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == "#":
                walls[r, c] = True
            elif ch == "S":
                start = (r, c)
            elif ch == "G":
                goal = (r, c)
            elif ch != ".":
                raise InputError(f"unexpected character {ch!r} at row {r}, col {c}")
    if start is None or goal is None:
        raise InputError("layout needs exactly one S and one G")
    return walls, start, goal


class MazeEnv:
    """Deterministic maze; reward 1 and termination on reaching G, timeout at 1000 steps.

    Observations are ``(row, col) / (size - 1)``.  Moves into a wall or off the
    grid leave the agent in place.
    """

    discrete = True
    obs_dim = 2
    n_actions = 4

    def __init__(self, layout: str | None = None, max_episode_steps: int = 1000):
        self.walls, self.start, self.goal = parse_layout(layout if layout is not None else default_layout())
        self.size = self.walls.shape[0]
        self.max_episode_steps = max_episode_steps
        self.pos = self.start
        self.t = 0
        self.done = True
        free = np.argwhere(~self.walls)
        self._index = -np.ones(self.walls.shape, dtype=np.int64)
        self._index[free[:, 0], free[:, 1]] = np.arange(len(free))
        self._table = free / (self.size - 1.0)

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "MazeEnv":
        return cls(Path(path).read_text(), **kwargs)

    def observe(self, pos: tuple[int, int] | None = None) -> np.ndarray:
        r, c = self.pos if pos is None else pos
        return np.array([r, c], dtype=np.float64) / (self.size - 1.0)

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.pos = self.start
        self.t = 0
        self.done = False
        return self.observe()

    def move(self, pos: tuple[int, int], action: int) -> tuple[int, int]:
        r, c = pos[0] + MOVES[action][0], pos[1] + MOVES[action][1]
        if 0 <= r < self.size and 0 <= c < self.size and not self.walls[r, c]:
            return int(r), int(c)
        return pos

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        if self.done:
            raise StateError("step() called on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action < 4:
            raise InputError(f"maze action must be 0..3, got {action}")
        self.pos = self.move(self.pos, action)
        self.t += 1
        terminal = self.pos == self.goal
        timeout = not terminal and self.t >= self.max_episode_steps
        self.done = terminal or timeout
        return self.observe(), float(terminal), terminal, timeout

    # Finite state space: rollouts evaluate the policy once per free cell.
    def observation_table(self) -> np.ndarray:
        return self._table

    def state_index(self) -> int:
        return int(self._index[self.pos])

    def visit_cell(self) -> tuple[int, int]:
        return self.pos
