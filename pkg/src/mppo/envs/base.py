"""Episodic environment protocol and state-visitation counts."""

from __future__ import annotations

from typing import Protocol

import numpy as np


class EpisodicEnv(Protocol):
    obs_dim: int
    discrete: bool
    n_actions: int  # discrete envs only
    action_dim: int  # continuous envs only
    max_episode_steps: int

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray: ...

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        """Returns ``(observation, reward, terminal, timeout)``."""
        ...

    def visit_cell(self) -> tuple[int, int]: ...


class VisitationLog:
    """2-d visit counts; cell coordinates come from :meth:`EpisodicEnv.visit_cell`."""

    def __init__(self, shape: tuple[int, int] = (21, 21)):
        self.counts = np.zeros(shape, dtype=np.int64)

    def add(self, cell: tuple[int, int]) -> None:
        self.counts[cell] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        """``(row, col, count)`` for every cell, row-major."""
        for (r, c), n in np.ndenumerate(self.counts):
            yield r, c, int(n)
