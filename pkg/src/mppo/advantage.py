"""Rollout batches, generalized advantage estimation and value regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, StateError
from .neuralnet import Adam, FlatParamNet


@dataclass
class TrajectoryBatch:
    """One rollout of N environment steps.

    ``terminals[t]`` marks a true episode end (bootstrap 0); ``timeouts[t]``
    marks truncation by the step cap or by the end of the batch, where the
    value of ``next_states[t]`` is used as bootstrap.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    timeouts: np.ndarray
    next_states: np.ndarray | None = None
    old_log_probs: np.ndarray | None = None
    values: np.ndarray | None = None
    next_values: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list[float] = field(default_factory=list)
    partial_return: float = 0.0

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("states", "actions", "terminals", "timeouts"):
            if len(getattr(self, name)) != n:
                raise InputError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.rewards)

    def subset(self, idx: np.ndarray) -> "TrajectoryBatch":
        """Row subset for minibatching; episode bookkeeping is dropped."""
        def pick(a):
            return None if a is None else a[idx]
        return TrajectoryBatch(
            states=self.states[idx], actions=self.actions[idx], rewards=self.rewards[idx],
            terminals=self.terminals[idx], timeouts=self.timeouts[idx],
            next_states=pick(self.next_states), old_log_probs=pick(self.old_log_probs),
            values=pick(self.values), next_values=pick(self.next_values),
            advantages=pick(self.advantages), returns=pick(self.returns),
        )


def gae(rewards: np.ndarray, values: np.ndarray, next_values: np.ndarray, terminals: np.ndarray,
        timeouts: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """Backward GAE recursion, reset at every terminal or timeout."""
    not_terminal = 1.0 - terminals.astype(np.float64)
    not_done = 1.0 - (terminals | timeouts).astype(np.float64)
    deltas = rewards + gamma * not_terminal * next_values - values
    adv = np.empty_like(deltas)
    running = 0.0
    decay = gamma * lam
    for t in range(len(deltas) - 1, -1, -1):
        running = deltas[t] + decay * not_done[t] * running
        adv[t] = running
    return adv


def compute_gae(batch: TrajectoryBatch, gamma: float, lam: float,
                bootstrap_value: float | None = None) -> TrajectoryBatch:
    """Fill ``batch.advantages`` and ``batch.returns`` (= advantages + values).

    Without ``batch.next_values`` the next-state values are read off the
    shifted ``values`` array, with ``bootstrap_value`` after the last step;
    that is only valid when no episode boundary falls inside the batch.
    """
    if not 0.0 <= gamma < 1.0 or not 0.0 <= lam <= 1.0:
        raise InputError(f"need 0 <= gamma < 1 and 0 <= lam <= 1, got gamma={gamma}, lam={lam}")
    if batch.values is None:
        raise StateError("values must be filled before computing advantages")
    values = np.asarray(batch.values, dtype=np.float64)
    next_values = batch.next_values
    if next_values is None:
        if np.any(batch.timeouts[:-1]):
            raise StateError("internal truncations need explicit next_values")
        next_values = np.append(values[1:], 0.0 if bootstrap_value is None else bootstrap_value)
    batch.advantages = gae(np.asarray(batch.rewards, dtype=np.float64), values,
                           np.asarray(next_values, dtype=np.float64),
                           np.asarray(batch.terminals, dtype=bool), np.asarray(batch.timeouts, dtype=bool),
                           gamma, lam)
    batch.returns = batch.advantages + values
    return batch


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + eps)


def value_loss(net: FlatParamNet, states: np.ndarray, targets: np.ndarray) -> float:
    pred = net.forward(states)[:, 0]
    return float(np.mean((pred - targets) ** 2))


def fit_value(net: FlatParamNet, states: np.ndarray, targets: np.ndarray, iterations: int,
              minibatch: int, step_size: float, rng: np.random.Generator,
              optimizer: Adam | None = None) -> tuple[float, float]:
    """Mean-squared-error regression of ``net`` onto ``targets`` with Adam.

    Runs ``iterations`` shuffled epochs of ``ceil(N / minibatch)`` steps each and
    returns the full-batch loss before and after.  Pass a persistent
    ``optimizer`` to keep moment estimates across calls.
    """
    if iterations < 1:
        raise InputError("iterations must be >= 1")
    if optimizer is None:
        optimizer = Adam(net.num_params, lr=step_size)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(targets)
    before = value_loss(net, states, targets)
    n_batches = math.ceil(n / minibatch)
    for _ in range(iterations):
        order = rng.permutation(n)
        for b in range(n_batches):
            idx = order[b * minibatch:(b + 1) * minibatch]
            pred, acts = net.forward_cached(states[idx])
            cot = 2.0 * (pred - targets[idx, None]) / len(idx)
            optimizer.step(net.params, net.backward_cached(acts, cot))
    return before, value_loss(net, states, targets)
