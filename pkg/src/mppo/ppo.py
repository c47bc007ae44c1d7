"""Clipped-surrogate policy step optimized with minibatch Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .advantage import TrajectoryBatch
from .errors import ConfigError, NumericalError
from .neuralnet import Adam
from .policy import Policy
from .trpo import StepResult, surrogate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    epochs: int = 10
    minibatch: int = 64
    step_size: float = 3e-4
    max_grad_norm: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError("clip_eps must lie in (0, 1)")
        if self.epochs < 1 or self.minibatch < 1:
            raise ConfigError("epochs and minibatch must be >= 1")


def clipped_objective(ratio: np.ndarray, advantages: np.ndarray, clip_eps: float) -> np.ndarray:
    """Per-sample ``min(r A, clip(r, 1 - eps, 1 + eps) A)``."""
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages)


def clipped_loss(policy: Policy, batch: TrajectoryBatch, clip_eps: float,
                 advantages: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean clipped objective and its (sub)gradient; clipped samples contribute no gradient."""
    if advantages is None:
        advantages = batch.advantages
    ratio = np.exp(policy.log_prob(batch.states, batch.actions) - batch.old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    loss = float(np.mean(np.minimum(unclipped, clipped)))
    if not np.isfinite(loss):
        raise NumericalError("non-finite clipped objective")
    active = unclipped <= clipped
    weights = np.where(active, unclipped, 0.0) / len(ratio)
    return loss, policy.grad_log_prob(batch.states, batch.actions, weights)


def ppo_step(policy: Policy, batch: TrajectoryBatch, cfg: PpoConfig, rng: np.random.Generator,
             advantages: np.ndarray | None = None,
             gain_advantages: np.ndarray | None = None) -> StepResult:
    """Maximize the clipped objective for ``cfg.epochs`` shuffled passes, in place.

    The reported gain is the unclipped importance-weighted mean of
    ``gain_advantages`` at the final parameters, the same estimator the TRPO
    step reports.
    """
    if advantages is None:
        advantages = batch.advantages
    if gain_advantages is None:
        gain_advantages = advantages
    theta_old = policy.get_flat()
    old_info = policy.dist_info(batch.states)
    opt = Adam(policy.num_params, lr=cfg.step_size)
    n = len(batch)
    n_batches = math.ceil(n / cfg.minibatch)
    try:
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for b in range(n_batches):
                idx = order[b * cfg.minibatch:(b + 1) * cfg.minibatch]
                _, grad = clipped_loss(policy, batch.subset(idx), cfg.clip_eps, advantages[idx])
                norm = float(np.linalg.norm(grad))
                if not np.isfinite(norm):
                    raise NumericalError("non-finite PPO gradient")
                if norm > cfg.max_grad_norm:
                    grad *= cfg.max_grad_norm / norm
                opt.step(policy.params, -grad)
        gain = surrogate(policy, batch, gain_advantages)
        kl = policy.kl_from(old_info, batch.states)
        if not (np.isfinite(gain) and np.isfinite(kl)):
            raise NumericalError("non-finite result after PPO step")
    except NumericalError as exc:
        log.warning("PPO step reverted: %s", exc)
        policy.set_flat(theta_old)
        return StepResult(0.0, 0.0, False)
    return StepResult(gain, kl, True)
