"""Trust-region policy step: natural gradient by conjugate gradient plus backtracking line search."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .advantage import TrajectoryBatch
from .errors import ConfigError, InputError, NumericalError
from .policy import Policy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrpoConfig:
    max_kl: float = 0.01
    cg_iters: int = 20
    cg_damping: float = 0.1
    backtrack_coef: float = 0.5
    max_backtracks: int = 10
    fvp_eps: float = 1e-4

    def __post_init__(self):
        if self.max_kl <= 0:
            raise ConfigError("max_kl must be positive")
        if self.cg_iters < 1:
            raise ConfigError("cg_iters must be >= 1")
        if not 0.0 < self.backtrack_coef < 1.0:
            raise ConfigError("backtrack_coef must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ConfigError("max_backtracks must be >= 1")


@dataclass
class StepResult:
    gain: float
    kl: float
    accepted: bool
    improvement: float = 0.0


def surrogate(policy: Policy, batch: TrajectoryBatch, advantages: np.ndarray) -> float:
    """Importance-weighted advantage mean at the policy's current parameters."""
    ratio = np.exp(policy.log_prob(batch.states, batch.actions) - batch.old_log_probs)
    return float(np.mean(ratio * advantages))


def surrogate_and_grad(policy: Policy, batch: TrajectoryBatch,
                       advantages: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    if advantages is None:
        advantages = batch.advantages
    ratio = np.exp(policy.log_prob(batch.states, batch.actions) - batch.old_log_probs)
    loss = float(np.mean(ratio * advantages))
    if not np.isfinite(loss):
        raise NumericalError("non-finite surrogate")
    grad = policy.grad_log_prob(batch.states, batch.actions, ratio * advantages / len(advantages))
    return loss, grad


def fisher_vector_product(policy: Policy, old_info, states: np.ndarray, v: np.ndarray,
                          damping: float, eps: float = 1e-4, weights: np.ndarray | None = None) -> np.ndarray:
    """Hessian of mean KL(old || .) at the current parameters applied to ``v``, plus damping.

    Central difference of the analytic KL gradient along the unit direction
    ``v / |v|`` with step ``eps``, rescaled by ``|v|``.  The policy is
    restored to its original parameters before returning.
    """
    if v.shape != (policy.num_params,):
        raise InputError(f"vector length {v.shape} does not match {policy.num_params} parameters")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return np.zeros_like(v)
    theta = policy.get_flat()
    u = v / norm
    try:
        policy.set_flat(theta + eps * u)
        _, g_plus = policy.kl_grad_from(old_info, states, weights)
        policy.set_flat(theta - eps * u)
        _, g_minus = policy.kl_grad_from(old_info, states, weights)
    finally:
        policy.set_flat(theta)
    hv = (g_plus - g_minus) * (norm / (2.0 * eps)) + damping * v
    if not np.all(np.isfinite(hv)):
        raise NumericalError("non-finite Fisher-vector product")
    return hv


def conjugate_gradient(avp: Callable[[np.ndarray], np.ndarray], b: np.ndarray, iters: int,
                       residual_tol: float = 1e-20) -> np.ndarray:
    """Approximately solve ``A x = b`` for symmetric positive-definite ``A`` given as a product."""
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = float(r @ r)
    for _ in range(iters):
        if rr <= residual_tol:
            break
        ap = avp(p)
        curv = float(p @ ap)
        if curv <= 1e-30 * max(1.0, float(p @ p)):
            break
        step = rr / curv
        x += step * p
        r -= step * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def natural_step(grad: np.ndarray, fvp: Callable[[np.ndarray], np.ndarray], cfg: TrpoConfig) -> np.ndarray:
    """Full trust-region step ``sqrt(2 delta / x^T H x) * x`` with ``x = H^-1 g`` from CG."""
    x = conjugate_gradient(fvp, grad, cfg.cg_iters)
    xhx = float(x @ fvp(x))
    if not np.isfinite(xhx):
        raise NumericalError("non-finite curvature along the search direction")
    if xhx <= 0.0:
        return np.zeros_like(x)
    return np.sqrt(2.0 * cfg.max_kl / xhx) * x


def distinct_states(states: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Distinct rows with their frequencies when that at least halves the batch, else ``(states, None)``."""
    uniq, counts = np.unique(states, axis=0, return_counts=True)
    if 2 * len(uniq) > len(states):
        return states, None
    return uniq, counts / len(states)


def trpo_step(policy: Policy, batch: TrajectoryBatch, cfg: TrpoConfig,
              advantages: np.ndarray | None = None, gain_advantages: np.ndarray | None = None,
              fvp: Callable[[np.ndarray], np.ndarray] | None = None) -> StepResult:
    """Update ``policy`` in place by one TRPO step on ``batch``.

    ``advantages`` drive the update (default ``batch.advantages``);
    ``gain_advantages`` are used for the reported gain, the surrogate of the
    accepted parameters.  A step is accepted on the first backtrack with
    positive surrogate improvement and mean KL <= max_kl; otherwise the
    policy is left untouched and the gain is 0.
    """
    if advantages is None:
        advantages = batch.advantages
    if gain_advantages is None:
        gain_advantages = advantages
    theta_old = policy.get_flat()
    kl_states, kl_weights = distinct_states(batch.states)
    old_info = policy.dist_info(kl_states)
    try:
        loss_old, grad = surrogate_and_grad(policy, batch, advantages)
        if not np.any(grad):
            return StepResult(0.0, 0.0, False)
        if fvp is None:
            def fvp(v):
                return fisher_vector_product(policy, old_info, kl_states, v, cfg.cg_damping, cfg.fvp_eps,
                                             kl_weights)
        full = natural_step(grad, fvp, cfg)
        for j in range(cfg.max_backtracks):
            policy.set_flat(theta_old + cfg.backtrack_coef ** j * full)
            improvement = surrogate(policy, batch, advantages) - loss_old
            kl = policy.kl_from(old_info, kl_states, kl_weights)
            if not (np.isfinite(improvement) and np.isfinite(kl)):
                raise NumericalError("non-finite value in line search")
            if improvement > 0.0 and kl <= cfg.max_kl:
                gain = surrogate(policy, batch, gain_advantages)
                return StepResult(gain, kl, True, improvement)
    except NumericalError as exc:
        log.warning("TRPO step aborted: %s", exc)
    policy.set_flat(theta_old)
    return StepResult(0.0, 0.0, False)
