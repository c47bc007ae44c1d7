"""Stochastic policies on top of :class:`FlatParamNet`.

Both families expose the same surface: log-probabilities and their gradient
w.r.t. the flat parameter vector, entropy, mean KL(old || current) with its
gradient, sampling and a greedy ``mode``.  "Distribution info" is the raw
network output (logits, or mean plus log-std) frozen at some parameter
vector; TRPO and PPO keep it around for the old policy.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .neuralnet import FlatParamNet

LOG_2PI = float(np.log(2.0 * np.pi))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class CategoricalPolicy:
    """Softmax over ``n_actions`` logits produced by an MLP."""

    discrete = True

    def __init__(self, obs_dim: int, n_actions: int, hidden: tuple[int, ...] = (64, 64),
                 rng: np.random.Generator | None = None, output_scale: float = 0.01):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.net = FlatParamNet([obs_dim, *hidden, n_actions], rng, output_scale)
        self.params = self.net.params

    @property
    def num_params(self) -> int:
        return self.params.size

    def get_flat(self) -> np.ndarray:
        return self.params.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        self.net.set_flat(flat)

    def copy(self) -> "CategoricalPolicy":
        new = CategoricalPolicy.__new__(CategoricalPolicy)
        new.obs_dim, new.n_actions = self.obs_dim, self.n_actions
        new.net = self.net.copy()
        new.params = new.net.params
        return new

    def dist_info(self, states: np.ndarray) -> np.ndarray:
        return np.atleast_2d(self.net.forward(states))

    def probs(self, states: np.ndarray) -> np.ndarray:
        return np.exp(_log_softmax(self.dist_info(states)))

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if not np.all(np.isfinite(states)):
            raise InputError("non-finite state")
        logp = _log_softmax(self.dist_info(states))
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        if np.any((actions < 0) | (actions >= self.n_actions)):
            raise InputError(f"action outside 0..{self.n_actions - 1}")
        return logp[np.arange(len(actions)), actions]

    def grad_log_prob(self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Gradient of ``sum_n weights[n] * log pi(actions[n] | states[n])``."""
        logits, acts = self.net.forward_cached(states)
        p = np.exp(_log_softmax(logits))
        cot = -p * weights[:, None]
        cot[np.arange(len(actions)), actions] += weights
        return self.net.backward_cached(acts, cot)

    def entropy(self, states: np.ndarray | None = None) -> float:
        if states is None or len(np.atleast_2d(states)) == 0:
            raise InputError("categorical entropy needs a non-empty batch of states")
        logp = _log_softmax(self.dist_info(states))
        return float(-(np.exp(logp) * logp).sum(axis=1).mean())

    def kl_from(self, old_info: np.ndarray, states: np.ndarray, weights: np.ndarray | None = None) -> float:
        logq_old = _log_softmax(old_info)
        logp_new = _log_softmax(self.dist_info(states))
        return _average((np.exp(logq_old) * (logq_old - logp_new)).sum(axis=1), weights)

    def kl_grad_from(self, old_info: np.ndarray, states: np.ndarray,
                     weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        """Mean KL(old || current) over ``states`` and its gradient w.r.t. the current parameters.

        ``weights`` (summing to one) turn the mean into a weighted average, so a
        batch can be passed as its distinct states plus their frequencies.
        """
        logits, acts = self.net.forward_cached(states)
        logp_new = _log_softmax(logits)
        logq_old = _log_softmax(old_info)
        q_old = np.exp(logq_old)
        w = _weights(weights, len(logits))
        kl = float(w @ (q_old * (logq_old - logp_new)).sum(axis=1))
        cot = (np.exp(logp_new) - q_old) * w[:, None]
        return kl, self.net.backward_cached(acts, cot)

    def sample(self, state: np.ndarray, rng: np.random.Generator) -> int:
        return sample_categorical(self.probs(state)[0], rng)

    def mode(self, state: np.ndarray) -> int:
        return int(np.argmax(self.dist_info(state)[0]))


def sample_categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw consuming exactly one uniform from ``rng``."""
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(idx, len(p) - 1)


class GaussianPolicy:
    """Diagonal Gaussian with MLP mean and a state-independent log-std.

    The flat parameter vector is the mean network's parameters followed by
    the ``action_dim`` log-std entries.
    """

    discrete = False

    def __init__(self, obs_dim: int, action_dim: int, hidden: tuple[int, ...] = (64, 64),
                 rng: np.random.Generator | None = None, output_scale: float = 0.01,
                 init_log_std: float = 0.0):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.net = FlatParamNet([obs_dim, *hidden, action_dim], rng, output_scale)
        self._own(np.concatenate([self.net.params, np.full(action_dim, float(init_log_std))]))

    def _own(self, flat: np.ndarray) -> None:
        self.params = flat
        n = self.net.num_params
        self.net.params = flat[:n]
        self.net._bind_views()
        self.log_std = flat[n:]

    @property
    def num_params(self) -> int:
        return self.params.size

    def get_flat(self) -> np.ndarray:
        return self.params.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise InputError(f"expected flat vector of length {self.params.size}, got shape {flat.shape}")
        self.params[...] = flat

    def copy(self) -> "GaussianPolicy":
        new = GaussianPolicy.__new__(GaussianPolicy)
        new.obs_dim, new.action_dim = self.obs_dim, self.action_dim
        new.net = FlatParamNet(self.net.layer_sizes)
        new._own(self.params.copy())
        return new

    def dist_info(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.atleast_2d(self.net.forward(states)), self.log_std.copy()

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if not np.all(np.isfinite(states)):
            raise InputError("non-finite state")
        mean, log_std = self.dist_info(states)
        actions = np.asarray(actions, dtype=np.float64).reshape(mean.shape)
        z = (actions - mean) * np.exp(-log_std)
        return -0.5 * (z * z).sum(axis=1) - log_std.sum() - 0.5 * self.action_dim * LOG_2PI

    def grad_log_prob(self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray) -> np.ndarray:
        mean, acts = self.net.forward_cached(states)
        actions = np.asarray(actions, dtype=np.float64).reshape(mean.shape)
        inv_var = np.exp(-2.0 * self.log_std)
        diff = actions - mean
        g_net = self.net.backward_cached(acts, weights[:, None] * diff * inv_var)
        g_std = (weights[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
        return np.concatenate([g_net, g_std])

    def entropy(self, states: np.ndarray | None = None) -> float:
        return float(self.log_std.sum() + 0.5 * self.action_dim * (LOG_2PI + 1.0))

    def kl_from(self, old_info: tuple[np.ndarray, np.ndarray], states: np.ndarray,
                weights: np.ndarray | None = None) -> float:
        mu_o, ls_o = old_info
        mu_n, ls_n = self.dist_info(states)
        return _average(_gauss_kl(mu_o, ls_o, mu_n, ls_n), weights)

    def kl_grad_from(self, old_info: tuple[np.ndarray, np.ndarray], states: np.ndarray,
                     weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        mu_o, ls_o = old_info
        mu_n, acts = self.net.forward_cached(states)
        ls_n = self.log_std
        w = _weights(weights, len(mu_n))
        kl = float(w @ _gauss_kl(mu_o, ls_o, mu_n, ls_n))
        inv_var_n = np.exp(-2.0 * ls_n)
        g_net = self.net.backward_cached(acts, (mu_n - mu_o) * inv_var_n * w[:, None])
        ratio = (np.exp(2.0 * ls_o) + (mu_o - mu_n) ** 2) * inv_var_n
        g_std = w @ (1.0 - ratio)
        return kl, np.concatenate([g_net, g_std])

    def sample(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mean = self.net.forward(state)
        return mean + np.exp(self.log_std) * rng.standard_normal(self.action_dim)

    def mode(self, state: np.ndarray) -> np.ndarray:
        return self.net.forward(state)


def _weights(weights: np.ndarray | None, n: int) -> np.ndarray:
    return np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)


def _average(values: np.ndarray, weights: np.ndarray | None) -> float:
    return float(values.mean()) if weights is None else float(weights @ values)


def _gauss_kl(mu_o, ls_o, mu_n, ls_n) -> np.ndarray:
    """Per-state KL(N(mu_o, e^ls_o) || N(mu_n, e^ls_n)), summed over action dims."""
    var_o = np.exp(2.0 * ls_o)
    var_n = np.exp(2.0 * ls_n)
    per_dim = ls_n - ls_o + (var_o + (mu_o - mu_n) ** 2) / (2.0 * var_n) - 0.5
    return per_dim.sum(axis=-1)


Policy = CategoricalPolicy | GaussianPolicy


def kl(old: Policy, new: Policy, states: np.ndarray) -> float:
    """Mean over ``states`` of KL(old || new)."""
    if type(old) is not type(new) or old.num_params != new.num_params:
        raise InputError("KL needs two policies of the same family and shape")
    return new.kl_from(old.dist_info(states), states)
