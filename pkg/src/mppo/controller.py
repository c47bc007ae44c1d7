"""Multi-path policy optimization loop and its baselines.

One iteration of the multi-path loop: min-max normalize the performance and
entropy buffers, score and pick a policy, roll it out for one batch, refresh
its performance from the rollout, fit the shared value network, compute
advantages, run the backend step (TRPO or PPO), then write the improved
policy back and add the surrogate gain to its performance entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .advantage import TrajectoryBatch, compute_gae, fit_value, normalize_advantages
from .errors import ConfigError, InputError
from .neuralnet import Adam, FlatParamNet
from .policy import CategoricalPolicy, GaussianPolicy, Policy
from .ppo import PpoConfig, ppo_step
from .trpo import StepResult, TrpoConfig, trpo_step

GAIN_ESTIMATORS = ("raw", "normalized", "improvement")
MODES = ("single_path", "mppo", "mppo_replace_worst", "multi_shared_value", "multi_independent")


# ---------------------------------------------------------------------------
# Pick rule


def min_max_normalize(values) -> np.ndarray:
    """Affine map onto [0, 1]; a constant vector (including K = 1) maps to all 0.5."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise InputError("min-max normalization needs a non-empty finite vector")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full(v.shape, 0.5)
    return (v - lo) / (hi - lo)


def score(j_hat, h_hat, alpha: float) -> np.ndarray:
    """``(1 - alpha) * j_hat + alpha * h_hat``.  alpha = 1 is accepted only for testing the limit."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    return (1.0 - alpha) * np.asarray(j_hat, dtype=np.float64) + alpha * np.asarray(h_hat, dtype=np.float64)


def pick(J, H, alpha: float) -> tuple[int, np.ndarray]:
    """Index of the highest score (lowest index on ties) and the score vector."""
    s = score(min_max_normalize(J), min_max_normalize(H), alpha)
    return int(np.argmax(s)), s


def theorem1_bound(alpha: float, J_next, sigma: float) -> float:
    """Lower bound on J_j(t+1) - J_i(t) when the pick switches from i to j."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    J_next = np.asarray(J_next, dtype=np.float64)
    return -alpha / (1.0 - alpha) * float(J_next.max() - J_next.min()) + sigma


# ---------------------------------------------------------------------------
# Buffer


@dataclass
class PolicyBuffer:
    policies: list
    J: np.ndarray
    H: np.ndarray
    picked_history: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.policies)

    def replace(self, i: int, new_policy, mode: str = "self") -> int:
        """Store ``new_policy`` (the improved version of slot ``i``); returns the slot written.

        ``self`` overwrites slot ``i``.  ``worst`` overwrites the slot with the
        lowest J (lowest index on ties) and leaves slot ``i`` as it was.
        """
        if not 0 <= i < len(self.policies):
            raise InputError(f"slot {i} out of range")
        if mode == "self":
            target = i
        elif mode == "worst":
            target = int(np.argmin(self.J))
        else:
            raise InputError(f"unknown replacement mode {mode!r}")
        self.policies[target] = new_policy
        return target

    def mean_pairwise_distance(self) -> float:
        if len(self.policies) < 2:
            return 0.0
        flats = [p.params for p in self.policies]
        return float(np.mean([np.linalg.norm(a - b) for a, b in combinations(flats, 2)]))


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class VariantConfig:
    mode: str = "mppo"
    K: int = 8
    alpha: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.mode == "single_path" and self.K != 1:
            object.__setattr__(self, "K", 1)
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "trpo"
    batch_size: int = 5000
    gamma: float = 0.995
    lam: float = 0.97
    value_iters: int = 5
    value_minibatch: int = 64
    value_step_size: float = 1e-3
    hidden: tuple[int, ...] = (64, 64)
    policy_output_scale: float = 0.01
    gain_estimator: str = "improvement"
    trpo: TrpoConfig = field(default_factory=TrpoConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def __post_init__(self):
        if self.algorithm not in ("trpo", "ppo"):
            raise ConfigError(f"algorithm must be trpo or ppo, got {self.algorithm!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.gamma < 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ConfigError("need 0 <= gamma < 1 and 0 <= lam <= 1")
        if self.gain_estimator not in GAIN_ESTIMATORS:
            raise ConfigError(f"gain_estimator must be one of {GAIN_ESTIMATORS}")


def make_policy(env, cfg: TrainConfig, rng: np.random.Generator) -> Policy:
    if env.discrete:
        return CategoricalPolicy(env.obs_dim, env.n_actions, cfg.hidden, rng, cfg.policy_output_scale)
    return GaussianPolicy(env.obs_dim, env.action_dim, cfg.hidden, rng, cfg.policy_output_scale)


def make_value_net(env, cfg: TrainConfig, rng: np.random.Generator) -> FlatParamNet:
    return FlatParamNet([env.obs_dim, *cfg.hidden, 1], rng)


# ---------------------------------------------------------------------------
# Rollouts


@dataclass
class RolloutStats:
    mean_return: float
    std_error: float
    episodes: int


def rollout(env, policy: Policy, n_steps: int, rng: np.random.Generator, visits=None) -> TrajectoryBatch:
    """Collect ``n_steps`` transitions starting from a fresh episode.

    Environments with a finite ``observation_table`` get their action
    distribution evaluated once for all states.  The final step is marked as a
    timeout when its episode is still running.
    """
    obs_dim = env.obs_dim
    states = np.empty((n_steps, obs_dim))
    next_states = np.empty((n_steps, obs_dim))
    actions = np.empty(n_steps, dtype=np.int64) if env.discrete else np.empty((n_steps, env.action_dim))
    rewards = np.zeros(n_steps)
    terminals = np.zeros(n_steps, dtype=bool)
    timeouts = np.zeros(n_steps, dtype=bool)
    episode_returns: list[float] = []

    table = getattr(env, "observation_table", None)
    cdf = None
    if table is not None and env.discrete:
        cdf = np.cumsum(policy.probs(table()), axis=1)

    obs = env.reset(rng)
    ep_ret = 0.0
    for t in range(n_steps):
        states[t] = obs
        if cdf is not None:
            row = cdf[env.state_index()]
            a = min(int(np.searchsorted(row, rng.random(), side="right")), len(row) - 1)
        else:
            a = policy.sample(obs, rng)
        actions[t] = a
        obs, r, term, tout = env.step(a)
        if visits is not None:
            visits.add(env.visit_cell())
        rewards[t] = r
        ep_ret += r
        next_states[t] = obs
        if term or tout:
            terminals[t], timeouts[t] = term, tout
            episode_returns.append(ep_ret)
            ep_ret = 0.0
            if t + 1 < n_steps:
                obs = env.reset(rng)
        elif t == n_steps - 1:
            timeouts[t] = True
    batch = TrajectoryBatch(states, actions, rewards, terminals, timeouts, next_states=next_states,
                            episode_returns=episode_returns)
    batch.old_log_probs = policy.log_prob(states, actions)
    batch.partial_return = ep_ret
    return batch


def rollout_stats(batch: TrajectoryBatch) -> RolloutStats:
    rets = np.asarray(batch.episode_returns, dtype=np.float64)
    if rets.size == 0:
        # no episode finished inside the batch
        return RolloutStats(batch.partial_return, 0.0, 0)
    se = float(rets.std(ddof=1) / math.sqrt(rets.size)) if rets.size > 1 else 0.0
    return RolloutStats(float(rets.mean()), se, int(rets.size))


def evaluate(env, policy: Policy, episodes: int, rng: np.random.Generator) -> list[float]:
    """Undiscounted returns of ``episodes`` greedy episodes."""
    table = getattr(env, "observation_table", None)
    greedy = np.argmax(policy.dist_info(table()), axis=1) if table is not None and env.discrete else None
    returns = []
    for _ in range(episodes):
        obs = env.reset(rng)
        total = 0.0
        while True:
            a = greedy[env.state_index()] if greedy is not None else policy.mode(obs)
            obs, r, term, tout = env.step(a)
            total += r
            if term or tout:
                break
        returns.append(total)
    return returns


# ---------------------------------------------------------------------------
# Per-batch update shared by every mode


def value_targets(value_net: FlatParamNet, batch: TrajectoryBatch, cfg: TrainConfig) -> np.ndarray:
    """Lambda-returns under the current value net, used as regression targets."""
    batch.values = value_net.forward(batch.states)[:, 0]
    batch.next_values = value_net.forward(batch.next_states)[:, 0]
    return compute_gae(batch, cfg.gamma, cfg.lam).returns.copy()


def policy_update(policy: Policy, value_net: FlatParamNet, batch: TrajectoryBatch, cfg: TrainConfig,
                  rng: np.random.Generator) -> StepResult:
    """Advantages from the (already fitted) value net, then one backend step in place.

    The step always uses standardized advantages.  The reported gain depends
    on ``cfg.gain_estimator``: ``normalized`` is the importance-weighted mean
    of the standardized advantages, ``raw`` the same mean over unstandardized
    ones, and ``improvement`` (default) the raw mean minus its value at the
    old parameters, i.e. the surrogate change in return units.
    """
    batch.values = value_net.forward(batch.states)[:, 0]
    batch.next_values = value_net.forward(batch.next_states)[:, 0]
    raw = compute_gae(batch, cfg.gamma, cfg.lam).advantages
    adv = normalize_advantages(raw)
    gain_adv = adv if cfg.gain_estimator == "normalized" else raw
    if cfg.algorithm == "trpo":
        res = trpo_step(policy, batch, cfg.trpo, advantages=adv, gain_advantages=gain_adv)
    else:
        res = ppo_step(policy, batch, cfg.ppo, rng, advantages=adv, gain_advantages=gain_adv)
    if cfg.gain_estimator == "improvement" and res.accepted:
        # the ratio-one surrogate is mean(raw); report the change from it
        res.gain -= float(raw.mean())
    return res


class _ValueFitter:
    def __init__(self, net: FlatParamNet, cfg: TrainConfig):
        self.net = net
        self.cfg = cfg
        self.opt = Adam(net.num_params, lr=cfg.value_step_size)

    def fit(self, states, targets, rng) -> tuple[float, float]:
        c = self.cfg
        return fit_value(self.net, states, targets, c.value_iters, c.value_minibatch, c.value_step_size,
                         rng, self.opt)


@dataclass
class IterationRecord:
    iteration: int
    env_steps: int
    picked: int
    J: np.ndarray
    H: np.ndarray
    scores: np.ndarray
    gain: float
    kl: float
    accepted: bool
    rollout_return: float
    rollout_se: float
    pairwise_distance: float
    switch: dict | None = None


# ---------------------------------------------------------------------------
# Trainers


class SinglePathTrainer:
    """Plain TRPO / PPO: one policy, one value net, no buffer."""

    def __init__(self, env, cfg: TrainConfig, rng_init: np.random.Generator, rng_train: np.random.Generator,
                 visits=None):
        self.env, self.cfg, self.rng, self.visits = env, cfg, rng_train, visits
        self.policy = make_policy(env, cfg, rng_init)
        self.value = _ValueFitter(make_value_net(env, cfg, rng_init), cfg)
        self.iteration = 0
        self.env_steps = 0
        self.J = 0.0
        self.H = self.policy.entropy(env.reset()[None, :])

    @property
    def eval_policy(self) -> Policy:
        return self.policy

    def iterate(self) -> IterationRecord:
        J_pre, H_pre = np.array([self.J]), np.array([self.H])
        batch = rollout(self.env, self.policy, self.cfg.batch_size, self.rng, self.visits)
        self.env_steps += len(batch)
        stats = rollout_stats(batch)
        self.value.fit(batch.states, value_targets(self.value.net, batch, self.cfg), self.rng)
        res = policy_update(self.policy, self.value.net, batch, self.cfg, self.rng)
        self.H = self.policy.entropy(batch.states)
        self.J = stats.mean_return + res.gain
        rec = IterationRecord(self.iteration, self.env_steps, 0, J_pre, H_pre, np.array([0.5]), res.gain,
                              res.kl, res.accepted, stats.mean_return, stats.std_error, 0.0)
        self.iteration += 1
        return rec


class MultiPathTrainer:
    """Policy buffer of K paths; ``variant.mode`` selects MPPO, ReplaceWorst or the Multi baselines."""

    def __init__(self, env, cfg: TrainConfig, variant: VariantConfig, rng_init: np.random.Generator,
                 rng_train: np.random.Generator, visits=None):
        if variant.mode == "single_path":
            raise ConfigError("use SinglePathTrainer for single_path")
        self.env, self.cfg, self.variant, self.rng, self.visits = env, cfg, variant, rng_train, visits
        K = variant.K
        policies = [make_policy(env, cfg, rng_init) for _ in range(K)]
        n_values = K if variant.mode == "multi_independent" else 1
        self.values = [_ValueFitter(make_value_net(env, cfg, rng_init), cfg) for _ in range(n_values)]
        probe = env.reset()[None, :]
        self.buffer = PolicyBuffer(policies, np.zeros(K), np.array([p.entropy(probe) for p in policies]))
        self.iteration = 0
        self.env_steps = 0
        self.last_picked, _ = pick(self.buffer.J, self.buffer.H, variant.alpha)
        self._prev: tuple[int, float, float, float] | None = None  # (index, rollout mean, se, gain)

    @property
    def eval_policy(self) -> Policy:
        return self.buffer.policies[self.last_picked]

    def iterate(self) -> IterationRecord:
        if self.variant.mode in ("multi_shared_value", "multi_independent"):
            return self._iterate_multi()
        return self._iterate_mppo()

    def _iterate_mppo(self) -> IterationRecord:
        buf, alpha = self.buffer, self.variant.alpha
        J_pre, H_pre = buf.J.copy(), buf.H.copy()
        i, scores = pick(buf.J, buf.H, alpha)
        buf.picked_history.append((self.iteration, i))
        policy = buf.policies[i]

        batch = rollout(self.env, policy, self.cfg.batch_size, self.rng, self.visits)
        self.env_steps += len(batch)
        stats = rollout_stats(batch)
        buf.J[i] = stats.mean_return

        switch = None
        if self._prev is not None and self._prev[0] != i:
            pi, p_mean, p_se, p_gain = self._prev
            switch = {
                "from": pi, "to": i,
                "measured_delta": stats.mean_return - p_mean,
                "theorem1_bound": theorem1_bound(alpha, J_pre, p_gain),
                "buffer_delta": J_pre[i] - p_mean,
                "eps_est": 2.0 * math.sqrt(p_se ** 2 + stats.std_error ** 2),
            }

        self.values[0].fit(batch.states, value_targets(self.values[0].net, batch, self.cfg), self.rng)
        replace_worst = self.variant.mode == "mppo_replace_worst"
        new_policy = policy.copy() if replace_worst else policy
        res = policy_update(new_policy, self.values[0].net, batch, self.cfg, self.rng)
        new_H = new_policy.entropy(batch.states)

        if replace_worst:
            old_H = policy.entropy(batch.states)
            target = buf.replace(i, new_policy, "worst")
            if target != i:
                buf.H[i] = old_H
        else:
            target = buf.replace(i, new_policy, "self")
        buf.H[target] = new_H
        buf.J[target] = stats.mean_return + res.gain
        self.last_picked = target
        self._prev = (target, stats.mean_return, stats.std_error, res.gain)

        rec = IterationRecord(self.iteration, self.env_steps, i, J_pre, H_pre, scores, res.gain, res.kl,
                              res.accepted, stats.mean_return, stats.std_error, buf.mean_pairwise_distance(),
                              switch)
        self.iteration += 1
        return rec

    def _iterate_multi(self) -> IterationRecord:
        buf, K = self.buffer, self.variant.K
        J_pre, H_pre = buf.J.copy(), buf.H.copy()
        sizes = [self.cfg.batch_size // K + (1 if k < self.cfg.batch_size % K else 0) for k in range(K)]
        batches = [rollout(self.env, buf.policies[k], sizes[k], self.rng, self.visits) for k in range(K)]
        self.env_steps += sum(sizes)
        stats = [rollout_stats(b) for b in batches]
        if len(self.values) == 1:
            targets = [value_targets(self.values[0].net, b, self.cfg) for b in batches]
            self.values[0].fit(np.concatenate([b.states for b in batches]), np.concatenate(targets), self.rng)
        else:
            for k, b in enumerate(batches):
                self.values[k].fit(b.states, value_targets(self.values[k].net, b, self.cfg), self.rng)
        results = []
        for k, b in enumerate(batches):
            net = self.values[0 if len(self.values) == 1 else k].net
            res = policy_update(buf.policies[k], net, b, self.cfg, self.rng)
            buf.J[k] = stats[k].mean_return + res.gain
            buf.H[k] = buf.policies[k].entropy(b.states)
            results.append(res)
        best = int(np.argmax(buf.J))
        buf.picked_history.append((self.iteration, best))
        self.last_picked = best
        rec = IterationRecord(self.iteration, self.env_steps, best, J_pre, H_pre, np.zeros(K),
                              results[best].gain, results[best].kl, results[best].accepted,
                              stats[best].mean_return, stats[best].std_error, buf.mean_pairwise_distance())
        self.iteration += 1
        return rec


def make_trainer(env, cfg: TrainConfig, variant: VariantConfig, rng_init, rng_train, visits=None):
    if variant.mode == "single_path":
        return SinglePathTrainer(env, cfg, rng_init, rng_train, visits)
    return MultiPathTrainer(env, cfg, variant, rng_init, rng_train, visits)
