import numpy as np
import pytest

from conftest import rel_err
from mppo.advantage import TrajectoryBatch, normalize_advantages
from mppo.errors import ConfigError, InputError
from mppo.policy import CategoricalPolicy, GaussianPolicy, kl
from mppo.trpo import (TrpoConfig, conjugate_gradient, fisher_vector_product, natural_step, surrogate,
                       surrogate_and_grad, trpo_step)


def synthetic_batch(policy, rng, n=64, n_states=2, continuous=False):
    """Rollout-like batch on a tiny MDP with one-hot (or Gaussian) states and random advantages."""
    if continuous:
        S = rng.normal(size=(n, policy.obs_dim))
    else:
        S = np.eye(n_states)[rng.integers(0, n_states, size=n)]
    A = np.array([policy.sample(s, rng) for s in S])
    b = TrajectoryBatch(states=S, actions=A, rewards=np.zeros(n), terminals=np.zeros(n, bool),
                        timeouts=np.zeros(n, bool))
    b.old_log_probs = policy.log_prob(S, A)
    b.advantages = normalize_advantages(rng.normal(size=n))
    return b


def test_config_validation():
    for bad in (dict(max_kl=0), dict(cg_iters=0), dict(backtrack_coef=1.0), dict(max_backtracks=0)):
        with pytest.raises(ConfigError):
            TrpoConfig(**bad)


def test_zero_advantages_no_step(rng):
    pol = CategoricalPolicy(2, 2, hidden=(8,), rng=rng)
    b = synthetic_batch(pol, rng)
    b.advantages = np.zeros(len(b))
    loss, g = surrogate_and_grad(pol, b)
    assert loss == 0.0 and not np.any(g)
    before = pol.get_flat()
    res = trpo_step(pol, b, TrpoConfig())
    assert (res.gain, res.accepted) == (0.0, False)
    np.testing.assert_array_equal(pol.get_flat(), before)


def test_ratio_one_surrogate_is_mean_advantage(rng):
    pol = GaussianPolicy(3, 2, hidden=(8,), rng=rng)
    b = synthetic_batch(pol, rng, continuous=True)
    assert abs(surrogate_and_grad(pol, b)[0]) <= 1e-12


@pytest.mark.parametrize("continuous", [False, True])
def test_surrogate_gradient_directional_differences(rng, continuous):
    pol = (GaussianPolicy(3, 2, hidden=(8,), rng=rng, output_scale=1.0) if continuous
           else CategoricalPolicy(2, 3, hidden=(8,), rng=rng, output_scale=1.0))
    b = synthetic_batch(pol, rng, continuous=continuous)
    theta = pol.get_flat() + 0.05 * rng.normal(size=pol.num_params)
    pol.set_flat(theta)
    _, g = surrogate_and_grad(pol, b)
    h = 1e-5
    for _ in range(50):
        d = rng.normal(size=pol.num_params)
        d /= np.linalg.norm(d)
        pol.set_flat(theta + h * d)
        up = surrogate(pol, b, b.advantages)
        pol.set_flat(theta - h * d)
        down = surrogate(pol, b, b.advantages)
        pol.set_flat(theta)
        fd = (up - down) / (2 * h)
        assert abs(fd - g @ d) <= 1e-3 * max(abs(fd), abs(g @ d), 1e-6)


def test_fvp_zero_vector(rng):
    pol = CategoricalPolicy(2, 2, hidden=(4,), rng=rng)
    S = np.eye(2)
    assert not np.any(fisher_vector_product(pol, pol.dist_info(S), S, np.zeros(pol.num_params), 0.1))


def test_fvp_wrong_length(rng):
    pol = CategoricalPolicy(2, 2, hidden=(4,), rng=rng)
    with pytest.raises(InputError):
        fisher_vector_product(pol, pol.dist_info(np.eye(2)), np.eye(2), np.zeros(3), 0.1)


def categorical_fisher(pol, S):
    """Exact mean Fisher matrix J^T (diag p - p p^T) J, with the logit Jacobian J read off backward passes."""
    P = pol.num_params
    F = np.zeros((P, P))
    for s in S:
        J = np.stack([pol.net.backward(s, np.eye(pol.n_actions)[a]) for a in range(pol.n_actions)])
        p = pol.probs(s)[0]
        F += J.T @ (np.diag(p) - np.outer(p, p)) @ J
    return F / len(S)


def test_fvp_matches_exact_fisher(rng):
    pol = CategoricalPolicy(3, 3, hidden=(5,), rng=rng, output_scale=1.0)
    S = rng.normal(size=(7, 3))
    F = categorical_fisher(pol, S)
    old = pol.dist_info(S)
    for _ in range(5):
        v = rng.normal(size=pol.num_params)
        got = fisher_vector_product(pol, old, S, v, damping=0.0)
        assert rel_err(got, F @ v) <= 1e-3 or np.linalg.norm(got - F @ v) <= 1e-6 * np.linalg.norm(F @ v)


@pytest.mark.parametrize("continuous", [False, True])
def test_fvp_two_epsilon_consistency(rng, continuous):
    pol = (GaussianPolicy(3, 2, hidden=(8,), rng=rng, output_scale=1.0) if continuous
           else CategoricalPolicy(3, 4, hidden=(8,), rng=rng, output_scale=1.0))
    S = rng.normal(size=(20, 3))
    old = pol.dist_info(S)
    for _ in range(10):
        v = rng.normal(size=pol.num_params)
        a = fisher_vector_product(pol, old, S, v, 0.0, eps=1e-4)
        b = fisher_vector_product(pol, old, S, v, 0.0, eps=1e-3)
        assert np.linalg.norm(a - b) <= 1e-3 * np.linalg.norm(a)


def test_fvp_positive_definite_with_damping(rng):
    pol = GaussianPolicy(2, 1, hidden=(6,), rng=rng)
    S = rng.normal(size=(10, 2))
    old = pol.dist_info(S)
    for _ in range(100):
        v = rng.normal(size=pol.num_params)
        assert v @ fisher_vector_product(pol, old, S, v, 0.1) >= 0.1 * (v @ v) * (1 - 1e-6)


def test_fvp_restores_parameters(rng):
    pol = CategoricalPolicy(2, 2, hidden=(4,), rng=rng)
    theta = pol.get_flat()
    fisher_vector_product(pol, pol.dist_info(np.eye(2)), np.eye(2), rng.normal(size=pol.num_params), 0.1)
    np.testing.assert_array_equal(pol.get_flat(), theta)


def test_cg_zero_rhs():
    assert not np.any(conjugate_gradient(lambda v: 3 * v, np.zeros(4), 20))


def test_cg_scaled_identity_one_iteration(rng):
    g = rng.normal(size=6)
    np.testing.assert_allclose(conjugate_gradient(lambda v: 2 * v, g, 1), g / 2, atol=1e-15)


def test_cg_matches_direct_solve():
    rng = np.random.default_rng(11)
    for _ in range(50):
        M = rng.normal(size=(8, 8))
        A = M @ M.T + 0.5 * np.eye(8)
        b = rng.normal(size=8)
        x = conjugate_gradient(lambda v: A @ v, b, 8)
        direct = np.linalg.solve(A, b)
        assert np.max(np.abs(x - direct)) <= 1e-8 * max(1.0, np.max(np.abs(direct)))


def test_cg_stops_on_zero_curvature():
    x = conjugate_gradient(lambda v: np.zeros_like(v), np.ones(3), 20)
    assert not np.any(x)


def test_natural_step_with_identity_operator(rng):
    g = rng.normal(size=5)
    cfg = TrpoConfig(max_kl=0.01)
    step = natural_step(g, lambda v: v, cfg)
    np.testing.assert_allclose(step, g * np.sqrt(2 * 0.01 / (g @ g)), rtol=1e-12)


def test_trpo_steps_respect_trust_region():
    cfg = TrpoConfig()
    accepted = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pol = CategoricalPolicy(2, 2, hidden=(8,), rng=rng, output_scale=1.0)
        b = synthetic_batch(pol, rng)
        old = pol.copy()
        res = trpo_step(pol, b, cfg)
        measured = kl(old, pol, b.states)
        if res.accepted:
            accepted += 1
            assert res.improvement > 0
            assert measured <= 1.5 * cfg.max_kl
            assert res.kl == pytest.approx(measured, abs=1e-12)
            assert res.gain == pytest.approx(surrogate(pol, b, b.advantages), abs=1e-12)
        else:
            np.testing.assert_array_equal(pol.get_flat(), old.get_flat())
    assert accepted >= 90


def test_trpo_step_deterministic(rng):
    pol = GaussianPolicy(3, 1, hidden=(8,), rng=rng)
    b = synthetic_batch(pol, rng, continuous=True)
    a, c = pol.copy(), pol.copy()
    ra, rc = trpo_step(a, b, TrpoConfig()), trpo_step(c, b, TrpoConfig())
    assert ra == rc
    np.testing.assert_array_equal(a.get_flat(), c.get_flat())


def test_rejected_step_leaves_policy(rng):
    pol = CategoricalPolicy(2, 2, hidden=(8,), rng=rng)
    b = synthetic_batch(pol, rng)
    before = pol.get_flat()
    # An operator that is hugely too small makes every backtrack overshoot the trust region.
    res = trpo_step(pol, b, TrpoConfig(max_backtracks=1), fvp=lambda v: 1e-12 * v)
    assert not res.accepted and res.gain == 0.0
    np.testing.assert_array_equal(pol.get_flat(), before)
