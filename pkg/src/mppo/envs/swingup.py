"""Cart-pole swing-up with a sparse upright reward."""

from __future__ import annotations

import math

import numpy as np

from ..errors import InputError, StateError


class SparseCartPoleSwingupEnv:
    """Pole starts hanging down; reward 1 whenever ``cos(beta) > 0.8`` (beta = 0 is upright).

    Frictionless cart-pole integrated with semi-implicit Euler.  Actions lie in
    [-1, 1] and are scaled to a force of at most ``force_mag``.  Episodes only
    end by timeout.
    """

    discrete = False
    obs_dim = 5
    action_dim = 1

    def __init__(self, max_episode_steps: int = 500, reset_noise: float = 0.01, dt: float = 0.02,
                 cart_mass: float = 1.0, pole_mass: float = 0.1, half_length: float = 0.5,
                 force_mag: float = 10.0, gravity: float = 9.8):
        self.max_episode_steps = max_episode_steps
        self.reset_noise = reset_noise
        self.dt = dt
        self.cart_mass, self.pole_mass, self.half_length = cart_mass, pole_mass, half_length
        self.force_mag, self.gravity = force_mag, gravity
        self.state = np.array([0.0, 0.0, math.pi, 0.0])
        self.t = 0
        self.done = True

    def observe(self) -> np.ndarray:
        x, x_dot, beta, beta_dot = self.state
        return np.array([x, x_dot, math.cos(beta), math.sin(beta), beta_dot])

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.state = np.array([0.0, 0.0, math.pi, 0.0])
        if rng is not None and self.reset_noise > 0:
            self.state += rng.uniform(-self.reset_noise, self.reset_noise, size=4)
        self.t = 0
        self.done = False
        return self.observe()

    def set_state(self, state) -> np.ndarray:
        """Overwrite the physical state (testing aid); starts a fresh episode."""
        self.state = np.asarray(state, dtype=np.float64).copy()
        self.t = 0
        self.done = False
        return self.observe()

    def _dynamics(self, force: float) -> tuple[float, float]:
        _, _, beta, beta_dot = self.state
        total = self.cart_mass + self.pole_mass
        pml = self.pole_mass * self.half_length
        cos_b, sin_b = math.cos(beta), math.sin(beta)
        temp = (force + pml * beta_dot * beta_dot * sin_b) / total
        beta_acc = (self.gravity * sin_b - cos_b * temp) / (
            self.half_length * (4.0 / 3.0 - self.pole_mass * cos_b * cos_b / total))
        x_acc = temp - pml * beta_acc * cos_b / total
        return x_acc, beta_acc

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        if self.done:
            raise StateError("step() called on a finished episode; call reset()")
        a = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
        if not math.isfinite(a):
            raise InputError("non-finite action")
        force = self.force_mag * min(1.0, max(-1.0, a))
        x_acc, beta_acc = self._dynamics(force)
        x, x_dot, beta, beta_dot = self.state
        x_dot += self.dt * x_acc
        x += self.dt * x_dot
        beta_dot += self.dt * beta_acc
        beta += self.dt * beta_dot
        beta = (beta + math.pi) % (2.0 * math.pi) - math.pi
        self.state = np.array([x, x_dot, beta, beta_dot])
        self.t += 1
        reward = 1.0 if math.cos(beta) > 0.8 else 0.0
        timeout = self.t >= self.max_episode_steps
        self.done = timeout
        return self.observe(), reward, False, timeout

    def reward_at(self, beta: float) -> float:
        return 1.0 if math.cos(beta) > 0.8 else 0.0

    def visit_cell(self) -> tuple[int, int]:
        """(angle bin, angular-velocity bin) on a 21x21 grid over [-pi, pi] x [-10, 10]."""
        _, _, beta, beta_dot = self.state
        r = int(min(20, max(0, math.floor((beta + math.pi) / (2 * math.pi) * 21))))
        c = int(min(20, max(0, math.floor((beta_dot + 10.0) / 20.0 * 21))))
        return r, c
