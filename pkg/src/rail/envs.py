"""Desk-scale continuous-control environments.

Two tasks with fully documented dynamics so every test oracle is
reproducible from the constants below:

* ``pendulum`` -- torque-limited swing-up of a rod pendulum pivoting at one
  end. State (theta, theta_dot) with theta = 0 upright; observation
  (cos theta, sin theta, theta_dot); 1-d torque clipped to [-2, 2].
  Semi-implicit Euler at dt = 0.05:

      theta_ddot = (3 g / 2 l) sin(theta) + 3 u / (m l^2)
      theta_dot' = clip(theta_dot + theta_ddot * dt, +-8)
      theta'     = theta + theta_dot' * dt

  Reward -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2) evaluated on the
  pre-step state, so it is always <= 0. 200 steps, truncation only.

* ``pointgoal`` -- 2-d point mass accelerating toward a goal at the origin.
  State (position, velocity); 2-d acceleration clipped to [-1, 1]^2;
  v' = clip(v + u * dt, +-2), p' = p + v' * dt with dt = 0.1. Reward
  -|p'| - 0.01 |u|^2; terminates inside goal radius 0.25; 300 step limit.

The true reward exists only for expert training and evaluation; imitation
learners never see it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ContractError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int

    def __post_init__(self):
        low = np.asarray(self.action_low, dtype=np.float64)
        high = np.asarray(self.action_high, dtype=np.float64)
        if low.shape != (self.act_dim,) or high.shape != (self.act_dim,):
            raise ValueError("action bounds must have shape (act_dim,)")
        if not (np.isfinite(low).all() and np.isfinite(high).all() and np.all(low < high)):
            raise ValueError("action bounds must be finite with low < high")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")


@dataclass
class StepResult:
    next_obs: np.ndarray
    reward: float
    terminated: bool
    truncated: bool

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class PendulumEnv:
    """Swing-up pendulum. Constants are part of the public contract."""

    GRAVITY = 10.0
    MASS = 1.0
    LENGTH = 1.0
    DT = 0.05
    MAX_TORQUE = 2.0
    MAX_SPEED = 8.0
    MAX_STEPS = 200

    def __init__(self):
        self.spec = EnvSpec(
            "pendulum",
            obs_dim=3,
            act_dim=1,
            action_low=np.array([-self.MAX_TORQUE]),
            action_high=np.array([self.MAX_TORQUE]),
            max_episode_steps=self.MAX_STEPS,
        )
        self._theta = 0.0
        self._theta_dot = 0.0
        self._steps = 0
        self._needs_reset = True
        self.clip_count = 0  # out-of-bounds actions seen (diagnostic)

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(np.uint64(seed) if seed >= 0 else seed)
        self._theta = rng.uniform(-np.pi, np.pi)
        self._theta_dot = rng.uniform(-1.0, 1.0)
        self._steps = 0
        self._needs_reset = False
        return self._obs()

    def set_state(self, theta: float, theta_dot: float) -> np.ndarray:
        """Test hook: place the pendulum exactly (counts as a fresh episode)."""
        self._theta = float(theta)
        self._theta_dot = float(theta_dot)
        self._steps = 0
        self._needs_reset = False
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if self._needs_reset:
            raise ContractError("step() called on a finished episode; reset first")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (1,):
            raise ValueError(f"action must be 1-d, got shape {action.shape}")
        u = float(action[0])
        if u < -self.MAX_TORQUE or u > self.MAX_TORQUE:
            self.clip_count += 1
            u = float(np.clip(u, -self.MAX_TORQUE, self.MAX_TORQUE))

        th, thd = self._theta, self._theta_dot
        cost = _wrap_angle(th) ** 2 + 0.1 * thd**2 + 0.001 * u**2

        g, m, l = self.GRAVITY, self.MASS, self.LENGTH
        acc = 3.0 * g / (2.0 * l) * np.sin(th) + 3.0 / (m * l**2) * u
        thd = float(np.clip(thd + acc * self.DT, -self.MAX_SPEED, self.MAX_SPEED))
        th = th + thd * self.DT

        self._theta, self._theta_dot = th, thd
        self._steps += 1
        truncated = self._steps >= self.MAX_STEPS
        if truncated:
            self._needs_reset = True
        return StepResult(self._obs(), -cost, False, truncated)

    def mechanical_energy(self) -> float:
        """Kinetic + potential energy of the rod (zero torque invariant)."""
        m, l, g = self.MASS, self.LENGTH, self.GRAVITY
        return (m * l**2 / 6.0) * self._theta_dot**2 + (m * g * l / 2.0) * np.cos(self._theta)

    def state(self) -> tuple[float, float]:
        return self._theta, self._theta_dot

    def _obs(self) -> np.ndarray:
        return np.array([np.cos(self._theta), np.sin(self._theta), self._theta_dot])


class PointGoalEnv:
    """Point mass steering to a goal at the origin."""

    DT = 0.1
    MAX_ACCEL = 1.0
    MAX_SPEED = 2.0
    GOAL_RADIUS = 0.25
    SPAWN_LOW = np.array([-2.0, -2.0])
    SPAWN_HIGH = np.array([2.0, 2.0])
    MIN_SPAWN_DIST = 1.0
    MAX_STEPS = 300

    def __init__(self):
        self.spec = EnvSpec(
            "pointgoal",
            obs_dim=4,
            act_dim=2,
            action_low=np.array([-self.MAX_ACCEL, -self.MAX_ACCEL]),
            action_high=np.array([self.MAX_ACCEL, self.MAX_ACCEL]),
            max_episode_steps=self.MAX_STEPS,
        )
        self._pos = np.zeros(2)
        self._vel = np.zeros(2)
        self._steps = 0
        self._needs_reset = True
        self.clip_count = 0

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(np.uint64(seed) if seed >= 0 else seed)
        # rejection-sample a spawn outside the goal neighbourhood
        while True:
            pos = rng.uniform(self.SPAWN_LOW, self.SPAWN_HIGH)
            if np.linalg.norm(pos) >= self.MIN_SPAWN_DIST:
                break
        self._pos = pos
        self._vel = np.zeros(2)
        self._steps = 0
        self._needs_reset = False
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if self._needs_reset:
            raise ContractError("step() called on a finished episode; reset first")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (2,):
            raise ValueError(f"action must be 2-d, got shape {action.shape}")
        if np.any(np.abs(action) > self.MAX_ACCEL):
            self.clip_count += 1
        u = np.clip(action, -self.MAX_ACCEL, self.MAX_ACCEL)

        self._vel = np.clip(self._vel + u * self.DT, -self.MAX_SPEED, self.MAX_SPEED)
        self._pos = self._pos + self._vel * self.DT
        self._steps += 1

        dist = float(np.linalg.norm(self._pos))
        reward = -dist - 0.01 * float(u @ u)
        terminated = dist <= self.GOAL_RADIUS
        truncated = (not terminated) and self._steps >= self.MAX_STEPS
        if terminated or truncated:
            self._needs_reset = True
        return StepResult(self._obs(), reward, terminated, truncated)

    def state(self) -> tuple[np.ndarray, np.ndarray]:
        return self._pos.copy(), self._vel.copy()

    def _obs(self) -> np.ndarray:
        return np.concatenate([self._pos, self._vel])


ENV_REGISTRY = {
    "pendulum": PendulumEnv,
    "pointgoal": PointGoalEnv,
}

# Uniform-random-policy mean returns, fixed from 100 seeded episodes per env.
# Used as the floor when normalizing returns for scoring and plots.
RANDOM_POLICY_RETURN = {"pendulum": -1206.0, "pointgoal": -2688.0}

# Band that a 10-episode random-policy evaluation mean falls in (same runs,
# mean +- ~3.8 standard errors, rounded outward).
PENDULUM_RANDOM_RETURN_BAND = (-1550.0, -850.0)


def normalized_return(env_name: str, ret: float, expert_return: float) -> float:
    """Fraction of the random-to-expert gap covered by ``ret`` (1.0 = expert)."""
    floor = RANDOM_POLICY_RETURN[env_name]
    gap = expert_return - floor
    if gap <= 0:
        raise ValueError("expert return must beat the random baseline")
    return (ret - floor) / gap


def make_env(name: str):
    try:
        return ENV_REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; have {sorted(ENV_REGISTRY)}") from None


def _wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    return ((theta + np.pi) % (2.0 * np.pi)) - np.pi
