"""Policy heads.

GaussianPolicy (SAC, PPO): one MLP emits mean and log-std per action
dimension; samples are tanh-squashed and rescaled to the environment's
action bounds, so emitted actions are always strictly inside them.

DeterministicPolicy (TD3): tanh-output MLP rescaled to the bounds, with
additive exploration noise in stochastic mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import MlpParams, init_mlp, mlp_forward

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

MODES = ("stochastic", "deterministic")


def _bounds_arrays(action_low, action_high):
    low = np.asarray(action_low, dtype=np.float64)
    high = np.asarray(action_high, dtype=np.float64)
    return low, high, (high - low) / 2.0, (high + low) / 2.0


@dataclass
class GaussianPolicy:
    net: MlpParams  # obs_dim -> 2 * act_dim, identity head
    action_low: np.ndarray
    action_high: np.ndarray

    @property
    def act_dim(self) -> int:
        return self.net.n_out // 2

    @property
    def scale(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0

    @property
    def center(self) -> np.ndarray:
        return (self.action_high + self.action_low) / 2.0

    def heads(self, obs: np.ndarray):
        """(mean, clamped log_std, clamp mask, forward cache) for a batch."""
        out, cache = mlp_forward(self.net, obs)
        d = self.act_dim
        mean, raw_log_std = out[:, :d], out[:, d:]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        inside = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
        return mean, log_std, inside.astype(np.float64), cache

    def squash(self, u: np.ndarray) -> np.ndarray:
        return self.center + self.scale * np.tanh(u)


def init_gaussian_policy(obs_dim, act_dim, hidden, action_low, action_high, rng) -> GaussianPolicy:
    low, high, _, _ = _bounds_arrays(action_low, action_high)
    net = init_mlp((obs_dim, *hidden, 2 * act_dim), rng, output_activation="identity")
    return GaussianPolicy(net, low, high)


@dataclass
class DeterministicPolicy:
    net: MlpParams  # obs_dim -> act_dim, tanh head
    action_low: np.ndarray
    action_high: np.ndarray
    exploration_noise: float = 0.1  # stddev in scaled action units

    @property
    def scale(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0

    @property
    def center(self) -> np.ndarray:
        return (self.action_high + self.action_low) / 2.0

    def raw(self, obs: np.ndarray):
        out, cache = mlp_forward(self.net, obs)
        return out, cache

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        out, _ = self.raw(obs)
        return self.center + self.scale * out


def init_deterministic_policy(
    obs_dim, act_dim, hidden, action_low, action_high, rng, exploration_noise=0.1
) -> DeterministicPolicy:
    low, high, _, _ = _bounds_arrays(action_low, action_high)
    net = init_mlp((obs_dim, *hidden, act_dim), rng, output_activation="tanh")
    return DeterministicPolicy(net, low, high, exploration_noise)


def act(policy, obs: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Single-observation action in environment bounds.

    stochastic mode needs an rng; deterministic mode returns the squashed
    mean (Gaussian) or the noiseless output (deterministic policy).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    obs = np.asarray(obs, dtype=np.float64)[None, :]
    if isinstance(policy, GaussianPolicy):
        mean, log_std, _, _ = policy.heads(obs)
        if mode == "deterministic":
            return policy.squash(mean)[0]
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return policy.squash(u)[0]
    out, _ = policy.raw(obs)
    action = policy.center + policy.scale * out[0]
    if mode == "stochastic":
        noise = policy.exploration_noise * policy.scale * rng.standard_normal(action.shape)
        action = np.clip(action + noise, policy.action_low, policy.action_high)
    return action


def squashed_gaussian_logprob(
    mean: np.ndarray, log_std: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """log density of a = tanh(u) under the squashed Gaussian (unit scale).

    u is the pre-squash value. The tanh change-of-variables term uses the
    numerically stable form log(1 - tanh^2(u)) = 2(log 2 - u - softplus(-2u)).
    Shapes broadcast; the action dimension (last axis) is summed.
    """
    mean = np.atleast_2d(np.asarray(mean, dtype=np.float64))
    log_std = np.atleast_2d(np.asarray(log_std, dtype=np.float64))
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    std = np.exp(log_std)
    gauss = -0.5 * np.log(2.0 * np.pi) - log_std - 0.5 * ((u - mean) / std) ** 2
    correction = 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return np.sum(gauss - correction, axis=-1)


def squashed_gaussian_logprob_grads(
    mean: np.ndarray, log_std: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """d logprob / d(mean, log_std) for a FIXED pre-squash action u.

    This is the density-gradient path (PPO ratios); the tanh correction has
    no parameter dependence once u is held fixed.
    """
    std = np.exp(log_std)
    z = (u - mean) / std
    return z / std, -1.0 + z**2


def scaled_logprob(policy: GaussianPolicy, mean, log_std, u) -> np.ndarray:
    """Full log density over the environment's action space (adds the
    -sum(log scale) bound-rescaling term to the unit-scale log prob)."""
    return squashed_gaussian_logprob(mean, log_std, u) - np.sum(np.log(policy.scale))


def sample_pre_squash(mean, log_std, rng) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized draw: returns (u, eps) with u = mean + std * eps."""
    eps = rng.standard_normal(mean.shape)
    return mean + np.exp(log_std) * eps, eps
