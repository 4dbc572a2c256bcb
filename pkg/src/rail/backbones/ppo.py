"""Clipped-surrogate policy optimization over on-policy rollouts.

Rollouts carry the pre-squash Gaussian sample of each action so the ratio
pi_new/pi_old can be evaluated exactly under updated parameters without
inverting tanh. Advantages use GAE(lambda); truncated episodes (including
the rollout cut itself) bootstrap from the value function while true
terminations do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import AdamState, NonFiniteError, adam_step, init_mlp, mlp_backward, mlp_forward
from .base import BackboneConfig, BackboneReport
from .policy import (
    act as policy_act,
    init_gaussian_policy,
    sample_pre_squash,
    scaled_logprob,
    squashed_gaussian_logprob_grads,
)


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)       # env-scaled actions
    pre_squash: list = field(default_factory=list)    # u with a = squash(u)
    logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    next_obs: list = field(default_factory=list)
    terminated: list = field(default_factory=list)
    truncated: list = field(default_factory=list)

    def record(self, obs, action, u, logp, reward, next_obs, terminated, truncated):
        self.obs.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(np.asarray(action, dtype=np.float64))
        self.pre_squash.append(np.asarray(u, dtype=np.float64))
        self.logp.append(float(logp))
        self.rewards.append(float(reward))
        self.next_obs.append(np.asarray(next_obs, dtype=np.float64))
        self.terminated.append(float(terminated))
        self.truncated.append(float(truncated))

    def __len__(self) -> int:
        return len(self.obs)

    def arrays(self) -> dict:
        return {
            "obs": np.stack(self.obs),
            "actions": np.stack(self.actions),
            "pre_squash": np.stack(self.pre_squash),
            "logp": np.array(self.logp),
            "rewards": np.array(self.rewards),
            "next_obs": np.stack(self.next_obs),
            "terminated": np.array(self.terminated),
            "truncated": np.array(self.truncated),
        }

    def clear(self) -> None:
        for name in vars(self):
            getattr(self, name).clear()


def gae_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    next_values: np.ndarray,
    terminated: np.ndarray,
    episode_end: np.ndarray,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """Backward GAE recursion.

    delta_t = r_t + gamma (1 - terminated_t) V(s_{t+1}) - V(s_t)
    A_t     = delta_t + gamma lam (1 - episode_end_t) A_{t+1}

    episode_end cuts the accumulation at terminations AND truncations; only
    true terminations zero the bootstrap inside delta.
    """
    n = len(rewards)
    adv = np.zeros(n)
    delta = rewards + gamma * (1.0 - terminated) * next_values - values
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = delta[t] + gamma * lam * (1.0 - episode_end[t]) * acc
        adv[t] = acc
    return adv


def clipped_surrogate_loss_grads(policy, obs, u, logp_old, adv, clip_ratio):
    """Loss -mean(min(ratio*A, clip(ratio)*A)) and its exact policy grads.

    The gradient flows through the ratio only where the unclipped branch is
    the active minimum (ties included); where the clip binds and is active
    the sample contributes nothing.
    """
    mean, log_std, inside, cache = policy.heads(obs)
    logp_new = scaled_logprob(policy, mean, log_std, u)
    ratio = np.exp(logp_new - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    loss = float(-np.mean(np.minimum(surr1, surr2)))
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > clip_ratio))

    active = (surr1 <= surr2).astype(np.float64)
    g_ratio = -(active * adv * ratio) / len(obs)
    d_mean, d_log_std = squashed_gaussian_logprob_grads(mean, log_std, u)
    g_out = np.concatenate(
        [g_ratio[:, None] * d_mean, g_ratio[:, None] * d_log_std * inside], axis=1
    )
    grads, _ = mlp_backward(policy.net, cache, g_out)
    return loss, ratio, clip_frac, grads


class PpoBackbone:
    name = "ppo"
    is_off_policy = False

    def __init__(self, cfg: BackboneConfig, env_spec, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = env_spec.obs_dim
        self.act_dim = env_spec.act_dim
        hidden = cfg.hidden_sizes
        self.policy = init_gaussian_policy(
            self.obs_dim, self.act_dim, hidden, env_spec.action_low, env_spec.action_high, rng
        )
        self.value_net = init_mlp((self.obs_dim, *hidden, 1), rng)
        self.policy_adam = AdamState.for_params(self.policy.net, cfg.policy_lr)
        self.value_adam = AdamState.for_params(self.value_net, cfg.value_lr)
        self.rollout = RolloutBuffer()
        self.policy_updates = 0
        self.early_stops = 0
        self.skipped_updates = 0

    def act(self, obs, mode: str, rng=None) -> np.ndarray:
        return policy_act(self.policy, obs, mode, rng)

    def act_with_info(self, obs, rng: np.random.Generator):
        """Stochastic action plus the pre-squash sample and its log prob."""
        obs2d = np.asarray(obs, dtype=np.float64)[None, :]
        mean, log_std, _, _ = self.policy.heads(obs2d)
        u, _ = sample_pre_squash(mean, log_std, rng)
        action = self.policy.squash(u)[0]
        logp = float(scaled_logprob(self.policy, mean, log_std, u)[0])
        return action, u[0], logp

    def values(self, obs: np.ndarray) -> np.ndarray:
        out, _ = mlp_forward(self.value_net, np.atleast_2d(obs))
        return out[:, 0]

    def update_from_rollout(self, rng: np.random.Generator) -> BackboneReport:
        """One full PPO update over the accumulated rollout, then clears it."""
        cfg = self.cfg
        data = self.rollout.arrays()
        self.rollout.clear()
        n = len(data["rewards"])

        values = self.values(data["obs"])
        next_values = self.values(data["next_obs"])
        episode_end = np.maximum(data["terminated"], data["truncated"])
        episode_end[-1] = 1.0  # the rollout cut is an accumulation boundary
        adv = gae_advantages(
            data["rewards"], values, next_values, data["terminated"], episode_end,
            cfg.gamma, cfg.gae_lambda,
        )
        returns = adv + values
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        report = BackboneReport(alpha=0.0, mean_logprob=float(np.mean(data["logp"])))
        ratios_dev_limit = 10.0 * cfg.clip_ratio
        stop = False
        clip_fracs = []
        for _ in range(cfg.epochs):
            if stop:
                break
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start : start + cfg.minibatch_size]
                if len(idx) < 2:
                    continue
                obs_b = data["obs"][idx]
                u_b = data["pre_squash"][idx]
                adv_b = adv[idx]
                logp_old = data["logp"][idx]

                loss, ratio, clip_frac, grads = clipped_surrogate_loss_grads(
                    self.policy, obs_b, u_b, logp_old, adv_b, cfg.clip_ratio
                )
                if float(np.mean(np.abs(ratio - 1.0))) > ratios_dev_limit:
                    self.early_stops += 1
                    report.early_stopped = True
                    stop = True
                    break
                report.policy_loss = loss
                clip_fracs.append(clip_frac)
                try:
                    new_net, new_adam = adam_step(self.policy.net, grads, self.policy_adam)
                    self.policy.net = new_net
                    self.policy_adam = new_adam
                except NonFiniteError:
                    self.skipped_updates += 1
                    report.skipped = True
                    continue

                # value regression to the lambda-returns
                v_out, v_cache = mlp_forward(self.value_net, obs_b)
                v_err = v_out[:, 0] - returns[idx]
                report.q_loss = float(np.mean(v_err**2))
                try:
                    v_grads, _ = mlp_backward(
                        self.value_net, v_cache, (2.0 * v_err / len(idx))[:, None]
                    )
                    new_v, new_vadam = adam_step(self.value_net, v_grads, self.value_adam)
                    self.value_net = new_v
                    self.value_adam = new_vadam
                except NonFiniteError:
                    self.skipped_updates += 1
                    report.skipped = True
        self.policy_updates += 1
        report.clip_fraction = float(np.mean(clip_fracs)) if clip_fracs else 0.0
        return report
