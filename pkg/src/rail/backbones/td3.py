"""Twin delayed DDPG: deterministic policy, target smoothing noise, delayed
policy updates. Shares the reward-function contract with SAC: stored replay
rewards are never read, the passed reward_fn is."""

from __future__ import annotations

import numpy as np

from ..nn import AdamState, NonFiniteError, adam_step, init_mlp, mlp_backward, mlp_forward
from .base import BackboneConfig, BackboneReport
from .policy import act as policy_act, init_deterministic_policy
from .replay import ReplayBuffer
from .sac import polyak, q_forward


class Td3Backbone:
    name = "td3"
    is_off_policy = True

    def __init__(self, cfg: BackboneConfig, env_spec, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = env_spec.obs_dim
        self.act_dim = env_spec.act_dim
        hidden = cfg.hidden_sizes
        self.policy = init_deterministic_policy(
            self.obs_dim,
            self.act_dim,
            hidden,
            env_spec.action_low,
            env_spec.action_high,
            rng,
            exploration_noise=cfg.exploration_noise,
        )
        self.policy_target_net = self.policy.net.copy()
        q_sizes = (self.obs_dim + self.act_dim, *hidden, 1)
        self.q1 = init_mlp(q_sizes, rng)
        self.q2 = init_mlp(q_sizes, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.policy_adam = AdamState.for_params(self.policy.net, cfg.policy_lr)
        self.q1_adam = AdamState.for_params(self.q1, cfg.q_lr)
        self.q2_adam = AdamState.for_params(self.q2, cfg.q_lr)
        self.q_updates = 0
        self.policy_updates = 0
        self.skipped_updates = 0

    def act(self, obs, mode: str, rng=None) -> np.ndarray:
        return policy_act(self.policy, obs, mode, rng)

    def _target_actions(self, next_obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out, _ = mlp_forward(self.policy_target_net, next_obs)
        base = self.policy.center + self.policy.scale * out
        scale = self.policy.scale
        noise = np.clip(
            self.cfg.target_noise * scale * rng.standard_normal(base.shape),
            -self.cfg.target_noise_clip * scale,
            self.cfg.target_noise_clip * scale,
        )
        return np.clip(base + noise, self.policy.action_low, self.policy.action_high)

    def compute_targets(self, batch, rewards: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """y = r + gamma (1 - terminated) min Q'(s', pi'(s') + clipped noise)."""
        cfg = self.cfg
        a_next = self._target_actions(batch.next_obs, rng)
        q1_t, _ = q_forward(self.q1_target, batch.next_obs, a_next)
        q2_t, _ = q_forward(self.q2_target, batch.next_obs, a_next)
        not_done = 1.0 - batch.terminated
        return rewards + cfg.gamma * not_done * np.minimum(q1_t, q2_t)

    def update(
        self,
        buffer: ReplayBuffer,
        reward_fn,
        rng: np.random.Generator,
        update_policy: bool = True,
    ) -> BackboneReport:
        cfg = self.cfg
        batch = buffer.sample(cfg.batch_size, rng)
        rewards = np.asarray(reward_fn(batch), dtype=np.float64)
        y = self.compute_targets(batch, rewards, rng)

        bsz = len(batch)
        q_loss = 0.0
        try:
            for attr, adam_attr in (("q1", "q1_adam"), ("q2", "q2_adam")):
                q = getattr(self, attr)
                q_vals, cache = q_forward(q, batch.obs, batch.actions)
                err = q_vals - y
                q_loss += float(np.mean(err**2))
                grads, _ = mlp_backward(q, cache, (2.0 * err / bsz)[:, None])
                new_q, new_adam = adam_step(q, grads, getattr(self, adam_attr))
                setattr(self, attr, new_q)
                setattr(self, adam_attr, new_adam)
            self.q_updates += 1
        except NonFiniteError:
            self.skipped_updates += 1
            return BackboneReport(skipped=True)

        report = BackboneReport(q_loss=q_loss)
        if update_policy and self.q_updates % cfg.policy_delay == 0:
            try:
                report.policy_loss = self._policy_step(batch.obs)
                self.policy_updates += 1
            except NonFiniteError:
                self.skipped_updates += 1
                report.skipped = True
            self.q1_target = polyak(self.q1_target, self.q1, cfg.tau)
            self.q2_target = polyak(self.q2_target, self.q2, cfg.tau)
            self.policy_target_net = polyak(self.policy_target_net, self.policy.net, cfg.tau)
        return report

    def _policy_step(self, obs: np.ndarray) -> float:
        """Gradient step on -mean Q1(s, pi(s)) through the action input."""
        bsz = len(obs)
        out, cache = mlp_forward(self.policy.net, obs)
        a_env = self.policy.center + self.policy.scale * out
        q_vals, q_cache = q_forward(self.q1, obs, a_env)
        _, gx = mlp_backward(self.q1, q_cache, np.full((bsz, 1), -1.0 / bsz))
        g_out = gx[:, self.obs_dim :] * self.policy.scale
        grads, _ = mlp_backward(self.policy.net, cache, g_out)
        new_net, new_adam = adam_step(self.policy.net, grads, self.policy_adam)
        self.policy.net = new_net
        self.policy_adam = new_adam
        return float(-np.mean(q_vals))
