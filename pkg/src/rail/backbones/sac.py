"""Soft actor-critic with twin Q networks and a fixed entropy temperature.

Rewards for sampled minibatches always come from the reward function passed
into `update`, evaluated at update time: the buffer's stored reward slot is
never read here, so an evolving discriminator is re-queried on old
transitions instead of being frozen into the replay data.
"""

from __future__ import annotations

import numpy as np

from ..nn import MlpParams, AdamState, NonFiniteError, adam_step, init_mlp, mlp_backward, mlp_forward
from .base import BackboneConfig, BackboneReport
from .policy import (
    act as policy_act,
    init_gaussian_policy,
    sample_pre_squash,
    scaled_logprob,
)
from .replay import ReplayBuffer


def polyak(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    return MlpParams(
        target.layer_sizes,
        [(1.0 - tau) * t + tau * s for t, s in zip(target.weights, source.weights)],
        [(1.0 - tau) * t + tau * s for t, s in zip(target.biases, source.biases)],
        target.output_activation,
    )


def q_forward(q: MlpParams, obs: np.ndarray, actions: np.ndarray):
    x = np.concatenate([obs, actions], axis=1)
    out, cache = mlp_forward(q, x)
    return out[:, 0], cache


class SacBackbone:
    name = "sac"
    is_off_policy = True

    def __init__(self, cfg: BackboneConfig, env_spec, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = env_spec.obs_dim
        self.act_dim = env_spec.act_dim
        hidden = cfg.hidden_sizes
        self.policy = init_gaussian_policy(
            self.obs_dim, self.act_dim, hidden, env_spec.action_low, env_spec.action_high, rng
        )
        q_sizes = (self.obs_dim + self.act_dim, *hidden, 1)
        self.q1 = init_mlp(q_sizes, rng)
        self.q2 = init_mlp(q_sizes, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.policy_adam = AdamState.for_params(self.policy.net, cfg.policy_lr)
        self.q1_adam = AdamState.for_params(self.q1, cfg.q_lr)
        self.q2_adam = AdamState.for_params(self.q2, cfg.q_lr)
        self.alpha = cfg.alpha
        self.target_entropy = -float(self.act_dim)
        self.q_updates = 0
        self.policy_updates = 0
        self.skipped_updates = 0

    def act(self, obs, mode: str, rng=None) -> np.ndarray:
        return policy_act(self.policy, obs, mode, rng)

    def compute_targets(self, batch, rewards: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """y = r + gamma (1 - terminated)(min Q'(s', a') - alpha log pi(a'|s')),
        a' sampled from the current policy. Truncation still bootstraps."""
        cfg = self.cfg
        mean_n, log_std_n, _, _ = self.policy.heads(batch.next_obs)
        u_next, _ = sample_pre_squash(mean_n, log_std_n, rng)
        a_next = self.policy.squash(u_next)
        logp_next = scaled_logprob(self.policy, mean_n, log_std_n, u_next)
        q1_t, _ = q_forward(self.q1_target, batch.next_obs, a_next)
        q2_t, _ = q_forward(self.q2_target, batch.next_obs, a_next)
        not_done = 1.0 - batch.terminated
        return rewards + cfg.gamma * not_done * (
            np.minimum(q1_t, q2_t) - self.alpha * logp_next
        )

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

        q_loss = 0.0
        bsz = len(batch)
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
            return BackboneReport(alpha=self.alpha, skipped=True)

        report = BackboneReport(q_loss=q_loss, alpha=self.alpha)
        if update_policy:
            try:
                report.policy_loss, report.mean_logprob = self._policy_step(batch.obs, rng)
                self.policy_updates += 1
            except NonFiniteError:
                self.skipped_updates += 1
                report.skipped = True

        self.q1_target = polyak(self.q1_target, self.q1, cfg.tau)
        self.q2_target = polyak(self.q2_target, self.q2, cfg.tau)
        return report

    def policy_loss_and_grads(self, obs: np.ndarray, eps: np.ndarray):
        """Loss mean(alpha log pi(a~|s) - min Q(s, a~)) and its exact policy
        gradients for a FIXED reparameterization noise eps.

        The gradient of the squashed sample a~ = center + scale tanh(u),
        u = mean + std eps, is pushed through the Q input gradients and the
        log-density terms by hand:

            d logpi / d mean    = 2 tanh(u)
            d logpi / d log_std = -1 + 2 tanh(u) std eps
            d a~ / d mean       = scale (1 - tanh^2 u)
            d a~ / d log_std    = scale (1 - tanh^2 u) std eps
        """
        alpha = self.alpha
        bsz = len(obs)
        mean, log_std, inside, cache = self.policy.heads(obs)
        u = mean + np.exp(log_std) * eps
        t = np.tanh(u)
        a_env = self.policy.center + self.policy.scale * t
        logp = scaled_logprob(self.policy, mean, log_std, u)

        q1_vals, c1 = q_forward(self.q1, obs, a_env)
        q2_vals, c2 = q_forward(self.q2, obs, a_env)
        _, gx1 = mlp_backward(self.q1, c1, np.ones((bsz, 1)))
        _, gx2 = mlp_backward(self.q2, c2, np.ones((bsz, 1)))
        use_q1 = (q1_vals <= q2_vals)[:, None]
        qa = np.where(use_q1, gx1[:, self.obs_dim :], gx2[:, self.obs_dim :])
        q_min = np.minimum(q1_vals, q2_vals)

        std_eps = np.exp(log_std) * eps
        dsquash = self.policy.scale * (1.0 - t**2)
        g_mean = (alpha * 2.0 * t - qa * dsquash) / bsz
        g_log_std = (alpha * (-1.0 + 2.0 * t * std_eps) - qa * dsquash * std_eps) / bsz
        g_log_std = g_log_std * inside  # clamped head coordinates get no gradient

        g_out = np.concatenate([g_mean, g_log_std], axis=1)
        grads, _ = mlp_backward(self.policy.net, cache, g_out)
        loss = float(np.mean(alpha * logp - q_min))
        return loss, float(np.mean(logp)), grads

    def _policy_step(self, obs: np.ndarray, rng: np.random.Generator):
        eps = rng.standard_normal((len(obs), self.act_dim))
        loss, mean_logp, grads = self.policy_loss_and_grads(obs, eps)
        new_net, new_adam = adam_step(self.policy.net, grads, self.policy_adam)
        self.policy.net = new_net
        self.policy_adam = new_adam
        if self.cfg.alpha_auto:
            # scalar ascent on log alpha toward the target entropy
            log_alpha = np.log(max(self.alpha, 1e-12))
            log_alpha += self.cfg.alpha_lr * (mean_logp + self.target_entropy)
            self.alpha = float(np.exp(np.clip(log_alpha, -20.0, 5.0)))
        return loss, mean_logp
