"""Shared backbone configuration and per-update loss reporting."""

from __future__ import annotations

from dataclasses import dataclass

ALGORITHMS = ("sac", "td3", "ppo")


@dataclass
class BackboneConfig:
    algorithm: str = "sac"
    gamma: float = 0.99
    batch_size: int = 256
    hidden_sizes: tuple[int, int] = (256, 256)
    policy_lr: float = 3e-4
    q_lr: float = 3e-4
    alpha: float = 0.1            # SAC entropy temperature
    alpha_auto: bool = False      # tune alpha toward a target entropy of -act_dim
    alpha_lr: float = 3e-4
    tau: float = 0.005            # Polyak target smoothing
    replay_capacity: int = 1_000_000
    # TD3
    exploration_noise: float = 0.1   # stddev of action noise, in scaled units
    target_noise: float = 0.2        # target policy smoothing stddev
    target_noise_clip: float = 0.5
    policy_delay: int = 2
    # PPO
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    epochs: int = 10
    rollout_length: int = 1000
    minibatch_size: int = 64
    value_lr: float = 1e-3

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("batch_size and replay_capacity must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.policy_lr <= 0 or self.q_lr <= 0 or self.value_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.algorithm == "ppo" and (self.rollout_length < 2 or self.epochs < 1):
            raise ValueError("bad PPO rollout settings")


@dataclass
class BackboneReport:
    q_loss: float = 0.0
    policy_loss: float = 0.0
    alpha: float = 0.0
    mean_logprob: float = 0.0
    clip_fraction: float = 0.0
    early_stopped: bool = False
    skipped: bool = False

    def as_dict(self) -> dict:
        return {
            "q_loss": self.q_loss,
            "policy_loss": self.policy_loss,
            "alpha": self.alpha,
            "mean_logprob": self.mean_logprob,
            "clip_fraction": self.clip_fraction,
        }
