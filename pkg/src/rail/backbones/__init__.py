"""RL backbones: the algorithms that optimize the policy against whatever
reward function they are handed (the discriminator's, or the true one when
training experts)."""

from .base import BackboneConfig, BackboneReport
from .replay import ReplayBuffer, TransitionBatch
from .sac import SacBackbone
from .td3 import Td3Backbone
from .ppo import PpoBackbone, RolloutBuffer, gae_advantages

OFF_POLICY = ("sac", "td3")
ON_POLICY = ("ppo",)


def make_backbone(cfg: BackboneConfig, env_spec, rng):
    cfg.validate()
    if cfg.algorithm == "sac":
        return SacBackbone(cfg, env_spec, rng)
    if cfg.algorithm == "td3":
        return Td3Backbone(cfg, env_spec, rng)
    if cfg.algorithm == "ppo":
        return PpoBackbone(cfg, env_spec, rng)
    raise ValueError(f"unknown backbone {cfg.algorithm!r}")
