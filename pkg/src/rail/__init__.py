"""Modular adversarial imitation learning at desk scale.

The framework composes two interchangeable pieces around a GAN-style
discriminator-as-reward loop: the RL backbone that optimizes the policy
(SAC, TD3, or PPO) and the input representation the discriminator sees
(state-action pairs, state-transition pairs, skips, deltas, or affine-
transformed state windows). Named presets reproduce the classic
combinations (GAIL, GAIfO-style, DACfO, SAIfO).
"""

from .backbones import BackboneConfig, ReplayBuffer, make_backbone
from .demos import (
    DemoDataset,
    load_demos,
    load_policy,
    record_demos,
    save_demos,
    save_policy,
    train_expert,
)
from .discriminator import DiscConfig, disc_update, imitation_reward, init_discriminator
from .engine import EngineConfig, RailEngine, Schedule, TrialMetrics, train
from .envs import EnvSpec, StepResult, make_env, normalized_return
from .harness import GridSpec, RunConfig, grid_search, run_trial, run_trials, score_config
from .plots import emit_plot
from .presets import ALGO_PRESETS, EXPERT_TARGETS, REFERENCE_PRESETS, build_config
from .segments import AffineParams, SegmentSpec, Trajectory, extract_segments, parse_segment_spec

__version__ = "0.1.0"

__all__ = [
    "ALGO_PRESETS",
    "AffineParams",
    "BackboneConfig",
    "DemoDataset",
    "DiscConfig",
    "EXPERT_TARGETS",
    "EngineConfig",
    "EnvSpec",
    "GridSpec",
    "REFERENCE_PRESETS",
    "RailEngine",
    "ReplayBuffer",
    "RunConfig",
    "Schedule",
    "SegmentSpec",
    "StepResult",
    "Trajectory",
    "TrialMetrics",
    "build_config",
    "disc_update",
    "emit_plot",
    "extract_segments",
    "grid_search",
    "imitation_reward",
    "init_discriminator",
    "load_demos",
    "load_policy",
    "make_backbone",
    "make_env",
    "normalized_return",
    "parse_segment_spec",
    "record_demos",
    "run_trial",
    "run_trials",
    "save_demos",
    "save_policy",
    "score_config",
    "train",
    "train_expert",
]
