"""Named run presets.

Algorithm presets pick the backbone x representation pair:

    saifo      SAC + (s_t, s_{t+1})        off-policy IfO
    dacfo      TD3 + (s_t, s_{t+1})        off-policy IfO
    gaifo_ppo  PPO + (s_t, s_{t+1})        on-policy IfO
    gail_ppo   PPO + (s_t, a_t)            on-policy, needs expert actions

Environment presets carry desk-scale hyperparameters tuned on the built-in
tasks. REFERENCE_PRESETS records the published large-scale settings for the
SAIfO configuration on the two locomotion benchmarks it was tuned on; they
are kept for documentation and for schedule-accounting tests (those
environments are not shipped here).
"""

from __future__ import annotations

from .backbones import BackboneConfig
from .discriminator import DiscConfig
from .engine import EngineConfig, Schedule
from .segments import identity_affine, parse_segment_spec, segment_dim
from .envs import make_env

ALGO_PRESETS = {
    "saifo": ("sac", "state_pair"),
    "dacfo": ("td3", "state_pair"),
    "gaifo_ppo": ("ppo", "state_pair"),
    "gail_ppo": ("ppo", "state_action"),
}

# published SAIfO settings at benchmark scale (not runnable here)
REFERENCE_PRESETS = {
    "halfcheetah_saifo": {
        "disc_learning_rate": 6e-5,
        "disc_entropy_coeff": 0.0,
        "sac_batch_size": 400,
        "warmup_q_steps": 5000,
        "warmup_disc_steps": 500,
        "disc_update_every": 100,
        "sac_alpha": 0.02,
        "grad_penalty_coeff": 0.0006,
        "policy_updates_x": 674,
        "cycle_y": 100,
    },
    "hopper_saifo": {
        "disc_learning_rate": 1e-4,
        "disc_entropy_coeff": 0.0,
        "sac_batch_size": 400,
        "warmup_q_steps": 5000,
        "warmup_disc_steps": 1000,
        "disc_update_every": 10,
        "sac_alpha": 0.15,
        "grad_penalty_coeff": 0.002,
        "policy_updates_x": 674,
        "cycle_y": 100,
    },
}

# expert-training targets fixed by seeded baseline runs on the desk tasks
# (pendulum passes around 14k steps, pointgoal around 16-20k)
EXPERT_TARGETS = {
    "pendulum": {"target_return": -200.0, "step_budget": 40_000},
    "pointgoal": {"target_return": -100.0, "step_budget": 24_000},
}

_DESK_HIDDEN = (32, 32)


def _desk_backbone(algorithm: str, env_name: str) -> BackboneConfig:
    lr = 1e-3
    if algorithm == "td3" and env_name == "pointgoal":
        lr = 3e-4  # large returns destabilize the critic at 1e-3
    if algorithm == "ppo":
        return BackboneConfig(
            algorithm="ppo",
            hidden_sizes=_DESK_HIDDEN,
            gamma=0.99,
            policy_lr=3e-4,
            value_lr=1e-3,
            rollout_length=1000,
            epochs=10,
            minibatch_size=100,
            clip_ratio=0.2,
            gae_lambda=0.95,
        )
    return BackboneConfig(
        algorithm=algorithm,
        hidden_sizes=_DESK_HIDDEN,
        gamma=0.99,
        batch_size=100,
        policy_lr=lr,
        q_lr=lr,
        alpha=0.1,
        tau=0.005,
        replay_capacity=200_000,
    )


def _desk_disc(env_name: str) -> DiscConfig:
    return DiscConfig(
        learning_rate=3e-4,
        entropy_coeff=0.0,
        grad_penalty_coeff=0.01,
        batch_size=128,
        update_every=50,
        warmup_steps=100,
    )


def _desk_schedule(algorithm: str, total_steps: int, disc: DiscConfig) -> Schedule:
    return Schedule(
        total_steps=total_steps,
        init_random_steps=1000,
        warmup_disc_steps=disc.warmup_steps,
        warmup_q_steps=1000 if algorithm in ("sac", "td3") else 0,
        disc_update_every=disc.update_every,
        policy_updates_x=1,
        cycle_y=1,
        eval_every=4000,
        eval_episodes=10,
    )


def expert_backbone_config(env_name: str) -> BackboneConfig:
    return _desk_backbone("sac", env_name)


def build_config(
    preset: str,
    env_name: str,
    total_steps: int = 12_000,
    representation: str | None = None,
) -> EngineConfig:
    """EngineConfig for a named preset, optionally overriding the
    representation tag (e.g. 'state_skip:3')."""
    if preset not in ALGO_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; have {sorted(ALGO_PRESETS)}")
    algorithm, default_rep = ALGO_PRESETS[preset]
    seg = parse_segment_spec(representation or default_rep)
    disc = _desk_disc(env_name)
    schedule = _desk_schedule(algorithm, total_steps, disc)
    affine = None
    if seg.kind == "affine_window":
        env_spec = make_env(env_name).spec
        affine = identity_affine(segment_dim(seg, env_spec.obs_dim, env_spec.act_dim))
    return EngineConfig(
        env_name=env_name,
        backbone=_desk_backbone(algorithm, env_name),
        disc=disc,
        segment=seg,
        schedule=schedule,
        affine=affine,
    )
