import numpy as np
import pytest

from rail.backbones import BackboneConfig
from rail.demos import DemoDataset
from rail.discriminator import DiscConfig
from rail.engine import EngineConfig, Schedule
from rail.envs import make_env
from rail.segments import Trajectory, parse_segment_spec


def make_random_demos(env_name, n_episodes=3, include_actions=True, seed=0, max_steps=60):
    """Demo dataset from a uniform-random actor; fast fixture, no training."""
    env = make_env(env_name)
    rng = np.random.default_rng(seed)
    episodes, returns = [], []
    for ep in range(n_episodes):
        obs = env.reset(seed + ep)
        obs_list, act_list = [obs], []
        total = 0.0
        for _ in range(max_steps):
            a = rng.uniform(env.spec.action_low, env.spec.action_high)
            res = env.step(a)
            obs_list.append(res.next_obs)
            act_list.append(a)
            total += res.reward
            if res.done:
                break
            obs = res.next_obs
        returns.append(total)
        episodes.append(
            Trajectory(np.stack(obs_list), np.stack(act_list) if include_actions else None)
        )
    return DemoDataset(
        env_name,
        env.spec.obs_dim,
        env.spec.act_dim,
        episodes,
        include_actions,
        float(np.mean(returns)),
        seed,
    )


def tiny_engine_config(
    env_name="pendulum",
    algorithm="sac",
    segment="state_pair",
    total_steps=600,
    eval_every=300,
    init_random=100,
    warmup_disc=5,
    warmup_q=10,
    disc_every=50,
    **backbone_kw,
):
    """Small-everything engine config so loop tests run in milliseconds."""
    base = dict(
        algorithm=algorithm,
        hidden_sizes=(8, 8),
        batch_size=16,
        replay_capacity=5000,
        rollout_length=128,
        epochs=2,
        minibatch_size=32,
    )
    base.update(backbone_kw)
    return EngineConfig(
        env_name=env_name,
        backbone=BackboneConfig(**base),
        disc=DiscConfig(batch_size=16, update_every=disc_every, warmup_steps=warmup_disc),
        segment=parse_segment_spec(segment),
        schedule=Schedule(
            total_steps=total_steps,
            init_random_steps=init_random,
            warmup_disc_steps=warmup_disc,
            warmup_q_steps=warmup_q,
            disc_update_every=disc_every,
            eval_every=eval_every,
            eval_episodes=2,
        ),
    )


@pytest.fixture(scope="session")
def pendulum_demos():
    return make_random_demos("pendulum", n_episodes=3, include_actions=True, seed=7)


@pytest.fixture(scope="session")
def pendulum_obs_only_demos():
    return make_random_demos("pendulum", n_episodes=3, include_actions=False, seed=7)
