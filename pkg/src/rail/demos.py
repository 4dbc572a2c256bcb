"""Expert policies and demonstration datasets.

Experts are trained with SAC on the true environment reward; demonstrations
are deterministic rollouts recorded either with actions (state-action
imitation) or without (imitation from observation). An observation-only
dataset physically contains no actions, so nothing downstream can read them.

Demo file format (version 1): a JSON header line, then per episode a line
``episode <index> <n_transitions>`` followed by one line per transition
holding ``s_t [a_t] s_{t+1}`` as space-separated repr'd decimals. repr round-
trips float64 exactly, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .backbones import BackboneConfig, ReplayBuffer, make_backbone
from .backbones.policy import GaussianPolicy
from .envs import make_env, normalized_return
from .nn import mlp_from_bytes, mlp_to_bytes
from .segments import Trajectory

DEMO_FORMAT = "rail-demo"
DEMO_VERSION = 1
POLICY_FORMAT = "rail-policy"


class DemoFileError(ValueError):
    """Demo file is corrupt, truncated, or from an unsupported version."""


class ExpertTrainingError(RuntimeError):
    """Expert training exhausted its budget far below the target return."""


@dataclass
class DemoDataset:
    env_name: str
    obs_dim: int
    act_dim: int
    episodes: list[Trajectory]
    actions_included: bool
    expert_mean_return: float
    seed: int

    def __post_init__(self):
        for i, ep in enumerate(self.episodes):
            if ep.observations.shape[1] != self.obs_dim:
                raise ValueError(f"episode {i}: obs dim mismatch")
            if self.actions_included:
                if ep.actions is None or ep.actions.shape[1] != self.act_dim:
                    raise ValueError(f"episode {i}: actions missing or mis-shaped")
            elif ep.actions is not None:
                raise ValueError(f"episode {i}: observation-only dataset carries actions")

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    def total_transitions(self) -> int:
        return sum(len(ep) - 1 for ep in self.episodes)


def evaluate_policy(backbone, env_name: str, episode_seeds) -> tuple[float, float, float]:
    """Deterministic-mode returns over the given episode seeds."""
    env = make_env(env_name)
    returns = []
    for seed in episode_seeds:
        obs = env.reset(int(seed))
        total = 0.0
        while True:
            res = env.step(backbone.act(obs, "deterministic"))
            total += res.reward
            if res.done:
                break
            obs = res.next_obs
        returns.append(total)
    return float(np.mean(returns)), float(np.min(returns)), float(np.max(returns))


def train_expert(
    env_name: str,
    backbone_cfg: BackboneConfig,
    target_return: float,
    seed: int = 0,
    step_budget: int = 50_000,
    init_random_steps: int = 1000,
    eval_every: int = 2000,
    eval_episodes: int = 10,
):
    """SAC on the true reward until a 10-episode deterministic evaluation
    reaches target_return.

    Returns (backbone, achieved_return). Stops at the first passing
    checkpoint; if the budget runs out, returns the best checkpoint with a
    warning, or raises ExpertTrainingError when the best normalized score is
    below 80% of the target's.
    """
    if backbone_cfg.algorithm != "sac":
        raise ValueError("experts are trained with the SAC backbone")
    ss = np.random.SeedSequence(seed)
    rng_net, rng_run, rng_eval = [np.random.default_rng(s) for s in ss.spawn(3)]
    env = make_env(env_name)
    backbone = make_backbone(backbone_cfg, env.spec, rng_net)
    buf = ReplayBuffer(backbone_cfg.replay_capacity, env.spec.obs_dim, env.spec.act_dim)
    eval_seeds = rng_eval.integers(0, 2**62, size=eval_episodes)

    def true_reward(batch):
        return batch.rewards

    best_params = backbone.policy.net.copy()
    best_return = -np.inf
    obs = env.reset(int(rng_run.integers(2**62)))
    episode = 0
    for step in range(1, step_budget + 1):
        if step <= init_random_steps:
            action = rng_run.uniform(env.spec.action_low, env.spec.action_high)
        else:
            action = backbone.act(obs, "stochastic", rng_run)
        res = env.step(action)
        buf.push(obs, action, res.reward, res.next_obs, res.terminated, res.truncated, episode)
        obs = res.next_obs
        if res.done:
            episode += 1
            obs = env.reset(int(rng_run.integers(2**62)))
        if step > init_random_steps:
            backbone.update(buf, true_reward, rng_run)
        if step % eval_every == 0 and step > init_random_steps:
            mean_ret, _, _ = evaluate_policy(backbone, env_name, eval_seeds)
            if mean_ret > best_return:
                best_return = mean_ret
                best_params = backbone.policy.net.copy()
            if mean_ret >= target_return:
                return backbone, mean_ret

    frac = normalized_return(env_name, best_return, target_return)
    if frac < 0.8:
        raise ExpertTrainingError(
            f"budget {step_budget} exhausted: best return {best_return:.1f} is "
            f"below 80% of the way to target {target_return:.1f}"
        )
    warnings.warn(
        f"expert missed target {target_return:.1f} (best {best_return:.1f}); "
        "returning best checkpoint"
    )
    backbone.policy.net = best_params
    return backbone, best_return


def record_demos(
    backbone, env_name: str, n_episodes: int, include_actions: bool, seed: int
) -> DemoDataset:
    """Deterministic rollouts of a trained policy, keeping or stripping actions."""
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    env = make_env(env_name)
    episodes = []
    returns = []
    for ep in range(n_episodes):
        obs = env.reset(seed + ep)
        obs_list, act_list = [obs], []
        total = 0.0
        while True:
            action = backbone.act(obs, "deterministic")
            res = env.step(action)
            obs_list.append(res.next_obs)
            act_list.append(action)
            total += res.reward
            if res.done:
                break
            obs = res.next_obs
        returns.append(total)
        actions = np.stack(act_list) if include_actions else None
        episodes.append(Trajectory(np.stack(obs_list), actions))
    return DemoDataset(
        env_name,
        env.spec.obs_dim,
        env.spec.act_dim,
        episodes,
        include_actions,
        float(np.mean(returns)),
        seed,
    )


def _fmt(vec: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in vec)


def save_demos(dataset: DemoDataset, path) -> None:
    header = {
        "format": DEMO_FORMAT,
        "version": DEMO_VERSION,
        "env": dataset.env_name,
        "obs_dim": dataset.obs_dim,
        "act_dim": dataset.act_dim,
        "actions_included": dataset.actions_included,
        "n_episodes": dataset.n_episodes,
        "expert_mean_return": dataset.expert_mean_return,
        "seed": dataset.seed,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, ep in enumerate(dataset.episodes):
            n_trans = len(ep) - 1
            fh.write(f"episode {i} {n_trans}\n")
            for t in range(n_trans):
                cells = [_fmt(ep.observations[t])]
                if dataset.actions_included:
                    cells.append(_fmt(ep.actions[t]))
                cells.append(_fmt(ep.observations[t + 1]))
                fh.write(" ".join(cells) + "\n")


def load_demos(path) -> DemoDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DemoFileError("empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DemoFileError(f"bad header: {exc}") from None
    if header.get("format") != DEMO_FORMAT:
        raise DemoFileError("not a demo file")
    if header.get("version") != DEMO_VERSION:
        raise DemoFileError(f"unsupported version {header.get('version')}")
    obs_dim, act_dim = header["obs_dim"], header["act_dim"]
    with_actions = header["actions_included"]
    row_len = 2 * obs_dim + (act_dim if with_actions else 0)

    episodes = []
    pos = 1
    for _ in range(header["n_episodes"]):
        if pos >= len(lines):
            raise DemoFileError("truncated: missing episode header")
        parts = lines[pos].split()
        if len(parts) != 3 or parts[0] != "episode":
            raise DemoFileError(f"bad episode header at line {pos + 1}")
        n_trans = int(parts[2])
        pos += 1
        if pos + n_trans > len(lines):
            raise DemoFileError("truncated: missing transitions")
        obs = np.zeros((n_trans + 1, obs_dim))
        acts = np.zeros((n_trans, act_dim)) if with_actions else None
        for t in range(n_trans):
            vals = [float(v) for v in lines[pos + t].split()]
            if len(vals) != row_len:
                raise DemoFileError(f"bad transition width at line {pos + t + 1}")
            obs[t] = vals[:obs_dim]
            if with_actions:
                acts[t] = vals[obs_dim : obs_dim + act_dim]
            obs[t + 1] = vals[-obs_dim:]
        pos += n_trans
        episodes.append(Trajectory(obs, acts))
    if pos != len(lines):
        raise DemoFileError("trailing content after last episode")
    return DemoDataset(
        header["env"],
        obs_dim,
        act_dim,
        episodes,
        with_actions,
        header["expert_mean_return"],
        header["seed"],
    )


def save_policy(policy: GaussianPolicy, env_name: str, path) -> None:
    """Single-file policy checkpoint: JSON metadata line + MLP payload."""
    meta = {
        "format": POLICY_FORMAT,
        "version": 1,
        "env": env_name,
        "action_low": [float(v) for v in policy.action_low],
        "action_high": [float(v) for v in policy.action_high],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        fh.write(mlp_to_bytes(policy.net))


def load_policy(path) -> tuple[GaussianPolicy, str]:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise DemoFileError("bad policy file")
    meta = json.loads(blob[:nl])
    if meta.get("format") != POLICY_FORMAT:
        raise DemoFileError("not a policy checkpoint")
    net = mlp_from_bytes(blob[nl + 1 :])
    policy = GaussianPolicy(net, np.array(meta["action_low"]), np.array(meta["action_high"]))
    return policy, meta["env"]


@dataclass
class PolicyActor:
    """Minimal act() wrapper so a loaded policy can be evaluated/recorded."""

    policy: GaussianPolicy

    def act(self, obs, mode: str, rng=None):
        from .backbones.policy import act as policy_act

        return policy_act(self.policy, obs, mode, rng)
