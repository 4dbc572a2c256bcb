"""Training engine: composes an environment, a discriminator input
representation, a discriminator, and an RL backbone into the adversarial
imitation loop.

Phases of a trial:

1. seed phase -- the first ``init_random_steps`` interactions use uniform
   random actions to fill the replay/segment pools;
2. warmup block -- ``warmup_disc_steps`` discriminator updates, then
   ``warmup_q_steps`` Q updates with the policy frozen (skipped for PPO,
   whose value function warms up with its rollouts);
3. main loop -- per interaction: act, store; every ``disc_update_every``
   interactions one discriminator round on fresh learner segments vs
   resampled expert segments; every ``cycle_y`` interactions
   ``policy_updates_x`` backbone updates; every ``eval_every`` interactions
   a deterministic evaluation on the true reward, appended to the metrics.

Schedule counts are exact; see `expected_counters`. Off-policy backbones
draw learner segments from the replay buffer and recompute rewards from the
current discriminator at sample time; PPO draws them from its recent
on-policy steps and records rewards as soon as each segment's window
completes during collection.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .backbones import BackboneConfig, ReplayBuffer, make_backbone
from .discriminator import DiscConfig, disc_update, imitation_reward, init_discriminator
from .demos import DemoDataset, evaluate_policy
from .envs import make_env
from .segments import (
    ActionsUnavailableError,
    AffineParams,
    SegmentSpec,
    extract_segments,
    segment_dim,
)


@dataclass
class Schedule:
    total_steps: int
    init_random_steps: int = 1000
    warmup_disc_steps: int = 500
    warmup_q_steps: int = 5000
    disc_update_every: int = 100
    policy_updates_x: int = 1
    cycle_y: int = 1
    eval_every: int = 4000
    eval_episodes: int = 10

    def validate(self) -> None:
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("eval cadence must be positive")
        if self.total_steps < self.eval_every:
            raise ValueError("total_steps must cover at least one evaluation")
        if min(self.disc_update_every, self.policy_updates_x, self.cycle_y) < 1:
            raise ValueError("update cadences must be >= 1")
        if self.warmup_disc_steps < 0 or self.warmup_q_steps < 0 or self.init_random_steps < 0:
            raise ValueError("warmup counts must be non-negative")


@dataclass
class EvalRecord:
    env_steps: int
    eval_mean_return: float
    eval_min: float
    eval_max: float
    losses: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "env_steps": self.env_steps,
                "eval_mean_return": self.eval_mean_return,
                "eval_min": self.eval_min,
                "eval_max": self.eval_max,
                "losses": self.losses,
            },
            sort_keys=True,
        )


@dataclass
class TrialMetrics:
    env_name: str
    seed: int
    config_digest: str
    records: list[EvalRecord] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    expert_mean_return: float = 0.0
    failed: bool = False
    error: str = ""

    def to_jsonl(self) -> str:
        lines = [r.to_json() for r in self.records]
        lines.append(
            json.dumps(
                {
                    "summary": True,
                    "env": self.env_name,
                    "seed": self.seed,
                    "config_digest": self.config_digest,
                    "counters": self.counters,
                    "expert_mean_return": self.expert_mean_return,
                    "failed": self.failed,
                    "error": self.error,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "TrialMetrics":
        records = []
        summary = None
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("summary"):
                summary = obj
            else:
                records.append(
                    EvalRecord(
                        obj["env_steps"],
                        obj["eval_mean_return"],
                        obj["eval_min"],
                        obj["eval_max"],
                        obj.get("losses", {}),
                    )
                )
        if summary is None:
            raise ValueError("metrics stream has no summary record")
        return TrialMetrics(
            summary["env"],
            summary["seed"],
            summary["config_digest"],
            records,
            summary.get("counters", {}),
            summary.get("expert_mean_return", 0.0),
            summary.get("failed", False),
            summary.get("error", ""),
        )


@dataclass
class EngineConfig:
    env_name: str
    backbone: BackboneConfig
    disc: DiscConfig
    segment: SegmentSpec
    schedule: Schedule
    affine: AffineParams | None = None

    def validate(self) -> None:
        self.backbone.validate()
        self.disc.validate()
        self.schedule.validate()


def expected_counters(schedule: Schedule, cfg: DiscConfig, n_steps: int) -> dict:
    """Closed-form update counts after n_steps interactions (SAC-style
    backbones where every cycle update moves both Q and policy)."""
    init = schedule.init_random_steps
    boundaries = lambda every: max(0, n_steps // every - init // every)  # noqa: E731
    return {
        "disc_updates": schedule.warmup_disc_steps
        + boundaries(schedule.disc_update_every) * cfg.updates_per_round,
        "q_updates": schedule.warmup_q_steps
        + boundaries(schedule.cycle_y) * schedule.policy_updates_x,
        "policy_updates": boundaries(schedule.cycle_y) * schedule.policy_updates_x,
        "evaluations": n_steps // schedule.eval_every,
    }


class RailEngine:
    """One imitation trial: own RNG streams, own environment, no shared state."""

    def __init__(self, config: EngineConfig, demos: DemoDataset, seed: int,
                 config_digest: str = ""):
        config.validate()
        if demos.env_name != config.env_name:
            raise ValueError(
                f"demo dataset is for {demos.env_name!r}, run is {config.env_name!r}"
            )
        self.config = config
        self.seed = seed
        self.env = make_env(config.env_name)
        self.eval_env_name = config.env_name
        spec = self.env.spec

        if config.segment.needs_actions and not demos.actions_included:
            raise ActionsUnavailableError(
                "actions unavailable: this demo dataset is observation-only but "
                f"the representation {config.segment.tag()!r} needs expert actions"
            )

        ss = np.random.SeedSequence(seed)
        (s_net, s_disc_init, s_act, s_disc, s_env, s_eval) = ss.spawn(6)
        self.rng_act = np.random.default_rng(s_act)
        self.rng_disc = np.random.default_rng(s_disc)
        self.rng_env = np.random.default_rng(s_env)
        self.eval_seeds = [
            int(v) for v in np.random.default_rng(s_eval).integers(0, 2**62, size=config.schedule.eval_episodes)
        ]

        self.backbone = make_backbone(config.backbone, spec, np.random.default_rng(s_net))
        self.seg_dim = segment_dim(config.segment, spec.obs_dim, spec.act_dim)
        self.disc = init_discriminator(
            self.seg_dim, config.disc, np.random.default_rng(s_disc_init), affine=config.affine
        )

        # expert segments are extracted once; only sampled after that
        per_episode = []
        for ep in demos.episodes:
            if len(ep) >= config.segment.min_trajectory_len():
                per_episode.append(extract_segments(ep, config.segment))
        if not per_episode:
            raise ValueError("no demo episode is long enough for this representation")
        self.expert_segments = np.concatenate(per_episode)
        self.expert_mean_return = demos.expert_mean_return

        self.buffer = None
        if self.backbone.is_off_policy:
            self.buffer = ReplayBuffer(config.backbone.replay_capacity, spec.obs_dim, spec.act_dim)
        # recent on-policy segments for PPO discriminator rounds
        pool_cap = config.backbone.rollout_length if not self.backbone.is_off_policy else 1
        self.segment_pool = deque(maxlen=max(pool_cap, config.disc.batch_size))

        self.metrics = TrialMetrics(config.env_name, seed, config_digest)
        self.metrics.expert_mean_return = demos.expert_mean_return
        self.global_step = 0
        self.episode = 0
        self.warmup_done = False
        self._loss_accum: dict[str, list] = {}
        self._obs = self.env.reset(self._next_env_seed())
        # current-episode observation tail for on-policy segment building
        self._ep_obs: deque = deque(maxlen=max(config.segment.lookahead + 1, 2))
        self._ep_obs.append(self._obs)
        self._pending: list[tuple[int | None, int]] = []  # (rollout index, anchor t)
        self._ep_t = 0

    # ----- helpers -------------------------------------------------------

    def _next_env_seed(self) -> int:
        return int(self.rng_env.integers(0, 2**62))

    def _expert_batch(self, n: int) -> np.ndarray:
        idx = self.rng_disc.integers(0, len(self.expert_segments), size=n)
        return self.expert_segments[idx]

    def _learner_segments(self, n: int) -> np.ndarray | None:
        if self.backbone.is_off_policy:
            return self.buffer.sample_segments(n, self.config.segment, self.rng_disc)
        if len(self.segment_pool) == 0:
            return None
        pool = np.stack(self.segment_pool)
        return pool[self.rng_disc.integers(0, len(pool), size=n)]

    def _disc_round(self) -> None:
        for _ in range(self.config.disc.updates_per_round):
            learner = self._learner_segments(self.config.disc.batch_size)
            if learner is None:
                return
            expert = self._expert_batch(self.config.disc.batch_size)
            self.disc, report = disc_update(
                self.disc, expert, learner, self.config.disc, self.rng_disc
            )
            self._accumulate("disc", report.as_dict())

    def _reward_fn(self, batch):
        segments = self.buffer.segment_batch(batch.indices, self.config.segment)
        return imitation_reward(self.disc, segments, self.config.disc)

    def _segment_reward(self, segment: np.ndarray) -> float:
        return float(imitation_reward(self.disc, segment, self.config.disc))

    def _accumulate(self, prefix: str, values: dict) -> None:
        for key, val in values.items():
            self._loss_accum.setdefault(f"{prefix}_{key}", []).append(float(val))

    def _drain_losses(self) -> dict:
        out = {k: float(np.mean(v)) for k, v in sorted(self._loss_accum.items())}
        self._loss_accum.clear()
        return out

    # ----- on-policy segment plumbing ------------------------------------

    def _episode_segment(self, t_anchor: int, clamp: bool) -> np.ndarray | None:
        """Segment anchored at episode step t_anchor from the episode tail.

        The tail deque only keeps the last lookahead+1 observations, so the
        anchor must be its oldest entry by the time the window completes.
        """
        spec = self.config.segment
        look = spec.lookahead
        tail = list(self._ep_obs)
        # index of t_anchor inside the tail
        first_t = self._ep_t - (len(tail) - 1)
        i = t_anchor - first_t
        if i < 0:
            return None  # anchor already slid out (cannot happen with sized deque)
        avail = len(tail) - 1 - i
        if avail < look and not clamp:
            return None
        obs_at = lambda j: tail[min(i + j, len(tail) - 1)]  # noqa: E731
        s_t = tail[i]
        if spec.kind == "state_pair":
            return np.concatenate([s_t, obs_at(1)])
        if spec.kind == "state_delta":
            return np.concatenate([s_t, obs_at(1) - s_t])
        if spec.kind == "state_skip":
            return np.concatenate([s_t, obs_at(spec.skip)])
        if spec.kind == "affine_window":
            return np.concatenate([obs_at(j) for j in range(spec.window)])
        raise AssertionError("state_action segments are built at record time")

    def _record_on_policy_step(self, obs, action, u, logp, res) -> None:
        spec = self.config.segment
        rollout = self.backbone.rollout
        if spec.kind == "state_action":
            seg = np.concatenate([obs, action])
            reward = self._segment_reward(seg)
            self.segment_pool.append(seg)
            rollout.record(obs, action, u, logp, reward, res.next_obs,
                           res.terminated, res.truncated)
            return
        rollout.record(obs, action, u, logp, np.nan, res.next_obs,
                       res.terminated, res.truncated)
        self._pending.append((len(rollout) - 1, self._ep_t - 1))

    def _flush_pending(self, clamp: bool) -> None:
        """Resolve pending on-policy segments whose windows are now complete.

        Entries with roll_idx None only feed the discriminator pool (seed
        phase); the rest also receive their collection-time reward.
        """
        rollout = self.backbone.rollout
        still = []
        for roll_idx, t_anchor in self._pending:
            seg = self._episode_segment(t_anchor, clamp)
            if seg is None:
                still.append((roll_idx, t_anchor))
                continue
            if roll_idx is not None:
                rollout.rewards[roll_idx] = self._segment_reward(seg)
            self.segment_pool.append(seg)
        self._pending = still

    # ----- spec operations -------------------------------------------------

    def warmup(self) -> "RailEngine":
        """Seed-phase collection plus the discriminator/Q warmup blocks."""
        if self.warmup_done:
            return self
        sched = self.config.schedule
        while self.global_step < sched.init_random_steps:
            self._env_step(random_action=True)
            self._maybe_eval()
        # discriminator warmup; top up experience first if a batch needs it
        if sched.warmup_disc_steps > 0:
            while self.backbone.is_off_policy and len(self.buffer) < self.config.disc.batch_size:
                self._env_step(random_action=True)
                self._maybe_eval()
        for _ in range(sched.warmup_disc_steps):
            learner = self._learner_segments(self.config.disc.batch_size)
            if learner is None:
                break
            expert = self._expert_batch(self.config.disc.batch_size)
            self.disc, _ = disc_update(
                self.disc, expert, learner, self.config.disc, self.rng_disc
            )
        # Q warmup with the policy frozen (off-policy backbones only)
        if self.backbone.is_off_policy and sched.warmup_q_steps > 0:
            while len(self.buffer) < self.config.backbone.batch_size:
                self._env_step(random_action=True)
                self._maybe_eval()
            for _ in range(sched.warmup_q_steps):
                self.backbone.update(self.buffer, self._reward_fn, self.rng_act,
                                     update_policy=False)
        self.warmup_done = True
        return self

    def evaluate(self) -> tuple[float, float, float]:
        """Deterministic evaluation on the true reward; fixed seeds, isolated
        from training state and RNG."""
        return evaluate_policy(self.backbone, self.eval_env_name, self.eval_seeds)

    def train(self) -> TrialMetrics:
        sched = self.config.schedule
        self.warmup()
        while self.global_step < sched.total_steps:
            self._env_step(random_action=False)
            step = self.global_step
            if step % sched.disc_update_every == 0:
                self._disc_round()
            if self.backbone.is_off_policy:
                if step % sched.cycle_y == 0:
                    for _ in range(sched.policy_updates_x):
                        report = self.backbone.update(self.buffer, self._reward_fn, self.rng_act)
                        self._accumulate("backbone", report.as_dict())
            else:
                if len(self.backbone.rollout) >= self.config.backbone.rollout_length:
                    self._flush_pending(clamp=True)
                    report = self.backbone.update_from_rollout(self.rng_act)
                    self._accumulate("backbone", report.as_dict())
            self._maybe_eval()
        self._finalize_counters()
        return self.metrics

    def _maybe_eval(self) -> None:
        if self.global_step % self.config.schedule.eval_every == 0:
            self._record_eval()

    # ----- internals -------------------------------------------------------

    def _env_step(self, random_action: bool) -> None:
        spec = self.env.spec
        obs = self._obs
        if random_action:
            action = self.rng_act.uniform(spec.action_low, spec.action_high)
            u = logp = None
        elif self.backbone.is_off_policy:
            action = self.backbone.act(obs, "stochastic", self.rng_act)
            u = logp = None
        else:
            action, u, logp = self.backbone.act_with_info(obs, self.rng_act)
        res = self.env.step(action)
        self.global_step += 1
        self._ep_t += 1
        self._ep_obs.append(res.next_obs)

        if self.backbone.is_off_policy:
            self.buffer.push(obs, action, res.reward, res.next_obs,
                             res.terminated, res.truncated, self.episode)
        else:
            if random_action:
                # seed phase: feed the discriminator pool only
                if self.config.segment.kind == "state_action":
                    self.segment_pool.append(np.concatenate([obs, action]))
                else:
                    self._pending.append((None, self._ep_t - 1))
            else:
                self._record_on_policy_step(obs, action, u, logp, res)
            self._flush_pending(clamp=False)

        if res.done:
            if not self.backbone.is_off_policy:
                self._flush_pending(clamp=True)
            self.episode += 1
            self._obs = self.env.reset(self._next_env_seed())
            self._ep_obs.clear()
            self._ep_obs.append(self._obs)
            self._ep_t = 0
            self._pending = []
        else:
            self._obs = res.next_obs

    def _record_eval(self) -> None:
        mean_ret, min_ret, max_ret = self.evaluate()
        self.metrics.records.append(
            EvalRecord(self.global_step, mean_ret, min_ret, max_ret, self._drain_losses())
        )

    def _finalize_counters(self) -> None:
        counters = {
            "env_steps": self.global_step,
            "episodes": self.episode,
            "disc_updates": self.disc.updates_done,
            "disc_skipped": self.disc.skipped_updates,
            "evaluations": len(self.metrics.records),
            "action_clips": self.env.clip_count,
        }
        if self.backbone.is_off_policy:
            counters["q_updates"] = self.backbone.q_updates
            counters["policy_updates"] = self.backbone.policy_updates
            counters["skipped_updates"] = self.backbone.skipped_updates
        else:
            counters["policy_updates"] = self.backbone.policy_updates
            counters["early_stops"] = self.backbone.early_stops
            counters["skipped_updates"] = self.backbone.skipped_updates
        self.metrics.counters = counters


def train(config: EngineConfig, demos: DemoDataset, seed: int, config_digest: str = "") -> TrialMetrics:
    """Run one full trial and return its metrics."""
    return RailEngine(config, demos, seed, config_digest).train()
