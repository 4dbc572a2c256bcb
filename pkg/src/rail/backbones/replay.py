"""FIFO replay buffer with episode-aware segment extraction.

Transitions carry an episode id so multi-step segment windows never straddle
an episode boundary. The stored reward slot is a collection-time diagnostic
only; off-policy updates recompute rewards through the reward function they
are handed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..segments import SegmentSpec


@dataclass
class TransitionBatch:
    indices: np.ndarray      # absolute insertion indices (for segment lookups)
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray      # stored diagnostic slot, not the training signal
    next_obs: np.ndarray
    terminated: np.ndarray   # float mask
    truncated: np.ndarray    # float mask

    def __len__(self) -> int:
        return len(self.indices)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim))
        self._act = np.zeros((capacity, act_dim))
        self._rew = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_dim))
        self._term = np.zeros(capacity)
        self._trunc = np.zeros(capacity)
        self._episode = np.full(capacity, -1, dtype=np.int64)
        self._count = 0  # total pushes ever

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    @property
    def oldest_index(self) -> int:
        return self._count - len(self)

    def push(self, obs, action, reward, next_obs, terminated, truncated, episode_id):
        slot = self._count % self.capacity
        self._obs[slot] = obs
        self._act[slot] = action
        self._rew[slot] = reward
        self._next_obs[slot] = next_obs
        self._term[slot] = float(terminated)
        self._trunc[slot] = float(truncated)
        self._episode[slot] = episode_id
        self._count += 1

    def poison_reward_slots(self, value: float = np.nan) -> None:
        """Test hook: overwrite every stored reward (alive code must not care)."""
        self._rew[: len(self)] = value

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(self.oldest_index, self._count, size=batch_size)

    def gather(self, indices: np.ndarray) -> TransitionBatch:
        slots = indices % self.capacity
        return TransitionBatch(
            indices=indices,
            obs=self._obs[slots].copy(),
            actions=self._act[slots].copy(),
            rewards=self._rew[slots].copy(),
            next_obs=self._next_obs[slots].copy(),
            terminated=self._term[slots].copy(),
            truncated=self._trunc[slots].copy(),
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        return self.gather(self.sample_indices(batch_size, rng))

    def _lookahead_valid(self, indices: np.ndarray, j: int) -> np.ndarray:
        """True where entry index+j-1 exists and shares the anchor's episode."""
        target = indices + j - 1
        ok = (target < self._count) & (target >= self.oldest_index)
        same = np.zeros(len(indices), dtype=bool)
        tslots = target[ok] % self.capacity
        aslots = indices[ok] % self.capacity
        same[ok] = self._episode[tslots] == self._episode[aslots]
        return ok & same

    def obs_ahead(self, indices: np.ndarray, j: int) -> np.ndarray:
        """Observation j steps after each anchor, clamping at episode tails.

        j = 0 is the anchor's own observation; j >= 1 reads the next_obs of
        entry index+j-1. Where the episode (or the stored history) ends
        early, the latest available observation is repeated.
        """
        if j == 0:
            return self._obs[indices % self.capacity].copy()
        out = self.obs_ahead(indices, j - 1)
        valid = self._lookahead_valid(indices, j)
        if valid.any():
            tslots = (indices[valid] + j - 1) % self.capacity
            out[valid] = self._next_obs[tslots]
        return out

    def full_window_mask(self, indices: np.ndarray, lookahead: int) -> np.ndarray:
        ok = np.ones(len(indices), dtype=bool)
        for j in range(1, lookahead + 1):
            ok &= self._lookahead_valid(indices, j)
        return ok

    def segment_batch(self, indices: np.ndarray, spec: SegmentSpec) -> np.ndarray:
        """Segments anchored at the given entries, with tail clamping."""
        slots = indices % self.capacity
        if spec.kind == "state_action":
            return np.concatenate([self._obs[slots], self._act[slots]], axis=1)
        if spec.kind == "state_pair":
            return np.concatenate([self._obs[slots], self._next_obs[slots]], axis=1)
        if spec.kind == "state_delta":
            return np.concatenate(
                [self._obs[slots], self._next_obs[slots] - self._obs[slots]], axis=1
            )
        if spec.kind == "state_skip":
            ahead = self.obs_ahead(indices, spec.skip)
            return np.concatenate([self._obs[slots], ahead], axis=1)
        cols = [self.obs_ahead(indices, j) for j in range(spec.window)]
        return np.concatenate(cols, axis=1)

    def sample_segments(
        self, batch_size: int, spec: SegmentSpec, rng: np.random.Generator, max_tries: int = 50
    ) -> np.ndarray:
        """Segments from anchors with complete windows (rejection-sampled).

        Falls back to clamped windows for anchors still invalid after
        max_tries rounds, which can only happen when almost no full window
        exists in the buffer yet.
        """
        indices = self.sample_indices(batch_size, rng)
        need = spec.lookahead
        if need > 0:
            for _ in range(max_tries):
                bad = ~self.full_window_mask(indices, need)
                if not bad.any():
                    break
                indices[bad] = self.sample_indices(int(bad.sum()), rng)
        return self.segment_batch(indices, spec)
