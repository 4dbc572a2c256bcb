import numpy as np
import pytest

from rail.backbones.replay import ReplayBuffer
from rail.segments import SegmentSpec


def fill(buf, n, episode_len=10, obs_dim=2, act_dim=1, start=0):
    """Push n transitions whose obs encode their global index."""
    for i in range(start, start + n):
        ep = i // episode_len
        t = i % episode_len
        obs = np.full(obs_dim, float(i))
        next_obs = np.full(obs_dim, float(i + 1))
        end = t == episode_len - 1
        buf.push(obs, np.full(act_dim, 0.1 * i), float(i), next_obs, False, end, ep)


class TestFifo:
    def test_eviction_drops_oldest(self):
        buf = ReplayBuffer(50, 2, 1)
        fill(buf, 50 + 7)
        assert len(buf) == 50
        assert buf.oldest_index == 7
        batch = buf.gather(np.arange(7, 57))
        assert batch.obs[0, 0] == 7.0

    def test_sampling_uniform_chi_square(self):
        buf = ReplayBuffer(20, 2, 1)
        fill(buf, 20)
        rng = np.random.default_rng(0)
        idx = buf.sample_indices(10_000, rng)
        counts = np.bincount(idx, minlength=20)
        expected = 10_000 / 20
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # 19 dof: P(chi2 > 43.8) ~ 0.001
        assert chi2 < 43.8
        assert np.all(counts > 0)

    def test_empty_buffer_rejects_sampling(self):
        buf = ReplayBuffer(10, 2, 1)
        with pytest.raises(ValueError):
            buf.sample(4, np.random.default_rng(0))


class TestSegments:
    def test_state_pair_uses_stored_next_obs(self):
        buf = ReplayBuffer(100, 2, 1)
        fill(buf, 30)
        segs = buf.segment_batch(np.array([3, 11]), SegmentSpec("state_pair"))
        np.testing.assert_array_equal(segs[0], [3.0, 3.0, 4.0, 4.0])
        np.testing.assert_array_equal(segs[1], [11.0, 11.0, 12.0, 12.0])

    def test_state_action_includes_action(self):
        buf = ReplayBuffer(100, 2, 1)
        fill(buf, 10)
        segs = buf.segment_batch(np.array([4]), SegmentSpec("state_action"))
        np.testing.assert_allclose(segs[0], [4.0, 4.0, 0.4])

    def test_skip_within_episode(self):
        buf = ReplayBuffer(100, 2, 1)
        fill(buf, 30, episode_len=10)
        segs = buf.segment_batch(np.array([2]), SegmentSpec("state_skip", skip=3))
        np.testing.assert_array_equal(segs[0], [2.0, 2.0, 5.0, 5.0])

    def test_skip_clamps_at_episode_tail(self):
        buf = ReplayBuffer(100, 2, 1)
        fill(buf, 30, episode_len=10)
        # anchor 8 is the second-to-last transition of episode 0; a skip of 3
        # can only reach the episode's final observation (index 10)
        segs = buf.segment_batch(np.array([8]), SegmentSpec("state_skip", skip=3))
        np.testing.assert_array_equal(segs[0], [8.0, 8.0, 10.0, 10.0])

    def test_window_never_straddles_episodes(self):
        buf = ReplayBuffer(100, 2, 1)
        fill(buf, 30, episode_len=10)
        spec = SegmentSpec("affine_window", window=4)
        mask = buf.full_window_mask(np.arange(0, 20), spec.lookahead)
        # episode 0 spans transitions 0..9 (11 observations), so window-4
        # anchors 0..7 are complete and 8..9 are not: 11 - 4 + 1 = 8 anchors
        np.testing.assert_array_equal(mask[:10], [True] * 8 + [False] * 2)

    def test_sample_segments_prefers_full_windows(self):
        buf = ReplayBuffer(1000, 2, 1)
        fill(buf, 200, episode_len=10)
        spec = SegmentSpec("affine_window", window=4)
        segs = buf.sample_segments(64, spec, np.random.default_rng(1))
        # a full window has strictly increasing encoded indices
        for row in segs:
            vals = row[::2]
            assert np.all(np.diff(vals) == 1.0)

    def test_poison_hook(self):
        buf = ReplayBuffer(10, 2, 1)
        fill(buf, 10)
        buf.poison_reward_slots()
        assert np.isnan(buf.sample(4, np.random.default_rng(0)).rewards).all()
