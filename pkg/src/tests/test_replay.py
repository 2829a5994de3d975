#!/usr/bin/env python3
"""
Test suite for the replay and rollout buffers
"""

import os
import sys

import numpy as np
import pytest
from scipy import stats

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from src.core.replay import ReplayBuffer, RolloutBuffer, Transition
from src.utils.errors import ReplayError


def _transition(i: int, obs_dim: int = 3, act_dim: int = 2) -> Transition:
    return Transition(np.full(obs_dim, float(i)), i % 2, np.full(act_dim, 0.1 * i), float(i),
                      np.full(obs_dim, i + 1.0), i % 5 == 4)


class TestReplayBuffer:
    """Test cases for the ring buffer"""

    def test_push_to_empty(self):
        buffer = ReplayBuffer(3, 2, capacity=4)
        buffer.push(_transition(0))
        assert len(buffer) == 1

    def test_saturates_and_overwrites_oldest(self):
        buffer = ReplayBuffer(3, 2, capacity=3)
        for i in range(4):
            buffer.push(_transition(i))
        assert len(buffer) == 3
        assert 0.0 not in buffer.r[:3]
        assert buffer.oldest().r == 1.0

    def test_fifo_order(self):
        buffer = ReplayBuffer(3, 2, capacity=3)
        for i in range(7):
            buffer.push(_transition(i))
        # slots hold 6, 4, 5; the next overwrite hits 4
        assert sorted(buffer.r.tolist()) == [4.0, 5.0, 6.0]
        assert buffer.oldest().r == 4.0
        buffer.push(_transition(7))
        assert buffer.oldest().r == 5.0

    def test_single_element_batch(self, rng):
        buffer = ReplayBuffer(3, 2, capacity=10)
        buffer.push(_transition(3))
        batch = buffer.sample(1, rng)
        assert batch.r.tolist() == [3.0]
        with pytest.raises(ReplayError) as exc:
            buffer.sample(4, rng)
        assert exc.value.code == 'BUF-409'

    def test_batch_columns(self, rng):
        buffer = ReplayBuffer(3, 2, capacity=10)
        for i in range(10):
            buffer.push(_transition(i))
        batch = buffer.sample(6, rng)
        assert batch.s.shape == (6, 3) and batch.a_c.shape == (6, 2)
        assert batch.done.dtype == np.float64
        np.testing.assert_array_equal(batch.r, batch.indices.astype(float))
        assert len(batch.transitions()) == 6

    def test_uniform_sampling(self):
        buffer = ReplayBuffer(3, 2, capacity=10)
        for i in range(10):
            buffer.push(_transition(i))
        indices = buffer.sample_indices(100_000, np.random.default_rng(0))
        counts = np.bincount(indices, minlength=10)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_same_seed_same_indices(self):
        buffer = ReplayBuffer(3, 2, capacity=10)
        for i in range(10):
            buffer.push(_transition(i))
        first = buffer.sample_indices(32, np.random.default_rng(8))
        second = buffer.sample_indices(32, np.random.default_rng(8))
        np.testing.assert_array_equal(first, second)

    def test_dimension_mismatch(self):
        buffer = ReplayBuffer(3, 2)
        with pytest.raises(ReplayError) as exc:
            buffer.push(_transition(0, obs_dim=4))
        assert exc.value.code == 'BUF-400'

    def test_invalid_capacity_and_batch(self, rng):
        with pytest.raises(ReplayError):
            ReplayBuffer(3, 2, capacity=0)
        with pytest.raises(ReplayError):
            ReplayBuffer(3, 2).sample_indices(0, rng)

    def test_save_load(self, tmp_path, rng):
        buffer = ReplayBuffer(3, 2, capacity=5)
        for i in range(7):
            buffer.push(_transition(i))
        restored = ReplayBuffer.load(buffer.save(tmp_path / 'buffer.npz'))
        assert (restored.size, restored.cursor, restored.capacity) == (buffer.size, buffer.cursor, buffer.capacity)
        np.testing.assert_array_equal(restored.s, buffer.s)
        np.testing.assert_array_equal(restored.done, buffer.done)
        assert restored.oldest().r == buffer.oldest().r


class TestRolloutBuffer:
    """Test cases for on-policy storage and GAE"""

    def _filled(self, rewards, values, next_values, terminal, episode_end):
        rollout = RolloutBuffer(2, 2, size=len(rewards))
        for i, r in enumerate(rewards):
            rollout.add(np.zeros(2), np.zeros(2), 0, 0.0, r, values[i], next_values[i], terminal[i], episode_end[i])
        return rollout

    def test_gae_hand_computed(self):
        rollout = self._filled([1.0, 2.0], [0.5, 1.0], [1.0, 0.0], [False, True], [False, True])
        rollout.compute_advantages(gamma=0.9, lam=0.5)
        # delta_1 = 2 - 1 = 1; delta_0 = 1 + 0.9 * 1 - 0.5 = 1.4; A_0 = 1.4 + 0.45 * 1
        np.testing.assert_allclose(rollout.advantages, [1.85, 1.0])
        np.testing.assert_allclose(rollout.returns, [2.35, 2.0])

    def test_truncation_bootstraps_but_stops_recursion(self):
        rollout = self._filled([1.0, 1.0], [0.0, 0.0], [3.0, 3.0], [False, False], [True, True])
        rollout.compute_advantages(gamma=0.5, lam=1.0)
        np.testing.assert_allclose(rollout.advantages, [2.5, 2.5])

    def test_lambda_one_is_monte_carlo(self):
        rollout = self._filled([1.0, 1.0, 1.0], [0.3, 0.2, 0.1], [0.2, 0.1, 0.0], [False, False, True],
                               [False, False, True])
        rollout.compute_advantages(gamma=1.0, lam=1.0)
        np.testing.assert_allclose(rollout.returns, [3.0, 2.0, 1.0])

    def test_overflow_and_minibatch_order(self, rng):
        rollout = self._filled([0.0] * 3, [0.0] * 3, [0.0] * 3, [False] * 3, [False] * 3)
        with pytest.raises(ReplayError) as exc:
            rollout.add(np.zeros(2), np.zeros(2), 0, 0.0, 0.0, 0.0, 0.0, False, False)
        assert exc.value.code == 'BUF-409'
        with pytest.raises(ReplayError):
            next(rollout.minibatches(2, rng))
        rollout.compute_advantages(0.99, 0.95)
        batches = list(rollout.minibatches(2, rng))
        assert [len(b) for b in batches] == [2, 1]
        assert sorted(np.concatenate(batches).tolist()) == [0, 1, 2]

    def test_clear(self):
        rollout = self._filled([1.0], [0.0], [0.0], [True], [True])
        rollout.compute_advantages(0.9, 0.9)
        rollout.clear()
        assert rollout.count == 0 and rollout.advantages is None

    def test_partial_save_load(self, tmp_path):
        rollout = RolloutBuffer(2, 2, size=4)
        rollout.add(np.ones(2), np.full(2, 0.5), 1, -0.7, 2.0, 0.1, 0.2, False, False)
        path = rollout.save(tmp_path / 'rollout.npz')
        restored = RolloutBuffer(2, 2, size=4).load_into(path)
        assert restored.count == 1
        assert restored.a_d[0] == 1 and restored.log_prob[0] == -0.7
        with pytest.raises(ReplayError):
            RolloutBuffer(2, 2, size=8).load_into(path)
