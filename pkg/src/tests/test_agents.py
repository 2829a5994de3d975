#!/usr/bin/env python3
"""
Test suite for the hybrid-action agents and the training step
"""

import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from src.core import agents
from src.core.agents import AGENT_TYPES, AgentDims, TrainCounters, make_agent, train_step
from src.core.hybridenv import EnvConfig, PointMassSuctionEnv
from src.core.normalization import RunningNormalizer
from src.core.replay import Batch, ReplayBuffer
from src.core.tensor_nn import Tensor
from src.utils.errors import DivergenceError, EpisodeError, HybridRLError, NonFiniteError
from src.utils.validation import AgentSection, NetworkSection

OBS_DIM = 4
ACT_DIM = 2
OFF_POLICY = [name for name, cls in AGENT_TYPES.items() if not cls.on_policy]

SMALL_AGENT = {'n_critics': 2, 'm_atoms': 5, 'k_atoms': 4, 'beta': 1, 'rollout_steps': 16,
               'ppo_minibatch': 8, 'ppo_epochs': 1}


def _agent(variant='hybrid_td3', seed=0, lr=3e-4, **overrides):
    config = AgentSection(variant=variant, **{**SMALL_AGENT, **overrides})
    network = NetworkSection(hidden=[16], lr=lr)
    return make_agent(AgentDims(OBS_DIM, ACT_DIM), config, network, np.random.default_rng(seed))


def _batch(rng, rows=16):
    return Batch(s=rng.normal(size=(rows, OBS_DIM)), a_d=rng.integers(0, 2, rows),
                 a_c=rng.uniform(-1.0, 1.0, (rows, ACT_DIM)), r=rng.normal(size=rows),
                 s_next=rng.normal(size=(rows, OBS_DIM)), done=np.zeros(rows), indices=np.arange(rows))


class TestFactoryAndActing:
    """Test cases for agent construction and action selection"""

    @pytest.mark.parametrize('variant', list(AGENT_TYPES))
    def test_factory_builds_every_variant(self, variant, rng):
        agent = _agent(variant)
        assert isinstance(agent, AGENT_TYPES[variant])
        for mode in ('exploit', 'explore'):
            action = agents.act(agent, rng.normal(size=OBS_DIM), mode, rng, epsilon=0.5)
            assert action.a_c.shape == (ACT_DIM,)
            assert np.all(np.abs(action.a_c) <= 1.0)
            assert action.a_d in (0, 1)
            assert 0.0 <= action.suction_prob <= 1.0

    def test_unknown_variant(self):
        config = AgentSection().model_copy(update={'variant': 'rainbow'})
        with pytest.raises(HybridRLError) as exc:
            make_agent(AgentDims(OBS_DIM, ACT_DIM), config, NetworkSection(hidden=[8]), np.random.default_rng(0))
        assert exc.value.code == 'CFG-400'

    @pytest.mark.parametrize('variant', list(AGENT_TYPES))
    def test_exploit_is_deterministic(self, variant, rng):
        agent = _agent(variant)
        obs = rng.normal(size=OBS_DIM)
        first, second = agent.act(obs, 'exploit'), agent.act(obs, 'exploit')
        np.testing.assert_array_equal(first.a_c, second.a_c)
        assert first.a_d == second.a_d

    def test_noise_free_exploration_equals_exploitation(self, rng):
        agent = _agent(explore_sigma=0.0)
        obs = rng.normal(size=OBS_DIM)
        explore = agent.act(obs, 'explore', epsilon=0.0, rng=rng)
        exploit = agent.act(obs, 'exploit')
        np.testing.assert_array_equal(explore.a_c, exploit.a_c)
        assert explore.a_d == exploit.a_d

    def test_full_epsilon_picks_modes_uniformly(self):
        agent = _agent(explore_sigma=0.0)
        rng = np.random.default_rng(12)
        obs = np.zeros(OBS_DIM)
        modes = [agent.act(obs, 'explore', epsilon=1.0, rng=rng).a_d for _ in range(2000)]
        assert 0.4 < np.mean(modes) < 0.6

    def test_epsilon_schedule(self):
        agent = _agent(epsilon_start=0.3, epsilon_end=0.05, epsilon_anneal_fraction=0.2)
        assert agent.epsilon_at(0, 1000) == pytest.approx(0.3)
        assert agent.epsilon_at(100, 1000) == pytest.approx(0.175)
        assert agent.epsilon_at(900, 1000) == pytest.approx(0.05)

    @pytest.mark.parametrize('variant', list(AGENT_TYPES))
    def test_q_estimate_shape(self, variant, rng):
        agent = _agent(variant)
        q = agent.q_estimate(rng.normal(size=(3, OBS_DIM)), rng.uniform(-1, 1, (3, ACT_DIM)), np.array([0, 1, 1]))
        assert q.shape == (3,)
        assert np.all(np.isfinite(q))


class TestOffPolicyUpdates:
    """Test cases for critic/actor updates"""

    @pytest.mark.parametrize('variant', OFF_POLICY)
    def test_single_update(self, variant, rng):
        agent = _agent(variant)
        metrics = agent.update(_batch(rng))
        assert np.isfinite(metrics['critic_loss'])
        assert metrics['actor_updated']
        assert agent.update_count == 1 and agent.actor_update_count == 1

    def test_policy_delay(self, rng):
        agent = _agent(policy_delay=2)
        flags = [agent.update(_batch(rng))['actor_updated'] for _ in range(4)]
        assert flags == [True, False, True, False]
        assert agent.update_count == 4 and agent.actor_update_count == 2

    def test_ddpg_updates_actor_every_step(self, rng):
        agent = _agent('ddpg', policy_delay=3)
        assert len(agent.critics) == 1
        flags = [agent.update(_batch(rng))['actor_updated'] for _ in range(3)]
        assert flags == [True, True, True]

    def test_targets_follow_online_networks(self, rng):
        agent = _agent()
        before = [p.value.copy() for p in agent.critics_target.parameters()]
        agent.update(_batch(rng))
        after = agent.critics_target.parameters()
        assert any(not np.array_equal(a, b.value) for a, b in zip(before, after))

    def test_critic_loss_decreases_on_fixed_batch(self, rng):
        agent = _agent(lr=1e-2, smoothing_sigma=0.0)
        batch = _batch(rng)
        losses = [agent.critic_update(batch) for _ in range(300)]
        assert np.mean(losses[-10:]) < 0.5 * losses[0]

    def test_non_finite_loss_is_divergence(self):
        agent = _agent()
        with pytest.raises(DivergenceError) as exc:
            agent._step(Tensor(np.nan), 'critic')
        assert exc.value.code == 'RUN-500'
        assert exc.value.message.startswith('Hybrid TD3: non-finite critic loss')

    def test_variant_names_are_distinct(self):
        """Each variant reports under its own name"""
        names = [cls.name for cls in AGENT_TYPES.values()]
        assert len(set(names)) == len(names)
        assert _agent('hyacc').name == 'HyACC'
        assert not hasattr(_agent('ddpg'), 'backbone')

    def test_nan_rewards_surface(self, rng):
        agent = _agent()
        batch = _batch(rng)
        batch.r[0] = np.nan
        with pytest.raises(NonFiniteError):
            agent.update(batch)


class TestPPO:
    """Test cases for the on-policy baseline"""

    def setup_method(self):
        self.agent = _agent('ppo')
        self.rng = np.random.default_rng(3)

    def test_update_refuses_replay_batches(self):
        with pytest.raises(HybridRLError) as exc:
            self.agent.update(_batch(self.rng))
        assert exc.value.code == 'RUN-400'

    def test_ratio_one_gives_negative_mean_advantage(self):
        s = self.rng.normal(size=(6, OBS_DIM))
        u = self.rng.normal(size=(6, ACT_DIM))
        a_d = self.rng.integers(0, 2, 6)
        old = self.agent.policy.numpy_log_prob(s, u, a_d)
        advantages = self.rng.normal(size=6)
        losses = self.agent.ppo_losses(s, u, a_d, old, advantages, np.zeros(6))
        np.testing.assert_allclose(losses['ratio'].data, 1.0, atol=1e-10)
        assert losses['policy'].item() == pytest.approx(-advantages.mean(), abs=1e-10)

    def test_sample_action_log_prob(self):
        obs = self.rng.normal(size=OBS_DIM)
        action, u, log_prob, value = self.agent.sample_action(obs, self.rng)
        expected = self.agent.policy.numpy_log_prob(obs, u[None, :], np.array([action.a_d]))[0]
        assert log_prob == pytest.approx(expected)
        assert value == pytest.approx(self.agent.value(obs))


class TestCheckpoint:
    """Test cases for agent save/load"""

    @pytest.mark.parametrize('variant', ['hybrid_td3', 'hytqc', 'ppo'])
    def test_round_trip(self, variant, tmp_path, rng):
        agent = _agent(variant, seed=1)
        if not agent.on_policy:
            for _ in range(3):
                agent.update(_batch(rng))
        path = agent.save(tmp_path / 'agent.json', {'epoch': 4})
        fresh = _agent(variant, seed=99)
        extra = fresh.load(path)
        assert extra['epoch'] == 4
        assert (fresh.update_count, fresh.actor_update_count) == (agent.update_count, agent.actor_update_count)
        obs = rng.normal(size=(5, OBS_DIM))
        a_c = rng.uniform(-1, 1, (5, ACT_DIM))
        a_d = np.array([0, 1, 0, 1, 1])
        np.testing.assert_array_equal(fresh.q_estimate(obs, a_c, a_d), agent.q_estimate(obs, a_c, a_d))
        np.testing.assert_array_equal(fresh.act(obs[0]).a_c, agent.act(obs[0]).a_c)
        for name, net in agent.networks().items():
            for p, q in zip(net.parameters(), fresh.networks()[name].parameters()):
                np.testing.assert_array_equal(p.value, q.value)


class TestTrainStep:
    """Test cases for one environment step plus update"""

    def setup_method(self):
        self.env = PointMassSuctionEnv(EnvConfig(max_steps=8), np.random.default_rng(0))
        self.normalizer = RunningNormalizer(self.env.obs_dim)

    def _agent(self, variant='hybrid_td3'):
        config = AgentSection(variant=variant, **SMALL_AGENT)
        return make_agent(AgentDims(self.env.obs_dim, self.env.act_dim), config, NetworkSection(hidden=[16]),
                          np.random.default_rng(2))

    def _run(self, agent, buffer, steps, warmup, batch_size=4):
        counters = TrainCounters(total_steps=steps)
        replay_rng = np.random.default_rng(7)
        self.env.reset()
        out = []
        for _ in range(steps):
            metrics = train_step(agent, self.env, buffer, self.normalizer, counters, replay_rng, batch_size, warmup)
            out.append(metrics)
            if metrics['terminated'] or metrics['truncated']:
                self.env.reset()
        return out, counters

    def test_needs_live_episode(self):
        with pytest.raises(EpisodeError):
            train_step(self._agent(), self.env, ReplayBuffer(self.env.obs_dim, 2), self.normalizer,
                       TrainCounters(), np.random.default_rng(0))

    def test_no_updates_during_warmup(self):
        buffer = ReplayBuffer(self.env.obs_dim, self.env.act_dim, capacity=100)
        out, counters = self._run(self._agent(), buffer, 12, warmup=5)
        assert [m['updated'] for m in out] == [False] * 5 + [True] * 7
        assert counters.updates == 7 and counters.env_steps == 12
        assert len(buffer) == 12
        assert self.normalizer.count == 12

    def test_ppo_updates_when_rollout_fills(self):
        agent = self._agent('ppo')
        out, counters = self._run(agent, None, 20, warmup=0)
        assert [i for i, m in enumerate(out) if m['updated']] == [15]
        assert counters.updates == 1
        assert agent.rollout.count == 4

    def test_normalize_batch_leaves_actions(self, rng):
        normalizer = RunningNormalizer(OBS_DIM)
        for row in rng.normal(2.0, 3.0, size=(50, OBS_DIM)):
            normalizer.observe(row)
        batch = _batch(rng)
        normed = agents.normalize_batch(batch, normalizer)
        np.testing.assert_array_equal(normed.a_c, batch.a_c)
        np.testing.assert_allclose(normed.s, normalizer.normalize(batch.s))
