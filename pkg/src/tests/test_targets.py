#!/usr/bin/env python3
"""
Test suite for the bootstrap-target rules
"""

import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from mocks import FrozenCritic, GaussianCritic, LinearCritic, mock_batch_arrays
from src.core import agents
from src.core import bias_analytics as ba
from src.core import targets as rules
from src.core.agents import TargetNetworks, TargetPolicyOutput
from src.core.replay import Batch
from src.utils.errors import BiasDomainError, ShapeError


def _fixed_policy(a_c, probs, log_prob_c=None, log_probs=None):
    def policy(s):
        rows = np.atleast_2d(s).shape[0]
        tile = lambda v: None if v is None else np.tile(np.asarray(v, dtype=np.float64), (rows, 1))
        lp_c = None if log_prob_c is None else np.full(rows, float(log_prob_c))
        return TargetPolicyOutput(tile(a_c), tile(probs), lp_c, tile(log_probs))
    return policy


def _targets(critics, probs, gamma=1.0, sigma=0.0, a_c=(0.0, 0.0), seed=0, **policy_kwargs):
    return TargetNetworks(_fixed_policy(a_c, probs, **policy_kwargs), critics, np.random.default_rng(seed),
                          gamma=gamma, v_max=1.0, smoothing_sigma=sigma, smoothing_clip=0.5)


class TestPureRules:
    """Test cases for the numpy rule functions"""

    def test_clipped_min_shape_check(self):
        with pytest.raises(ShapeError):
            rules.clipped_min(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_weightings(self):
        q_min, probs = np.array([[2.0, 4.0]]), np.array([[0.5, 0.5]])
        assert rules.weighted_clipped_value(q_min, probs, 'as_written')[0] == pytest.approx(1.5)
        assert rules.weighted_clipped_value(q_min, probs, 'expectation')[0] == pytest.approx(3.0)
        with pytest.raises(ShapeError):
            rules.weighted_clipped_value(q_min, probs, 'mean')

    def test_greedy_picks_most_likely_mode(self):
        assert rules.greedy_clipped_value(np.array([[2.0, 4.0]]), np.array([[0.8, 0.2]]))[0] == 2.0

    def test_darc_mixture(self):
        s1, s2 = np.array([1.0]), np.array([3.0])
        assert rules.darc_value(s1, s2, 0.7)[0] == pytest.approx(1.6)
        assert rules.darc_value(s1, s2, 0.5)[0] == pytest.approx(2.0)
        assert rules.darc_value(s1, s2, 1.0)[0] == 1.0
        assert rules.darc_value(s1, s2, 0.0)[0] == 3.0
        with pytest.raises(ShapeError):
            rules.darc_value(s1, s2, 1.2)

    def test_optimistic_value(self):
        y = rules.bootstrap(np.zeros(1), np.zeros(1), 1.0, rules.optimistic_value(np.array([1.0]), np.array([2.0])))
        assert y[0] == 2.0

    def test_truncated_mean(self):
        atoms = np.arange(1.0, 11.0)[None, :]
        assert rules.truncated_mean(atoms, 5)[0] == 3.0
        assert rules.truncated_mean(atoms[:, ::-1], 10)[0] == 5.5
        with pytest.raises(ShapeError):
            rules.truncated_mean(atoms, 11)

    def test_lowest_atoms(self):
        atoms = np.array([[4.0, 1.0, 3.0, 2.0], [0.5, -1.0, 7.0, 7.0]])
        np.testing.assert_array_equal(rules.lowest_atoms(atoms, 2), [[1.0, 2.0], [-1.0, 0.5]])
        with pytest.raises(ShapeError):
            rules.lowest_atoms(atoms, 0)

    def test_kept_atoms(self):
        assert rules.kept_atoms(22, 5) == 110
        assert rules.kept_atoms(22, 5, 2) == 108
        with pytest.raises(ShapeError):
            rules.kept_atoms(1, 1, 1)

    def test_bootstrap_done_and_gamma_zero(self):
        r, value = np.array([1.0, 1.0]), np.array([10.0, 10.0])
        np.testing.assert_array_equal(rules.bootstrap(r, np.array([0.0, 1.0]), 0.5, value), [6.0, 1.0])
        np.testing.assert_array_equal(rules.bootstrap(r, np.zeros(2), 0.0, value), r)


class TestTwinTargets:
    """Test cases for the clipped and weighted targets over frozen critics"""

    def test_hand_built_transition(self):
        batch = Batch(**mock_batch_arrays(r=1.0))
        targets = _targets([FrozenCritic([2.0]), FrozenCritic([3.0])], [1.0], gamma=0.5)
        assert agents.td3_target_greedy(batch, targets)[0] == pytest.approx(2.0)
        assert agents.weighted_clipped_target(batch, targets)[0] == pytest.approx(2.0)

    def test_identical_twins(self):
        batch = Batch(**mock_batch_arrays())
        targets = _targets([FrozenCritic([2.5, 1.0]), FrozenCritic([2.5, 1.0])], [1.0, 0.0])
        assert agents.td3_target_greedy(batch, targets)[0] == 2.5

    def test_uniform_weighting_example(self):
        batch = Batch(**mock_batch_arrays())
        targets = _targets([FrozenCritic([2.0, 4.0]), FrozenCritic([3.0, 5.0])], [0.5, 0.5])
        assert agents.weighted_clipped_target(batch, targets, 'as_written')[0] == pytest.approx(1.5)
        assert agents.weighted_clipped_target(batch, targets, 'expectation')[0] == pytest.approx(3.0)

    @pytest.mark.parametrize('weighting', ['as_written', 'expectation'])
    def test_single_mode_reduces_to_greedy(self, weighting):
        batch = Batch(**mock_batch_arrays(rows=4, r=0.3))
        critics = [LinearCritic([[0.5, -1.0]], [1.0]), LinearCritic([[2.0, 0.1]], [0.4])]
        greedy = agents.td3_target_greedy(batch, _targets(critics, [1.0], gamma=0.9, sigma=0.2, seed=3))
        weighted = agents.weighted_clipped_target(batch, _targets(critics, [1.0], gamma=0.9, sigma=0.2, seed=3),
                                                  weighting)
        np.testing.assert_array_equal(weighted, greedy)

    def test_point_mass_policy_collapses(self):
        batch = Batch(**mock_batch_arrays(rows=2))
        critics = [FrozenCritic([1.0, 7.0]), FrozenCritic([2.0, 6.0])]
        greedy = agents.td3_target_greedy(batch, _targets(critics, [0.0, 1.0]))
        weighted = agents.weighted_clipped_target(batch, _targets(critics, [0.0, 1.0]), 'expectation')
        np.testing.assert_array_equal(weighted, greedy)
        assert greedy[0] == 6.0

    def test_expectation_below_best_mode(self):
        batch = Batch(**mock_batch_arrays(rows=3))
        critics = [LinearCritic([[1.0, 0.0], [0.0, 1.0]], [0.5, -0.5]), FrozenCritic([0.7, 0.2])]
        targets = _targets(critics, [0.3, 0.7], a_c=(0.4, 0.9))
        q_min = agents.clipped_values(targets, batch.s_next, targets.policy(batch.s_next).a_c)
        weighted = agents.weighted_clipped_target(batch, targets, 'expectation')
        assert np.all(weighted <= q_min.max(axis=1) + 1e-12)

    def test_smoothing_stays_in_bounds(self):
        targets = _targets([FrozenCritic([0.0])], [1.0], sigma=5.0)
        smoothed = agents.smoothed_action(targets, np.full((1000, 2), 0.9))
        assert np.all(np.abs(smoothed) <= 1.0)
        assert np.all(smoothed >= 0.4 - 1e-12)

    def test_gamma_zero_returns_reward(self):
        batch = Batch(**mock_batch_arrays(rows=2, r=0.25))
        targets = _targets([FrozenCritic([9.0]), FrozenCritic([8.0])], [1.0], gamma=0.0)
        np.testing.assert_array_equal(agents.weighted_clipped_target(batch, targets), [0.25, 0.25])


class TestDoubleSampleTargets:
    """Test cases for the HyDATD3 and HyDARC targets"""

    def setup_method(self):
        self.batch = Batch(**mock_batch_arrays(rows=8, r=0.1))
        self.critics = [LinearCritic([[1.0, -0.5], [0.2, 0.8]], [0.0, 0.3]),
                        LinearCritic([[0.6, 0.4], [-0.3, 1.1]], [0.1, 0.0])]

    def _run(self, fn, *args, sigma=0.3):
        return fn(self.batch, _targets(self.critics, [0.4, 0.6], gamma=0.9, sigma=sigma, seed=21), *args)

    def test_identical_samples(self):
        single = agents.weighted_clipped_target(self.batch, _targets(self.critics, [0.4, 0.6], gamma=0.9),
                                                'expectation')
        np.testing.assert_allclose(self._run(agents.target_hydatd3, sigma=0.0), single)
        np.testing.assert_allclose(self._run(agents.target_hydarc, 0.3, sigma=0.0), single)

    def test_darc_between_pessimistic_and_optimistic(self):
        low = self._run(agents.target_hydarc, 1.0)
        mid = self._run(agents.target_hydarc, 0.6)
        high = self._run(agents.target_hydarc, 0.0)
        assert np.all(low <= mid + 1e-12) and np.all(mid <= high + 1e-12)
        np.testing.assert_allclose(high, self._run(agents.target_hydatd3))

    def test_darc_half_is_average(self):
        low = self._run(agents.target_hydarc, 1.0)
        high = self._run(agents.target_hydarc, 0.0)
        np.testing.assert_allclose(self._run(agents.target_hydarc, 0.5), 0.5 * (low + high))


class TestEntropyAndQuantileTargets:
    """Test cases for the SAC and truncated-quantile targets"""

    def setup_method(self):
        self.batch = Batch(**mock_batch_arrays(rows=2))
        mode0_a = [1.0, 3.0, 5.0, 7.0, 9.0]
        mode0_b = [2.0, 4.0, 6.0, 8.0, 10.0]
        self.atoms = [FrozenCritic([mode0_a, [50.0] * 5]), FrozenCritic([mode0_b, [60.0] * 5])]

    def test_sac_without_entropy_is_clipped_expectation(self):
        log_probs = np.log([0.5, 0.5])
        targets = _targets([FrozenCritic([2.0, 4.0]), FrozenCritic([3.0, 5.0])], [0.5, 0.5],
                           log_prob_c=-1.0, log_probs=log_probs)
        assert agents.sac_target(self.batch, targets, 0.0, 0.0)[0] == pytest.approx(3.0)
        expected = 3.0 - 0.2 * np.log(0.5) + 0.2
        assert agents.sac_target(self.batch, targets, 0.2, 0.2)[0] == pytest.approx(expected)

    def test_truncation_keeps_lowest_pooled_atoms(self):
        targets = _targets(self.atoms, [1.0, 0.0])
        assert agents.target_hyacc(self.batch, targets, k_atoms=3, beta=1)[0] == pytest.approx(3.0)
        assert agents.target_hytqc(self.batch, targets, k_atoms=5)[0] == pytest.approx(5.5)

    def test_target_atoms_shape_and_bootstrap(self):
        batch = Batch(**mock_batch_arrays(rows=2, r=1.0, done=1.0))
        atoms = agents.quantile_target_atoms(batch, _targets(self.atoms, [1.0, 0.0]), 4)
        assert atoms.shape == (2, 4)
        assert np.all(atoms == 1.0)

    def test_entropy_shift_on_atoms(self):
        targets = _targets(self.atoms, [1.0, 0.0], log_prob_c=-2.0, log_probs=[0.0, -50.0])
        plain = agents.quantile_target_atoms(self.batch, _targets(self.atoms, [1.0, 0.0]), 5)
        shifted = agents.quantile_target_atoms(self.batch, targets, 5, alpha_c=0.5)
        np.testing.assert_allclose(shifted - plain, 1.0)

    def test_mode_sampling_follows_probs(self):
        targets = _targets(self.atoms, [0.0, 1.0])
        assert agents.target_hytqc(self.batch, targets, k_atoms=5)[0] == pytest.approx(55.0)

    def test_rejects_empty_truncation(self):
        with pytest.raises(ShapeError):
            agents.target_hyacc(self.batch, _targets(self.atoms, [1.0, 0.0]), k_atoms=1, beta=2)


class TestSyntheticBridge:
    """Each rule fed Gaussian critic errors against its closed form"""

    MODEL = ba.BiasModel(mu=0.1, sigma=0.8, p_d=(0.3, 0.7), lam=0.75, k_atoms=4, n_critics=2, m_atoms=5, beta=1)

    @pytest.mark.parametrize('variant', list(ba.ORDERED_VARIANTS))
    def test_rule_matches_closed_form(self, variant):
        mean, se = rules.synthetic_target_bias(self.MODEL, variant, 100_000, np.random.default_rng(17))
        gap = abs(mean - ba.variant_bias(self.MODEL, variant))
        assert gap <= 4 * se + ba.approximation_slack(self.MODEL, variant)

    def test_too_few_samples(self):
        with pytest.raises(BiasDomainError):
            rules.synthetic_target_bias(self.MODEL, 'HyTQC', 10, np.random.default_rng(0))


class TestAgentQuantileBridge:
    """The agents' truncated-quantile targets fed Gaussian critics against the closed form"""

    MODEL = TestSyntheticBridge.MODEL
    ROWS = 100_000

    @pytest.mark.parametrize('variant', [ba.Variant.HYTQC, ba.Variant.HYACC])
    def test_agent_target_matches_closed_form(self, variant):
        model = self.MODEL
        rng = np.random.default_rng(23)
        shape = (len(model.p_d), model.m_atoms)
        critics = [GaussianCritic(model.mu, model.sigma, shape, rng) for _ in range(model.n_critics)]
        targets = _targets(critics, list(model.p_d), seed=5)
        batch = Batch(**mock_batch_arrays(rows=self.ROWS))
        if variant is ba.Variant.HYTQC:
            values = agents.target_hytqc(batch, targets, model.k_atoms)
        else:
            values = agents.target_hyacc(batch, targets, model.k_atoms, model.beta)
        se = values.std(ddof=1) / np.sqrt(self.ROWS)
        gap = abs(values.mean() - ba.variant_bias(model, variant))
        assert gap <= 4 * se + ba.approximation_slack(model, variant)

    def test_agent_and_rule_truncate_identically(self, rng):
        """Same pooled atoms, same kept set"""
        pooled = rng.normal(size=10)
        first, second = pooled[:5], pooled[5:]
        critics = [FrozenCritic([first, first]), FrozenCritic([second, second])]
        atoms = agents.quantile_target_atoms(Batch(**mock_batch_arrays(rows=1)), _targets(critics, [0.5, 0.5]), 7)
        np.testing.assert_allclose(atoms[0], rules.lowest_atoms(pooled[None, :], 7)[0])
