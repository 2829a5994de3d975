#!/usr/bin/env python3
"""
Hybrid TD3 Mocks

Deterministic stand-ins shared by the tests, the self-test and demos:
- a 3-state deterministic chain MDP with analytically known Q-values
- scripted agents (fixed action, fixed Q offset) for the estimation-bias measurement
- frozen synthetic critics for target-rule checks
- a tiny smoke configuration that trains in seconds
"""

from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.hybridenv import HybridAction

CHAIN_REWARDS = (1.0, 2.0, 3.0)

SMOKE_OVERRIDES = [
    'run.seeds=[0, 1]',
    'run.episodes=10',
    'run.episodes_per_epoch=5',
    'run.eval_episodes=2',
    'env.max_steps=20',
    'network.hidden=[16, 16]',
    'replay.warmup_steps=50',
    'replay.batch_size=16',
    'agent.rollout_steps=64',
    'agent.ppo_minibatch=16',
    'agent.ppo_epochs=2',
    'agent.n_critics=2',
    'agent.m_atoms=5',
    'agent.k_atoms=4',
    'agent.beta=1',
]


class ChainMDP:
    """s0 -> s1 -> s2 -> terminal, whatever the action; reward CHAIN_REWARDS[t]

    Observations are one-hot state indicators padded to ``obs_dim``.
    """

    def __init__(self, rewards: Sequence[float] = CHAIN_REWARDS, obs_dim: int = 3):
        self.rewards = tuple(float(r) for r in rewards)
        self.obs_dim = obs_dim
        self.state = 0
        self.resets = 0

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.obs_dim)
        if self.state < self.obs_dim:
            obs[self.state] = 1.0
        return obs

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        self.state = 0
        self.resets += 1
        return self._obs(), {}

    def step(self, action):
        reward = self.rewards[self.state]
        self.state += 1
        terminated = self.state == len(self.rewards)
        return self._obs(), reward, terminated, False, {'reason': 'success' if terminated else None}

    def true_q(self, gamma: float) -> np.ndarray:
        """Q(s_t) = sum over u >= t of gamma^(u - t) r_u"""
        q = np.zeros(len(self.rewards))
        running = 0.0
        for t in range(len(self.rewards) - 1, -1, -1):
            running = self.rewards[t] + gamma * running
            q[t] = running
        return q


class ScriptedChainAgent:
    """Always plays mode 0 with a zero velocity; predicts true Q plus ``offset``"""

    on_policy = False

    def __init__(self, chain: ChainMDP, gamma: float, offset: float = 0.0, act_dim: int = 2):
        self.q_table = chain.true_q(gamma) + offset
        self.act_dim = act_dim
        self.calls: List[str] = []

    def act(self, obs, mode: str = 'exploit', epsilon: float = 0.0, rng=None) -> HybridAction:
        self.calls.append(mode)
        return HybridAction(0, np.zeros(self.act_dim))

    def q_estimate(self, obs, a_c, a_d) -> np.ndarray:
        obs = np.atleast_2d(obs)
        return self.q_table[np.argmax(obs, axis=1)]


class FrozenCritic:
    """Critic callable returning fixed per-mode values for every row"""

    def __init__(self, values: Sequence[float]):
        self.values = np.asarray(values, dtype=np.float64)
        self.calls = 0

    def __call__(self, s, a_c) -> np.ndarray:
        self.calls += 1
        rows = np.atleast_2d(s).shape[0]
        return np.tile(self.values, (rows, 1)) if self.values.ndim == 1 else np.tile(self.values, (rows, 1, 1))


class GaussianCritic:
    """Critic callable returning i.i.d. N(mu, sigma^2) outputs of a fixed per-row shape"""

    def __init__(self, mu: float, sigma: float, shape: Sequence[int], rng: np.random.Generator):
        self.mu = mu
        self.sigma = sigma
        self.shape = tuple(shape)
        self.rng = rng

    def __call__(self, s, a_c) -> np.ndarray:
        rows = np.atleast_2d(s).shape[0]
        return self.rng.normal(self.mu, self.sigma, (rows, *self.shape))


class LinearCritic:
    """Q(s, a_c, k) = slopes[k] . a_c + offsets[k]"""

    def __init__(self, slopes: np.ndarray, offsets: Sequence[float]):
        self.slopes = np.asarray(slopes, dtype=np.float64)
        self.offsets = np.asarray(offsets, dtype=np.float64)

    def __call__(self, s, a_c) -> np.ndarray:
        return np.atleast_2d(a_c) @ self.slopes.T + self.offsets


def mock_batch_arrays(rows: int = 1, obs_dim: int = 3, act_dim: int = 2, r: float = 0.0,
                      done: float = 0.0) -> Dict[str, np.ndarray]:
    """Keyword arguments for ``Batch`` with constant content"""
    return {
        's': np.zeros((rows, obs_dim)),
        'a_d': np.zeros(rows, dtype=np.int64),
        'a_c': np.zeros((rows, act_dim)),
        'r': np.full(rows, r),
        's_next': np.zeros((rows, obs_dim)),
        'done': np.full(rows, done),
        'indices': np.arange(rows),
    }


if __name__ == "__main__":
    chain = ChainMDP()
    print("Chain MDP true Q at gamma=0.5:", chain.true_q(0.5).tolist())
    print("Smoke overrides:", SMOKE_OVERRIDES)
