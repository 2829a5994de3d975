"""
Transition storage for off-policy and on-policy agents

``ReplayBuffer`` is a fixed-capacity FIFO ring of raw (unnormalised)
transitions sampled uniformly with replacement. ``RolloutBuffer`` holds one
on-policy rollout and computes GAE advantages for the PPO baseline.
"""

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from src.utils.errors import ReplayError

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 100_000
DEFAULT_BATCH = 256


@dataclass
class Transition:
    s: np.ndarray
    a_d: int
    a_c: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    """Column-stacked minibatch"""

    s: np.ndarray
    a_d: np.ndarray
    a_c: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return int(self.r.shape[0])

    def transitions(self) -> List[Transition]:
        return [Transition(self.s[i], int(self.a_d[i]), self.a_c[i], float(self.r[i]),
                           self.s_next[i], bool(self.done[i])) for i in range(len(self))]


class ReplayBuffer:
    """Ring buffer; the oldest transition is overwritten once full"""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ReplayError(f'capacity must be >= 1, got {capacity}')
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.capacity = int(capacity)
        self.size = 0
        self.cursor = 0
        self.s = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.a_c = np.zeros((capacity, act_dim), dtype=np.float64)
        self.a_d = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float64)
        self.s_next = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.done = np.zeros(capacity, dtype=bool)

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> 'ReplayBuffer':
        s = np.asarray(t.s, dtype=np.float64).reshape(-1)
        s_next = np.asarray(t.s_next, dtype=np.float64).reshape(-1)
        a_c = np.asarray(t.a_c, dtype=np.float64).reshape(-1)
        if s.shape[0] != self.obs_dim or s_next.shape[0] != self.obs_dim or a_c.shape[0] != self.act_dim:
            raise ReplayError(
                f'transition dims (s={s.shape[0]}, s_next={s_next.shape[0]}, a_c={a_c.shape[0]}) '
                f'do not match buffer (obs={self.obs_dim}, act={self.act_dim})')
        i = self.cursor
        self.s[i] = s
        self.a_c[i] = a_c
        self.a_d[i] = int(t.a_d)
        self.r[i] = float(t.r)
        self.s_next[i] = s_next
        self.done[i] = bool(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if batch < 1:
            raise ReplayError(f'batch must be >= 1, got {batch}')
        if self.size < batch:
            raise ReplayError(f'buffer holds {self.size} transitions, batch of {batch} requested', code='BUF-409')
        return rng.integers(0, self.size, size=batch)

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(batch, rng)
        return Batch(self.s[idx], self.a_d[idx], self.a_c[idx], self.r[idx],
                     self.s_next[idx], self.done[idx].astype(np.float64), idx)

    def oldest(self) -> Transition:
        i = self.cursor if self.size == self.capacity else 0
        return Transition(self.s[i].copy(), int(self.a_d[i]), self.a_c[i].copy(), float(self.r[i]),
                          self.s_next[i].copy(), bool(self.done[i]))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n = self.size
        with path.open('wb') as handle:
            np.savez(handle, s=self.s[:n], a_c=self.a_c[:n], a_d=self.a_d[:n], r=self.r[:n],
                     s_next=self.s_next[:n], done=self.done[:n],
                     meta=np.array([self.capacity, self.cursor, self.obs_dim, self.act_dim], dtype=np.int64))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'ReplayBuffer':
        with np.load(Path(path)) as data:
            capacity, cursor, obs_dim, act_dim = (int(v) for v in data['meta'])
            buffer = cls(obs_dim, act_dim, capacity)
            n = data['r'].shape[0]
            buffer.s[:n] = data['s']
            buffer.a_c[:n] = data['a_c']
            buffer.a_d[:n] = data['a_d']
            buffer.r[:n] = data['r']
            buffer.s_next[:n] = data['s_next']
            buffer.done[:n] = data['done']
        buffer.size = n
        buffer.cursor = cursor
        return buffer


class RolloutBuffer:
    """On-policy storage with GAE(lambda) advantages

    ``terminal`` stops bootstrapping, ``episode_end`` (terminal or time
    limit) stops the advantage recursion. Each step stores V(s_next) so a
    time-limit truncation still bootstraps.
    """

    def __init__(self, obs_dim: int, act_dim: int, size: int = 2048):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.size = int(size)
        self.clear()

    def clear(self) -> None:
        n = self.size
        self.s = np.zeros((n, self.obs_dim))
        self.u = np.zeros((n, self.act_dim))
        self.a_d = np.zeros(n, dtype=np.int64)
        self.log_prob = np.zeros(n)
        self.r = np.zeros(n)
        self.value = np.zeros(n)
        self.next_value = np.zeros(n)
        self.terminal = np.zeros(n, dtype=bool)
        self.episode_end = np.zeros(n, dtype=bool)
        self.advantages: Optional[np.ndarray] = None
        self.returns: Optional[np.ndarray] = None
        self.count = 0

    @property
    def full(self) -> bool:
        return self.count >= self.size

    def add(self, s, u, a_d: int, log_prob: float, r: float, value: float, next_value: float,
            terminal: bool, episode_end: bool) -> None:
        if self.full:
            raise ReplayError(f'rollout buffer already holds {self.size} steps', code='BUF-409')
        i = self.count
        self.s[i] = s
        self.u[i] = u
        self.a_d[i] = a_d
        self.log_prob[i] = log_prob
        self.r[i] = r
        self.value[i] = value
        self.next_value[i] = next_value
        self.terminal[i] = terminal
        self.episode_end[i] = episode_end or terminal
        self.count += 1

    def compute_advantages(self, gamma: float, lam: float) -> None:
        n = self.count
        advantages = np.zeros(n)
        running = 0.0
        for t in reversed(range(n)):
            delta = self.r[t] + gamma * (1.0 - self.terminal[t]) * self.next_value[t] - self.value[t]
            running = delta + gamma * lam * (1.0 - self.episode_end[t]) * running
            advantages[t] = running
        self.advantages = advantages
        self.returns = advantages + self.value[:n]

    def minibatches(self, batch: int, rng: np.random.Generator):
        if self.advantages is None:
            raise ReplayError('compute_advantages must run before minibatching', code='BUF-409')
        order = rng.permutation(self.count)
        for start in range(0, self.count, batch):
            yield order[start:start + batch]

    _FIELDS = ('s', 'u', 'a_d', 'log_prob', 'r', 'value', 'next_value', 'terminal', 'episode_end')

    def save(self, path: Union[str, Path]) -> Path:
        """Partially filled rollout, so a resumed run continues the same rollout"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('wb') as handle:
            np.savez(handle, meta=np.array([self.size, self.count, self.obs_dim, self.act_dim], dtype=np.int64),
                     **{name: getattr(self, name) for name in self._FIELDS})
        return path

    def load_into(self, path: Union[str, Path]) -> 'RolloutBuffer':
        with np.load(Path(path)) as data:
            size, count, obs_dim, act_dim = (int(v) for v in data['meta'])
            if (size, obs_dim, act_dim) != (self.size, self.obs_dim, self.act_dim):
                raise ReplayError(f'stored rollout ({size}, {obs_dim}, {act_dim}) does not match this buffer')
            for name in self._FIELDS:
                getattr(self, name)[...] = data[name]
        self.count = count
        self.advantages = None
        self.returns = None
        return self
