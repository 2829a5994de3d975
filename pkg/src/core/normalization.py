"""
Welford running-statistics observation normalizer

Single-pass mean / M2 accumulation, standardisation with a small epsilon
and a symmetric clip. Statistics are per run and are frozen while
evaluating.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from src.utils.errors import NormalizerError, ShapeError

EPSILON = 1e-7
DEFAULT_CLIP_BOUND = 5.0


@dataclass
class WelfordState:
    """Running count, mean and sum of squared deviations"""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> 'WelfordState':
        return cls(n=0, mean=np.zeros(dim, dtype=np.float64), m2=np.zeros(dim, dtype=np.float64))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def variance(self) -> np.ndarray:
        """Population variance M2 / n (zeros before the first sample)"""
        if self.n == 0:
            return np.zeros_like(self.m2)
        return self.m2 / self.n

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def copy(self) -> 'WelfordState':
        return WelfordState(self.n, self.mean.copy(), self.m2.copy())

    def to_dict(self) -> Dict[str, Any]:
        return {'n': self.n, 'mean': self.mean.tolist(), 'm2': self.m2.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'WelfordState':
        return cls(
            n=int(data['n']),
            mean=np.asarray(data['mean'], dtype=np.float64),
            m2=np.asarray(data['m2'], dtype=np.float64),
        )


def _as_vector(state: WelfordState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != state.dim:
        raise ShapeError(f'expected a vector of dimension {state.dim}, got {x.shape[0]}', code='NORM-400')
    return x


def welford_update(state: WelfordState, x) -> WelfordState:
    """Return the state after absorbing one observation ``x``"""
    x = _as_vector(state, x)
    n = state.n + 1
    delta = x - state.mean
    mean = state.mean + delta / n
    delta_after = x - mean
    m2 = state.m2 + delta * delta_after
    return WelfordState(n=n, mean=mean, m2=m2)


def welford_update_inplace(state: WelfordState, x) -> None:
    x = _as_vector(state, x)
    state.n += 1
    delta = x - state.mean
    state.mean += delta / state.n
    state.m2 += delta * (x - state.mean)


def merge(a: WelfordState, b: WelfordState) -> WelfordState:
    """Combine two partial states as if their streams were concatenated"""
    if a.dim != b.dim:
        raise ShapeError(f'cannot merge states of dimension {a.dim} and {b.dim}', code='NORM-400')
    if a.n == 0:
        return b.copy()
    if b.n == 0:
        return a.copy()
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / n)
    return WelfordState(n=n, mean=mean, m2=m2)


def normalize(state: WelfordState, x, clip_bound: float = DEFAULT_CLIP_BOUND, eps: float = EPSILON) -> np.ndarray:
    """Standardise ``x`` (a vector or a batch of row vectors) and clip it

    The clip keeps standardised values inside [-clip_bound, clip_bound];
    a constant stream would otherwise map x = mean + 1 to 1 / eps.
    """
    if state.n == 0:
        raise NormalizerError('normalize called before any observation was recorded')
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != state.dim:
        raise ShapeError(f'expected trailing dimension {state.dim}, got {x.shape[-1]}', code='NORM-400')
    scaled = (x - state.mean) / (state.std + eps)
    if clip_bound is None:
        return scaled
    return np.clip(scaled, -clip_bound, clip_bound)


class RunningNormalizer:
    """Per-run observation normalizer with an evaluation freeze switch"""

    def __init__(self, dim: int, clip_bound: float = DEFAULT_CLIP_BOUND, eps: float = EPSILON):
        self.state = WelfordState.zeros(dim)
        self.clip_bound = clip_bound
        self.eps = eps
        self.frozen = False

    @property
    def count(self) -> int:
        return self.state.n

    def observe(self, x) -> None:
        if self.frozen:
            raise NormalizerError(f'normalizer is frozen; refusing an update after {self.count} observations')
        welford_update_inplace(self.state, x)

    def normalize(self, x) -> np.ndarray:
        return normalize(self.state, x, self.clip_bound, self.eps)

    def to_dict(self) -> Dict[str, Any]:
        return {'state': self.state.to_dict(), 'clip_bound': self.clip_bound, 'eps': self.eps}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunningNormalizer':
        state = WelfordState.from_dict(data['state'])
        normalizer = cls(state.dim, data['clip_bound'], data['eps'])
        normalizer.state = state
        return normalizer
