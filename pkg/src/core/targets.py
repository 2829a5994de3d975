"""
Pure bootstrap-target rules shared by the agents and the synthetic-error bridge

All functions operate on numpy arrays with a leading batch axis. Per-mode
values have shape (B, K); pooled quantile atoms have shape (B, P).
"""

import math
from typing import Tuple

import numpy as np

from src.core.bias_analytics import BiasModel, Variant, MIN_MC_SAMPLES
from src.utils.errors import BiasDomainError, ShapeError
from src.utils.performance import batch_process

WEIGHTINGS = ('as_written', 'expectation')
CHUNK_ROWS = 20_000


def clipped_min(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    if q1.shape != q2.shape:
        raise ShapeError(f'critic outputs differ in shape: {q1.shape} vs {q2.shape}')
    return np.minimum(q1, q2)


def greedy_clipped_value(q_min: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Clipped minimum at the target policy's most likely mode"""
    modes = np.argmax(probs, axis=1)
    return q_min[np.arange(q_min.shape[0]), modes]


def weighted_clipped_value(q_min: np.ndarray, probs: np.ndarray, weighting: str = 'as_written') -> np.ndarray:
    """Sum over modes of pi_d(k) * min_i Q_i(k); ``as_written`` keeps the 1/K factor"""
    if weighting not in WEIGHTINGS:
        raise ShapeError(f'unknown target weighting {weighting}; expected one of {WEIGHTINGS}')
    if q_min.shape != probs.shape:
        raise ShapeError(f'per-mode values {q_min.shape} and probabilities {probs.shape} differ')
    value = np.sum(probs * q_min, axis=1)
    if weighting == 'as_written':
        value = value / q_min.shape[1]
    return value


def optimistic_value(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    return np.maximum(t1, t2)


def darc_value(s1: np.ndarray, s2: np.ndarray, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ShapeError(f'lambda must lie in [0, 1], got {lam}')
    return lam * np.minimum(s1, s2) + (1.0 - lam) * np.maximum(s1, s2)


def lowest_atoms(atoms: np.ndarray, n_keep: int) -> np.ndarray:
    """The ``n_keep`` smallest pooled atoms per row, ascending, shape (B, n_keep)"""
    if not 1 <= n_keep <= atoms.shape[1]:
        raise ShapeError(f'cannot keep {n_keep} of {atoms.shape[1]} atoms')
    return np.sort(atoms, axis=1)[:, :n_keep]


def truncated_mean(atoms: np.ndarray, n_keep: int) -> np.ndarray:
    """Mean of the ``n_keep`` smallest pooled atoms per row"""
    return lowest_atoms(atoms, n_keep).mean(axis=1)


def kept_atoms(k_atoms: int, n_critics: int, beta: int = 0) -> int:
    n_keep = k_atoms * n_critics - beta
    if n_keep < 1:
        raise ShapeError(f'k*N - beta must be >= 1, got {n_keep}')
    return n_keep


def bootstrap(r: np.ndarray, done: np.ndarray, gamma: float, value: np.ndarray) -> np.ndarray:
    return r + gamma * (1.0 - done) * value


def synthetic_target_bias(model: BiasModel, variant, n_samples: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Feed i.i.d. N(mu, sigma^2) critic errors around a zero true value through a target rule

    Returns the sample mean and standard error of the resulting target.
    The weighted rules use the ``expectation`` weighting so the errors are
    averaged with weights summing to one.
    """
    variant = Variant.parse(variant)
    if n_samples < MIN_MC_SAMPLES:
        raise BiasDomainError(f'n_samples must be >= {MIN_MC_SAMPLES}, got {n_samples}')
    probs = np.broadcast_to(np.asarray(model.p_d), (n_samples, len(model.p_d)))

    def weighted_min():
        shape = probs.shape
        q_min = clipped_min(rng.normal(model.mu, model.sigma, shape), rng.normal(model.mu, model.sigma, shape))
        return weighted_clipped_value(q_min, probs, 'expectation')

    if variant is Variant.HYBRID_TD3:
        values = weighted_min()
    elif variant is Variant.HYDATD3:
        values = optimistic_value(weighted_min(), weighted_min())
    elif variant is Variant.HYDARC:
        values = darc_value(weighted_min(), weighted_min(), model.lam)
    else:
        beta = model.beta if variant is Variant.HYACC else 0
        n_keep = kept_atoms(model.k_atoms, model.n_critics, beta)
        values = np.empty(n_samples)
        for span in batch_process(range(n_samples), CHUNK_ROWS):
            atoms = rng.normal(model.mu, model.sigma, (len(span), model.pool_size))
            values[span.start:span.stop] = truncated_mean(atoms, n_keep)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n_samples))
