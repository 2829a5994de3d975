"""
Closed-form estimation-bias analytics for hybrid TD3-family target rules

Gaussian min/max expectations, the nested-operator form, Blom expected
order statistics, the quantile-truncation coefficients and the per-variant
target bias under a synchronized critic bias shift, plus Monte Carlo
oracles that simulate each target construction directly.

Notes:
  * the DATD3 bias is mu - sigma/sqrt(pi) + tau/sqrt(pi), the expectation
    of max(eta_1, eta_2); it sits above plain TD3 by construction.
  * the DARC mixture only moves above plain TD3 for lambda < 0.5, so the
    ordering report lists every comparison separately instead of
    asserting the full chain.
"""

from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from src.core.normalization import WelfordState, merge
from src.utils.errors import BiasDomainError
from src.utils.performance import map_in_threads, split_counts
from src.utils.seeding import shard_rngs

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
INV_SQRT_PI = 1.0 / SQRT_PI
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

BLOM_ALPHA = 0.375
MIN_MC_SAMPLES = 10_000
DEFAULT_TIE_FACTOR = 0.05
GAUSSIAN_ETA_SLACK = 0.005
BLOM_SLACK = 0.01
MC_CHUNK_ROWS = 50_000


class Variant(str, Enum):
    HYBRID_TD3 = 'HybridTD3'
    HYACC = 'HyACC'
    HYTQC = 'HyTQC'
    HYDARC = 'HyDARC'
    HYDATD3 = 'HyDATD3'

    @classmethod
    def parse(cls, name) -> 'Variant':
        if isinstance(name, cls):
            return name
        key = str(name).replace('_', '').replace('-', '').lower()
        for variant in cls:
            if variant.value.lower() == key or variant.name.replace('_', '').lower() == key:
                return variant
        raise BiasDomainError(f'unknown bias variant: {name}')


# Expected ordering, most negative first
ORDERED_VARIANTS = (Variant.HYBRID_TD3, Variant.HYACC, Variant.HYTQC, Variant.HYDARC, Variant.HYDATD3)


@dataclass(frozen=True)
class GaussianPair:
    """Independent X ~ N(mu1, sigma^2), Y ~ N(mu2, sigma^2)"""

    mu1: float
    mu2: float
    sigma: float

    def __post_init__(self):
        values = (self.mu1, self.mu2, self.sigma)
        if not all(math.isfinite(v) for v in values):
            raise BiasDomainError(f'GaussianPair fields must be finite, got {values}')
        if self.sigma <= 0:
            raise BiasDomainError(f'sigma must be positive, got {self.sigma}')


@dataclass(frozen=True)
class BiasModel:
    """Parameter bundle shared by every closed-form bias expression"""

    mu: float = 0.0
    sigma: float = 1.0
    p_d: Tuple[float, ...] = (0.5, 0.5)
    lam: float = 0.75
    k_atoms: int = 22
    n_critics: int = 5
    m_atoms: int = 25
    beta: int = 2

    def __post_init__(self):
        object.__setattr__(self, 'p_d', tuple(float(p) for p in self.p_d))
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)) or self.sigma <= 0:
            raise BiasDomainError(f'mu must be finite and sigma positive, got mu={self.mu}, sigma={self.sigma}')
        if not self.p_d or any(p < 0 for p in self.p_d) or abs(sum(self.p_d) - 1.0) > 1e-12:
            raise BiasDomainError(f'p_d must be a probability vector, got {self.p_d}')
        if not 0.0 <= self.lam <= 1.0:
            raise BiasDomainError(f'lambda must lie in [0, 1], got {self.lam}')
        if min(self.k_atoms, self.n_critics, self.m_atoms) < 1 or self.beta < 0:
            raise BiasDomainError('k_atoms, n_critics, m_atoms must be >= 1 and beta >= 0')
        if self.k_atoms > self.m_atoms:
            raise BiasDomainError(f'k_atoms ({self.k_atoms}) cannot exceed m_atoms ({self.m_atoms})')
        if self.beta >= self.k_atoms * self.n_critics:
            raise BiasDomainError(f'beta ({self.beta}) must be below k_atoms*n_critics')

    @property
    def pool_size(self) -> int:
        return self.n_critics * self.m_atoms

    @property
    def kept_atoms(self) -> int:
        return self.k_atoms * self.n_critics


@dataclass
class BiasReport:
    biases: Dict[Variant, float]
    ordering_satisfied: bool
    comparisons: Dict[str, bool] = field(default_factory=dict)
    tie_tol: float = 0.0
    in_regime: bool = True

    def to_dict(self) -> dict:
        return {
            'biases': {variant.value: value for variant, value in self.biases.items()},
            'ordering_satisfied': self.ordering_satisfied,
            'comparisons': dict(self.comparisons),
            'tie_tol': self.tie_tol,
            'in_regime': self.in_regime,
        }


# ---------------------------------------------------------------------------
# Normal distribution helpers
# ---------------------------------------------------------------------------

def normal_cdf(x):
    return special.ndtr(x)


def normal_ppf(p):
    """Inverse standard normal CDF"""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or not np.all(np.isfinite(p_arr)):
        raise BiasDomainError('normal_ppf needs probabilities strictly inside (0, 1)')
    root = special.ndtri(p_arr)
    return float(root) if root.ndim == 0 else root


# ---------------------------------------------------------------------------
# Gaussian min / max expectations
# ---------------------------------------------------------------------------

def expected_abs_gaussian(mu_z: float, sigma_z: float) -> float:
    """E|Z| for Z ~ N(mu_z, sigma_z^2)"""
    if not sigma_z > 0:
        raise BiasDomainError(f'sigma_z must be positive, got {sigma_z}')
    ratio = mu_z / sigma_z
    return sigma_z * SQRT_2_OVER_PI * math.exp(-0.5 * ratio * ratio) + mu_z * math.erf(ratio / math.sqrt(2.0))


def _half_abs_gap(p: GaussianPair) -> float:
    # Z = X - Y ~ N(mu1 - mu2, 2 sigma^2)
    mu_z = p.mu1 - p.mu2
    gap = abs(mu_z) / (2.0 * p.sigma)
    return p.sigma * INV_SQRT_PI * math.exp(-gap * gap) + 0.5 * mu_z * math.erf(mu_z / (2.0 * p.sigma))


def expected_min_pair(p: GaussianPair) -> float:
    return 0.5 * (p.mu1 + p.mu2) - _half_abs_gap(p)


def expected_max_pair(p: GaussianPair) -> float:
    return 0.5 * (p.mu1 + p.mu2) + _half_abs_gap(p)


def second_moment_min_pair(p: GaussianPair) -> float:
    """E[min(X, Y)^2] for independent equal-variance Gaussians"""
    theta = p.sigma * math.sqrt(2.0)
    alpha = (p.mu1 - p.mu2) / theta
    pdf = math.exp(-0.5 * alpha * alpha) / math.sqrt(2.0 * math.pi)
    var = p.sigma * p.sigma
    return ((p.mu1 ** 2 + var) * special.ndtr(-alpha)
            + (p.mu2 ** 2 + var) * special.ndtr(alpha)
            - (p.mu1 + p.mu2) * theta * pdf)


def min_pair_std(p: GaussianPair) -> float:
    """Standard deviation sigma_w of W = min(X, Y)"""
    mean = expected_min_pair(p)
    return math.sqrt(max(second_moment_min_pair(p) - mean * mean, 0.0))


def expected_nested_min(p: GaussianPair) -> float:
    """E[min(W1, W2)] for two independent copies of W = min(X, Y)"""
    return expected_min_pair(p) - min_pair_std(p) * INV_SQRT_PI


def expected_nested_max(p: GaussianPair) -> float:
    return expected_min_pair(p) + min_pair_std(p) * INV_SQRT_PI


# ---------------------------------------------------------------------------
# Order statistics and truncation coefficients
# ---------------------------------------------------------------------------

def blom_quantile(i: int, n: int) -> float:
    """Blom approximation of E[Z_(i)] among n standard normals"""
    if n < 1 or not 1 <= i <= n:
        raise BiasDomainError(f'order index must satisfy 1 <= i <= n, got i={i}, n={n}')
    mirror = n + 1 - i
    if mirror < i:
        return -blom_quantile(mirror, n)
    return normal_ppf((i - BLOM_ALPHA) / (n + 1.0 - 2.0 * BLOM_ALPHA))


def blom_scores(n: int) -> np.ndarray:
    """All n Blom scores in ascending order"""
    if n < 1:
        raise BiasDomainError(f'n must be >= 1, got {n}')
    ranks = np.arange(1, n + 1, dtype=np.float64)
    lower = ranks <= (n + 1) / 2.0
    probs = (np.where(lower, ranks, n + 1 - ranks) - BLOM_ALPHA) / (n + 1.0 - 2.0 * BLOM_ALPHA)
    magnitude = np.asarray(normal_ppf(probs))
    return np.where(lower, magnitude, -magnitude)


def _truncated_score_mean(n_keep: int, pool: int) -> float:
    return float(np.mean(blom_scores(pool)[:n_keep]))


def tqc_truncation_coefficient(k_atoms: int, n_critics: int, m_atoms: int) -> float:
    """Mean of the lowest k*N Blom scores out of a pool of N*M"""
    if min(k_atoms, n_critics, m_atoms) < 1 or k_atoms > m_atoms:
        raise BiasDomainError(f'need 1 <= k_atoms <= m_atoms, got k={k_atoms}, M={m_atoms}, N={n_critics}')
    return _truncated_score_mean(k_atoms * n_critics, n_critics * m_atoms)


def acc_truncation_coefficient(k_atoms: int, n_critics: int, m_atoms: int, beta: int) -> float:
    """Mean of the lowest k*N - beta Blom scores out of a pool of N*M"""
    if min(k_atoms, n_critics, m_atoms) < 1 or k_atoms > m_atoms or beta < 0:
        raise BiasDomainError(f'invalid truncation parameters k={k_atoms}, N={n_critics}, M={m_atoms}, beta={beta}')
    n_keep = k_atoms * n_critics - beta
    if n_keep < 1:
        raise BiasDomainError(f'k*N - beta must be >= 1, got {n_keep}')
    return _truncated_score_mean(n_keep, n_critics * m_atoms)


def coefficient_table(n_critics: int, m_atoms: int, k_values: Sequence[int],
                      beta: Optional[int] = None) -> List[Dict[str, float]]:
    """Rows (k, effective_atoms, coefficient); ``beta=None`` gives the TQC table"""
    rows = []
    for k in k_values:
        if beta is None:
            coefficient = tqc_truncation_coefficient(k, n_critics, m_atoms)
            effective = k * n_critics
        else:
            coefficient = acc_truncation_coefficient(k, n_critics, m_atoms, beta)
            effective = k * n_critics - beta
        rows.append({'k': int(k), 'effective_atoms': int(effective), 'coefficient': coefficient})
    return rows


# ---------------------------------------------------------------------------
# Per-variant target bias
# ---------------------------------------------------------------------------

def datd3_tau(model: BiasModel) -> float:
    """Std of the weighted per-mode minimum error eta_j"""
    concentration = sum(p * p for p in model.p_d)
    return model.sigma * math.sqrt((1.0 - 1.0 / math.pi) * concentration)


def variant_bias(model: BiasModel, variant) -> float:
    variant = Variant.parse(variant)
    clipped = model.mu - model.sigma * INV_SQRT_PI
    if variant is Variant.HYBRID_TD3:
        return clipped
    if variant is Variant.HYDATD3:
        return clipped + datd3_tau(model) * INV_SQRT_PI
    if variant is Variant.HYDARC:
        return clipped + datd3_tau(model) * INV_SQRT_PI * (1.0 - 2.0 * model.lam)
    if variant is Variant.HYTQC:
        return model.mu + model.sigma * tqc_truncation_coefficient(model.k_atoms, model.n_critics, model.m_atoms)
    return model.mu + model.sigma * acc_truncation_coefficient(
        model.k_atoms, model.n_critics, model.m_atoms, model.beta)


def in_ordering_regime(model: BiasModel) -> bool:
    nondegenerate = len(model.p_d) > 1 and max(model.p_d) < 1.0
    return (model.sigma > 0 and 0.5 < model.lam <= 1.0 and model.beta >= 1
            and model.kept_atoms < model.pool_size and nondegenerate)


def ordering_report(model: BiasModel, tie_tol: Optional[float] = None, strict: bool = False) -> BiasReport:
    """Evaluate all five closed forms and check each link of the expected ordering

    ``strict`` raises when the model lies outside the analysed regime
    (sigma > 0, lambda in (0.5, 1], beta >= 1, kN < NM, nondegenerate p_d).
    """
    regime = in_ordering_regime(model)
    if strict and not regime:
        raise BiasDomainError(f'model outside the ordering regime: {model}')
    tol = DEFAULT_TIE_FACTOR * model.sigma if tie_tol is None else float(tie_tol)
    biases = {variant: variant_bias(model, variant) for variant in ORDERED_VARIANTS}
    td3, acc, tqc = biases[Variant.HYBRID_TD3], biases[Variant.HYACC], biases[Variant.HYTQC]
    darc, datd3 = biases[Variant.HYDARC], biases[Variant.HYDATD3]
    comparisons = {
        'HybridTD3 < HyACC': td3 < acc,
        'HybridTD3 < HyTQC': td3 < tqc,
        'HyACC ~ HyTQC': abs(acc - tqc) <= tol,
        'HyTQC < HyDARC': max(acc, tqc) < darc,
        'HyDARC < HyDATD3': darc < datd3,
    }
    satisfied = all(comparisons.values())
    logger.debug('ordering report %s -> %s', {v.value: round(b, 6) for v, b in biases.items()}, comparisons)
    return BiasReport(biases=biases, ordering_satisfied=satisfied, comparisons=comparisons,
                      tie_tol=tol, in_regime=regime)


# ---------------------------------------------------------------------------
# Monte Carlo oracles
# ---------------------------------------------------------------------------

def _weighted_mode_min(rng: np.random.Generator, model: BiasModel, rows: int) -> np.ndarray:
    shape = (rows, len(model.p_d))
    first = rng.normal(model.mu, model.sigma, size=shape)
    second = rng.normal(model.mu, model.sigma, size=shape)
    return np.minimum(first, second) @ np.asarray(model.p_d)


def _simulate_chunk(model: BiasModel, variant: Variant, rng: np.random.Generator, rows: int) -> np.ndarray:
    if variant is Variant.HYBRID_TD3:
        return _weighted_mode_min(rng, model, rows)
    if variant in (Variant.HYDATD3, Variant.HYDARC):
        eta_1 = _weighted_mode_min(rng, model, rows)
        eta_2 = _weighted_mode_min(rng, model, rows)
        if variant is Variant.HYDATD3:
            return np.maximum(eta_1, eta_2)
        return model.lam * np.minimum(eta_1, eta_2) + (1.0 - model.lam) * np.maximum(eta_1, eta_2)
    atoms = np.sort(rng.normal(model.mu, model.sigma, size=(rows, model.pool_size)), axis=1)
    n_keep = model.kept_atoms if variant is Variant.HYTQC else model.kept_atoms - model.beta
    return atoms[:, :n_keep].mean(axis=1)


def _moments(values: np.ndarray) -> WelfordState:
    mean = float(values.mean())
    m2 = float(np.sum((values - mean) ** 2))
    return WelfordState(n=int(values.size), mean=np.array([mean]), m2=np.array([m2]))


def _run_shard(args) -> WelfordState:
    model, variant, rng, count = args
    summary = WelfordState.zeros(1)
    remaining = count
    while remaining > 0:
        rows = min(remaining, MC_CHUNK_ROWS)
        summary = merge(summary, _moments(_simulate_chunk(model, variant, rng, rows)))
        remaining -= rows
    return summary


def monte_carlo_bias(model: BiasModel, variant, n_samples: int, seed: int = 0,
                     shard_count: int = 8, workers: int = 1) -> Tuple[float, float]:
    """Sample mean and standard error of the simulated target bias

    Critic errors are i.i.d. N(mu, sigma^2) around a constant true value, so
    the simulated target minus the true value is the bias directly. The
    result depends only on (seed, n_samples, shard_count).
    """
    variant = Variant.parse(variant)
    if n_samples < MIN_MC_SAMPLES:
        raise BiasDomainError(f'n_samples must be >= {MIN_MC_SAMPLES}, got {n_samples}')
    rngs = shard_rngs(seed, shard_count)
    jobs = [(model, variant, rng, count) for rng, count in zip(rngs, split_counts(n_samples, shard_count))]
    total = WelfordState.zeros(1)
    for part in map_in_threads(_run_shard, jobs, workers):
        total = merge(total, part)
    variance = float(total.m2[0]) / (total.n - 1)
    return float(total.mean[0]), math.sqrt(variance / total.n)


def approximation_slack(model: BiasModel, variant) -> float:
    """Known gap between a closed form and the exact expectation"""
    variant = Variant.parse(variant)
    if variant in (Variant.HYDATD3, Variant.HYDARC):
        return GAUSSIAN_ETA_SLACK * model.sigma
    if variant in (Variant.HYTQC, Variant.HYACC):
        return BLOM_SLACK * model.sigma
    return 0.0


def bias_check(model: BiasModel, n_samples: int = 1_000_000, seed: int = 0, shard_count: int = 8,
               workers: int = 1, n_se: float = 3.0) -> List[Dict[str, object]]:
    """Closed form against Monte Carlo for every variant"""
    rows = []
    for variant in ORDERED_VARIANTS:
        closed = variant_bias(model, variant)
        mc_mean, mc_se = monte_carlo_bias(model, variant, n_samples, seed, shard_count, workers)
        passed = abs(closed - mc_mean) <= n_se * mc_se + approximation_slack(model, variant)
        logger.info('bias check %s: closed=%.6f mc=%.6f +- %.6f -> %s',
                    variant.value, closed, mc_mean, mc_se, 'pass' if passed else 'FAIL')
        rows.append({'variant': variant.value, 'closed_form': closed, 'mc_mean': mc_mean,
                     'mc_se': mc_se, 'pass': bool(passed)})
    return rows
