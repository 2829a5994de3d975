"""
Reduced-sample oracle suite run by ``cli selftest``

Each check returns a ``CheckResult``; the suite never raises for a failed
check, only for programming errors, so every item gets a PASS/FAIL line.
"""

from dataclasses import dataclass
import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.core import bias_analytics as ba
from src.core import harness
from src.core import targets
from src.core import tensor_nn as tn
from src.core.normalization import WelfordState, welford_update_inplace
from src.utils.performance import PerformanceMonitor
from src.utils.seeding import derive_rng

logger = logging.getLogger(__name__)

TQC_TABLE = {20: -0.3460, 21: -0.2865, 22: -0.2245, 23: -0.1591, 24: -0.0877}
ACC_TABLE = {20: -0.3702, 21: -0.3107, 22: -0.2496, 23: -0.1858, 24: -0.1173}
TABLE_TOLERANCE = 5e-4
ORACLE_SAMPLES = 200_000
BRIDGE_SAMPLES = 100_000
N_SE = 4.0
GRADIENT_ARCHITECTURES = 20
GRADIENT_PARAMS = 50
WELFORD_STREAM = 1_000_000


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}".rstrip()


def check_tables() -> Tuple[bool, str]:
    tqc = {row['k']: row['coefficient'] for row in ba.coefficient_table(5, 25, sorted(TQC_TABLE))}
    acc = {row['k']: row['coefficient'] for row in ba.coefficient_table(5, 25, sorted(ACC_TABLE), beta=2)}
    worst = max(max(abs(tqc[k] - v) for k, v in TQC_TABLE.items()),
                max(abs(acc[k] - v) for k, v in ACC_TABLE.items()))
    return worst <= TABLE_TOLERANCE, f'max deviation {worst:.2e}'


def check_gaussian_forms(rng: Optional[np.random.Generator] = None) -> Tuple[bool, str]:
    """min / max / nested-min / |Z| closed forms against sampled means"""
    rng = rng if rng is not None else derive_rng(0, 11)
    n = ORACLE_SAMPLES
    worst = 0.0
    for mu1, mu2, sigma in ((0.0, 0.0, 1.0), (0.3, -0.4, 0.7), (1.0, 1.5, 2.0)):
        pair = ba.GaussianPair(mu1, mu2, sigma)
        x, y = rng.normal(mu1, sigma, n), rng.normal(mu2, sigma, n)
        x2, y2 = rng.normal(mu1, sigma, n), rng.normal(mu2, sigma, n)
        z = rng.normal(mu1 - mu2, sigma, n)
        cases = (
            (ba.expected_min_pair(pair), np.minimum(x, y)),
            (ba.expected_max_pair(pair), np.maximum(x, y)),
            (ba.expected_abs_gaussian(mu1 - mu2, sigma), np.abs(z)),
        )
        for closed, draws in cases:
            worst = max(worst, abs(closed - draws.mean()) / (draws.std(ddof=1) / math.sqrt(n)))
        # nested min is only approximately Gaussian-based; allow the same slack as the DATD3 form
        nested = np.minimum(np.minimum(x, y), np.minimum(x2, y2))
        slack = ba.GAUSSIAN_ETA_SLACK * sigma
        se = nested.std(ddof=1) / math.sqrt(n)
        gap = abs(ba.expected_nested_min(pair) - nested.mean()) - slack
        worst = max(worst, max(gap, 0.0) / se)
    return worst <= N_SE, f'worst z-score {worst:.2f}'


def check_blom_symmetry() -> Tuple[bool, str]:
    worst = 0.0
    for n in (1, 2, 25, 125):
        scores = ba.blom_scores(n)
        worst = max(worst, float(np.max(np.abs(scores + scores[::-1]))))
    return worst == 0.0, f'max asymmetry {worst:.1e}'


def random_widths(rng: np.random.Generator, min_params: int = GRADIENT_PARAMS) -> List[int]:
    """Layer widths of a random 1-3 hidden layer MLP holding at least ``min_params`` scalars"""
    while True:
        widths = [int(rng.integers(2, 7))]
        widths += [int(w) for w in rng.integers(4, 13, size=int(rng.integers(1, 4)))]
        widths.append(int(rng.integers(1, 5)))
        if sum((a + 1) * b for a, b in zip(widths, widths[1:])) >= min_params:
            return widths


def check_gradients(rng: Optional[np.random.Generator] = None) -> Tuple[bool, str]:
    """Autodiff vs central differences on random smooth architectures"""
    rng = rng if rng is not None else derive_rng(0, 12)
    worst = 0.0
    for _ in range(GRADIENT_ARCHITECTURES):
        widths = random_widths(rng)
        net = tn.Mlp(widths, 'tanh', str(rng.choice(['identity', 'tanh'])), rng)
        x = rng.normal(size=(5, widths[0]))
        worst = max(worst, tn.gradient_check(net, x, lambda out: tn.mean(tn.square(out)), GRADIENT_PARAMS, rng))
    return worst < 1e-4, f'{GRADIENT_ARCHITECTURES} architectures, max relative error {worst:.2e}'


def check_welford(rng: Optional[np.random.Generator] = None) -> Tuple[bool, str]:
    """Single-pass state vs two-pass statistics on a high-mean stream"""
    rng = rng if rng is not None else derive_rng(0, 13)
    stream = 1e6 + rng.normal(0.0, 1.0, WELFORD_STREAM)
    state = WelfordState.zeros(1)
    for value in stream:
        welford_update_inplace(state, value)
    mean = stream.mean()
    var = np.mean((stream - mean) ** 2)
    err = max(abs(state.mean[0] - mean) / abs(mean), abs(state.variance[0] - var) / var)
    return err < 1e-9, f'relative error {err:.1e}'


def check_chain_bias() -> Tuple[bool, str]:
    from mocks import ChainMDP, ScriptedChainAgent  # pylint: disable=import-outside-toplevel

    chain = ChainMDP()
    gamma, offset = 0.9, 0.25
    agent = ScriptedChainAgent(chain, gamma, offset)
    mean, std = harness.estimation_bias(agent, chain, 3, gamma)
    err = abs(mean + offset)
    return err < 1e-10 and std < 1e-10, f'bias {mean:.12f} (expected {-offset})'


def check_target_bridge(rng: Optional[np.random.Generator] = None) -> Tuple[bool, str]:
    """Each target rule fed synthetic Gaussian critic errors against its closed form"""
    rng = rng if rng is not None else derive_rng(0, 14)
    model = ba.BiasModel(mu=0.1, sigma=0.8, p_d=(0.3, 0.7), lam=0.75, k_atoms=4, n_critics=2, m_atoms=5, beta=1)
    worst = 0.0
    for variant in ba.ORDERED_VARIANTS:
        mean, se = targets.synthetic_target_bias(model, variant, BRIDGE_SAMPLES, rng)
        slack = ba.approximation_slack(model, variant)
        gap = max(abs(mean - ba.variant_bias(model, variant)) - slack, 0.0)
        worst = max(worst, gap / se)
    return worst <= N_SE, f'worst z-score {worst:.2f}'


def check_inv_sqrt_pi_mutation() -> Tuple[bool, str]:
    """A corrupted 1/sqrt(pi) must be caught by the Monte Carlo comparison"""
    model = ba.BiasModel()
    original = ba.INV_SQRT_PI
    try:
        ba.INV_SQRT_PI = original * 1.1
        mutated = ba.variant_bias(model, ba.Variant.HYBRID_TD3)
    finally:
        ba.INV_SQRT_PI = original
    mc_mean, mc_se = ba.monte_carlo_bias(model, ba.Variant.HYBRID_TD3, ORACLE_SAMPLES, seed=0, shard_count=4)
    caught = abs(mutated - mc_mean) > N_SE * mc_se
    return caught, f'mutated closed form {mutated:.4f} vs Monte Carlo {mc_mean:.4f}'


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ('truncation tables', check_tables),
    ('gaussian min/max/nested forms', check_gaussian_forms),
    ('blom symmetry', check_blom_symmetry),
    ('autodiff vs finite differences', check_gradients),
    ('welford two-pass', check_welford),
    ('chain-MDP estimation bias', check_chain_bias),
    ('target-rule bridge', check_target_bridge),
    ('1/sqrt(pi) mutation detected', check_inv_sqrt_pi_mutation),
]


def run_selftest(checks: Optional[List[Tuple[str, Callable[[], Tuple[bool, str]]]]] = None) -> List[CheckResult]:
    monitor = PerformanceMonitor()
    results = []
    for name, check in checks if checks is not None else CHECKS:
        monitor.start_timer(name)
        try:
            passed, detail = check()
        except Exception as exc:  # pylint: disable=broad-except
            logger.exception('self-test check %s raised', name)
            passed, detail = False, f'raised {exc}'
        results.append(CheckResult(name, bool(passed), detail, monitor.end_timer(name)))
        logger.info('self-test %s: %s', name, 'pass' if passed else 'FAIL')
    return results
