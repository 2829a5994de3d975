"""
Hybrid-action learners: Hybrid TD3, the hybrid TD3/DDPG/SAC/PPO baselines
and the HyDATD3 / HyDARC / HyTQC / HyACC target-rule variants

Every agent shares the same surface: ``act``, ``q_estimate``, ``update``
(off-policy) or ``ppo_update`` (on-policy), plus checkpoint save/load.
Target rules are module-level functions over a ``TargetNetworks`` bundle
so they can be driven by frozen or synthetic critics as well as by the
agents' own target copies.
"""

from dataclasses import dataclass, replace
from functools import partial, reduce
import logging
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from src.core import targets as rules
from src.core import tensor_nn as tn
from src.core.hybridenv import N_MODES, HybridAction, PointMassSuctionEnv, observe
from src.core.normalization import RunningNormalizer
from src.core.policies import (CriticEnsemble, DeterministicActor, GaussianActor, PpoPolicy,
                               copy_actor, copy_critics)
from src.core.replay import Batch, ReplayBuffer, RolloutBuffer, Transition
from src.core.tensor_nn import AdamState, Mlp, Parameter, Tensor
from src.utils.errors import DivergenceError, EpisodeError, HybridRLError
from src.utils.validation import AgentSection, NetworkSection

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentDims:
    obs_dim: int
    act_dim: int
    n_modes: int = N_MODES
    v_max: float = 1.0


class TargetPolicyOutput(NamedTuple):
    a_c: np.ndarray
    probs: np.ndarray
    log_prob_c: Optional[np.ndarray] = None
    log_probs: Optional[np.ndarray] = None


@dataclass
class TargetNetworks:
    """Target policy and critics as plain callables

    ``policy(s')`` returns a ``TargetPolicyOutput``; each critic maps
    ``(s', a_c)`` to per-mode values (B, K) or quantile atoms (B, K, M).
    """

    policy: Callable[[np.ndarray], TargetPolicyOutput]
    critics: Sequence[Callable[[np.ndarray, np.ndarray], np.ndarray]]
    rng: np.random.Generator
    gamma: float = 0.99
    v_max: float = 1.0
    smoothing_sigma: float = 0.2
    smoothing_clip: float = 0.5


# ---------------------------------------------------------------------------
# Target rules
# ---------------------------------------------------------------------------

def smoothed_action(targets: TargetNetworks, a_c: np.ndarray) -> np.ndarray:
    """Target policy smoothing with per-element noise clipped to [-c, c]"""
    if targets.smoothing_sigma <= 0:
        return np.clip(a_c, -targets.v_max, targets.v_max)
    noise = np.clip(targets.rng.normal(0.0, targets.smoothing_sigma, a_c.shape),
                    -targets.smoothing_clip, targets.smoothing_clip)
    return np.clip(a_c + noise, -targets.v_max, targets.v_max)


def clipped_values(targets: TargetNetworks, s: np.ndarray, a_c: np.ndarray) -> np.ndarray:
    return reduce(rules.clipped_min, [critic(s, a_c) for critic in targets.critics])


def td3_target_greedy(batch: Batch, targets: TargetNetworks) -> np.ndarray:
    out = targets.policy(batch.s_next)
    q_min = clipped_values(targets, batch.s_next, smoothed_action(targets, out.a_c))
    return rules.bootstrap(batch.r, batch.done, targets.gamma, rules.greedy_clipped_value(q_min, out.probs))


def weighted_clipped_target(batch: Batch, targets: TargetNetworks, weighting: str = 'as_written') -> np.ndarray:
    out = targets.policy(batch.s_next)
    q_min = clipped_values(targets, batch.s_next, smoothed_action(targets, out.a_c))
    value = rules.weighted_clipped_value(q_min, out.probs, weighting)
    return rules.bootstrap(batch.r, batch.done, targets.gamma, value)


def _two_weighted_targets(batch: Batch, targets: TargetNetworks, weighting: str) -> Tuple[np.ndarray, np.ndarray]:
    out = targets.policy(batch.s_next)
    values = []
    for _ in range(2):
        q_min = clipped_values(targets, batch.s_next, smoothed_action(targets, out.a_c))
        values.append(rules.weighted_clipped_value(q_min, out.probs, weighting))
    return values[0], values[1]


def target_hydatd3(batch: Batch, targets: TargetNetworks, weighting: str = 'expectation') -> np.ndarray:
    """Most optimistic of two independently smoothed weighted-min targets"""
    t1, t2 = _two_weighted_targets(batch, targets, weighting)
    return rules.bootstrap(batch.r, batch.done, targets.gamma, rules.optimistic_value(t1, t2))


def target_hydarc(batch: Batch, targets: TargetNetworks, lam: float, weighting: str = 'expectation') -> np.ndarray:
    s1, s2 = _two_weighted_targets(batch, targets, weighting)
    return rules.bootstrap(batch.r, batch.done, targets.gamma, rules.darc_value(s1, s2, lam))


def sac_target(batch: Batch, targets: TargetNetworks, alpha_c: float, alpha_d: float) -> np.ndarray:
    """Soft target with the exact expectation over the discrete modes"""
    out = targets.policy(batch.s_next)
    q_min = clipped_values(targets, batch.s_next, out.a_c)
    soft = np.sum(out.probs * (q_min - alpha_d * out.log_probs), axis=1) - alpha_c * out.log_prob_c
    return rules.bootstrap(batch.r, batch.done, targets.gamma, soft)


def quantile_target_atoms(batch: Batch, targets: TargetNetworks, n_keep: int,
                          alpha_c: float = 0.0, alpha_d: float = 0.0) -> np.ndarray:
    """Bootstrapped lowest ``n_keep`` pooled atoms at (s', a'_c, a'_d), shape (B, n_keep)"""
    out = targets.policy(batch.s_next)
    rows = np.arange(batch.r.shape[0])
    cumulative = np.cumsum(out.probs, axis=1)
    draws = targets.rng.random((rows.shape[0], 1))
    modes = np.minimum((draws > cumulative).sum(axis=1), out.probs.shape[1] - 1)
    pooled = np.concatenate([critic(batch.s_next, out.a_c)[rows, modes, :] for critic in targets.critics], axis=1)
    kept = rules.lowest_atoms(pooled, n_keep)
    if out.log_prob_c is not None:
        kept = kept - (alpha_c * out.log_prob_c + alpha_d * out.log_probs[rows, modes])[:, None]
    return batch.r[:, None] + targets.gamma * (1.0 - batch.done[:, None]) * kept


def target_hytqc(batch: Batch, targets: TargetNetworks, k_atoms: int,
                 alpha_c: float = 0.0, alpha_d: float = 0.0) -> np.ndarray:
    n_keep = rules.kept_atoms(k_atoms, len(targets.critics))
    return quantile_target_atoms(batch, targets, n_keep, alpha_c, alpha_d).mean(axis=1)


def target_hyacc(batch: Batch, targets: TargetNetworks, k_atoms: int, beta: int,
                 alpha_c: float = 0.0, alpha_d: float = 0.0) -> np.ndarray:
    n_keep = rules.kept_atoms(k_atoms, len(targets.critics), beta)
    return quantile_target_atoms(batch, targets, n_keep, alpha_c, alpha_d).mean(axis=1)


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------

class HybridAgent:
    """Base agent: dimensions, config sections and the agent's own random stream"""

    name = 'agent'
    on_policy = False

    def __init__(self, dims: AgentDims, config: AgentSection, network: NetworkSection, rng: np.random.Generator):
        self.dims = dims
        self.config = config
        self.network = network
        self.rng = rng
        self.update_count = 0
        self.actor_update_count = 0

    def _adam(self, params: Sequence[Parameter]) -> AdamState:
        net = self.network
        return AdamState.for_params(params, net.lr, net.beta1, net.beta2, net.eps)

    def epsilon_at(self, step: int, total_steps: int) -> float:
        """epsilon annealed linearly over the first ``epsilon_anneal_fraction`` of training"""
        cfg = self.config
        horizon = max(1.0, cfg.epsilon_anneal_fraction * total_steps)
        frac = min(1.0, step / horizon)
        return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)

    def random_action(self, rng: np.random.Generator) -> HybridAction:
        a_c = rng.uniform(-self.dims.v_max, self.dims.v_max, self.dims.act_dim)
        return HybridAction(int(rng.integers(self.dims.n_modes)), a_c)

    def _emit(self, a_c: np.ndarray, probs: np.ndarray, a_d: int) -> HybridAction:
        a_c = np.clip(a_c, -self.dims.v_max, self.dims.v_max)
        return HybridAction(int(a_d), a_c, float(probs[-1]))

    def act(self, obs, mode: str = 'exploit', epsilon: float = 0.0,
            rng: Optional[np.random.Generator] = None) -> HybridAction:
        raise NotImplementedError

    def q_estimate(self, obs, a_c, a_d) -> np.ndarray:
        raise NotImplementedError

    def update(self, batch: Batch) -> Dict[str, object]:
        raise NotImplementedError

    def networks(self) -> Dict[str, Mlp]:
        raise NotImplementedError

    def optimizer_slots(self) -> Dict[str, List[Parameter]]:
        """Optimizer attribute name -> the parameters it steps"""
        raise NotImplementedError

    def _step(self, loss: Tensor, slot: str) -> float:
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f'{self.name}: non-finite {slot} loss after {self.update_count} updates')
        params = self.optimizer_slots()[slot]
        for p in params:
            p.zero_grad()
        tn.backward(loss)
        tn.adam_step(getattr(self, f'{slot}_opt'), params)
        return value

    def save(self, path: Union[str, Path], extra: Optional[dict] = None) -> Path:
        payload = dict(extra or {})
        payload['counters'] = {'update_count': self.update_count, 'actor_update_count': self.actor_update_count}
        optimizers = {slot: getattr(self, f'{slot}_opt') for slot in self.optimizer_slots()}
        return tn.save_checkpoint(path, self.networks(), optimizers, payload)

    def load(self, path: Union[str, Path]) -> dict:
        """Restore networks, optimizer moments and counters in place; returns the extra payload"""
        payload = tn.load_checkpoint(path)
        for name, net in self.networks().items():
            stored = payload['networks'][name]
            for param, source in zip(net.parameters(), stored.parameters()):
                param.assign(source.value)
        for slot, params in self.optimizer_slots().items():
            setattr(self, f'{slot}_opt', AdamState.from_dict(payload['optimizers'][slot], params))
        counters = payload['extra'].get('counters', {})
        self.update_count = int(counters.get('update_count', 0))
        self.actor_update_count = int(counters.get('actor_update_count', 0))
        return payload['extra']


def _critic_mode_value(critics: CriticEnsemble, i: int, s: np.ndarray, a_c: np.ndarray,
                       a_d: np.ndarray) -> Tensor:
    q = critics.forward(i, s, Tensor(a_c))
    return tn.sum_(tn.gather_block(q, a_d, 1), axis=1)


class TwinDelayedAgent(HybridAgent):
    """Deterministic actor, ``n_critics`` critics with target copies and delayed actor updates"""

    name = 'Hybrid TD3'
    n_critics = 2

    def __init__(self, dims: AgentDims, config: AgentSection, network: NetworkSection, rng: np.random.Generator):
        super().__init__(dims, config, network, rng)
        self.actor = DeterministicActor(dims.obs_dim, dims.act_dim, dims.n_modes, network.hidden, dims.v_max,
                                        rng, network.actor_final_scale)
        self.actor_target = copy_actor(self.actor, 'actor_target')
        self.critics = CriticEnsemble(dims.obs_dim, dims.act_dim, dims.n_modes, network.hidden, rng,
                                      count=self.n_critics)
        self.critics_target = copy_critics(self.critics)
        self.actor_opt = self._adam(self.actor.parameters())
        self.critic_opt = self._adam(self.critics.parameters())

    def networks(self) -> Dict[str, Mlp]:
        nets = {'actor': self.actor.net, 'actor_target': self.actor_target.net}
        for i, (net, target) in enumerate(zip(self.critics.nets, self.critics_target.nets)):
            nets[f'critic{i}'] = net
            nets[f'critic{i}_target'] = target
        return nets

    def optimizer_slots(self) -> Dict[str, List[Parameter]]:
        return {'actor': self.actor.parameters(), 'critic': self.critics.parameters()}

    def target_networks(self) -> TargetNetworks:
        actor_target = self.actor_target

        def policy(s):
            a_c, probs = actor_target.predict(s)
            return TargetPolicyOutput(a_c, probs)

        critics = [partial(self.critics_target.predict, i) for i in range(len(self.critics_target))]
        cfg = self.config
        return TargetNetworks(policy, critics, self.rng, cfg.gamma, self.dims.v_max,
                              cfg.smoothing_sigma, cfg.smoothing_clip)

    def compute_target(self, batch: Batch) -> np.ndarray:
        return weighted_clipped_target(batch, self.target_networks(), self.config.target_weighting)

    def act(self, obs, mode: str = 'exploit', epsilon: float = 0.0,
            rng: Optional[np.random.Generator] = None) -> HybridAction:
        a_c, probs = self.actor.predict(obs)
        a_c, probs = a_c[0], probs[0]
        a_d = int(np.argmax(probs))
        if mode == 'explore':
            rng = rng if rng is not None else self.rng
            if self.config.explore_sigma > 0:
                a_c = a_c + rng.normal(0.0, self.config.explore_sigma * self.dims.v_max, a_c.shape)
            if epsilon > 0 and rng.random() < epsilon:
                a_d = int(rng.integers(self.dims.n_modes))
        return self._emit(a_c, probs, a_d)

    def q_estimate(self, obs, a_c, a_d) -> np.ndarray:
        a_d = np.asarray(a_d, dtype=np.int64).reshape(-1)
        q_min = reduce(np.minimum, self.critics.predict_all(obs, a_c))
        return q_min[np.arange(q_min.shape[0]), a_d]

    def critic_update(self, batch: Batch) -> float:
        y = self.compute_target(batch)
        loss = None
        for i in range(len(self.critics)):
            error = _critic_mode_value(self.critics, i, batch.s, batch.a_c, batch.a_d) - y
            term = tn.mean(tn.square(error))
            loss = term if loss is None else loss + term
        return self._step(loss, 'critic')

    def _critic_min(self, s: np.ndarray, a_c: Tensor) -> Tensor:
        values = [self.critics.forward(i, s, a_c, track=False) for i in range(len(self.critics))]
        return reduce(tn.minimum, values)

    def _weighted(self, probs: Tensor, q: Tensor, weighting: str) -> Tensor:
        value = tn.sum_(probs * q, axis=1)
        if weighting == 'as_written':
            value = value * (1.0 / self.dims.n_modes)
        return value

    def actor_loss(self, batch: Batch) -> Tensor:
        """Marginalised actor objective over pi_d with the clipped minimum of the critics"""
        out = self.actor.forward(batch.s)
        q_min = self._critic_min(batch.s, out.a_c)
        return -tn.mean(self._weighted(out.probs, q_min, self.config.target_weighting))

    def actor_update(self, batch: Batch) -> float:
        value = self._step(self.actor_loss(batch), 'actor')
        self.actor_update_count += 1
        return value

    def soft_update(self) -> None:
        tau = self.config.tau
        tn.polyak_update(self.actor_target.parameters(), self.actor.parameters(), tau)
        tn.polyak_update(self.critics_target.parameters(), self.critics.parameters(), tau)

    def update(self, batch: Batch) -> Dict[str, object]:
        index = self.update_count
        metrics: Dict[str, object] = {'critic_loss': self.critic_update(batch), 'actor_loss': None,
                                      'actor_updated': False}
        self.update_count += 1
        if index % self.config.policy_delay == 0:
            metrics['actor_loss'] = self.actor_update(batch)
            metrics['actor_updated'] = True
            self.soft_update()
        return metrics


class HybridTD3Agent(TwinDelayedAgent):
    pass


class TD3GreedyAgent(TwinDelayedAgent):
    """Hybrid TD3 baseline with a greedy discrete target and a max-over-modes actor"""

    name = 'TD3 greedy'

    def compute_target(self, batch: Batch) -> np.ndarray:
        return td3_target_greedy(batch, self.target_networks())

    def actor_loss(self, batch: Batch) -> Tensor:
        out = self.actor.forward(batch.s)
        q1 = self.critics.forward(0, batch.s, out.a_c, track=False)
        loss = -tn.mean(tn.max_(q1, axis=1))
        if self.config.greedy_ce_coef > 0:
            # distil pi_d toward the critic's best mode
            best = np.argmax(q1.data, axis=1)
            picked = tn.sum_(tn.gather_block(tn.log_softmax(out.logits), best, 1), axis=1)
            loss = loss - self.config.greedy_ce_coef * tn.mean(picked)
        return loss


class DDPGAgent(TD3GreedyAgent):
    """Single critic, no target smoothing, actor updated every step"""

    name = 'DDPG'
    n_critics = 1

    def __init__(self, dims, config, network, rng):
        config = config.model_copy(update={'policy_delay': 1, 'smoothing_sigma': 0.0})
        super().__init__(dims, config, network, rng)


class HyDATD3Agent(TwinDelayedAgent):
    """Optimistic double-sample target"""

    name = 'HyDATD3'

    def compute_target(self, batch: Batch) -> np.ndarray:
        return target_hydatd3(batch, self.target_networks())

    def actor_loss(self, batch: Batch) -> Tensor:
        """Alternates between the two critics on successive actor updates"""
        out = self.actor.forward(batch.s)
        which = self.actor_update_count % len(self.critics)
        q = self.critics.forward(which, batch.s, out.a_c, track=False)
        return -tn.mean(self._weighted(out.probs, q, self.config.target_weighting))


class HyDARCAgent(TwinDelayedAgent):
    name = 'HyDARC'

    def compute_target(self, batch: Batch) -> np.ndarray:
        return target_hydarc(batch, self.target_networks(), self.config.lam)


class SoftHybridAgent(HybridAgent):
    """SAC baseline: squashed-Gaussian continuous head, categorical modes, twin soft critics"""

    name = 'SAC'
    critic_atoms = 1

    def __init__(self, dims: AgentDims, config: AgentSection, network: NetworkSection, rng: np.random.Generator,
                 n_critics: int = 2):
        super().__init__(dims, config, network, rng)
        self.actor = GaussianActor(dims.obs_dim, dims.act_dim, dims.n_modes, network.hidden, dims.v_max,
                                   rng, network.actor_final_scale)
        self.critics = CriticEnsemble(dims.obs_dim, dims.act_dim, dims.n_modes, network.hidden, rng,
                                      count=n_critics, atoms=self.critic_atoms)
        self.critics_target = copy_critics(self.critics)
        self.actor_opt = self._adam(self.actor.parameters())
        self.critic_opt = self._adam(self.critics.parameters())

    def networks(self) -> Dict[str, Mlp]:
        nets = {'actor': self.actor.net}
        for i, (net, target) in enumerate(zip(self.critics.nets, self.critics_target.nets)):
            nets[f'critic{i}'] = net
            nets[f'critic{i}_target'] = target
        return nets

    def optimizer_slots(self) -> Dict[str, List[Parameter]]:
        return {'actor': self.actor.parameters(), 'critic': self.critics.parameters()}

    def target_networks(self) -> TargetNetworks:
        actor, rng = self.actor, self.rng

        def policy(s):
            sample = actor.sample(s, rng, track=False)
            return TargetPolicyOutput(sample.a_c.data, sample.probs.data, sample.log_prob_c.data,
                                      sample.log_probs.data)

        critics = [partial(self.critics_target.predict, i) for i in range(len(self.critics_target))]
        return TargetNetworks(policy, critics, rng, self.config.gamma, self.dims.v_max, 0.0, 0.0)

    def act(self, obs, mode: str = 'exploit', epsilon: float = 0.0,
            rng: Optional[np.random.Generator] = None) -> HybridAction:
        if mode == 'exploit':
            a_c, probs = self.actor.predict(obs)
            return self._emit(a_c[0], probs[0], int(np.argmax(probs[0])))
        rng = rng if rng is not None else self.rng
        sample = self.actor.sample(obs, rng, track=False)
        probs = sample.probs.data[0]
        a_d = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side='right'), len(probs) - 1))
        return self._emit(sample.a_c.data[0], probs, a_d)

    def q_estimate(self, obs, a_c, a_d) -> np.ndarray:
        a_d = np.asarray(a_d, dtype=np.int64).reshape(-1)
        q_min = reduce(np.minimum, self.critics.predict_all(obs, a_c))
        return q_min[np.arange(q_min.shape[0]), a_d]

    def compute_target(self, batch: Batch) -> np.ndarray:
        return sac_target(batch, self.target_networks(), self.config.alpha_c, self.config.alpha_d)

    def critic_update(self, batch: Batch) -> float:
        y = self.compute_target(batch)
        loss = None
        for i in range(len(self.critics)):
            term = tn.mean(tn.square(_critic_mode_value(self.critics, i, batch.s, batch.a_c, batch.a_d) - y))
            loss = term if loss is None else loss + term
        return self._step(loss, 'critic')

    def _mode_values(self, s: np.ndarray, a_c: Tensor) -> Tensor:
        values = [self.critics.forward(i, s, a_c, track=False) for i in range(len(self.critics))]
        return reduce(tn.minimum, values)

    def actor_loss(self, batch: Batch) -> Tensor:
        """E over modes of alpha_c log p_c + alpha_d log p_d - Q, with a reparameterised a_c"""
        cfg = self.config
        sample = self.actor.sample(batch.s, self.rng)
        per_mode = sample.log_probs * cfg.alpha_d - self._mode_values(batch.s, sample.a_c)
        expected = tn.sum_(sample.probs * per_mode, axis=1) + sample.log_prob_c * cfg.alpha_c
        return tn.mean(expected)

    def update(self, batch: Batch) -> Dict[str, object]:
        critic_loss = self.critic_update(batch)
        actor_loss = self._step(self.actor_loss(batch), 'actor')
        self.update_count += 1
        self.actor_update_count += 1
        tn.polyak_update(self.critics_target.parameters(), self.critics.parameters(), self.config.tau)
        return {'critic_loss': critic_loss, 'actor_loss': actor_loss, 'actor_updated': True}


class QuantileAgent(SoftHybridAgent):
    """HyTQC / HyACC: N quantile critics with M atoms per mode and a truncated pooled target"""

    def __init__(self, dims, config, network, rng, beta: int = 0):
        self.critic_atoms = config.m_atoms
        super().__init__(dims, config, network, rng, n_critics=config.n_critics)
        self.beta = beta
        self.n_keep = rules.kept_atoms(config.k_atoms, config.n_critics, beta)
        m = config.m_atoms
        self.taus = (2.0 * np.arange(m) + 1.0) / (2.0 * m)
        # (K*M, K) block-averaging matrix: atoms -> per-mode mean
        self._mode_mean = np.kron(np.eye(dims.n_modes), np.full((m, 1), 1.0 / m))

    def target_atoms(self, batch: Batch) -> np.ndarray:
        return quantile_target_atoms(batch, self.target_networks(), self.n_keep,
                                     self.config.alpha_c, self.config.alpha_d)

    def compute_target(self, batch: Batch) -> np.ndarray:
        return self.target_atoms(batch).mean(axis=1)

    def q_estimate(self, obs, a_c, a_d) -> np.ndarray:
        a_d = np.asarray(a_d, dtype=np.int64).reshape(-1)
        atoms = np.mean([q[np.arange(a_d.shape[0]), a_d, :] for q in self.critics.predict_all(obs, a_c)], axis=0)
        return atoms.mean(axis=1)

    def critic_update(self, batch: Batch) -> float:
        target = self.target_atoms(batch)
        m = self.config.m_atoms
        loss = None
        for i in range(len(self.critics)):
            atoms = tn.gather_block(self.critics.forward(i, batch.s, Tensor(batch.a_c)), batch.a_d, m)
            if self.config.critic_loss == 'huber':
                term = tn.quantile_huber_loss(atoms, target, self.taus, self.config.huber_kappa)
            else:
                term = tn.mean(tn.square(atoms - target.mean(axis=1)[:, None]))
            loss = term if loss is None else loss + term
        return self._step(loss, 'critic')

    def _mode_values(self, s: np.ndarray, a_c: Tensor) -> Tensor:
        total = None
        for i in range(len(self.critics)):
            per_mode = tn.matmul(self.critics.forward(i, s, a_c, track=False), Tensor(self._mode_mean))
            total = per_mode if total is None else total + per_mode
        return total * (1.0 / len(self.critics))


class HyTQCAgent(QuantileAgent):
    name = 'HyTQC'

    def __init__(self, dims, config, network, rng):
        super().__init__(dims, config, network, rng, 0)


class HyACCAgent(QuantileAgent):
    name = 'HyACC'

    def __init__(self, dims, config, network, rng):
        super().__init__(dims, config, network, rng, config.beta)


class PPOAgent(HybridAgent):
    """On-policy clipped-surrogate baseline with a joint continuous x discrete ratio"""

    name = 'PPO'
    on_policy = True

    def __init__(self, dims: AgentDims, config: AgentSection, network: NetworkSection, rng: np.random.Generator):
        super().__init__(dims, config, network, rng)
        self.policy = PpoPolicy(dims.obs_dim, dims.act_dim, dims.n_modes, network.hidden, rng)
        self.policy_opt = self._adam(self.policy.parameters())
        self.rollout = RolloutBuffer(dims.obs_dim, dims.act_dim, config.rollout_steps)

    def networks(self) -> Dict[str, Mlp]:
        return {'policy': self.policy.net, 'value': self.policy.value_net}

    def optimizer_slots(self) -> Dict[str, List[Parameter]]:
        return {'policy': self.policy.parameters()}

    def save(self, path, extra=None) -> Path:
        extra = dict(extra or {})
        extra['log_std'] = self.policy.log_std.value.tolist()
        return super().save(path, extra)

    def load(self, path) -> dict:
        extra = super().load(path)
        self.policy.log_std.assign(np.asarray(extra['log_std']))
        return extra

    def sample_action(self, obs, rng: Optional[np.random.Generator] = None):
        """(action, raw Gaussian sample u, joint log-prob, V(s)) for one observation"""
        rng = rng if rng is not None else self.rng
        mean, probs = self.policy.predict(obs)
        u = mean[0] + np.exp(self.policy.log_std.value) * rng.standard_normal(self.dims.act_dim)
        a_d = int(min(np.searchsorted(np.cumsum(probs[0]), rng.random(), side='right'), self.dims.n_modes - 1))
        log_prob = float(self.policy.numpy_log_prob(obs, u[None, :], np.array([a_d]))[0])
        return self._emit(u, probs[0], a_d), u, log_prob, float(self.policy.value(obs)[0])

    def act(self, obs, mode: str = 'exploit', epsilon: float = 0.0,
            rng: Optional[np.random.Generator] = None) -> HybridAction:
        if mode == 'explore':
            return self.sample_action(obs, rng)[0]
        mean, probs = self.policy.predict(obs)
        return self._emit(mean[0], probs[0], int(np.argmax(probs[0])))

    def value(self, obs) -> float:
        return float(self.policy.value(obs)[0])

    def q_estimate(self, obs, a_c, a_d) -> np.ndarray:
        return self.policy.value(obs)

    def update(self, batch: Batch) -> Dict[str, object]:
        raise HybridRLError('PPO learns from rollouts; call ppo_update', code='RUN-400')

    def ppo_losses(self, s, u, a_d, old_log_prob, advantages, returns) -> Dict[str, Tensor]:
        cfg = self.config
        log_c, log_d, entropy = self.policy.log_prob(s, u, a_d)
        ratio = tn.exp(log_c + log_d - old_log_prob)
        clipped = tn.clip(ratio, 1.0 - cfg.ppo_clip, 1.0 + cfg.ppo_clip)
        policy_loss = -tn.mean(tn.minimum(ratio * advantages, clipped * advantages))
        value_loss = tn.mean(tn.square(tn.sum_(self.policy.value_net.forward(s), axis=1) - returns))
        total = policy_loss + value_loss * cfg.value_coef - tn.mean(entropy) * cfg.entropy_coef
        return {'policy': policy_loss, 'value': value_loss, 'total': total, 'ratio': ratio}

    def ppo_update(self, rollout: RolloutBuffer) -> Dict[str, object]:
        cfg = self.config
        rollout.compute_advantages(cfg.gamma, cfg.gae_lambda)
        n = rollout.count
        policy_losses, value_losses = [], []
        for _ in range(cfg.ppo_epochs):
            for idx in rollout.minibatches(cfg.ppo_minibatch, self.rng):
                advantages = rollout.advantages[idx]
                if cfg.normalize_advantages and idx.shape[0] > 1:
                    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
                losses = self.ppo_losses(rollout.s[idx], rollout.u[idx], rollout.a_d[idx],
                                         rollout.log_prob[idx], advantages, rollout.returns[idx])
                self._step(losses['total'], 'policy')
                policy_losses.append(losses['policy'].item())
                value_losses.append(losses['value'].item())
        self.update_count += 1
        self.actor_update_count += 1
        rollout.clear()
        logger.debug('ppo update over %d steps: policy=%.5f value=%.5f', n,
                     float(np.mean(policy_losses)), float(np.mean(value_losses)))
        return {'critic_loss': float(np.mean(value_losses)), 'actor_loss': float(np.mean(policy_losses)),
                'actor_updated': True}


AGENT_TYPES = {
    'hybrid_td3': HybridTD3Agent,
    'td3_greedy': TD3GreedyAgent,
    'ddpg': DDPGAgent,
    'sac': SoftHybridAgent,
    'ppo': PPOAgent,
    'hydatd3': HyDATD3Agent,
    'hydarc': HyDARCAgent,
    'hytqc': HyTQCAgent,
    'hyacc': HyACCAgent,
}


def make_agent(dims: AgentDims, config: AgentSection, network: NetworkSection,
               rng: np.random.Generator) -> HybridAgent:
    try:
        agent_type = AGENT_TYPES[config.variant]
    except KeyError as exc:
        raise HybridRLError(f'unknown agent variant {config.variant}', code='CFG-400') from exc
    return agent_type(dims, config, network, rng)


def act(agent: HybridAgent, obs, mode: str, rng: np.random.Generator, epsilon: float = 0.0) -> HybridAction:
    return agent.act(obs, mode, epsilon, rng)


# ---------------------------------------------------------------------------
# Training step
# ---------------------------------------------------------------------------

@dataclass
class TrainCounters:
    env_steps: int = 0
    updates: int = 0
    total_steps: int = 1

    def to_dict(self) -> dict:
        return {'env_steps': self.env_steps, 'updates': self.updates, 'total_steps': self.total_steps}

    @classmethod
    def from_dict(cls, data: dict) -> 'TrainCounters':
        return cls(**data)


def normalize_batch(batch: Batch, normalizer: RunningNormalizer) -> Batch:
    return replace(batch, s=normalizer.normalize(batch.s), s_next=normalizer.normalize(batch.s_next))


def train_step(agent: HybridAgent, env: PointMassSuctionEnv, buffer: Optional[ReplayBuffer],
               normalizer: RunningNormalizer, counters: TrainCounters, replay_rng: np.random.Generator,
               batch_size: int = 256, warmup_steps: int = 1000) -> Dict[str, object]:
    """One environment step and, past warmup, one learning update"""
    if env.state is None or env.state.done:
        raise EpisodeError('train_step needs a live episode; reset the environment first')
    raw = observe(env.state, env.domain)
    normalizer.observe(raw)
    obs = normalizer.normalize(raw)

    if agent.on_policy:
        action, u, log_prob, value = agent.sample_action(obs)
    elif counters.env_steps < warmup_steps:
        action = agent.random_action(agent.rng)
    else:
        action = agent.act(obs, 'explore', agent.epsilon_at(counters.env_steps, counters.total_steps), agent.rng)

    next_raw, reward, terminated, truncated, info = env.step(action)
    counters.env_steps += 1
    metrics: Dict[str, object] = {'reward': reward, 'terminated': terminated, 'truncated': truncated,
                                  'reason': info['reason'], 'updated': False, 'critic_loss': None,
                                  'actor_loss': None, 'actor_updated': False}

    if agent.on_policy:
        next_value = agent.value(normalizer.normalize(next_raw))
        agent.rollout.add(obs, u, action.a_d, log_prob, reward, value, next_value, terminated,
                          terminated or truncated)
        if agent.rollout.full:
            metrics.update(agent.ppo_update(agent.rollout))
            metrics['updated'] = True
            counters.updates += 1
        return metrics

    buffer.push(Transition(raw, action.a_d, action.a_c, reward, next_raw, terminated))
    if counters.env_steps > warmup_steps and len(buffer) >= batch_size:
        batch = normalize_batch(buffer.sample(batch_size, replay_rng), normalizer)
        metrics.update(agent.update(batch))
        metrics['updated'] = True
        counters.updates += 1
    return metrics

"""
Mermaid Diagram for the Off-Policy Update:

```mermaid
graph TD
    A[Replay batch] --> B[Normalize s, s']
    B --> C{Variant}
    C -->|hybrid_td3| D[Weighted clipped target]
    C -->|td3_greedy / ddpg| E[Greedy clipped target]
    C -->|hydatd3| F[Max of two smoothed targets]
    C -->|hydarc| G[lambda min + 1-lambda max]
    C -->|sac| H[Soft clipped target]
    C -->|hytqc / hyacc| I[Truncated pooled atoms]
    D & E & F & G & H & I --> J[Critic step]
    J --> K{update index % policy_delay == 0}
    K -->|Yes| L[Actor step + Polyak]
    K -->|No| M[Done]
```
"""
