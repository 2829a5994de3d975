"""
Actor and critic networks for hybrid (discrete mode x continuous parameter) actions

Actors share one trunk whose output is split into a continuous head and
the discrete-mode logits. Critics take (s, a_c) and emit one value per
discrete mode, or ``M`` quantile atoms per mode for the quantile critics.
"""

import math
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from src.core import tensor_nn as tn
from src.core.tensor_nn import Mlp, Parameter, Tensor

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ActorOutput(NamedTuple):
    a_c: Tensor
    probs: Tensor
    logits: Tensor


class PolicySample(NamedTuple):
    a_c: Tensor
    log_prob_c: Tensor
    probs: Tensor
    log_probs: Tensor


def _as_batch(obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    return obs[None, :] if obs.ndim == 1 else obs


class DeterministicActor:
    """mu_theta(s) in [-v_max, v_max] plus pi_d(.|s) from a shared trunk"""

    def __init__(self, obs_dim: int, act_dim: int, n_modes: int, hidden: Sequence[int], v_max: float,
                 rng: np.random.Generator, final_scale: float = 1e-2, name: str = 'actor'):
        self.act_dim = act_dim
        self.n_modes = n_modes
        self.v_max = v_max
        self.net = Mlp([obs_dim, *hidden, act_dim + n_modes], 'relu', 'identity', rng, final_scale, name)

    def forward(self, obs, track: bool = True) -> ActorOutput:
        out = self.net.forward(_as_batch(obs), track)
        a_c = tn.tanh(tn.slice_cols(out, 0, self.act_dim)) * self.v_max
        logits = tn.slice_cols(out, self.act_dim, self.act_dim + self.n_modes)
        return ActorOutput(a_c, tn.softmax(logits), logits)

    def predict(self, obs):
        out = self.net.predict(_as_batch(obs))
        a_c = np.tanh(out[:, :self.act_dim]) * self.v_max
        logits = out[:, self.act_dim:]
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        return a_c, probs / probs.sum(axis=1, keepdims=True)

    def parameters(self) -> List[Parameter]:
        return self.net.parameters()


class GaussianActor:
    """Tanh-squashed Gaussian continuous head plus a categorical mode head"""

    def __init__(self, obs_dim: int, act_dim: int, n_modes: int, hidden: Sequence[int], v_max: float,
                 rng: np.random.Generator, final_scale: float = 1e-2, name: str = 'actor'):
        self.act_dim = act_dim
        self.n_modes = n_modes
        self.v_max = v_max
        self.net = Mlp([obs_dim, *hidden, 2 * act_dim + n_modes], 'relu', 'identity', rng, final_scale, name)

    def _heads(self, obs, track: bool):
        out = self.net.forward(_as_batch(obs), track)
        d = self.act_dim
        mean = tn.slice_cols(out, 0, d)
        log_std = tn.clip(tn.slice_cols(out, d, 2 * d), LOG_STD_MIN, LOG_STD_MAX)
        logits = tn.slice_cols(out, 2 * d, 2 * d + self.n_modes)
        return mean, log_std, logits

    def sample(self, obs, rng: np.random.Generator, track: bool = True) -> PolicySample:
        """Reparameterised sample with the squash-corrected log-density"""
        mean, log_std, logits = self._heads(obs, track)
        noise = rng.standard_normal(mean.shape)
        u = mean + tn.exp(log_std) * noise
        squashed = tn.tanh(u)
        gaussian = tn.sum_(-0.5 * noise * noise - HALF_LOG_2PI - log_std, axis=1)
        correction = tn.sum_(tn.log(1.0 - tn.square(squashed) + SQUASH_EPS), axis=1)
        log_prob_c = gaussian - correction - self.act_dim * math.log(self.v_max)
        log_probs = tn.log_softmax(logits)
        return PolicySample(squashed * self.v_max, log_prob_c, tn.exp(log_probs), log_probs)

    def predict(self, obs):
        """Deterministic (mean) action and the mode probabilities"""
        out = self.net.predict(_as_batch(obs))
        d = self.act_dim
        logits = out[:, 2 * d:]
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        return np.tanh(out[:, :d]) * self.v_max, probs / probs.sum(axis=1, keepdims=True)

    def parameters(self) -> List[Parameter]:
        return self.net.parameters()


class PpoPolicy:
    """Gaussian continuous head with a state-independent log-std and a categorical head"""

    def __init__(self, obs_dim: int, act_dim: int, n_modes: int, hidden: Sequence[int],
                 rng: np.random.Generator, init_log_std: float = -0.5, final_scale: float = 1e-2):
        self.act_dim = act_dim
        self.n_modes = n_modes
        self.net = Mlp([obs_dim, *hidden, act_dim + n_modes], 'tanh', 'identity', rng, final_scale, 'policy')
        self.log_std = Parameter(np.full(act_dim, init_log_std), 'policy.log_std')
        self.value_net = Mlp([obs_dim, *hidden, 1], 'tanh', 'identity', rng, 1.0, 'value')

    def parameters(self) -> List[Parameter]:
        return self.net.parameters() + [self.log_std] + self.value_net.parameters()

    def predict(self, obs):
        out = self.net.predict(_as_batch(obs))
        logits = out[:, self.act_dim:]
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        return out[:, :self.act_dim], probs / probs.sum(axis=1, keepdims=True)

    def value(self, obs) -> np.ndarray:
        return self.value_net.predict(_as_batch(obs))[:, 0]

    def log_prob(self, obs, u: np.ndarray, a_d: np.ndarray, track: bool = True):
        """Per-sample (log p_c(u|s), log p_d(a_d|s), joint entropy) as tensors"""
        out = self.net.forward(_as_batch(obs), track)
        mean = tn.slice_cols(out, 0, self.act_dim)
        logits = tn.slice_cols(out, self.act_dim, self.act_dim + self.n_modes)
        log_std = self.log_std.track() if track else Tensor(self.log_std.value)
        z = (Tensor(u) - mean) * tn.exp(-log_std)
        log_prob_c = tn.sum_(-0.5 * tn.square(z) - log_std - HALF_LOG_2PI, axis=1)
        log_probs = tn.log_softmax(logits)
        log_prob_d = tn.sum_(tn.gather_block(log_probs, np.asarray(a_d), 1), axis=1)
        entropy_c = tn.sum_(log_std + (0.5 + HALF_LOG_2PI))
        entropy_d = -tn.sum_(tn.exp(log_probs) * log_probs, axis=1)
        return log_prob_c, log_prob_d, entropy_d + entropy_c

    def numpy_log_prob(self, obs, u: np.ndarray, a_d: np.ndarray) -> np.ndarray:
        mean, probs = self.predict(obs)
        std = np.exp(self.log_std.value)
        z = (u - mean) / std
        log_prob_c = np.sum(-0.5 * z * z - self.log_std.value - HALF_LOG_2PI, axis=1)
        return log_prob_c + np.log(probs[np.arange(len(a_d)), a_d])


class CriticEnsemble:
    """``count`` independent critics Q_i(s, a_c) -> (B, n_modes * atoms)"""

    def __init__(self, obs_dim: int, act_dim: int, n_modes: int, hidden: Sequence[int],
                 rng: np.random.Generator, count: int = 2, atoms: int = 1, name: str = 'critic'):
        self.n_modes = n_modes
        self.atoms = atoms
        self.nets = [Mlp([obs_dim + act_dim, *hidden, n_modes * atoms], 'relu', 'identity', rng,
                         1.0, f'{name}{i}') for i in range(count)]

    def __len__(self):
        return len(self.nets)

    def forward(self, i: int, obs, a_c, track: bool = True) -> Tensor:
        x = tn.concat([Tensor(_as_batch(obs)), a_c])
        return self.nets[i].forward(x, track)

    def predict(self, i: int, obs, a_c) -> np.ndarray:
        """(B, n_modes) for scalar critics, (B, n_modes, atoms) for quantile critics"""
        x = np.concatenate([_as_batch(obs), _as_batch(a_c)], axis=1)
        out = self.nets[i].predict(x)
        if self.atoms == 1:
            return out
        return out.reshape(out.shape[0], self.n_modes, self.atoms)

    def predict_all(self, obs, a_c) -> List[np.ndarray]:
        return [self.predict(i, obs, a_c) for i in range(len(self.nets))]

    def parameters(self) -> List[Parameter]:
        params = []
        for net in self.nets:
            params.extend(net.parameters())
        return params


def copy_actor(actor, name: Optional[str] = None):
    clone = actor.__class__.__new__(actor.__class__)
    clone.__dict__.update(actor.__dict__)
    clone.net = actor.net.copy(name)
    return clone


def copy_critics(critics: CriticEnsemble, suffix: str = '_target') -> CriticEnsemble:
    clone = CriticEnsemble.__new__(CriticEnsemble)
    clone.n_modes = critics.n_modes
    clone.atoms = critics.atoms
    clone.nets = [net.copy(net.name + suffix) for net in critics.nets]
    return clone
