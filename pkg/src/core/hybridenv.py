"""
Kinematic point-mass suction environment with a hybrid action space

The effector is a 2-D point driven by a velocity command ``a_c`` and a
binary suction mode ``a_d``. Every reset samples a fresh domain
configuration (object, goal, mass, drag, task). The reward combines staged
progress terms and penalties and is divided by ``REWARD_SCALE``.

Observation layout (24 values, identical for every task)::

    [0:6]   effector position history j_{t-2}, j_{t-1}, j_t
    [6:8]   p_eo  effector -> object
    [8:10]  p_og  object -> goal
    [10:12] p_eg  effector -> goal
    [12:15] suction: attached flag, release flag, continuous suction command
    [15:24] previous actions a_{t-3}, a_{t-2}, a_{t-1}, each (a_d, a_c[0], a_c[1])

The core is functional (``reset``/``step``/``observe``); the gymnasium
wrapper ``PointMassSuctionEnv`` sits on top of it.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import json
import logging
import math
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import gymnasium as gym
from gymnasium import spaces
import numpy as np

from src.utils.errors import EpisodeError

logger = logging.getLogger(__name__)

POS_DIM = 2
HISTORY = 3
ACTION_HISTORY = 3
OBS_DIM = POS_DIM * HISTORY + 3 * POS_DIM + 3 + ACTION_HISTORY * (1 + POS_DIM)
N_MODES = 2
REWARD_SCALE = 10.0

TASKS = ('reach', 'pick', 'move', 'put')


class TerminationReason(str, Enum):
    SUCCESS = 'success'
    OUT_OF_WORKSPACE = 'out_of_workspace'
    MAX_STEPS = 'max_steps'
    BOUNDARY_VIOLATION = 'boundary_violation'


@dataclass(frozen=True)
class EnvConfig:
    """Static environment parameters (the ``env`` block of a run config)"""

    task: str = 'reach'
    dt: float = 0.05
    v_max: float = 1.0
    workspace: float = 1.0
    table: float = 0.9
    spawn: float = 0.8
    grasp_radius: float = 0.08
    success_threshold: float = 0.05
    lift_threshold: float = 0.1
    max_steps: int = 100
    mass_range: Tuple[float, float] = (0.5, 2.0)
    drag_range: Tuple[float, float] = (0.0, 0.5)
    reward_weights: Tuple[float, float, float] = (1.0, 1.0, 0.5)
    penalty_weights: Tuple[float, float, float, float] = (1.0, 1.0, 0.1, 1.0)
    distance_scale: float = 0.5
    terminate_on_boundary: bool = True


@dataclass(frozen=True)
class DomainConfig:
    """Per-episode randomized configuration omega"""

    object_pos: np.ndarray
    goal_pos: np.ndarray
    mass: float
    drag: float
    grasp_radius: float
    task: str


@dataclass(frozen=True)
class HybridAction:
    a_d: int
    a_c: np.ndarray
    suction_prob: Optional[float] = None

    @property
    def suction_command(self) -> float:
        return float(self.a_d) if self.suction_prob is None else float(self.suction_prob)


@dataclass
class EnvState:
    effector: np.ndarray
    object_pos: np.ndarray
    start_object: np.ndarray
    history: np.ndarray
    prev_actions: np.ndarray
    attached: bool = False
    released: bool = False
    ever_attached: bool = False
    suction_command: float = 0.0
    t: int = 0
    done: bool = False

    def copy(self) -> 'EnvState':
        return EnvState(self.effector.copy(), self.object_pos.copy(), self.start_object.copy(),
                        self.history.copy(), self.prev_actions.copy(), self.attached, self.released,
                        self.ever_attached, self.suction_command, self.t, self.done)


@dataclass
class StepResult:
    state: EnvState
    observation: np.ndarray
    reward: float
    terminated: bool
    reason: Optional[TerminationReason] = None
    terms: Dict[str, float] = field(default_factory=dict)

    @property
    def truncated(self) -> bool:
        return self.reason is TerminationReason.MAX_STEPS

    @property
    def bootstrap_done(self) -> bool:
        """Done flag stored in replay: time-limit truncation keeps bootstrapping"""
        return self.terminated and not self.truncated


def _uniform_point(rng: np.random.Generator, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, POS_DIM)


def sample_domain(rng: np.random.Generator, config: EnvConfig, task: Optional[str] = None) -> DomainConfig:
    """Draw omega; the goal is redrawn until the object starts outside its success radius"""
    task = task or config.task
    if task not in TASKS:
        raise EpisodeError(f'unknown task {task}; expected one of {TASKS}', code='ENV-400')
    object_pos = _uniform_point(rng, config.spawn)
    goal_pos = _uniform_point(rng, config.spawn)
    while np.linalg.norm(goal_pos - object_pos) < config.success_threshold:
        goal_pos = _uniform_point(rng, config.spawn)
    return DomainConfig(
        object_pos=object_pos,
        goal_pos=goal_pos,
        mass=float(rng.uniform(*config.mass_range)),
        drag=float(rng.uniform(*config.drag_range)),
        grasp_radius=config.grasp_radius,
        task=task,
    )


def reset(rng: np.random.Generator, config: EnvConfig, task: Optional[str] = None) -> Tuple[EnvState, DomainConfig]:
    """Sample omega and the effector start; histories start at zero"""
    domain = sample_domain(rng, config, task)
    effector = _uniform_point(rng, config.spawn)
    while np.linalg.norm(domain.object_pos - effector) < config.success_threshold:
        effector = _uniform_point(rng, config.spawn)
    history = np.zeros((HISTORY, POS_DIM))
    history[-1] = effector
    state = EnvState(
        effector=effector,
        object_pos=domain.object_pos.copy(),
        start_object=domain.object_pos.copy(),
        history=history,
        prev_actions=np.zeros((ACTION_HISTORY, 1 + POS_DIM)),
    )
    return state, domain


def integrate_velocity(j_prev: np.ndarray, j_dot: np.ndarray, dt: float,
                       bound: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Euler step then clamp to [-bound, bound]; returns (position, clamped mask)"""
    if dt <= 0:
        raise EpisodeError(f'dt must be positive, got {dt}', code='ENV-400')
    raw = np.asarray(j_prev, dtype=np.float64) + np.asarray(j_dot, dtype=np.float64) * dt
    clamped = np.clip(raw, -bound, bound)
    return clamped, raw != clamped


def relative_vectors(state: EnvState, domain: DomainConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p_eo = state.object_pos - state.effector
    p_og = domain.goal_pos - state.object_pos
    return p_eo, p_og, p_eo + p_og


def observe(state: EnvState, domain: DomainConfig, normalizer=None) -> np.ndarray:
    p_eo, p_og, p_eg = relative_vectors(state, domain)
    suction = np.array([float(state.attached), float(state.released), state.suction_command])
    obs = np.concatenate([state.history.reshape(-1), p_eo, p_og, p_eg, suction, state.prev_actions.reshape(-1)])
    if normalizer is not None:
        return normalizer.normalize(obs)
    return obs


def reward_terms(config: EnvConfig, prev: EnvState, nxt: EnvState, domain: DomainConfig, a_c: np.ndarray,
                 boundary_hit: bool, out_of_workspace: bool, timed_out: bool) -> Dict[str, float]:
    """Every reward and penalty term of one transition plus their weighted total"""
    scale = config.distance_scale
    p_eo, p_og, _ = relative_vectors(nxt, domain)
    r0 = 0.0 if prev.ever_attached else 1.0 - math.tanh(np.linalg.norm(p_eo) / scale)
    r1 = 1.0 - math.tanh(np.linalg.norm(p_og) / scale) if nxt.attached else 0.0
    r2 = 0.0
    dist = np.linalg.norm(p_og)
    if nxt.attached and dist > 0:
        velocity = (nxt.object_pos - prev.object_pos) / config.dt
        r2 = max(0.0, float(velocity @ (p_og / dist)))
    jerk = np.asarray(a_c, dtype=np.float64) - prev.prev_actions[-1, 1:]
    penalties = (float(boundary_hit), float(timed_out), float(jerk @ jerk), float(out_of_workspace))
    rewards = (r0, r1, r2)
    total = (sum(w * r for w, r in zip(config.reward_weights, rewards))
             - sum(w * c for w, c in zip(config.penalty_weights, penalties))) / REWARD_SCALE
    return {'r0': r0, 'r1': r1, 'r2': r2, 'c0': penalties[0], 'c1': penalties[1], 'c2': penalties[2],
            'c3': penalties[3], 'reward': total}


def reward_bound(config: EnvConfig) -> float:
    """Upper bound on |r_t| from the per-term bounds"""
    jerk_max = (2.0 * config.v_max) ** 2 * POS_DIM
    r2_max = config.v_max * math.sqrt(POS_DIM)
    reward_max = config.reward_weights[0] + config.reward_weights[1] + config.reward_weights[2] * r2_max
    penalty_max = (config.penalty_weights[0] + config.penalty_weights[1]
                   + config.penalty_weights[2] * jerk_max + config.penalty_weights[3])
    return (reward_max + penalty_max) / REWARD_SCALE


def _is_success(config: EnvConfig, state: EnvState, domain: DomainConfig, a_d: int) -> bool:
    p_eo, p_og, _ = relative_vectors(state, domain)
    if domain.task == 'reach':
        return np.linalg.norm(p_eo) < config.success_threshold
    if domain.task == 'pick':
        return state.attached and np.linalg.norm(state.object_pos - state.start_object) > config.lift_threshold
    near_goal = np.linalg.norm(p_og) < config.success_threshold
    if domain.task == 'move':
        return near_goal
    return near_goal and a_d == 0 and not state.attached


def _validate_action(config: EnvConfig, action: HybridAction) -> Tuple[int, np.ndarray]:
    a_d = int(action.a_d)
    if a_d not in (0, 1):
        raise EpisodeError(f'a_d must be 0 or 1, got {action.a_d}', code='ENV-400')
    a_c = np.asarray(action.a_c, dtype=np.float64).reshape(-1)
    if a_c.shape[0] != POS_DIM or not np.all(np.isfinite(a_c)):
        raise EpisodeError(f'a_c must be {POS_DIM} finite values, got {action.a_c}', code='ENV-400')
    return a_d, np.clip(a_c, -config.v_max, config.v_max)


def step(state: EnvState, domain: DomainConfig, action: HybridAction, config: EnvConfig,
         normalizer=None) -> StepResult:
    """Advance one control step; ``state`` is left untouched"""
    if state.done:
        raise EpisodeError('step called on a terminated episode')
    a_d, a_c = _validate_action(config, action)
    nxt = state.copy()
    nxt.t += 1
    nxt.released = False

    velocity = a_c
    if state.attached:
        velocity = a_c / max(1.0, domain.mass * (1.0 + domain.drag))
    nxt.effector, clamped = integrate_velocity(state.effector, velocity, config.dt, config.workspace)
    boundary_hit = bool(np.any(clamped))

    if nxt.attached and a_d == 0:
        nxt.attached = False
        nxt.released = True
    elif not nxt.attached and a_d == 1 and np.linalg.norm(nxt.object_pos - nxt.effector) < domain.grasp_radius:
        nxt.attached = True
        nxt.ever_attached = True
    if nxt.attached:
        nxt.object_pos = nxt.effector.copy()
    out_of_workspace = bool(np.any(np.abs(nxt.object_pos) > config.table))

    nxt.history = np.vstack([state.history[1:], nxt.effector[None, :]])
    nxt.prev_actions = np.vstack([state.prev_actions[1:], np.concatenate([[float(a_d)], a_c])[None, :]])
    nxt.suction_command = action.suction_command

    reason = None
    if _is_success(config, nxt, domain, a_d):
        reason = TerminationReason.SUCCESS
    elif out_of_workspace:
        reason = TerminationReason.OUT_OF_WORKSPACE
    elif boundary_hit and config.terminate_on_boundary:
        reason = TerminationReason.BOUNDARY_VIOLATION
    elif nxt.t >= config.max_steps:
        reason = TerminationReason.MAX_STEPS
    nxt.done = reason is not None

    terms = reward_terms(config, state, nxt, domain, a_c, boundary_hit, out_of_workspace,
                         reason is TerminationReason.MAX_STEPS)
    return StepResult(nxt, observe(nxt, domain, normalizer), terms['reward'], nxt.done, reason, terms)


def replay_rewards(config: EnvConfig, domain: DomainConfig, initial: EnvState, actions) -> np.ndarray:
    """Recompute the reward sequence of an action sequence from the initial state"""
    state = initial.copy()
    rewards = []
    for action in actions:
        result = step(state, domain, action, config)
        rewards.append(result.reward)
        state = result.state
        if result.terminated:
            break
    return np.asarray(rewards)


class PointMassSuctionEnv(gym.Env):
    """Gymnasium facade over the functional core

    The action space is ``Tuple(Discrete(2), Box(-v_max, v_max, (2,)))``;
    observations are raw (normalisation belongs to the caller).
    """

    metadata = {'render_modes': []}

    def __init__(self, config: Optional[EnvConfig] = None, rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.config = config or EnvConfig()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.action_space = spaces.Tuple((
            spaces.Discrete(N_MODES),
            spaces.Box(-self.config.v_max, self.config.v_max, shape=(POS_DIM,), dtype=np.float64),
        ))
        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(OBS_DIM,), dtype=np.float64)
        self.state: Optional[EnvState] = None
        self.domain: Optional[DomainConfig] = None

    @property
    def obs_dim(self) -> int:
        return OBS_DIM

    @property
    def act_dim(self) -> int:
        return POS_DIM

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        task = (options or {}).get('task')
        self.state, self.domain = reset(self.rng, self.config, task)
        return observe(self.state, self.domain), {'domain': self.domain}

    def step(self, action):
        if self.state is None:
            raise EpisodeError('reset must be called before step')
        if not isinstance(action, HybridAction):
            action = HybridAction(int(action[0]), np.asarray(action[1], dtype=np.float64))
        result = step(self.state, self.domain, action, self.config)
        self.state = result.state
        info = {'reason': result.reason.value if result.reason else None, 'terms': result.terms}
        terminated = result.terminated and not result.truncated
        return result.observation, result.reward, terminated, result.truncated, info

    def with_task(self, task: str) -> 'PointMassSuctionEnv':
        return PointMassSuctionEnv(replace(self.config, task=task), self.rng)


class TrajectoryRecorder:
    """JSON-lines trajectory dump: one object per step (t, obs, a_d, a_c, r, done, reason)"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open('w', encoding='utf-8')

    def record(self, t: int, obs: np.ndarray, action: HybridAction, reward: float, done: bool,
               reason: Optional[TerminationReason]) -> None:
        row = {
            't': int(t),
            'obs': np.asarray(obs).tolist(),
            'a_d': int(action.a_d),
            'a_c': np.asarray(action.a_c, dtype=np.float64).tolist(),
            'r': float(reward),
            'done': bool(done),
            'reason': reason.value if reason else None,
        }
        self._handle.write(json.dumps(row) + '\n')

    def close(self) -> None:
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
