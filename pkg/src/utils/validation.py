# Experiment configuration schemas and loading
#
# One YAML document per experiment (``version: 1``) with the sections
# run / env / agent / network / replay / normalization / bias. Dotted
# overrides such as ``agent.variant=hyacc`` are applied before validation.

from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple, Union
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
import yaml

from src.core.bias_analytics import BiasModel
from src.core.hybridenv import EnvConfig
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

TaskEnum = Literal['reach', 'pick', 'move', 'put']
VariantEnum = Literal['hybrid_td3', 'td3_greedy', 'ddpg', 'sac', 'ppo', 'hydatd3', 'hydarc', 'hytqc', 'hyacc']
WeightingEnum = Literal['as_written', 'expectation']
CriticLossEnum = Literal['huber', 'mse']


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class RunSection(_Section):
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3], min_length=1)
    episodes: int = Field(2000, gt=0)
    episodes_per_epoch: int = Field(50, gt=0)
    eval_every: int = Field(1, gt=0)
    eval_episodes: int = Field(5, gt=0)
    final_window: int = Field(5, gt=0)
    workers: int = Field(1, gt=0)
    record_wall_time: bool = False
    bias_discounted: bool = True
    checkpoint: bool = True

    @model_validator(mode='after')
    def validate_seeds(self) -> 'RunSection':
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f'seeds must be distinct, got {self.seeds}')
        if self.episodes < self.episodes_per_epoch:
            raise ValueError('episodes must cover at least one epoch')
        return self

    @property
    def epochs(self) -> int:
        return self.episodes // self.episodes_per_epoch


class EnvSection(_Section):
    task: TaskEnum = 'reach'
    dt: float = Field(0.05, gt=0)
    v_max: float = Field(1.0, gt=0)
    grasp_radius: float = Field(0.08, gt=0)
    success_threshold: float = Field(0.05, gt=0)
    lift_threshold: float = Field(0.1, gt=0)
    max_steps: int = Field(100, gt=0)
    mass_range: Tuple[float, float] = (0.5, 2.0)
    drag_range: Tuple[float, float] = (0.0, 0.5)
    reward_weights: Tuple[float, float, float] = (1.0, 1.0, 0.5)
    penalty_weights: Tuple[float, float, float, float] = (1.0, 1.0, 0.1, 1.0)
    distance_scale: float = Field(0.5, gt=0)
    terminate_on_boundary: bool = True

    @model_validator(mode='after')
    def validate_ranges(self) -> 'EnvSection':
        lo, hi = self.mass_range
        if not 0.5 <= lo <= hi <= 2.0:
            raise ValueError(f'mass_range must lie inside [0.5, 2.0], got {self.mass_range}')
        if self.drag_range[0] < 0 or self.drag_range[0] > self.drag_range[1]:
            raise ValueError(f'drag_range must be a non-negative interval, got {self.drag_range}')
        if min(self.reward_weights + self.penalty_weights) < 0:
            raise ValueError('reward and penalty weights must be non-negative')
        return self

    def to_env_config(self) -> EnvConfig:
        return EnvConfig(**self.model_dump())


class AgentSection(_Section):
    variant: VariantEnum = 'hybrid_td3'
    gamma: float = Field(0.99, gt=0, lt=1)
    tau: float = Field(0.005, gt=0, le=1)
    policy_delay: int = Field(2, ge=1)
    smoothing_sigma: float = Field(0.2, ge=0)
    smoothing_clip: float = Field(0.5, ge=0)
    explore_sigma: float = Field(0.1, ge=0)
    epsilon_start: float = Field(0.3, ge=0, le=1)
    epsilon_end: float = Field(0.05, ge=0, le=1)
    epsilon_anneal_fraction: float = Field(0.2, gt=0, le=1)
    target_weighting: WeightingEnum = 'as_written'
    greedy_ce_coef: float = Field(1.0, ge=0)
    lam: float = Field(0.75, ge=0, le=1)
    n_critics: int = Field(5, ge=1)
    m_atoms: int = Field(25, ge=1)
    k_atoms: int = Field(22, ge=1)
    beta: int = Field(2, ge=0)
    critic_loss: CriticLossEnum = 'huber'
    huber_kappa: float = Field(1.0, gt=0)
    alpha_c: float = Field(0.2, ge=0)
    alpha_d: float = Field(0.2, ge=0)
    ppo_clip: float = Field(0.2, gt=0, lt=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    rollout_steps: int = Field(2048, gt=0)
    ppo_epochs: int = Field(10, gt=0)
    ppo_minibatch: int = Field(64, gt=0)
    value_coef: float = Field(0.5, ge=0)
    entropy_coef: float = Field(0.0, ge=0)
    normalize_advantages: bool = False

    @model_validator(mode='after')
    def validate_truncation(self) -> 'AgentSection':
        if self.k_atoms > self.m_atoms:
            raise ValueError(f'k_atoms ({self.k_atoms}) must not exceed m_atoms ({self.m_atoms})')
        if self.beta >= self.k_atoms * self.n_critics:
            raise ValueError(f'beta ({self.beta}) must be below k_atoms*n_critics')
        if self.epsilon_end > self.epsilon_start:
            raise ValueError('epsilon_end must not exceed epsilon_start')
        return self


class NetworkSection(_Section):
    hidden: List[int] = Field(default_factory=lambda: [256, 256], min_length=1)
    lr: float = Field(3e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    actor_final_scale: float = Field(1e-2, gt=0)

    @model_validator(mode='after')
    def validate_hidden(self) -> 'NetworkSection':
        if min(self.hidden) < 1:
            raise ValueError(f'hidden widths must be positive, got {self.hidden}')
        return self


class ReplaySection(_Section):
    capacity: int = Field(100_000, gt=0)
    batch_size: int = Field(256, gt=0)
    warmup_steps: int = Field(1000, ge=0)


class NormalizationSection(_Section):
    clip_bound: float = Field(5.0, gt=0)
    eps: float = Field(1e-7, gt=0)


class BiasSection(_Section):
    mu: float = 0.0
    sigma: float = Field(1.0, gt=0)
    p_d: List[float] = Field(default_factory=lambda: [0.5, 0.5], min_length=1)
    lam: float = Field(0.75, ge=0, le=1)
    k_atoms: int = Field(22, ge=1)
    n_critics: int = Field(5, ge=1)
    m_atoms: int = Field(25, ge=1)
    beta: int = Field(2, ge=0)
    tie_tol: Optional[float] = Field(None, ge=0)
    mc_samples: int = Field(1_000_000, ge=10_000)
    mc_seed: int = 0
    mc_shards: int = Field(8, gt=0)
    k_values: List[int] = Field(default_factory=lambda: [20, 21, 22, 23, 24], min_length=1)

    @model_validator(mode='after')
    def validate_model(self) -> 'BiasSection':
        self.to_model()
        return self

    def to_model(self) -> BiasModel:
        return BiasModel(mu=self.mu, sigma=self.sigma, p_d=tuple(self.p_d), lam=self.lam, k_atoms=self.k_atoms,
                         n_critics=self.n_critics, m_atoms=self.m_atoms, beta=self.beta)


class ExperimentConfig(_Section):
    version: Literal[1] = 1
    run: RunSection = Field(default_factory=RunSection)
    env: EnvSection = Field(default_factory=EnvSection)
    agent: AgentSection = Field(default_factory=AgentSection)
    network: NetworkSection = Field(default_factory=NetworkSection)
    replay: ReplaySection = Field(default_factory=ReplaySection)
    normalization: NormalizationSection = Field(default_factory=NormalizationSection)
    bias: BiasSection = Field(default_factory=BiasSection)


# Validation functions
def validate_data(model: type, data: Any) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        issues = ', '.join(f'{".".join(str(p) for p in i["loc"]) or "config"}: {i["msg"]}' for i in e.errors())
        raise ConfigError(f'Validation Error: {issues}') from e
    except ValueError as e:
        # raised by domain constructors inside validators
        raise ConfigError(f'Validation Error: {e}') from e


def parse_override(text: str) -> Tuple[List[str], Any]:
    if '=' not in text:
        raise ConfigError(f'override must look like section.key=value, got {text!r}')
    key, raw = text.split('=', 1)
    parts = [p for p in key.strip().split('.') if p]
    if not parts:
        raise ConfigError(f'override has an empty key: {text!r}')
    return parts, yaml.safe_load(raw) if raw.strip() else None


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Set dotted keys in ``data``; keys unknown to the schema raise CFG-404"""
    schema = ExperimentConfig().model_dump()
    for text in overrides:
        parts, value = parse_override(text)
        known, node = schema, data
        for depth, part in enumerate(parts):
            if not isinstance(known, dict) or part not in known:
                raise ConfigError(f'unknown config key {".".join(parts[:depth + 1])}', code='CFG-404')
            known = known[part]
            if depth == len(parts) - 1:
                node[part] = value
            else:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError(f'config key {".".join(parts[:depth + 1])} is not a section')
    return data


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    overrides = tuple(overrides)
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f'config file not found: {path}', code='CFG-404')
        try:
            data = yaml.safe_load(path.read_text(encoding='utf-8')) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f'cannot parse {path}: {e}') from e
        if not isinstance(data, dict):
            raise ConfigError(f'{path} must hold a mapping at the top level')
    config = validate_data(ExperimentConfig, apply_overrides(data, overrides))
    logger.debug('loaded config from %s with %d overrides', path, len(overrides))
    return config


def resolved_yaml(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode='json'), sort_keys=False)


def write_resolved_config(config: ExperimentConfig, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / 'resolved_config.yaml'
    target.write_text(resolved_yaml(config), encoding='utf-8')
    return target
