"""
Experiment orchestration: multi-seed training, per-epoch evaluation,
the estimation-bias measurement and metric persistence

Each seed owns its whole stack (environment, agent, replay buffer,
normalizer, RNG streams) and writes its own files, so seeds can fan out
over a thread pool and be aggregated after join.

Output directory layout::

    resolved_config.yaml
    runlog_<variant>_<seed>.csv      one row per epoch
    divergence_<variant>_<seed>.json only when a seed diverged
    eval_<variant>_<seed>.json       written by ``evaluate_checkpoint``
    summary_<variant>.json           per-epoch mean/std + final-window summary
    curves.csv                       long format: variant, task, epoch, mean, std
    comparison.json                  written by ``compare_runs``
    ckpt/<variant>_<seed>/           resume bundle of the last completed epoch
"""

import csv
from dataclasses import dataclass, field
from functools import partial
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.agents import AgentDims, HybridAgent, TrainCounters, make_agent, train_step
from src.core.hybridenv import N_MODES, HybridAction, PointMassSuctionEnv, TerminationReason
from src.core.normalization import RunningNormalizer
from src.core.replay import ReplayBuffer
from src.utils.errors import (AggregationError, DivergenceError, EvaluationError, HybridRLError,
                              NonFiniteError)
from src.utils.performance import PerformanceMonitor, map_in_threads
from src.utils.seeding import (AGENT_STREAM, BASELINE_STREAM, ENV_STREAM, EVAL_STREAM, REPLAY_STREAM, derive_rng,
                               restore_rng, rng_state)
from src.utils.validation import ExperimentConfig, write_resolved_config

logger = logging.getLogger(__name__)

RUNLOG_COLUMNS = ('epoch', 'seed', 'return', 'bias', 'critic_loss', 'actor_loss', 'wall_time')
LONG_COLUMNS = ('variant', 'task', 'epoch', 'mean', 'std')


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """One experiment: a validated config and where its outputs go"""

    experiment: ExperimentConfig
    out_dir: Path
    resume: bool = True

    @property
    def variant(self) -> str:
        return self.experiment.agent.variant

    @property
    def task(self) -> str:
        return self.experiment.env.task

    @property
    def seeds(self) -> List[int]:
        return list(self.experiment.run.seeds)

    @property
    def epochs(self) -> int:
        return self.experiment.run.epochs

    @property
    def max_steps(self) -> int:
        return self.experiment.env.max_steps


@dataclass(frozen=True)
class RunRow:
    epoch: int
    seed: int
    ret: Optional[float]
    bias: Optional[float]
    critic_loss: Optional[float]
    actor_loss: Optional[float]
    wall_time: float = 0.0

    def cells(self) -> List[str]:
        return [str(self.epoch), str(self.seed)] + [_fmt(v) for v in
                                                     (self.ret, self.bias, self.critic_loss, self.actor_loss,
                                                      self.wall_time)]


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return repr(float(value))


def _parse(cell: str) -> Optional[float]:
    return float(cell) if cell != '' else None


@dataclass
class RunLog:
    """Append-only per-epoch log of one (variant, seed) run"""

    variant: str
    seed: int
    rows: List[RunRow] = field(default_factory=list)
    diverged: bool = False

    def append(self, row: RunRow) -> None:
        expected = len(self.rows)
        if row.epoch != expected or row.seed != self.seed:
            raise HybridRLError(f'run log for seed {self.seed} expects epoch {expected}, got '
                                f'epoch {row.epoch} seed {row.seed}', code='RUN-409')
        self.rows.append(row)

    @property
    def epochs(self) -> List[int]:
        return [row.epoch for row in self.rows]

    def returns(self) -> np.ndarray:
        return np.array([np.nan if r.ret is None else r.ret for r in self.rows], dtype=np.float64)

    def biases(self) -> np.ndarray:
        return np.array([np.nan if r.bias is None else r.bias for r in self.rows], dtype=np.float64)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(RUNLOG_COLUMNS)
            for row in self.rows:
                writer.writerow(row.cells())
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path], variant: str) -> 'RunLog':
        path = Path(path)
        with path.open(encoding='utf-8', newline='') as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != RUNLOG_COLUMNS:
                raise AggregationError(f'{path} does not carry the run-log columns', code='AGG-400')
            rows = [RunRow(int(r['epoch']), int(r['seed']), _parse(r['return']), _parse(r['bias']),
                           _parse(r['critic_loss']), _parse(r['actor_loss']), _parse(r['wall_time']) or 0.0)
                    for r in reader]
        seed = rows[0].seed if rows else int(path.stem.rsplit('_', 1)[-1])
        log = cls(variant, seed)
        for row in rows:
            log.append(row)
        return log


# ---------------------------------------------------------------------------
# Evaluation and the estimation-bias measurement
# ---------------------------------------------------------------------------

@dataclass
class EpisodeTrace:
    rewards: np.ndarray
    q_values: np.ndarray
    reason: Optional[str] = None

    @property
    def length(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def undiscounted_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class EvalReport:
    mean_return: float
    returns: List[float]
    bias_mean: float
    bias_std: float
    success_rate: float
    steps: int

    def to_dict(self) -> dict:
        return {
            'mean_return': self.mean_return,
            'returns': list(self.returns),
            'bias_mean': self.bias_mean,
            'bias_std': self.bias_std,
            'success_rate': self.success_rate,
            'steps': self.steps,
        }


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """G_t = sum over u >= t of gamma^(u - t) r_u, computed backwards"""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    running = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def bias_samples(trace: EpisodeTrace, gamma: float, discounted: bool = True) -> np.ndarray:
    """Monte Carlo return minus the predicted Q at every visited pair"""
    if trace.length == 0:
        raise EvaluationError('cannot measure estimation bias on a zero-length episode')
    returns = discounted_returns(trace.rewards, gamma if discounted else 1.0)
    return returns - trace.q_values


def rollout_episode(agent: HybridAgent, env, normalizer: Optional[RunningNormalizer] = None) -> EpisodeTrace:
    """One exploit-mode episode recording rewards and Q(s_t, a_t)"""
    obs, _ = env.reset()
    rewards, q_values = [], []
    reason = None
    while True:
        x = normalizer.normalize(obs) if normalizer is not None else np.asarray(obs, dtype=np.float64)
        action = agent.act(x, 'exploit')
        a_c = np.asarray(action.a_c, dtype=np.float64)
        q_values.append(float(agent.q_estimate(x[None, :], a_c[None, :], [action.a_d])[0]))
        obs, reward, terminated, truncated, info = env.step(action)
        rewards.append(float(reward))
        if terminated or truncated:
            reason = info.get('reason')
            break
    return EpisodeTrace(np.array(rewards), np.array(q_values), reason)


def estimation_bias(agent: HybridAgent, env, episodes: int, gamma: float,
                    normalizer: Optional[RunningNormalizer] = None, discounted: bool = True) -> Tuple[float, float]:
    """Mean and population std of G_t - Q(s_t, a_t) over all pairs visited in ``episodes`` test episodes"""
    samples = np.concatenate([bias_samples(rollout_episode(agent, env, normalizer), gamma, discounted)
                              for _ in range(episodes)])
    return float(samples.mean()), float(samples.std())


def evaluate(agent: HybridAgent, env, episodes: int, gamma: float, normalizer: Optional[RunningNormalizer] = None,
             discounted: bool = True, buffer: Optional[ReplayBuffer] = None) -> EvalReport:
    """Exploit-mode test episodes with the normalizer frozen

    Returns the mean undiscounted return, the estimation bias over the same
    episodes and the success rate. Raises EVAL-409 if anything was written
    to the normalizer or the replay buffer.
    """
    if episodes < 1:
        raise EvaluationError(f'evaluation needs at least one episode, got {episodes}')
    norm_count = normalizer.count if normalizer is not None else 0
    buffer_count = len(buffer) if buffer is not None else 0
    was_frozen = normalizer.frozen if normalizer is not None else False
    if normalizer is not None:
        normalizer.frozen = True
    try:
        traces = [rollout_episode(agent, env, normalizer) for _ in range(episodes)]
    finally:
        if normalizer is not None:
            normalizer.frozen = was_frozen
    if (normalizer is not None and normalizer.count != norm_count) or \
            (buffer is not None and len(buffer) != buffer_count):
        raise EvaluationError('evaluation episodes touched the normalizer or replay buffer', code='EVAL-409')
    samples = np.concatenate([bias_samples(t, gamma, discounted) for t in traces])
    returns = [t.undiscounted_return for t in traces]
    successes = sum(t.reason == TerminationReason.SUCCESS.value for t in traces)
    return EvalReport(float(np.mean(returns)), returns, float(samples.mean()), float(samples.std()),
                      successes / len(traces), int(sum(t.length for t in traces)))


def random_baseline(env: PointMassSuctionEnv, episodes: int, rng: np.random.Generator) -> float:
    """Mean undiscounted return of a uniformly random hybrid policy"""
    v_max = env.config.v_max
    totals = []
    for _ in range(episodes):
        env.reset()
        total, done = 0.0, False
        while not done:
            action = HybridAction(int(rng.integers(N_MODES)), rng.uniform(-v_max, v_max, env.act_dim))
            _, reward, terminated, truncated, _ = env.step(action)
            total += reward
            done = terminated or truncated
        totals.append(total)
    return float(np.mean(totals))


# ---------------------------------------------------------------------------
# Per-seed training
# ---------------------------------------------------------------------------

@dataclass
class SeedStack:
    """Everything one seed owns while training"""

    agent: HybridAgent
    env: PointMassSuctionEnv
    eval_env: PointMassSuctionEnv
    buffer: Optional[ReplayBuffer]
    normalizer: RunningNormalizer
    replay_rng: np.random.Generator
    counters: TrainCounters


def build_stack(config: ExperimentConfig, seed: int) -> SeedStack:
    env_config = config.env.to_env_config()
    env = PointMassSuctionEnv(env_config, derive_rng(seed, ENV_STREAM))
    eval_env = PointMassSuctionEnv(env_config, derive_rng(seed, EVAL_STREAM))
    dims = AgentDims(env.obs_dim, env.act_dim, N_MODES, env_config.v_max)
    agent = make_agent(dims, config.agent, config.network, derive_rng(seed, AGENT_STREAM))
    buffer = None if agent.on_policy else ReplayBuffer(env.obs_dim, env.act_dim, config.replay.capacity)
    normalizer = RunningNormalizer(env.obs_dim, config.normalization.clip_bound, config.normalization.eps)
    counters = TrainCounters(total_steps=config.run.episodes * env_config.max_steps)
    return SeedStack(agent, env, eval_env, buffer, normalizer, derive_rng(seed, REPLAY_STREAM), counters)


def _run_name(variant: str, seed: int) -> str:
    return f'{variant}_{seed}'


def checkpoint_dir(out_dir: Path, variant: str, seed: int) -> Path:
    return Path(out_dir) / 'ckpt' / _run_name(variant, seed)


def save_stack(stack: SeedStack, directory: Path, epoch: int) -> None:
    """Resume bundle; ``state.json`` is written last and marks the bundle complete"""
    directory.mkdir(parents=True, exist_ok=True)
    stack.agent.save(directory / 'agent.json')
    (directory / 'normalizer.json').write_text(json.dumps(stack.normalizer.to_dict(), default=_jsonable),
                                               encoding='utf-8')
    if stack.buffer is not None:
        stack.buffer.save(directory / 'buffer.npz')
    if stack.agent.on_policy:
        stack.agent.rollout.save(directory / 'rollout.npz')
    state = {
        'epoch': epoch,
        'counters': stack.counters.to_dict(),
        'rngs': {
            'env': rng_state(stack.env.rng),
            'eval': rng_state(stack.eval_env.rng),
            'agent': rng_state(stack.agent.rng),
            'replay': rng_state(stack.replay_rng),
        },
    }
    (directory / 'state.json').write_text(json.dumps(state), encoding='utf-8')


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f'cannot serialise {type(value).__name__}')


def restore_stack(stack: SeedStack, directory: Path) -> int:
    """Load a resume bundle into ``stack``; returns the last completed epoch"""
    state = json.loads((directory / 'state.json').read_text(encoding='utf-8'))
    stack.agent.load(directory / 'agent.json')
    normalizer_data = json.loads((directory / 'normalizer.json').read_text(encoding='utf-8'))
    stack.normalizer = RunningNormalizer.from_dict(normalizer_data)
    if stack.buffer is not None:
        stack.buffer = ReplayBuffer.load(directory / 'buffer.npz')
    if stack.agent.on_policy:
        stack.agent.rollout.load_into(directory / 'rollout.npz')
    stack.counters = TrainCounters.from_dict(state['counters'])
    rngs = state['rngs']
    stack.env.rng = restore_rng(rngs['env'])
    stack.eval_env.rng = restore_rng(rngs['eval'])
    stack.agent.rng = restore_rng(rngs['agent'])
    stack.replay_rng = restore_rng(rngs['replay'])
    return int(state['epoch'])


def _mean_or_none(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def train_epoch(stack: SeedStack, config: ExperimentConfig) -> Tuple[List[float], List[float]]:
    critic_losses, actor_losses = [], []
    for _ in range(config.run.episodes_per_epoch):
        stack.env.reset()
        while True:
            metrics = train_step(stack.agent, stack.env, stack.buffer, stack.normalizer, stack.counters,
                                 stack.replay_rng, config.replay.batch_size, config.replay.warmup_steps)
            if metrics['critic_loss'] is not None:
                critic_losses.append(metrics['critic_loss'])
            if metrics['actor_loss'] is not None:
                actor_losses.append(metrics['actor_loss'])
            if metrics['terminated'] or metrics['truncated']:
                break
    return critic_losses, actor_losses


def run_seed(config: ExperimentConfig, seed: int, out_dir: Union[str, Path], resume: bool = True) -> RunLog:
    """Train one seed for every epoch, evaluating and checkpointing as it goes"""
    out_dir = Path(out_dir)
    variant = config.agent.variant
    runlog_path = out_dir / f'runlog_{_run_name(variant, seed)}.csv'
    ckpt = checkpoint_dir(out_dir, variant, seed)
    stack = build_stack(config, seed)
    log = RunLog(variant, seed)
    start = 0
    if resume and (ckpt / 'state.json').is_file() and runlog_path.is_file():
        completed = restore_stack(stack, ckpt)
        previous = RunLog.read_csv(runlog_path, variant)
        for row in previous.rows[:completed + 1]:
            log.append(row)
        start = completed + 1
        logger.info('%s seed %d: resuming after epoch %d', variant, seed, completed)

    monitor = PerformanceMonitor()
    run = config.run
    for epoch in range(start, run.epochs):
        monitor.start_timer('epoch')
        try:
            critic_losses, actor_losses = train_epoch(stack, config)
            report = None
            if (epoch + 1) % run.eval_every == 0 or epoch == run.epochs - 1:
                report = evaluate(stack.agent, stack.eval_env, run.eval_episodes, config.agent.gamma,
                                  stack.normalizer, run.bias_discounted, stack.buffer)
        except (NonFiniteError, DivergenceError) as err:
            log.diverged = True
            logger.error('%s seed %d diverged in epoch %d after %d env steps / %d updates: %s', variant, seed,
                         epoch, stack.counters.env_steps, stack.counters.updates, err)
            payload = {'variant': variant, 'seed': seed, 'epoch': epoch, 'counters': stack.counters.to_dict(),
                       'error': err.args[0]}
            (out_dir / f'divergence_{_run_name(variant, seed)}.json').write_text(
                json.dumps(payload, indent=2), encoding='utf-8')
            break
        wall = monitor.end_timer('epoch') if run.record_wall_time else 0.0
        row = RunRow(epoch, seed, report.mean_return if report else None, report.bias_mean if report else None,
                     _mean_or_none(critic_losses), _mean_or_none(actor_losses), wall)
        log.append(row)
        log.write_csv(runlog_path)
        if run.checkpoint:
            save_stack(stack, ckpt, epoch)
        logger.info('%s seed %d epoch %d: return=%s bias=%s critic=%s actor=%s', variant, seed, epoch,
                    _fmt(row.ret), _fmt(row.bias), _fmt(row.critic_loss), _fmt(row.actor_loss))
    if not log.rows:
        log.write_csv(runlog_path)
    return log


def run_experiment(config: Union[RunConfig, ExperimentConfig], out_dir: Optional[Union[str, Path]] = None,
                   resume: bool = True) -> List[RunLog]:
    """Train every seed (fanned out over ``run.workers`` threads), then aggregate"""
    if isinstance(config, ExperimentConfig):
        if out_dir is None:
            raise HybridRLError('run_experiment needs an output directory', code='CFG-400')
        config = RunConfig(config, Path(out_dir), resume)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    experiment = config.experiment
    write_resolved_config(experiment, out)
    logger.info('running %s on %s: %d seeds x %d epochs', config.variant, config.task, len(config.seeds),
                config.epochs)
    logs = map_in_threads(partial(run_seed, experiment, out_dir=out, resume=config.resume), config.seeds,
                          experiment.run.workers)
    complete = [log for log in logs if not log.diverged]
    if complete:
        summary = aggregate(complete, experiment.run.final_window)
        write_summary(summary, out)
        write_long_csv([summary], config.task, out / 'curves.csv')
    else:
        logger.error('every seed of %s diverged; no summary written', config.variant)
    return logs


def evaluate_checkpoint(config: ExperimentConfig, seed: int, out_dir: Union[str, Path]) -> EvalReport:
    """Reload the last completed epoch of one seed and evaluate it on a fresh evaluation stream"""
    out_dir = Path(out_dir)
    variant = config.agent.variant
    ckpt = checkpoint_dir(out_dir, variant, seed)
    if not (ckpt / 'state.json').is_file():
        raise EvaluationError(f'no checkpoint for {variant} seed {seed} under {out_dir}', code='EVAL-404')
    stack = build_stack(config, seed)
    restore_stack(stack, ckpt)
    eval_env = PointMassSuctionEnv(config.env.to_env_config(), derive_rng(seed, EVAL_STREAM))
    report = evaluate(stack.agent, eval_env, config.run.eval_episodes, config.agent.gamma, stack.normalizer,
                      config.run.bias_discounted, stack.buffer)
    target = out_dir / f'eval_{_run_name(variant, seed)}.json'
    target.write_text(json.dumps({'variant': variant, 'seed': seed, **report.to_dict()}, indent=2),
                      encoding='utf-8')
    return report


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class Summary:
    variant: str
    seeds: List[int]
    epochs: List[int]
    mean: List[float]
    std: List[float]
    bias_mean: List[float]
    bias_std: List[float]
    final_window: int
    final_returns: Dict[int, float]
    five_number: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            'variant': self.variant,
            'seeds': self.seeds,
            'epochs': self.epochs,
            'mean': self.mean,
            'std': self.std,
            'bias_mean': self.bias_mean,
            'bias_std': self.bias_std,
            'final_window': self.final_window,
            'final_returns': {str(k): v for k, v in self.final_returns.items()},
            'five_number': self.five_number,
        }


def _nan_to_none(values: np.ndarray) -> List[Optional[float]]:
    return [None if math.isnan(v) else float(v) for v in values]


def aggregate(logs: Sequence[RunLog], final_window: int = 5) -> Summary:
    """Per-epoch mean and population std across seeds, plus the final-window spread"""
    if not logs:
        raise AggregationError('aggregate needs at least one run log')
    variants = {log.variant for log in logs}
    if len(variants) != 1:
        raise AggregationError(f'cannot aggregate across variants {sorted(variants)}')
    epochs = logs[0].epochs
    for log in logs[1:]:
        if log.epochs != epochs:
            raise AggregationError(f'seed {log.seed} covers epochs {log.epochs}, seed {logs[0].seed} {epochs}')
    if not epochs:
        raise AggregationError('run logs hold no epochs')
    returns = np.vstack([log.returns() for log in logs])
    biases = np.vstack([log.biases() for log in logs])
    with np.errstate(invalid='ignore'):
        mean, std = returns.mean(axis=0), returns.std(axis=0)
        bias_mean, bias_std = biases.mean(axis=0), biases.std(axis=0)
    window = min(final_window, len(epochs))
    tail = returns[:, -window:]
    finals = tail[~np.isnan(tail)]
    if finals.size:
        q = np.percentile(finals, [0, 25, 50, 75, 100])
        five = dict(zip(('min', 'q1', 'median', 'q3', 'max'), (float(v) for v in q)))
    else:
        five = {}
    final_returns = {log.seed: float(np.nanmean(row)) if not np.all(np.isnan(row)) else None
                     for log, row in zip(logs, tail)}
    return Summary(logs[0].variant, [log.seed for log in logs], list(epochs), _nan_to_none(mean),
                   _nan_to_none(std), _nan_to_none(bias_mean), _nan_to_none(bias_std), window, final_returns, five)


def write_summary(summary: Summary, out_dir: Union[str, Path]) -> Path:
    target = Path(out_dir) / f'summary_{summary.variant}.json'
    target.write_text(json.dumps(summary.to_dict(), indent=2), encoding='utf-8')
    return target


def write_long_csv(summaries: Iterable[Summary], task: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(LONG_COLUMNS)
        for summary in summaries:
            for epoch, mean, std in zip(summary.epochs, summary.mean, summary.std):
                writer.writerow([summary.variant, task, epoch, _fmt(mean), _fmt(std)])
    return path


def read_run_logs(out_dir: Union[str, Path], skip_diverged: bool = True) -> Dict[str, List[RunLog]]:
    """All ``runlog_<variant>_<seed>.csv`` files under ``out_dir`` grouped by variant, seeds sorted"""
    out_dir = Path(out_dir)
    grouped: Dict[str, List[RunLog]] = {}
    for path in sorted(out_dir.glob('runlog_*_*.csv')):
        variant, seed = path.stem[len('runlog_'):].rsplit('_', 1)
        if not seed.lstrip('-').isdigit():
            continue
        if skip_diverged and (out_dir / f'divergence_{variant}_{seed}.json').is_file():
            logger.warning('skipping diverged run %s seed %s', variant, seed)
            continue
        grouped.setdefault(variant, []).append(RunLog.read_csv(path, variant))
    for logs in grouped.values():
        logs.sort(key=lambda log: log.seed)
    return grouped


def aggregate_directory(out_dir: Union[str, Path], task: str, final_window: int = 5) -> List[Summary]:
    """Re-read every run log under ``out_dir`` and rewrite summaries and ``curves.csv``"""
    grouped = read_run_logs(out_dir)
    if not grouped:
        raise AggregationError(f'no run logs under {out_dir}', code='AGG-404')
    summaries = []
    for variant in sorted(grouped):
        summary = aggregate(grouped[variant], final_window)
        write_summary(summary, out_dir)
        summaries.append(summary)
    write_long_csv(summaries, task, Path(out_dir) / 'curves.csv')
    return summaries


# ---------------------------------------------------------------------------
# Cross-variant comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    """Candidate vs random policy and baseline on final-window returns, vs an optimistic variant on bias"""

    candidate: str
    baseline: str
    optimistic: str
    seeds: List[int]
    candidate_returns: Dict[int, Optional[float]]
    baseline_returns: Dict[int, Optional[float]]
    random_returns: Dict[int, float]
    candidate_bias: float
    optimistic_bias: float
    baseline_quorum: float = 0.75

    @property
    def seeds_above_random(self) -> int:
        return sum(_beats(self.candidate_returns[s], self.random_returns[s], strict=True) for s in self.seeds)

    @property
    def seeds_matching_baseline(self) -> int:
        return sum(_beats(self.candidate_returns[s], self.baseline_returns[s], strict=False) for s in self.seeds)

    @property
    def above_random(self) -> bool:
        return self.seeds_above_random == len(self.seeds)

    @property
    def matches_baseline(self) -> bool:
        return self.seeds_matching_baseline >= math.ceil(self.baseline_quorum * len(self.seeds))

    @property
    def bias_not_above_optimistic(self) -> bool:
        return self.candidate_bias <= self.optimistic_bias

    @property
    def passed(self) -> bool:
        return self.above_random and self.matches_baseline and self.bias_not_above_optimistic

    def to_dict(self) -> dict:
        keyed = lambda values: {str(k): v for k, v in values.items()}
        return {
            'candidate': self.candidate,
            'baseline': self.baseline,
            'optimistic': self.optimistic,
            'seeds': self.seeds,
            'candidate_returns': keyed(self.candidate_returns),
            'baseline_returns': keyed(self.baseline_returns),
            'random_returns': keyed(self.random_returns),
            'candidate_bias': None if math.isnan(self.candidate_bias) else self.candidate_bias,
            'optimistic_bias': None if math.isnan(self.optimistic_bias) else self.optimistic_bias,
            'seeds_above_random': self.seeds_above_random,
            'seeds_matching_baseline': self.seeds_matching_baseline,
            'above_random': self.above_random,
            'matches_baseline': self.matches_baseline,
            'bias_not_above_optimistic': self.bias_not_above_optimistic,
            'passed': self.passed,
        }


def _beats(value: Optional[float], reference: Optional[float], strict: bool) -> bool:
    if value is None or reference is None:
        return False
    return value > reference if strict else value >= reference


def random_baselines(config: ExperimentConfig, seeds: Sequence[int], episodes: int) -> Dict[int, float]:
    """Random-policy return per seed on the same evaluation stream the agents are scored on"""
    env_config = config.env.to_env_config()
    return {seed: random_baseline(PointMassSuctionEnv(env_config, derive_rng(seed, EVAL_STREAM)), episodes,
                                  derive_rng(seed, BASELINE_STREAM))
            for seed in seeds}


def final_window_bias(logs: Sequence[RunLog], final_window: int) -> float:
    """Seed-averaged mean of the last ``final_window`` measured biases; NaN when none were measured"""
    per_seed = []
    for log in logs:
        tail = log.biases()[-final_window:]
        tail = tail[~np.isnan(tail)]
        if tail.size:
            per_seed.append(float(tail.mean()))
    return float(np.mean(per_seed)) if per_seed else float('nan')


def compare_runs(config: ExperimentConfig, out_dir: Union[str, Path], candidate: str = 'hybrid_td3',
                 baseline: str = 'ddpg', optimistic: str = 'hydatd3') -> ComparisonReport:
    """Compare the run logs of three variants under ``out_dir`` and write ``comparison.json``"""
    out_dir = Path(out_dir)
    grouped = read_run_logs(out_dir)
    missing = [v for v in (candidate, baseline, optimistic) if v not in grouped]
    if missing:
        raise AggregationError(f'no run logs for {missing} under {out_dir}', code='AGG-404')
    window = config.run.final_window
    cand = aggregate(grouped[candidate], window)
    base = aggregate(grouped[baseline], window)
    seeds = sorted(set(cand.seeds) & set(base.seeds))
    if not seeds:
        raise AggregationError(f'{candidate} and {baseline} share no seeds')
    report = ComparisonReport(
        candidate, baseline, optimistic, seeds,
        {s: cand.final_returns[s] for s in seeds},
        {s: base.final_returns[s] for s in seeds},
        random_baselines(config, seeds, window * config.run.eval_episodes),
        final_window_bias(grouped[candidate], window),
        final_window_bias(grouped[optimistic], window),
    )
    (out_dir / 'comparison.json').write_text(json.dumps(report.to_dict(), indent=2), encoding='utf-8')
    logger.info('%s vs random %d/%d seeds, vs %s %d/%d seeds, bias %.4f vs %s %.4f',
                candidate, report.seeds_above_random, len(seeds), baseline, report.seeds_matching_baseline,
                len(seeds), report.candidate_bias, optimistic, report.optimistic_bias)
    return report
