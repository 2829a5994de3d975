"""
Command-line entry point

    python -m src.cli bias-table --n-critics 5 --m-atoms 25
    python -m src.cli ordering --mu 0 --sigma 1 --lambda 0.7
    python -m src.cli train --config configs/smoke.yaml -o agent.variant=hyacc

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure,
3 failed self-test, bias check or comparison.
"""

import argparse
import csv
import json
import logging
import os
from pathlib import Path
import sys
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from src.core import bias_analytics as ba
from src.core import harness
from src.core.selftest import run_selftest
from src.utils.errors import BiasDomainError, ConfigError, HybridRLError
from src.utils.validation import ExperimentConfig, load_config, write_resolved_config

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = 'HYBRID_TD3_OUTPUT_DIR'
LOG_LEVEL_ENV = 'HYBRID_TD3_LOG_LEVEL'
DEFAULT_OUTPUT_DIR = 'runs'

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with the configuration code instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f'{self.prog}: error: {message}\n')


def configure_logging(verbose: bool, quiet: bool) -> None:
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        level = getattr(logging, os.getenv(LOG_LEVEL_ENV, 'INFO').upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s', force=True)


def _bias_overrides(args: argparse.Namespace) -> List[str]:
    """Translate the analytic flags into dotted config overrides"""
    pairs = (('mu', 'mu'), ('sigma', 'sigma'), ('lam', 'lam'), ('n_critics', 'n_critics'),
             ('m_atoms', 'm_atoms'), ('k_atoms', 'k_atoms'), ('beta', 'beta'), ('samples', 'mc_samples'),
             ('mc_seed', 'mc_seed'), ('shards', 'mc_shards'), ('tie_tol', 'tie_tol'))
    overrides = [f'bias.{key}={getattr(args, attr)}' for attr, key in pairs
                 if getattr(args, attr, None) is not None]
    if getattr(args, 'p_d', None):
        overrides.append(f'bias.p_d={json.dumps(args.p_d)}')
    if getattr(args, 'k_values', None):
        overrides.append(f'bias.k_values={json.dumps(args.k_values)}')
    return overrides


def _load(args: argparse.Namespace, extra: Sequence[str] = ()) -> ExperimentConfig:
    return load_config(args.config, list(args.override) + list(extra))


def _out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(config, out)
    return out


def _write_table(rows, path: Path) -> None:
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(('k', 'effective_atoms', 'coefficient'))
        for row in rows:
            writer.writerow((row['k'], row['effective_atoms'], repr(row['coefficient'])))


def cmd_bias_table(args: argparse.Namespace) -> int:
    config = _load(args, _bias_overrides(args))
    out = _out_dir(args, config)
    bias = config.bias
    tables = {
        'tqc': ba.coefficient_table(bias.n_critics, bias.m_atoms, bias.k_values),
        'acc': ba.coefficient_table(bias.n_critics, bias.m_atoms, bias.k_values, beta=bias.beta),
    }
    for name, rows in tables.items():
        _write_table(rows, out / f'{name}_coefficients.csv')
        label = 'TQC' if name == 'tqc' else f'ACC (beta={bias.beta})'
        print(f'{label} truncation coefficients, N={bias.n_critics}, M={bias.m_atoms}')
        print('k,effective_atoms,coefficient')
        for row in rows:
            print(f"{row['k']},{row['effective_atoms']},{row['coefficient']:.4f}")
    return EXIT_OK


def cmd_bias_check(args: argparse.Namespace) -> int:
    config = _load(args, _bias_overrides(args))
    out = _out_dir(args, config)
    bias = config.bias
    rows = ba.bias_check(bias.to_model(), bias.mc_samples, bias.mc_seed, bias.mc_shards, config.run.workers)
    (out / 'bias_check.json').write_text(json.dumps(rows, indent=2), encoding='utf-8')
    for row in rows:
        print(f"{'PASS' if row['pass'] else 'FAIL'}  {row['variant']:<10} closed={row['closed_form']:+.5f} "
              f"mc={row['mc_mean']:+.5f} se={row['mc_se']:.5f}")
    return EXIT_OK if all(row['pass'] for row in rows) else EXIT_CHECK_FAILED


def cmd_ordering(args: argparse.Namespace) -> int:
    config = _load(args, _bias_overrides(args))
    out = _out_dir(args, config)
    try:
        report = ba.ordering_report(config.bias.to_model(), config.bias.tie_tol, strict=args.strict)
    except BiasDomainError as err:
        raise ConfigError(err.message) from err
    payload = report.to_dict()
    (out / 'ordering.json').write_text(json.dumps(payload, indent=2), encoding='utf-8')
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    logs = harness.run_experiment(config, out, resume=not args.no_resume)
    diverged = [log.seed for log in logs if log.diverged]
    if diverged:
        logger.warning('seeds %s diverged; see divergence_*.json under %s', diverged, out)
    print(f'trained {config.agent.variant} on {config.env.task}: {len(logs) - len(diverged)}/{len(logs)} '
          f'seeds complete, outputs in {out}')
    return EXIT_RUNTIME if len(diverged) == len(logs) else EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    for seed in config.run.seeds:
        report = harness.evaluate_checkpoint(config, seed, out)
        print(f'seed {seed}: return={report.mean_return:.3f} bias={report.bias_mean:+.4f} '
              f'success={report.success_rate:.2f}')
    return EXIT_OK


def cmd_aggregate(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    for summary in harness.aggregate_directory(out, config.env.task, config.run.final_window):
        final = summary.mean[-1]
        print(f"{summary.variant}: {len(summary.seeds)} seeds, {len(summary.epochs)} epochs, "
              f"final mean return {'n/a' if final is None else f'{final:.3f}'}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    report = harness.compare_runs(config, out, args.candidate, args.baseline, args.optimistic)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_selftest(args: argparse.Namespace) -> int:
    results = run_selftest()
    for result in results:
        print(result.line())
    failed = [r.name for r in results if not r.passed]
    print(f'{len(results) - len(failed)}/{len(results)} checks passed')
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def _common_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument('--out', default=os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR),
                        help=f'output directory (default ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})')
    common.add_argument('--config', default=None, help='experiment YAML file')
    common.add_argument('-o', '--override', action='append', default=[], metavar='KEY=VALUE',
                        help='dotted config override, repeatable (e.g. agent.variant=hyacc)')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    return common


def _add_bias_flags(parser: argparse.ArgumentParser, analytic: bool = True) -> None:
    parser.add_argument('--n-critics', type=int, default=None)
    parser.add_argument('--m-atoms', type=int, default=None)
    parser.add_argument('--beta', type=int, default=None)
    if analytic:
        parser.add_argument('--mu', type=float, default=None)
        parser.add_argument('--sigma', type=float, default=None)
        parser.add_argument('--lambda', dest='lam', type=float, default=None)
        parser.add_argument('--k-atoms', type=int, default=None)
        parser.add_argument('--p-d', type=float, nargs='+', default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = CliParser(prog='hybrid-td3', description='Hybrid TD3 estimation-bias analytics and experiments')
    commands = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    table = commands.add_parser('bias-table', parents=[common], help='truncation coefficient tables')
    _add_bias_flags(table, analytic=False)
    table.add_argument('--k-values', type=int, nargs='+', default=None)
    table.set_defaults(handler=cmd_bias_table)

    check = commands.add_parser('bias-check', parents=[common], help='closed forms vs Monte Carlo')
    _add_bias_flags(check)
    check.add_argument('--samples', type=int, default=None)
    check.add_argument('--seed', dest='mc_seed', type=int, default=None)
    check.add_argument('--shards', type=int, default=None)
    check.set_defaults(handler=cmd_bias_check)

    ordering = commands.add_parser('ordering', parents=[common], help='closed-form bias ordering report')
    _add_bias_flags(ordering)
    ordering.add_argument('--tie-tol', type=float, default=None)
    ordering.add_argument('--strict', action='store_true', help='reject models outside the analysed regime')
    ordering.set_defaults(handler=cmd_ordering)

    train = commands.add_parser('train', parents=[common], help='multi-seed training')
    train.add_argument('--no-resume', action='store_true', help='ignore existing checkpoints')
    train.set_defaults(handler=cmd_train)

    evaluate = commands.add_parser('evaluate', parents=[common], help='evaluate the last checkpoints')
    evaluate.set_defaults(handler=cmd_evaluate)

    aggregate = commands.add_parser('aggregate', parents=[common], help='summaries from run logs')
    aggregate.set_defaults(handler=cmd_aggregate)

    compare = commands.add_parser('compare', parents=[common], help='compare run logs of three variants')
    compare.add_argument('--candidate', default='hybrid_td3')
    compare.add_argument('--baseline', default='ddpg')
    compare.add_argument('--optimistic', default='hydatd3')
    compare.set_defaults(handler=cmd_compare)

    selftest = commands.add_parser('selftest', parents=[common], help='reduced oracle suite')
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except ConfigError as err:
        logger.error('configuration error: %s', err)
        print(f'error: {err}', file=sys.stderr)
        return EXIT_CONFIG
    except HybridRLError as err:
        logger.error('run failed: %s', err)
        print(f'error: {err}', file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as err:  # pylint: disable=broad-except
        logger.exception('unexpected failure')
        print(f'error: {err}', file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
