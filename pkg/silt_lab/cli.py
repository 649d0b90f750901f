"""
Command line entry point: `silt-lab <command> [flags]`.
Exit codes: 0 on success, 2 on invalid configuration or parameter domain, 3 when a memory budget refuses
a table, 1 on any other failure.
"""
import argparse
import logging
import os
import sys
from typing import Any, Sequence

from pydantic import ValidationError

from silt_lab import __version__
from silt_lab.exceptions import BudgetExceededError, DomainError, TrajectoryError
from silt_lab.experiments import ExperimentConfig, run
from silt_lab.generic import Timer, parse_scalar
from silt_lab.logging import RunLogger
from silt_lab.pandas import records_to_dataframe, write_manifest, write_records

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3

_LIST_KEYS = {'z', 'delta', 'thresholds', 'n_values'}


def read_config_file(path: str) -> dict[str, Any]:
    """
    Parse a `key=value` file; blank lines and lines starting with '#' are skipped.
    Dashes in keys are read as underscores, so `chunk-size=512` and `chunk_size=512` are the same.
    """
    values = {}
    with open(path, encoding='utf-8') as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise DomainError(f"{path}:{number}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split('=', 1))
            key = key.replace('-', '_')
            values[key] = value if key in _LIST_KEYS else parse_scalar(value)
    return values


def _add_common(parser: argparse.ArgumentParser) -> None:
    add = parser.add_argument
    add('--config', help='key=value file; command line flags win')
    add('--d', type=int, help='lattice dimension')
    add('--n', type=int, help='number of steps')
    add('--seed', type=int)
    add('--samples', type=int)
    add('--workers', type=int)
    add('--chunk-size', dest='chunk_size', type=int, help='samples per RNG substream')
    add('--memory-mb', dest='memory_mb', type=int, help='memory budget for dense tables')
    add('--output-dir', dest='output_dir', help='defaults to $SILT_LAB_OUTPUT_DIR or ./results')
    add('--stem', help='output file stem, defaults to the command name')
    add('--cache-dir', dest='cache_dir', help='directory of the file table cache')
    add('-v', '--verbose', action='store_true', help='log library progress at DEBUG level')


def _add_ball(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--r', type=float, help='ball radius')
    parser.add_argument('--norm', choices=['euclidean', 'sup'])
    parser.add_argument('--ball-factor', dest='ball_factor', type=float, help='|B| ~ n / ball_factor')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='silt-lab', argument_default=argparse.SUPPRESS,
                                     description='Self-intersection local time laboratory.')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        _add_common(sub)
        return sub

    walk = command('walk', 'simulate walks and report SILT, range and exit times')
    _add_ball(walk)

    decompose = command('decompose', 'dyadic strand decomposition checks on simulated walks')
    decompose.add_argument('--N', type=int, help='depth, the walk has 2^N steps')
    decompose.add_argument('--threshold', '--thresholds', dest='thresholds', help='visit thresholds, e.g. 8 or 4,8')
    decompose.add_argument('--z', help='levels of the inclusion checks, e.g. 2,4,8')
    decompose.add_argument('--delta', help='delta values of the inclusion checks, e.g. 0.1,0.5')
    decompose.add_argument('--chi-low', dest='chi_low', type=float, help='report level bands starting at N^chi_low')
    decompose.add_argument('--band-alpha', dest='band_alpha', type=float, help='exponent step between band edges')
    decompose.add_argument('--top-exponent', dest='top_exponent', type=float,
                           help='top band opens at 2^(N top_exponent), default 1/3')
    decompose.add_argument('--y', type=float, help='level of the band pigeonhole audit')

    oracle = command('oracle', 'exact tables, moments and bounds')
    oracle.add_argument('--quantity', choices=['moments', 'survival', 'eigen', 'enumerate', 'comparison', 'table',
                                               'ld_bound'])
    _add_ball(oracle)
    oracle.add_argument('--comparison', action='store_true', help='include the Gaussian comparison constant')
    oracle.add_argument('--symmetric', action='store_true', help='scan only the symmetry-reduced sector')
    oracle.add_argument('--final-slices', dest='full_table', action='store_false',
                        help='table: keep only the slices n - 1 and n, no export')
    oracle.add_argument('--gamma', type=float)
    oracle.add_argument('--EX2', type=float)
    oracle.add_argument('--C', type=float)
    oracle.add_argument('--x-n', dest='x_n', type=float)
    oracle.add_argument('--level', type=float, help='tail level used to tune x_n when it is not given')

    tail = command('tail', 'Monte Carlo tail of SILT or range')
    tail.add_argument('--y', type=float)
    tail.add_argument('--event', choices=['silt', 'range', 'joint'])

    confine = command('confine', 'visited fraction of walks conditioned to stay in a ball')
    _add_ball(confine)
    confine.add_argument('--delta0', type=float)
    confine.add_argument('--eps0', type=float)

    rwrs = command('rwrs', 'random walk in random scenery tails and the region III probe')
    for flag in ('--alpha', '--beta', '--c', '--y', '--delta0', '--eps0'):
        rwrs.add_argument(flag, type=float)
    rwrs.add_argument('--probe', action='store_true', help='run the region III lower-bound probe')

    zeta = command('zeta', 'region and exponent of (alpha, beta)')
    zeta.add_argument('--alpha', type=float)
    zeta.add_argument('--beta', type=float)

    command('report', 'summarize the result files of the output directory')

    sweep = command('sweep', 'n-sweep with one record per point and a fit record')
    sweep.add_argument('--target', choices=['confinement', 'intersection', 'synthetic', 'survival', 'levels',
                                            'tail'])
    sweep.add_argument('--n-values', dest='n_values', help="e.g. '2^9..2^15' or 16,32,64")
    _add_ball(sweep)
    sweep.add_argument('--y', type=float)
    sweep.add_argument('--z')
    sweep.add_argument('--event', choices=['silt', 'range'])
    return parser


def _diagnostic(exc: ValidationError) -> str:
    error = exc.errors()[0]
    location = '.'.join(str(part) for part in error['loc']) or 'config'
    return f"{location}: {error['msg']}"


def main(argv: Sequence[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop('config', None)
    verbose = args.pop('verbose', False)

    try:
        values = read_config_file(config_path) if config_path else {}
        values.update(args)
        config = ExperimentConfig(**values)
    except ValidationError as e:
        print(f"silt-lab: error: {_diagnostic(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, OSError) as e:
        print(f"silt-lab: error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    run_logger = RunLogger(log_dir=os.path.join(config.output_dir, 'logs'))
    run_logger.attach(level=logging.DEBUG if verbose else logging.INFO)
    run_logger.info(f"{config.command} started: {config.echo()}")
    try:
        with Timer() as timer:
            records = list(run(config))
        csv_path, _ = write_records(records, config.output_dir, config.output_stem)
        write_manifest(config.output_dir, config.output_stem, config.model_dump(mode='json'), __version__,
                       timer.seconds_taken, len(records))
        run_logger.info(f"{config.command} finished: {len(records)} records in {timer.seconds_taken:.2f}s")
    except (ValidationError, DomainError, TrajectoryError) as e:
        run_logger.error(e, config.command, config.echo())
        return EXIT_CONFIG
    except BudgetExceededError as e:
        run_logger.error(e, config.command, config.echo())
        return EXIT_BUDGET
    except Exception as e:
        run_logger.error(e, config.command, config.echo())
        return EXIT_FAILURE
    finally:
        run_logger.close()

    if config.command == 'report':
        print(records_to_dataframe(records).to_string(index=False))
    print(f"{len(records)} records written to {csv_path} in {timer.seconds_taken:.2f}s")
    return EXIT_OK
