"""
Experiment runner: one validated config in, a deterministic stream of flat result records out.
"""
import dataclasses
import json
import logging
import math
import os
from itertools import product
from typing import Callable, Iterator, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from silt_lab import __version__
from silt_lab.cache import TableCache
from silt_lab.caching import CacheConfig
from silt_lab.caching.config import CACHE_DIR_ENV_KEY
from silt_lab.decomposition import build_tree, legall_decomposition, tree_statistics
from silt_lab.exceptions import DomainError
from silt_lab.generic import (check_memory_budget, env_path, log2_exact, memory_budget_mb, parse_float_list,
                              parse_int_list)
from silt_lab.oracle import (TransitionTableCoder, enumerate_paths, expected_mutual_intersection, expected_range,
                             expected_silt, export_table, gaussian_comparison_constant, ld_bound_rhs,
                             log_survival_prob, moment_report, principal_eigen, transition_probs)
from silt_lab.pandas import read_results, summarize_results
from silt_lab.rare_event import (DEFAULT_CHUNK, TailEstimate, batch_rows, centered_sum_quantile, fit_exponent,
                                 fit_linear, joint_silt_range, lattice_ball_radius, level_moment_mc,
                                 mc_centered_sum_tail, mc_tail_range, mc_tail_silt, range_lower_bound_sweep,
                                 run_sampling, visited_fraction_experiment)
from silt_lab.rwrs import (SceneryParams, level_split, mc_rwrs_samples, region_iii_lower_bound_probe,
                           zeta_exponent)
from silt_lab.silt import band_contributions, band_edges, band_pigeonhole_audit, batch_silt_range, local_times
from silt_lab.walk import (MAX_DIM, BallSpec, Norm, RngStream, Trajectory, batch_exit_times, simulate_walk,
                           simulate_walks, validate_dim)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

OUTPUT_ENV_KEY = 'SILT_LAB_OUTPUT_DIR'
SWEEP_STREAM_STRIDE = 2 ** 32  # stream offset between sweep points, far above any chunk id

COMMANDS = Literal['walk', 'decompose', 'oracle', 'tail', 'confine', 'rwrs', 'zeta', 'report', 'sweep']
OUTPUT_FIELDS = {'output_dir', 'stem', 'cache_dir'}

Record = dict


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    command: COMMANDS
    d: int = 3
    n: int = 1024
    N: int | None = None
    seed: int = 0
    samples: int = 1000
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK
    memory_mb: int = Field(default_factory=memory_budget_mb)

    y: float = 6.0
    r: float | None = None
    norm: Norm = 'euclidean'
    ball_factor: float = 8.0  # |B| ~ n / ball_factor when no radius is given
    z: list[float] = [2.0, 4.0, 8.0]
    delta: list[float] = [0.1, 0.5]
    thresholds: list[float] = [8.0]
    chi_low: float | None = None  # level bands N^chi_low, N^(chi_low + band_alpha), ... are reported when set
    band_alpha: float = 0.25
    top_exponent: float = 1 / 3
    delta0: float = 0.05
    eps0: float = 0.05
    alpha: float = 1.0
    beta: float = 0.6
    c: float = 1.0

    event: Literal['silt', 'range', 'joint'] = 'silt'
    quantity: Literal['moments', 'survival', 'eigen', 'enumerate', 'comparison', 'table', 'ld_bound'] = 'moments'
    target: Literal['confinement', 'intersection', 'synthetic', 'survival', 'levels', 'tail'] = 'confinement'
    n_values: list[int] = []
    probe: bool = False
    comparison: bool = False
    symmetric: bool = False
    full_table: bool = True  # False keeps only the last two slices and skips the export

    gamma: float = 0.25
    EX2: float = 2.0
    C: float = 1.0000001
    x_n: float | None = None
    level: float = 1e-3  # target tail level when x_n is tuned from the data

    output_dir: str = Field(default_factory=lambda: env_path(OUTPUT_ENV_KEY, 'results'))
    stem: str | None = None
    cache_dir: str | None = None

    @field_validator('z', 'delta', 'thresholds', mode='before')
    def parse_floats(cls, value):
        return parse_float_list(value)

    @field_validator('n_values', mode='before')
    def parse_ints(cls, value):
        return parse_int_list(value)

    @field_validator('d')
    def validate_d(cls, value):
        if not 1 <= value <= MAX_DIM:
            raise ValueError(f'd must lie in [1, {MAX_DIM}]')
        return value

    @field_validator('n', 'seed')
    def validate_non_negative(cls, value):
        if value < 0:
            raise ValueError('must be >= 0')
        return value

    @field_validator('samples', 'workers', 'chunk_size', 'memory_mb')
    def validate_positive(cls, value):
        if value < 1:
            raise ValueError('must be >= 1')
        return value

    @field_validator('delta', 'z', 'thresholds')
    def validate_grid(cls, value, info):
        if info.field_name == 'delta' and any(not 0 < v < 1 for v in value):
            raise ValueError('delta values must lie in (0, 1)')
        if info.field_name == 'z' and any(v <= 0 for v in value):
            raise ValueError('z values must be > 0')
        if info.field_name == 'thresholds' and any(v < 1 for v in value):
            raise ValueError('thresholds must be >= 1')
        return value

    @field_validator('chi_low', 'band_alpha', 'top_exponent')
    def validate_band_exponent(cls, value):
        if value is not None and not value > 0:
            raise ValueError('must be > 0')
        return value

    @field_validator('delta0', 'eps0', 'gamma', 'level')
    def validate_unit_interval(cls, value):
        if not 0 < value < 1:
            raise ValueError('must lie in (0, 1)')
        return value

    @model_validator(mode='after')
    def validate_command(self):
        if self.seed >= 2 ** 64:
            raise ValueError('seed must be < 2^64')
        if self.command == 'decompose':
            if self.N is None:
                self.N = log2_exact(self.n) if self.n >= 1 and not self.n & (self.n - 1) else None
                if self.N is None:
                    raise ValueError('decompose needs N or a power-of-two n')
            if self.N < 0:
                raise ValueError('N must be >= 0')
            self.n = 2 ** self.N
        if self.command == 'sweep' and len(self.n_values) < 3:
            raise ValueError('sweep needs at least 3 values in n_values')
        if self.r is not None and self.r < 0:
            raise ValueError('r must be >= 0')
        return self

    @property
    def output_stem(self) -> str:
        if self.stem:
            return self.stem
        if self.command == 'oracle':
            return f"oracle_{self.quantity}"
        if self.command == 'sweep':
            return f"sweep_{self.target}"
        return self.command

    def echo(self) -> str:
        """Serialized config, sorted keys, output locations left out so records do not depend on them."""
        return json.dumps(self.model_dump(mode='json', exclude=OUTPUT_FIELDS), sort_keys=True)

    def rng(self, point: int = 0) -> RngStream:
        return RngStream(self.seed, point * SWEEP_STREAM_STRIDE)

    def ball(self) -> BallSpec:
        """Ball of radius r, or the smallest ball with at least n / ball_factor sites."""
        if self.r is not None:
            return BallSpec(self.r, self.norm)
        return lattice_ball_radius(self.d, self.n / self.ball_factor, self.norm)


def table_cache(config: ExperimentConfig) -> TableCache:
    """File cache when a cache directory is configured (flag or SILT_LAB_CACHE_DIR), in-process cache otherwise."""
    directory = config.cache_dir or os.getenv(CACHE_DIR_ENV_KEY)
    if directory:
        return TableCache(CacheConfig(cache_type='FileCache', file_cache_dir=directory))
    return TableCache(CacheConfig())


def _estimate_fields(estimate: TailEstimate) -> Record:
    return {
        'event_descriptor': estimate.event_descriptor,
        'p_hat': estimate.p_hat,
        'stderr': estimate.stderr,
        'hits': estimate.hits,
        'samples': estimate.samples,
        'audit_violations': estimate.audit_violations,
    }


def _fit_fields(fit) -> Record:
    return {
        'record_type': 'fit',
        'exponent': fit.exponent,
        'prefactor': fit.prefactor,
        'r_squared': fit.r_squared,
        'fit_points': len(fit.points),
        'model': fit.model,
    }


def _run_walk(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    d, n = config.d, config.n
    ball = BallSpec(config.r, config.norm) if config.r is not None else None

    def job(gen: np.random.Generator, count: int) -> list[tuple]:
        rows = []
        step = batch_rows(n, d)
        for start in range(0, count, step):
            walks = simulate_walks(d, n, min(step, count - start), gen)
            silts, ranges = batch_silt_range(walks)
            exits = batch_exit_times(walks, ball) if ball is not None else np.full(len(walks), -1)
            rows.extend(zip(silts.tolist(), ranges.tolist(), exits.tolist()))
        return rows

    results = run_sampling(job, config.samples, config.rng(), config.chunk_size, config.workers)
    index = 0
    for chunk in results:
        for silt_value, range_value, exit_value in chunk:
            yield {
                'sample': index,
                'd': d,
                'n': n,
                'silt': silt_value,
                'range': range_value,
                'jensen_pass': silt_value * range_value >= (n + 1) ** 2,
                'exit_time': exit_value if ball is not None and exit_value >= 0 else None,
                'survived': None if ball is None else exit_value < 0,
            }
            index += 1


def _run_decompose(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    d, N, n = config.d, config.N, config.n
    grid = list(product(config.z, config.delta))
    check_memory_budget(8 * d * (N + 1) * (2 * n + 1) * 3, config.memory_mb, what=f"strand tree N={N}")
    edges = None
    if config.chi_low is not None:
        edges = band_edges(N, config.chi_low, config.band_alpha, config.top_exponent)
        logger.info(f"level bands for N={N}: {', '.join(f'{e:.4g}' for e in edges)}")

    def band_fields(traj: Trajectory) -> Record:
        field = local_times(traj)
        contributions = band_contributions(field, edges)
        return {'bands': len(contributions),
                **{f'band_silt_{i}': c for i, c in enumerate(contributions)},
                'band_audit_pass': band_pigeonhole_audit(field, edges, config.y)}

    def job(gen: np.random.Generator, count: int) -> list[list[Record]]:
        rows = []
        for _ in range(count):
            traj = simulate_walk(d, n, gen, memory_mb=config.memory_mb)
            tree = build_tree(traj)
            stats = tree_statistics(tree)
            root = stats.runs[0][0]
            silt_value, range_value = int((root ** 2).sum()), int((root > 0).sum())
            bands = band_fields(traj) if edges is not None else {}
            per_walk = []
            for threshold in config.thresholds:
                report = legall_decomposition(tree, threshold, grid, band_edges=edges, stats=stats)
                j_bands = {}
                if report.j_bands is not None:
                    j_bands = {f'band_j_{i}': int(v) for i, v in enumerate(report.j_bands.sum(axis=0))}
                per_walk.append({
                    'd': d,
                    'N': N,
                    'threshold': threshold,
                    'silt': silt_value,
                    'range': range_value,
                    'jensen_pass': silt_value * range_value >= (n + 1) ** 2,
                    'identity_residual': report.identity_residual,
                    'z0': report.z0,
                    'j_total': report.j_total,
                    'truncated_bound': report.truncated_bound,
                    'l0_silt': report.l0_silt,
                    'legall_pass': report.legall_pass,
                    'truncated_pass': report.truncated_pass,
                    'l0_pass': report.l0_pass,
                    'inclusion_pass': report.inclusion_pass,
                    'cset_pass': report.cset_pass,
                    'inclusion_violations': sum(c.violations for c in report.inclusion_checks),
                    **bands,
                    **j_bands,
                })
            rows.append(per_walk)
        return rows

    results = run_sampling(job, config.samples, config.rng(), config.chunk_size, config.workers)
    index = 0
    for chunk in results:
        for per_walk in chunk:
            for record in per_walk:
                yield {'sample': index, **record}
            index += 1


def _log_survival(d: int, n: int, radius: float, norm: str, memory_mb: int) -> float:
    return log_survival_prob(d, n, BallSpec(radius, norm), memory_mb=memory_mb)


def _run_oracle(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    d, n, quantity = config.d, config.n, config.quantity
    base = {'quantity': quantity, 'd': d, 'n': n}

    if quantity == 'moments':
        ball = BallSpec(config.r, config.norm) if config.r is not None else None
        report = moment_report(d, n, ball, with_comparison=config.comparison, memory_mb=config.memory_mb)
        yield {**base, **dataclasses.asdict(report), 'expected_range': float(expected_range(d, n))}

    elif quantity == 'survival':
        ball = config.ball()
        cached_log_survival = cache.cached(namespace='survival')(_log_survival)
        log_survival = cached_log_survival(d, n, ball.radius, ball.norm, config.memory_mb)
        yield {**base, 'radius': ball.radius, 'norm': ball.norm, 'ball_size': ball.cardinality(d),
               'log_survival': log_survival, 'survival': math.exp(log_survival)}

    elif quantity == 'eigen':
        ball = config.ball()
        pair = principal_eigen(d, ball)
        yield {**base, 'radius': ball.radius, 'norm': ball.norm, 'ball_size': len(pair.sites),
               'eigenvalue': pair.value, 'neg_log_eigenvalue': -math.log(pair.value),
               'residual': pair.residual, 'iterations': pair.iterations}

    elif quantity == 'enumerate':
        distribution = enumerate_paths(d, n)
        pmf = distribution.pmf()
        for (silt_value, range_value), count in distribution.counts.items():
            yield {**base, 'silt': silt_value, 'range': range_value, 'paths': count,
                   'probability': pmf[silt_value, range_value]}
        yield {'record_type': 'summary', **base, 'paths': distribution.total,
               'mean_silt': distribution.mean_silt(), 'expected_silt': float(expected_silt(d, n)),
               'mean_range': distribution.mean_range(), 'expected_range': float(expected_range(d, n))}

    elif quantity == 'comparison':
        value = gaussian_comparison_constant(d, n, config.norm, symmetric=config.symmetric,
                                             memory_mb=config.memory_mb)
        yield {**base, 'norm': config.norm, 'symmetric': config.symmetric, 'comparison_constant': value}

    elif quantity == 'table':
        if not config.full_table:
            table = transition_probs(d, n, config.memory_mb, keep_slices=False)
            yield {**base, 'table_file': None, 'slices': len(table.slices),
                   'mass_at_n': float(table.slices[-1].sum()), 'return_probability': table.prob(n, (0,) * d)}
            return
        cached_table = cache.cached(namespace='transition', coder=TransitionTableCoder)(transition_probs)
        table = cached_table(d, n, config.memory_mb)
        os.makedirs(config.output_dir, exist_ok=True)
        path = os.path.join(config.output_dir, f"{config.output_stem}.table.bin")
        export_table(table, path)
        yield {**base, 'table_file': os.path.basename(path), 'slices': table.horizon + 1,
               'mass_at_n': float(table.slices[-1].sum()), 'return_probability': table.prob(n, (0,) * d)}

    elif quantity == 'ld_bound':
        x_n = config.x_n
        if x_n is None:
            x_n = centered_sum_quantile(n, config.level, config.samples, config.rng(1))
        bound = ld_bound_rhs(n, config.gamma, config.EX2, config.C, x_n)
        estimate = mc_centered_sum_tail(n, x_n, config.samples, config.rng(), workers=config.workers)
        yield {**base, 'gamma': config.gamma, 'EX2': config.EX2, 'C': config.C, 'x_n': x_n,
               'bound': bound, **_estimate_fields(estimate), 'bound_pass': estimate.p_hat <= bound}


def _run_tail(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    d, n, y = config.d, config.n, config.y
    base = {'event': config.event, 'd': d, 'n': n, 'y': y, 'seed': config.seed}
    kwargs = dict(samples=config.samples, rng=config.rng(), chunk_size=config.chunk_size, workers=config.workers)

    if config.event == 'joint':
        summary = joint_silt_range(d, n, y, **kwargs)
        yield {**base, **dataclasses.asdict(summary), 'p_hat': summary.hits / summary.samples}
        return

    estimate = mc_tail_silt(d, n, y, **kwargs) if config.event == 'silt' else mc_tail_range(d, n, y, **kwargs)
    yield {**base, **_estimate_fields(estimate)}


def _run_confine(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    ball = config.ball()
    result = visited_fraction_experiment(config.n, ball, config.delta0, config.eps0, config.samples, config.rng(),
                                         d=config.d, chunk_size=config.chunk_size, workers=config.workers,
                                         memory_mb=config.memory_mb)
    yield {'d': config.d, 'n': config.n, 'radius': ball.radius, 'norm': ball.norm, 'ball_size': result.ball_size,
           'delta0': config.delta0, 'eps0': config.eps0, 'threshold': result.threshold,
           'log_survival': result.log_survival, 'seed': config.seed, **_estimate_fields(result.estimate)}


def _run_rwrs(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    params = SceneryParams(alpha=config.alpha, c=config.c)
    region = zeta_exponent(config.alpha, config.beta)
    base = {'d': config.d, 'n': config.n, 'alpha': config.alpha, 'beta': config.beta, 'c': config.c,
            'region': region.region.value, 'zeta': region.zeta, 'seed': config.seed}

    if config.probe:
        probe = region_iii_lower_bound_probe(config.n, config.beta, config.delta0, config.eps0, config.samples,
                                             config.rng(), params, chunk_size=config.chunk_size,
                                             workers=config.workers, memory_mb=config.memory_mb)
        yield {**base, 'u': probe.u, 'v': probe.v, 'radius': probe.ball.radius, 'ball_size': probe.ball_size,
               'log_confinement': probe.log_confinement, **_estimate_fields(probe.estimate),
               'scenery_terms': probe.scenery_terms, 'scenery_level': probe.scenery_level,
               'scenery_p_hat': probe.scenery_estimate.p_hat, 'scenery_stderr': probe.scenery_estimate.stderr,
               'log_gaussian_reference': probe.log_gaussian_reference}
        return

    if not config.beta > 0.5:
        raise DomainError(f"beta must be > 1/2, got {config.beta}")
    values, violations = mc_rwrs_samples(config.n, params, config.samples, config.rng(), d=config.d,
                                         chunk_size=config.chunk_size, workers=config.workers)
    level = config.y * float(config.n) ** config.beta
    for side, hits in (('upper', int((values > level).sum())), ('lower', int((values < -level).sum()))):
        estimate = TailEstimate.from_counts(hits, config.samples, f"X_n {side} tail at {config.y}n^{config.beta}",
                                            audit_violations=violations)
        yield {**base, 'y': config.y, 'side': side, 'level': level, **_estimate_fields(estimate)}


def _run_zeta(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    result = zeta_exponent(config.alpha, config.beta)
    record = {'alpha': config.alpha, 'beta': config.beta, 'region': result.region.value, 'zeta': result.zeta}
    if result.zeta is not None:
        split = level_split(config.alpha, config.beta)
        record.update({'b': split.b, 'alpha_star': split.alpha_star, 'cond_i': split.cond_i,
                       'cond_ii': split.cond_ii})
    yield record


def _run_report(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    results = read_results(config.output_dir, exclude=(config.output_stem,))
    summary = summarize_results(results)
    for row in summary.to_dict(orient='records'):
        yield {'record_type': 'summary', **row}


def _sweep_confinement(config: ExperimentConfig) -> Iterator[Record]:
    points, fit = range_lower_bound_sweep(config.d, config.n_values, config.ball_factor, config.norm,
                                          memory_mb=config.memory_mb)
    for p in points:
        yield {'d': config.d, 'n': p.n, 'radius': p.ball.radius, 'ball_size': p.ball_size,
               'neg_log_survival': p.neg_log_survival}
    yield {'d': config.d, **_fit_fields(fit)}


def _intersection_scale(d: int, n: int) -> float:
    if d == 4:
        return math.log(n)
    if d > 4:
        return 1.0
    return float(n) ** ((4 - d) / 2)


def _sweep_intersection(config: ExperimentConfig) -> Iterator[Record]:
    d = config.d
    ratios, points = [], []
    for n in config.n_values:
        value = float(expected_mutual_intersection(d, n))
        ratio = value / _intersection_scale(d, n)
        ratios.append(ratio)
        points.append((n, value))
        yield {'d': d, 'n': n, 'expected_In': value, 'scaled_In': ratio}
    yield {'d': d, **_fit_fields(fit_exponent(points)), 'ratio_spread': max(ratios) / min(ratios)}


def _sweep_synthetic(config: ExperimentConfig) -> Iterator[Record]:
    points = []
    for n in config.n_values:
        p = math.exp(-2 * float(n) ** (1 / 3))
        points.append((n, -math.log(p)))
        yield {'n': n, 'p': p, 'neg_log_p': -math.log(p)}
    yield _fit_fields(fit_exponent(points))


def _sweep_survival(config: ExperimentConfig) -> Iterator[Record]:
    ball = BallSpec(config.r if config.r is not None else 1.0, config.norm)
    costs = []
    for n in config.n_values:
        cost = -log_survival_prob(config.d, n, ball, memory_mb=config.memory_mb)
        costs.append(cost)
        yield {'d': config.d, 'n': n, 'radius': ball.radius, 'neg_log_survival': cost}
    slope, intercept, r_squared = fit_linear(config.n_values, costs)
    pair = principal_eigen(config.d, ball)
    yield {'record_type': 'fit', 'd': config.d, 'radius': ball.radius, 'rate': slope, 'intercept': intercept,
           'r_squared': r_squared, 'neg_log_eigenvalue': -math.log(pair.value), 'model': '-log P = a + rate*n'}


def _sweep_levels(config: ExperimentConfig) -> Iterator[Record]:
    kappas = []
    for i, n in enumerate(config.n_values):
        report = level_moment_mc(config.d, n, config.z, config.samples, config.rng(i),
                                 chunk_size=config.chunk_size, workers=config.workers)
        for z, size, size_err, tilde, tilde_sq in zip(report.z, report.mean_size, report.size_stderr,
                                                      report.mean_tilde, report.mean_tilde_sq):
            yield {'d': config.d, 'n': n, 'z': z, 'mean_size': size, 'size_stderr': size_err,
                   'mean_tilde': tilde, 'mean_tilde_sq': tilde_sq}
        yield {'record_type': 'level_fit', 'd': config.d, 'n': n, 'kappa': report.kappa,
               'r_squared': report.kappa_r_squared, 'levels_fitted': report.kappa_points}
        if report.kappa is not None:
            kappas.append(report.kappa)
    yield {'record_type': 'fit', 'd': config.d, 'fit_points': len(kappas),
           'kappa_spread': (max(kappas) - min(kappas)) / abs(np.mean(kappas)) if kappas else None}


def _sweep_tail(config: ExperimentConfig) -> Iterator[Record]:
    points = []
    for i, n in enumerate(config.n_values):
        kwargs = dict(samples=config.samples, rng=config.rng(i), chunk_size=config.chunk_size,
                      workers=config.workers)
        if config.event == 'range':
            estimate = mc_tail_range(config.d, n, config.y, **kwargs)
        else:
            estimate = mc_tail_silt(config.d, n, config.y, **kwargs)
        if 0 < estimate.p_hat < 1:
            points.append((n, -math.log(estimate.p_hat)))
        yield {'event': config.event, 'd': config.d, 'n': n, 'y': config.y, **_estimate_fields(estimate)}
    if len(points) < 3:
        logger.warning(f"only {len(points)} sweep points with 0 < p_hat < 1, no exponent fit")
        yield {'record_type': 'fit', 'event': config.event, 'fit_points': len(points), 'exponent': None}
        return
    yield {'event': config.event, **_fit_fields(fit_exponent(points))}


_SWEEPS: dict[str, Callable[[ExperimentConfig], Iterator[Record]]] = {
    'confinement': _sweep_confinement,
    'intersection': _sweep_intersection,
    'synthetic': _sweep_synthetic,
    'survival': _sweep_survival,
    'levels': _sweep_levels,
    'tail': _sweep_tail,
}


def _run_sweep(config: ExperimentConfig, cache: TableCache) -> Iterator[Record]:
    for record in _SWEEPS[config.target](config):
        yield {'target': config.target, **record}


_RUNNERS: dict[str, Callable[[ExperimentConfig, TableCache], Iterator[Record]]] = {
    'walk': _run_walk,
    'decompose': _run_decompose,
    'oracle': _run_oracle,
    'tail': _run_tail,
    'confine': _run_confine,
    'rwrs': _run_rwrs,
    'zeta': _run_zeta,
    'report': _run_report,
    'sweep': _run_sweep,
}


def run(config: ExperimentConfig, cache: TableCache | None = None) -> Iterator[Record]:
    """
    Execute the configured experiment and yield records.
    Every record starts with record_type, command and version, and ends with the config echo.
    """
    validate_dim(config.d)
    cache = cache if cache is not None else table_cache(config)
    echo = config.echo()
    for outputs in _RUNNERS[config.command](config, cache):
        outputs = dict(outputs)
        record_type = outputs.pop('record_type', 'result')
        yield {'record_type': record_type, 'command': config.command, 'version': __version__,
               **outputs, 'config': echo}
