"""
Monte Carlo tails of SILT and range, exact sampling of walks confined to a ball, and exponent fits.
All estimators draw sample j from the chunk stream j // chunk_size, so worker counts never change results.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import linregress

from silt_lab.exceptions import DomainError
from silt_lab.generic import Chunk, check_memory_budget, chunk_bounds, run_chunked
from silt_lab.oracle import KilledOperator, killed_operator, log_survival_prob
from silt_lab.silt import batch_local_times, local_times, site_keys, sorted_runs
from silt_lab.walk import BallSpec, Norm, RngStream, Trajectory, simulate_walks, validate_dim, validate_horizon

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_CHUNK = 1024
BATCH_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    stderr: float
    samples: int
    hits: int
    event_descriptor: str
    audit_violations: int = 0

    @classmethod
    def from_counts(cls, hits: int, samples: int, event_descriptor: str, audit_violations: int = 0) -> 'TailEstimate':
        if samples < 1:
            raise DomainError(f"samples must be >= 1, got {samples}")
        p_hat = hits / samples
        return cls(p_hat=p_hat, stderr=math.sqrt(p_hat * (1 - p_hat) / samples), samples=samples, hits=hits,
                   event_descriptor=event_descriptor, audit_violations=audit_violations)

    def merge(self, other: 'TailEstimate') -> 'TailEstimate':
        if other.event_descriptor != self.event_descriptor:
            raise DomainError("cannot merge estimates of different events")
        return TailEstimate.from_counts(self.hits + other.hits, self.samples + other.samples,
                                        self.event_descriptor, self.audit_violations + other.audit_violations)


def batch_rows(n: int, d: int) -> int:
    """Walks per vectorized batch so one batch of positions stays near BATCH_BYTES."""
    return max(1, BATCH_BYTES // (8 * (n + 1) * max(d, 2) * 4))


def run_sampling(job: Callable[[np.random.Generator, int], tuple], samples: int, rng: RngStream,
                 chunk_size: int = DEFAULT_CHUNK, workers: int = 1) -> list[tuple]:
    """
    Run `job(generator, count)` over chunked sample ranges, one RNG substream per chunk.
    Results come back ordered by chunk id.
    """
    if samples < 1:
        raise DomainError(f"samples must be >= 1, got {samples}")

    def run(chunk: Chunk):
        chunk_id, start, stop = chunk
        result = job(rng.substream(chunk_id).generator(), stop - start)
        logger.debug(f"chunk {chunk_id} done ({stop - start} samples)")
        return result

    return run_chunked(run, chunk_bounds(samples, chunk_size), workers=workers)


def _walk_batches(d: int, n: int, count: int, gen: np.random.Generator):
    rows = batch_rows(n, d)
    for start in range(0, count, rows):
        yield simulate_walks(d, n, min(rows, count - start), gen)


def _silt_range_counts(d: int, n: int, count: int, gen: np.random.Generator,
                       hit: Callable[[np.ndarray, np.ndarray], np.ndarray],
                       audit: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None) -> tuple[int, int]:
    hits, violations = 0, 0
    for walks in _walk_batches(d, n, count, gen):
        runs = batch_local_times(walks)
        silts, ranges = (runs ** 2).sum(axis=1), (runs > 0).sum(axis=1)
        event = hit(silts, ranges)
        hits += int(event.sum())
        if audit is not None:
            violations += int((event & ~audit(silts, ranges)).sum())
    return hits, violations


def mc_tail_silt(d: int, n: int, y: float, samples: int, rng: RngStream, chunk_size: int = DEFAULT_CHUNK,
                 workers: int = 1) -> TailEstimate:
    """Plain Monte Carlo estimate of P(SILT_n > y n)."""
    d = validate_dim(d)
    n = validate_horizon(n)
    if not y > 1:
        raise DomainError(f"y must be > 1, got {y}")
    results = run_sampling(
        lambda gen, count: _silt_range_counts(d, n, count, gen, hit=lambda s, r: s > y * n),
        samples, rng, chunk_size, workers)
    return TailEstimate.from_counts(sum(h for h, _ in results), samples, f"silt>{y}n d={d} n={n}")


def mc_tail_range(d: int, n: int, y: float, samples: int, rng: RngStream, chunk_size: int = DEFAULT_CHUNK,
                  workers: int = 1) -> TailEstimate:
    """
    Plain Monte Carlo estimate of P(|R_n| < n / y). Every hit is audited against SILT_n > y n,
    which Jensen's inequality forces.
    """
    d = validate_dim(d)
    n = validate_horizon(n)
    if not y > 1:
        raise DomainError(f"y must be > 1, got {y}")
    results = run_sampling(
        lambda gen, count: _silt_range_counts(d, n, count, gen,
                                              hit=lambda s, r: r * y < n,
                                              audit=lambda s, r: s > y * n),
        samples, rng, chunk_size, workers)
    return TailEstimate.from_counts(sum(h for h, _ in results), samples, f"range<n/{y} d={d} n={n}",
                                    audit_violations=sum(v for _, v in results))


@dataclass(frozen=True)
class ConfinedSampler:
    """
    Doob transform of the walk killed outside `ball`: h[k, x] = P_x(sigma > n - k) up to the factor
    exp(log_scale[k]); rows are normalized to max 1.
    """
    ball: BallSpec
    horizon: int
    operator: KilledOperator = field(repr=False)
    survival_table: np.ndarray = field(repr=False)  # (n + 1, |B|)
    log_scale: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def log_survival(self) -> float:
        """log h_0(0) = log P_0(sigma > n)."""
        return math.log(self.survival_table[0, self.operator.origin]) + float(self.log_scale[0])

    @property
    def survival(self) -> float:
        return math.exp(self.log_survival)

    def h(self, k: int) -> np.ndarray:
        return self.survival_table[k] * math.exp(self.log_scale[k])


def build_confined_sampler(d: int, n: int, ball: BallSpec, memory_mb: int | None = None) -> ConfinedSampler:
    n = validate_horizon(n)
    operator = killed_operator(d, ball)
    m = operator.size
    check_memory_budget(8 * m * (n + 2), memory_mb, what=f"confined sampler n={n} |B|={m}")

    table = np.empty((n + 1, m))
    log_scale = np.zeros(n + 1)
    table[n] = 1.0
    for k in range(n - 1, -1, -1):
        h = operator.matrix @ table[k + 1]
        top = h.max()
        if top <= 0:
            raise DomainError(f"no path of {n} steps stays in {ball}")
        table[k] = h / top
        log_scale[k] = log_scale[k + 1] + math.log(top)
    table.setflags(write=False)
    return ConfinedSampler(ball=ball, horizon=n, operator=operator, survival_table=table, log_scale=log_scale)


def sample_confined_batch(sampler: ConfinedSampler, gen: np.random.Generator, count: int) -> np.ndarray:
    """(count, n + 1, d) walks with the law of the free walk given sigma > n."""
    neighbors = sampler.operator.neighbors
    position = np.full(count, sampler.operator.origin, dtype=np.int64)
    path = np.empty((count, sampler.horizon + 1), dtype=np.int64)
    path[:, 0] = position
    rows = np.arange(count)
    for k in range(sampler.horizon):
        targets = neighbors[position]
        weights = np.where(targets >= 0, sampler.survival_table[k + 1][targets], 0.0)
        cumulative = np.cumsum(weights, axis=1)
        u = gen.random(count) * cumulative[:, -1]
        choice = np.minimum((cumulative <= u[:, None]).sum(axis=1), neighbors.shape[1] - 1)
        position = targets[rows, choice]
        path[:, k + 1] = position
    return sampler.operator.sites[path]


def sample_confined(sampler: ConfinedSampler, rng: RngStream | np.random.Generator) -> Trajectory:
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return Trajectory(sample_confined_batch(sampler, gen, 1)[0])


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    prefactor: float
    r_squared: float
    points: tuple[tuple[float, float], ...]
    model: str = 'a*n^rho'


def fit_linear(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares slope, intercept and r^2."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 3:
        raise DomainError(f"a fit needs at least 3 points, got {len(x)}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DomainError("a fit needs non-constant inputs")
    result = linregress(x, y)
    return float(result.slope), float(result.intercept), float(result.rvalue ** 2)


def fit_exponent(points: Sequence[tuple[float, float]]) -> ExponentFit:
    """
    Fit -log p = a n^rho by regressing log(-log p) on log n.
    :param points: (n, -log p) pairs with p in (0, 1), i.e. positive second entries.
    """
    points = tuple((float(n), float(v)) for n, v in points)
    if any(n <= 0 or not v > 0 or math.isinf(v) for n, v in points):
        raise DomainError("points need n > 0 and -log p in (0, inf)")
    slope, intercept, r_squared = fit_linear([math.log(n) for n, _ in points], [math.log(v) for _, v in points])
    return ExponentFit(exponent=slope, prefactor=math.exp(intercept), r_squared=r_squared, points=points)


def lattice_ball_radius(d: int, target: float, norm: Norm = 'euclidean') -> BallSpec:
    """Smallest ball whose lattice cardinality is at least `target`."""
    d = validate_dim(d)
    if target <= 1:
        return BallSpec(0.0, norm)
    if norm == 'sup':
        r = max(0, int(math.ceil((target ** (1 / d) - 1) / 2)))
        while r > 0 and (2 * r - 1) ** d >= target:
            r -= 1
        while (2 * r + 1) ** d < target:
            r += 1
        return BallSpec(float(r), norm)

    r = max(1, int(math.ceil(target ** (1 / d))))
    while True:
        axis = np.arange(-r, r + 1, dtype=np.int64)
        grid = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        squared = np.sort((grid ** 2).sum(axis=1))
        squared = squared[squared <= r * r]
        if len(squared) >= target:
            break
        r *= 2
    radius_sq = int(squared[int(math.ceil(target)) - 1])
    return BallSpec(math.sqrt(radius_sq), norm)


@dataclass(frozen=True)
class PeriodAudit:
    periods: int  # k_n
    good_periods: int
    heavy_sites: int  # |{x : l_n(x) >= delta0 k_n}|
    premise: bool
    holds: bool


def period_audit(traj: Trajectory, period: int, delta0: float, eps0: float, ball_size: int) -> PeriodAudit:
    """
    Cut times into k_n = n // period disjoint blocks; a block is good when it visits at least 2 eps0 |B|
    distinct sites. For a path confined to a ball of |B| sites,
    #good > (delta0 / eps0) k_n forces |{x : l_n(x) >= delta0 k_n}| >= eps0 |B|.
    """
    if period < 1:
        raise DomainError(f"period must be >= 1, got {period}")
    k_n = traj.steps // period
    if k_n:
        blocks = traj.sites[:k_n * period].reshape(k_n, period, traj.dim)
        distinct = (sorted_runs(site_keys(blocks)[0]) > 0).sum(axis=1)
        good = int((distinct >= 2 * eps0 * ball_size).sum())
    else:
        good = 0
    counts = local_times(traj).counts
    heavy = int((counts >= delta0 * k_n).sum())
    premise = good > delta0 / eps0 * k_n
    return PeriodAudit(periods=k_n, good_periods=good, heavy_sites=heavy, premise=premise,
                       holds=(not premise) or heavy >= eps0 * ball_size)


@dataclass(frozen=True)
class VisitedFractionResult:
    estimate: TailEstimate
    ball: BallSpec
    ball_size: int
    log_survival: float
    threshold: float


def visited_fraction_experiment(n: int, ball: BallSpec, delta0: float, eps0: float, samples: int, rng: RngStream,
                                d: int = 3, chunk_size: int = 256, workers: int = 1,
                                memory_mb: int | None = None) -> VisitedFractionResult:
    """
    Among walks conditioned on sigma > n, frequency of |{x : l_n(x) > delta0 n / |B|}| >= eps0 |B|.
    Each sample is audited: SILT_n > n^2 / |B| and the period inclusion with blocks of |B| steps.
    """
    sampler = build_confined_sampler(d, n, ball, memory_mb=memory_mb)
    ball_size = sampler.operator.size
    if n < ball_size:
        raise DomainError(f"need n >= |B| ({n} < {ball_size})")
    if not 0 < delta0 < 1 or not 0 < eps0 < 1:
        raise DomainError("delta0 and eps0 must lie in (0, 1)")
    threshold = delta0 * n / ball_size

    def job(gen: np.random.Generator, count: int) -> tuple[int, int]:
        hits, violations = 0, 0
        rows = batch_rows(n, d)
        for start in range(0, count, rows):
            walks = sample_confined_batch(sampler, gen, min(rows, count - start))
            runs = batch_local_times(walks)
            hits += int(((runs > threshold).sum(axis=1) >= eps0 * ball_size).sum())
            violations += int(((runs > 0).sum(axis=1) > ball_size).sum())
            violations += int(((runs ** 2).sum(axis=1) * ball_size <= n * n).sum())
            for walk in walks:
                if not period_audit(Trajectory(walk), ball_size, delta0, eps0, ball_size).holds:
                    violations += 1
        return hits, violations

    results = run_sampling(job, samples, rng, chunk_size, workers)
    estimate = TailEstimate.from_counts(sum(h for h, _ in results), samples,
                                        f"visited>{delta0}n/|B| on >={eps0}|B| d={d} n={n}",
                                        audit_violations=sum(v for _, v in results))
    return VisitedFractionResult(estimate=estimate, ball=ball, ball_size=ball_size,
                                 log_survival=sampler.log_survival, threshold=threshold)


@dataclass(frozen=True)
class LevelMomentReport:
    z: tuple[float, ...]
    samples: int
    mean_size: np.ndarray = field(repr=False)  # E|D_n(z)|
    size_stderr: np.ndarray = field(repr=False)
    mean_tilde: np.ndarray = field(repr=False)  # E[l~_n(D_n(z))]
    tilde_stderr: np.ndarray = field(repr=False)
    mean_tilde_sq: np.ndarray = field(repr=False)  # E[l~_n(D_n(z))^2]
    tilde_sq_stderr: np.ndarray = field(repr=False)
    kappa: float | None = None  # minus the slope of log E|D_n(z)| in z
    kappa_r_squared: float | None = None
    kappa_points: int = 0  # levels entering the fit


def level_moment_mc(d: int, n: int, z: float | Sequence[float], samples: int, rng: RngStream,
                    chunk_size: int = DEFAULT_CHUNK, workers: int = 1, min_count: int = 20) -> LevelMomentReport:
    """
    Level-set moments of one walk against an independent copy: |D_n(z)| = |{x : l_n(x) > z}| and
    l~_n(D_n(z)) = sum over D_n(z) of the second walk's local time.
    :param min_count: levels with fewer sites than this, summed over all samples, stay out of the kappa fit.
    """
    d = validate_dim(d)
    n = validate_horizon(n)
    levels = np.atleast_1d(np.asarray(z, dtype=float))
    if (levels < 0).any():
        raise DomainError("levels must be >= 0")

    def job(gen: np.random.Generator, count: int) -> np.ndarray:
        sums = np.zeros((6, len(levels)))
        for _ in range(count):
            first, second = simulate_walks(d, n, 2, gen)
            field_a = local_times(Trajectory(first))
            field_b = local_times(Trajectory(second))
            tilde_at_a = field_b.count_at(field_a.sites)
            above = field_a.counts[None, :] > levels[:, None]
            size = above.sum(axis=1).astype(float)
            tilde = np.where(above, tilde_at_a[None, :], 0).sum(axis=1).astype(float)
            sums += np.stack([size, size ** 2, tilde, tilde ** 2, tilde ** 2, tilde ** 4])
        return sums

    totals = sum(run_sampling(job, samples, rng, chunk_size, workers))
    means = totals / samples

    def stderr(mean, mean_sq):
        return np.sqrt(np.maximum(mean_sq - mean ** 2, 0) / samples)

    kappa, r_squared = None, None
    fitted = totals[0] >= max(min_count, 1)
    if fitted.sum() < len(levels):
        logger.warning(f"level fit d={d} n={n}: {len(levels) - int(fitted.sum())} of {len(levels)} levels have "
                       f"fewer than {min_count} sites over {samples} samples and are left out")
    if fitted.sum() >= 3 and np.ptp(levels[fitted]) > 0 and np.ptp(np.log(means[0][fitted])) > 0:
        slope, _, r_squared = fit_linear(levels[fitted], np.log(means[0][fitted]))
        kappa = -slope

    return LevelMomentReport(z=tuple(float(v) for v in levels), samples=samples,
                             mean_size=means[0], size_stderr=stderr(means[0], means[1]),
                             mean_tilde=means[2], tilde_stderr=stderr(means[2], means[3]),
                             mean_tilde_sq=means[4], tilde_sq_stderr=stderr(means[4], means[5]),
                             kappa=kappa, kappa_r_squared=r_squared, kappa_points=int(fitted.sum()))


@dataclass(frozen=True)
class JointSummary:
    samples: int
    hits: int
    mean_silt: float
    mean_range: float
    mean_range_given_hit: float | None
    mean_silt_given_hit: float | None


def joint_silt_range(d: int, n: int, y: float, samples: int, rng: RngStream, chunk_size: int = DEFAULT_CHUNK,
                     workers: int = 1) -> JointSummary:
    """Mean range overall and on {SILT_n > y n}."""
    d = validate_dim(d)
    n = validate_horizon(n)

    def job(gen: np.random.Generator, count: int) -> np.ndarray:
        sums = np.zeros(5)
        for walks in _walk_batches(d, n, count, gen):
            runs = batch_local_times(walks)
            silts, ranges = (runs ** 2).sum(axis=1), (runs > 0).sum(axis=1)
            hit = silts > y * n
            sums += [silts.sum(), ranges.sum(), hit.sum(), ranges[hit].sum(), silts[hit].sum()]
        return sums

    silt_sum, range_sum, hits, hit_range, hit_silt = sum(run_sampling(job, samples, rng, chunk_size, workers))
    hits = int(hits)
    return JointSummary(samples=samples, hits=hits, mean_silt=silt_sum / samples, mean_range=range_sum / samples,
                        mean_range_given_hit=hit_range / hits if hits else None,
                        mean_silt_given_hit=hit_silt / hits if hits else None)


@dataclass(frozen=True)
class ConfinementPoint:
    n: int
    ball: BallSpec
    ball_size: int
    neg_log_survival: float


def range_lower_bound_sweep(d: int, n_values: Sequence[int], y: float, norm: Norm = 'euclidean',
                            memory_mb: int | None = None) -> tuple[list[ConfinementPoint], ExponentFit]:
    """Exact -log P(sigma(r_n) > n) with |B(r_n)| the first lattice count >= n / y, and its fit in n."""
    points = []
    for n in n_values:
        ball = lattice_ball_radius(d, n / y, norm)
        cost = -log_survival_prob(d, n, ball, memory_mb=memory_mb)
        points.append(ConfinementPoint(n=n, ball=ball, ball_size=ball.cardinality(d), neg_log_survival=cost))
        logger.info(f"confinement n={n} r={ball.radius:.3f} |B|={points[-1].ball_size} -log P={cost:.4f}")
    return points, fit_exponent([(p.n, p.neg_log_survival) for p in points])


def _centered_gamma_sums(n: int, count: int, gen: np.random.Generator) -> np.ndarray:
    # sum of n Exponential(1) variables is Gamma(n, 1)
    return gen.gamma(float(n), 1.0, size=count) - n


def centered_sum_quantile(n: int, level: float, samples: int, rng: RngStream,
                          chunk_size: int = 100_000, workers: int = 1) -> float:
    """Empirical (1 - level)-quantile of X_1 + ... + X_n - n with X_i ~ Exponential(1)."""
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    sums = np.concatenate(run_sampling(lambda gen, count: _centered_gamma_sums(n, count, gen),
                                       samples, rng, chunk_size, workers))
    return float(np.quantile(sums, 1 - level))


def mc_centered_sum_tail(n: int, x_n: float, samples: int, rng: RngStream,
                         chunk_size: int = 100_000, workers: int = 1) -> TailEstimate:
    """P(X_1 + ... + X_n - n > x_n) for i.i.d. Exponential(1) variables."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    hits = sum(run_sampling(lambda gen, count: int((_centered_gamma_sums(n, count, gen) > x_n).sum()),
                            samples, rng, chunk_size, workers))
    return TailEstimate.from_counts(hits, samples, f"centered exp sum>{x_n:.6g} n={n}")
