"""
Random walk in random scenery: X_n = eta(S_0) + ... + eta(S_n) with a lazily hashed heavy-tailed scenery,
the moderate-deviation exponent map zeta(alpha, beta) and its Monte Carlo probes.
"""
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.special import gamma as gamma_function

from silt_lab.exceptions import DomainError
from silt_lab.rare_event import (DEFAULT_CHUNK, TailEstimate, batch_rows, build_confined_sampler, lattice_ball_radius,
                                 run_sampling, sample_confined_batch)
from silt_lab.silt import LocalTimeField, batch_local_times
from silt_lab.walk import BallSpec, RngStream, Trajectory, simulate_walks, validate_horizon

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SIGN_SALT = np.uint64(0x5349474E)
_MAGNITUDE_SALT = np.uint64(0x4D41474E)


class SceneryParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = 1.0
    c: float = 1.0

    @field_validator('alpha')
    def validate_alpha(cls, value):
        if not value >= 1:
            raise ValueError('alpha must be >= 1')
        return value

    @field_validator('c')
    def validate_c(cls, value):
        if not value > 0:
            raise ValueError('c must be > 0')
        return value

    @property
    def variance(self) -> float:
        """E[eta^2] = Gamma(1 + 2/alpha) c^(-2/alpha)."""
        return float(gamma_function(1 + 2 / self.alpha)) * self.c ** (-2 / self.alpha)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over='ignore'):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _site_hash(seeds: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """Keyed hash of (seed, site) for (..., d) sites, seeds broadcast against the leading axes."""
    h = _splitmix64(np.asarray(seeds, dtype=np.uint64))
    h = np.broadcast_to(h, sites.shape[:-1])
    for axis in range(sites.shape[-1]):
        h = _splitmix64(h ^ sites[..., axis].astype(np.int64).astype(np.uint64))
    return h


def _variates(h: np.ndarray, params: SceneryParams) -> np.ndarray:
    """sign x (E / c)^(1/alpha) with the sign and E = -log U driven by two salted rehashes of h."""
    sign = np.where(_splitmix64(h ^ _SIGN_SALT) >> np.uint64(63), -1.0, 1.0)
    u = ((_splitmix64(h ^ _MAGNITUDE_SALT) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return sign * (-np.log(u) / params.c) ** (1 / params.alpha)


@dataclass(frozen=True)
class Scenery:
    seed: int
    params: SceneryParams

    def values(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        return _variates(_site_hash(np.uint64(self.seed % 2 ** 64), sites), self.params)


def scenery_value(scenery: Scenery, site) -> float:
    return float(scenery.values(np.asarray(site, dtype=np.int64)[None, :])[0])


def sample_scenery_variates(params: SceneryParams, gen: np.random.Generator, size) -> np.ndarray:
    """I.i.d. draws with the scenery's law, for sums that need no site structure."""
    sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
    return sign * (gen.standard_exponential(size) / params.c) ** (1 / params.alpha)


def rwrs_sum(traj: Trajectory, scenery: Scenery) -> float:
    """Time sum X_n = sum_k eta(S_k)."""
    return float(scenery.values(traj.sites).sum())


def rwrs_space_sum(field: LocalTimeField, scenery: Scenery) -> float:
    """Space sum sum_x eta(x) l_n(x), equal to the time sum up to rounding."""
    return float((scenery.values(field.sites) * field.counts).sum())


class Region(str, enum.Enum):
    I = 'I'
    II = 'II'
    III = 'III'
    IV_OUT_OF_SCOPE = 'IV_out_of_scope'
    BOUNDARY = 'Boundary'
    INVALID = 'Invalid'


@dataclass(frozen=True)
class RegionResult:
    region: Region
    zeta: float | None


def _region_ii_frontier(alpha: float) -> float:
    """(1 + alpha) / (4 - alpha)^+, infinite from alpha = 4 on."""
    return math.inf if alpha >= 4 else (1 + alpha) / (4 - alpha)


def zeta_exponent(alpha: float, beta: float) -> RegionResult:
    if math.isnan(alpha) or math.isnan(beta) or alpha < 1 or beta <= 0.5:
        return RegionResult(Region.INVALID, None)
    if beta >= 1:
        return RegionResult(Region.IV_OUT_OF_SCOPE, None)
    if beta <= 2 / 3:
        return RegionResult(Region.I, 2 * beta - 1)
    frontier = _region_ii_frontier(alpha)
    if alpha < 1.5 and beta > frontier:
        return RegionResult(Region.II, beta * alpha / (1 + alpha))
    if beta < min(1.0, frontier):
        return RegionResult(Region.III, 0.8 * beta - 0.2)
    return RegionResult(Region.BOUNDARY, None)


@dataclass(frozen=True)
class LevelSplit:
    region: Region
    zeta: float
    b: float  # beta - zeta, the level separating low and high local times (n^b)
    alpha_star: float  # alpha / (alpha - 1), inf at alpha = 1
    cond_i: bool  # beta < 5b/2
    cond_ii: bool  # alpha > (4 beta - 1) / (beta + 1)


def level_split(alpha: float, beta: float) -> LevelSplit:
    result = zeta_exponent(alpha, beta)
    if result.zeta is None:
        raise DomainError(f"(alpha, beta) = ({alpha}, {beta}) lies in no region with a known exponent")
    b = beta - result.zeta
    return LevelSplit(region=result.region, zeta=result.zeta, b=b,
                      alpha_star=math.inf if alpha == 1 else alpha / (alpha - 1),
                      cond_i=beta < 2.5 * b, cond_ii=alpha > (4 * beta - 1) / (beta + 1))


def split_sums(field: LocalTimeField, n: int, b: float, alpha: float) -> tuple[float, float]:
    """(sum over 0 < l <= n^b of l^2, sum over l >= n^b of l^alpha*); the second is inf at alpha = 1 if nonempty."""
    level = float(n) ** b
    counts = field.counts.astype(np.float64)
    low = float((counts[counts <= level] ** 2).sum())
    high_counts = counts[counts >= level]
    if alpha == 1:
        return low, math.inf if len(high_counts) else 0.0
    return low, float((high_counts ** (alpha / (alpha - 1))).sum())


def _rwrs_batch(walks: np.ndarray, seeds: np.ndarray, params: SceneryParams) -> tuple[np.ndarray, int]:
    """Time sums of a batch with one scenery per walk, and the count of time/space identity failures."""
    values = _variates(_site_hash(seeds[:, None], walks), params)
    time_sums = values.sum(axis=1)
    violations = 0
    for walk, walk_values, total in zip(walks, values, time_sums):
        sites, first, counts = np.unique(walk, axis=0, return_index=True, return_counts=True)
        space = (walk_values[first] * counts).sum()
        if abs(space - total) > 1e-9 * max(1.0, np.abs(walk_values).sum()):
            violations += 1
    return time_sums, violations


def mc_rwrs_samples(n: int, params: SceneryParams, samples: int, rng: RngStream, d: int = 3,
                    chunk_size: int = DEFAULT_CHUNK, workers: int = 1) -> tuple[np.ndarray, int]:
    """X_n over joint walk/scenery randomness, a fresh scenery seed per sample; also the audit failures."""
    n = validate_horizon(n)

    def job(gen: np.random.Generator, count: int):
        sums, violations = [], 0
        rows = batch_rows(n, d)
        for start in range(0, count, rows):
            size = min(rows, count - start)
            walks = simulate_walks(d, n, size, gen)
            seeds = gen.integers(0, 2 ** 63, size=size, dtype=np.int64).astype(np.uint64)
            batch, bad = _rwrs_batch(walks, seeds, params)
            sums.append(batch)
            violations += bad
        return np.concatenate(sums), violations

    results = run_sampling(job, samples, rng, chunk_size, workers)
    return np.concatenate([r for r, _ in results]), sum(v for _, v in results)


def mc_tail_rwrs(n: int, beta: float, y: float, scenery_params: SceneryParams, samples: int, rng: RngStream,
                 d: int = 3, lower: bool = False, chunk_size: int = DEFAULT_CHUNK, workers: int = 1) -> TailEstimate:
    """
    Annealed estimate of P(X_n > y n^beta).
    :param lower: estimate P(X_n < -y n^beta) instead, the mirror event.
    """
    if not beta > 0.5:
        raise DomainError(f"beta must be > 1/2, got {beta}")
    values, violations = mc_rwrs_samples(n, scenery_params, samples, rng, d=d, chunk_size=chunk_size, workers=workers)
    level = y * float(n) ** beta
    hits = int((values < -level).sum() if lower else (values > level).sum())
    side = '<-' if lower else '>'
    return TailEstimate.from_counts(hits, samples, f"X_n{side}{y}n^{beta} alpha={scenery_params.alpha} n={n}",
                                    audit_violations=violations)


@dataclass(frozen=True)
class RegionIIIProbe:
    estimate: TailEstimate  # frequency of |G| > eps0 n^u under confinement
    u: float
    v: float
    zeta: float
    ball: BallSpec
    ball_size: int
    log_confinement: float  # log P(sigma(r_n) > n)
    scenery_terms: int  # m = ceil(eps0 n^u)
    scenery_level: float  # t = n^(beta - v) / delta0
    scenery_estimate: TailEstimate  # P(eta_1 + ... + eta_m > t)
    log_gaussian_reference: float  # -t^2 / (2 m Var eta)


def region_iii_exponents(beta: float) -> tuple[float, float]:
    """u = 9/5 - (6/5) beta and v = 1 - u."""
    u = 9 / 5 - 6 / 5 * beta
    return u, 1 - u


def region_iii_lower_bound_probe(n: int, beta: float, delta0: float, eps0: float, samples: int, rng: RngStream,
                                 scenery_params: SceneryParams, scenery_samples: int = 100_000,
                                 chunk_size: int = 256, workers: int = 1,
                                 memory_mb: int | None = None) -> RegionIIIProbe:
    """
    Lower-bound scenario for region III: confine the walk to a ball with |B| >= n^u, count
    G = {x : l_n(x) > delta0 n^v} and report how often |G| > eps0 n^u; the two remaining cost factors
    (confinement and the scenery sum over G) are reported separately.
    """
    region = zeta_exponent(scenery_params.alpha, beta)
    if region.region is not Region.III:
        raise DomainError(f"(alpha, beta) = ({scenery_params.alpha}, {beta}) is not in region III")
    if not 0 < delta0 < 1 or not 0 < eps0 < 1:
        raise DomainError("delta0 and eps0 must lie in (0, 1)")

    u, v = region_iii_exponents(beta)
    ball = lattice_ball_radius(3, float(n) ** u)
    sampler = build_confined_sampler(3, n, ball, memory_mb=memory_mb)
    threshold = delta0 * float(n) ** v
    needed = eps0 * float(n) ** u

    def job(gen: np.random.Generator, count: int) -> int:
        hits = 0
        rows = batch_rows(n, 3)
        for start in range(0, count, rows):
            runs = batch_local_times(sample_confined_batch(sampler, gen, min(rows, count - start)))
            hits += int(((runs > threshold).sum(axis=1) > needed).sum())
        return hits

    hits = sum(run_sampling(job, samples, rng, chunk_size, workers))
    estimate = TailEstimate.from_counts(hits, samples, f"|G|>{eps0}n^{u:.3f} n={n} beta={beta}")

    m = int(math.ceil(needed))
    t = float(n) ** (beta - v) / delta0
    scenery_gen = rng.substream(2 ** 32).generator()
    scenery_hits = 0
    for start in range(0, scenery_samples, 10_000):
        size = min(10_000, scenery_samples - start)
        sums = sample_scenery_variates(scenery_params, scenery_gen, (size, m)).sum(axis=1)
        scenery_hits += int((sums > t).sum())
    scenery_estimate = TailEstimate.from_counts(scenery_hits, scenery_samples, f"sum of {m} eta > {t:.3f}")

    return RegionIIIProbe(estimate=estimate, u=u, v=v, zeta=region.zeta, ball=ball, ball_size=sampler.operator.size,
                          log_confinement=sampler.log_survival, scenery_terms=m, scenery_level=t,
                          scenery_estimate=scenery_estimate,
                          log_gaussian_reference=-t ** 2 / (2 * m * scenery_params.variance))
