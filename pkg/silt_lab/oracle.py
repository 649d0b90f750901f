"""
Exact oracles: transition tables, return probabilities, expected SILT / intersections / range,
killed (ball-exit) tables and eigenpairs, brute-force path enumeration and the tail-bound evaluators.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.stats import binom

from silt_lab.caching.coder import Coder, TableBlob, TableCoder
from silt_lab.exceptions import ConvergenceError, DomainError
from silt_lab.generic import check_memory_budget
from silt_lab.silt import batch_silt_range, site_keys
from silt_lab.walk import BallSpec, Norm, Site, steps_to_sites, unit_moves, validate_dim, validate_horizon

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MAX_ENUMERATED_PATHS = 10 ** 8
EXACT_RETURN_LIMIT = 4096


@lru_cache(maxsize=32)
def closed_walk_counts(d: int, j_max: int) -> tuple[int, ...]:
    """
    W_j = number of j-step nearest-neighbour paths in Z^d returning to the origin, j = 0..j_max.
    Paths interleave a one-dimensional closed path (i steps) with a (d-1)-dimensional one.
    """
    d = validate_dim(d)
    line = [math.comb(j, j // 2) if j % 2 == 0 else 0 for j in range(j_max + 1)]
    counts = line
    for _ in range(d - 1):
        counts = [sum(math.comb(j, i) * line[i] * counts[j - i] for i in range(0, j + 1, 2))
                  for j in range(j_max + 1)]
    return tuple(counts)


def return_probabilities(d: int, j_max: int, exact: bool = False) -> np.ndarray | list[Fraction]:
    """
    P_0(S_j = 0) for j = 0..j_max.
    :param exact: return Fractions built from integer closed-walk counts (j_max <= 4096).
    """
    d = validate_dim(d)
    j_max = validate_horizon(j_max)
    if exact:
        if j_max > EXACT_RETURN_LIMIT:
            raise DomainError(f"exact return probabilities are limited to j <= {EXACT_RETURN_LIMIT}")
        return [Fraction(w, (2 * d) ** j) for j, w in enumerate(closed_walk_counts(d, j_max))]

    line = np.zeros(j_max + 1)
    line[0] = 1.0
    for j in range(2, j_max + 1, 2):
        line[j] = line[j - 2] * (j - 1) / j
    probs = line
    for dim in range(2, d + 1):
        mixed = np.zeros(j_max + 1)
        for j in range(j_max + 1):
            i = np.arange(0, j + 1, 2)
            mixed[j] = np.dot(binom.pmf(i, j, 1 / dim) * line[i], probs[j - i])
        probs = mixed
    return probs


def return_probability(d: int, j: int, exact: bool = False) -> float | Fraction:
    return return_probabilities(d, j, exact=exact)[j]


def expected_silt(d: int, n: int, exact: bool = False) -> float | Fraction:
    """E[sum_x l_n(x)^2] = (n + 1) + 2 sum_(j=1..n) (n + 1 - j) p_j(0)."""
    n = validate_horizon(n)
    p = return_probabilities(d, n, exact=exact)
    if exact:
        return (n + 1) + 2 * sum((n + 1 - j) * p[j] for j in range(1, n + 1))
    j = np.arange(1, n + 1)
    return float((n + 1) + 2 * np.dot(n + 1 - j, p[1:]))


def expected_mutual_intersection(d: int, n: int, method: str = 'returns', exact: bool = False,
                                 memory_mb: int | None = None) -> float | Fraction:
    """
    E[I_n] for two independent walks from the origin.
    'returns' sums p_(k+k')(0) over k, k' <= n; 'occupation' sums (sum_k p_k(x))^2 over a dense box.
    """
    n = validate_horizon(n)
    if method == 'occupation':
        if exact:
            raise DomainError("the occupation method works in double precision only")
        occupation = occupation_measure(d, n, memory_mb=memory_mb)
        return float((occupation ** 2).sum())
    if method != 'returns':
        raise DomainError(f"unknown method {method!r}")

    p = return_probabilities(d, 2 * n, exact=exact)
    multiplicity = [min(j, 2 * n - j) + 1 for j in range(2 * n + 1)]
    if exact:
        return sum(m * pj for m, pj in zip(multiplicity, p))
    return float(np.dot(multiplicity, p))


def first_return_probabilities(d: int, n: int, exact: bool = False) -> np.ndarray | list[Fraction]:
    """f_j = P_0(first return to 0 at time j), j = 0..n, from the renewal equation u = delta + f * u."""
    u = return_probabilities(d, n, exact=exact)
    if exact:
        f = [Fraction(0)] * (n + 1)
        for j in range(1, n + 1):
            f[j] = u[j] - sum(f[i] * u[j - i] for i in range(1, j))
        return f
    f = np.zeros(n + 1)
    for j in range(1, n + 1):
        f[j] = u[j] - np.dot(f[1:j], u[j - 1:0:-1])
    return f


def expected_range(d: int, n: int, exact: bool = False) -> float | Fraction:
    """E|R_n| = sum_(k=0..n) P_0(no return to 0 within k steps)."""
    n = validate_horizon(n)
    f = first_return_probabilities(d, n, exact=exact)
    if exact:
        total, returned = Fraction(0), Fraction(0)
        for k in range(n + 1):
            returned += f[k]
            total += 1 - returned
        return total
    return float((1 - np.cumsum(f)).sum())


def expected_strand_intersections(d: int, N: int) -> tuple[float, float]:
    """sum_(l=1..N-1) 2^(l-1) E[I_(2^(N-l))] and its ratio to 2^N."""
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    total = sum(2 ** (l - 1) * expected_mutual_intersection(d, 2 ** (N - l)) for l in range(1, N))
    return float(total), float(total) / 2 ** N


def _advance(p: np.ndarray) -> np.ndarray:
    """One step of p_(k+1)(x) = (1/2d) sum_e p_k(x - e); the box grows by one in every direction."""
    d = p.ndim
    size = p.shape[0]
    new = np.zeros((size + 2,) * d)
    inner = slice(1, size + 1)
    for axis in range(d):
        for shifted in (slice(2, size + 2), slice(0, size)):
            index = [inner] * d
            index[axis] = shifted
            new[tuple(index)] += p
    new /= 2 * d
    return new


def _centered(p: np.ndarray, radius: int) -> np.ndarray:
    """Crop or zero-pad a centred cube array to the box [-radius, radius]^d."""
    own = (p.shape[0] - 1) // 2
    if radius <= own:
        cut = slice(own - radius, own + radius + 1)
        return p[(cut,) * p.ndim]
    out = np.zeros((2 * radius + 1,) * p.ndim)
    pad = slice(radius - own, radius + own + 1)
    out[(pad,) * p.ndim] = p
    return out


def _slice_bytes(d: int, radius: int) -> int:
    return 8 * (2 * radius + 1) ** d


@dataclass(frozen=True)
class TransitionTable:
    """
    P_0(S_k = x) for k = first..n; slices[k - first] covers the box [-k, k]^d (zero outside).
    A full table has first = 0.
    """
    dim: int
    horizon: int
    slices: tuple[np.ndarray, ...] = field(repr=False)
    first: int = 0

    @property
    def is_full(self) -> bool:
        return self.first == 0

    def _slice(self, k: int) -> np.ndarray:
        if not self.first <= k <= self.horizon:
            raise DomainError(f"time {k} is outside the stored slices {self.first}..{self.horizon}")
        return self.slices[k - self.first]

    def prob(self, k: int, site: Site) -> float:
        if len(site) != self.dim:
            raise DomainError(f"site {site} does not have dimension {self.dim}")
        p = self._slice(k)
        if any(abs(c) > k for c in site):
            return 0.0
        return float(p[tuple(c + k for c in site)])

    def slice_on_box(self, k: int, radius: int | None = None) -> np.ndarray:
        return _centered(self._slice(k), self.horizon if radius is None else radius)

    def occupation(self) -> np.ndarray:
        """sum_k p_k(x) over the box [-n, n]^d."""
        if not self.is_full:
            raise DomainError("occupation needs the full table")
        total = np.zeros((2 * self.horizon + 1,) * self.dim)
        for k, p in enumerate(self.slices):
            pad = slice(self.horizon - k, self.horizon + k + 1)
            total[(pad,) * self.dim] += p
        return total

    def to_blob(self) -> TableBlob:
        if not self.is_full:
            raise DomainError("only full tables can be exported")
        values = np.stack([self.slice_on_box(k) for k in range(self.horizon + 1)]).ravel()
        return TableBlob(dim=self.dim, horizon=self.horizon, low=-self.horizon, high=self.horizon, values=values)

    @classmethod
    def from_blob(cls, blob: TableBlob) -> 'TransitionTable':
        if blob.low != -blob.horizon or blob.high != blob.horizon:
            raise ValueError(f"transition tables cover [-n, n], got [{blob.low}, {blob.high}]")
        stacked = blob.slices()
        return cls(dim=blob.dim, horizon=blob.horizon,
                   slices=tuple(_centered(stacked[k], k).copy() for k in range(blob.horizon + 1)))


class TransitionTableCoder(Coder):
    @classmethod
    def encode(cls, table: TransitionTable) -> bytes:
        return TableCoder.encode(table.to_blob())

    @classmethod
    def decode(cls, value: bytes) -> TransitionTable:
        return TransitionTable.from_blob(TableCoder.decode(value))


def transition_probs(d: int, n: int, memory_mb: int | None = None, keep_slices: bool = True) -> TransitionTable:
    """
    Exact P_0(S_k = x) by repeated convolution with the step law.
    :param keep_slices: store every slice k = 0..n; otherwise only k = n - 1 and k = n are kept.
    """
    d = validate_dim(d)
    n = validate_horizon(n)
    if keep_slices:
        needed = sum(_slice_bytes(d, k) for k in range(n + 1)) + _slice_bytes(d, n + 1)
    else:
        needed = 3 * _slice_bytes(d, n + 1)
    check_memory_budget(needed, memory_mb, what=f"transition table d={d} n={n}")
    slices = [np.ones((1,) * d)]
    for _ in range(n):
        slices.append(_advance(slices[-1]))
        if not keep_slices:
            slices = slices[-2:]
    for s in slices:
        s.setflags(write=False)
    logger.debug(f"transition table d={d} n={n}: {needed / 1024 / 1024:.1f} MB")
    return TransitionTable(dim=d, horizon=n, slices=tuple(slices), first=n + 1 - len(slices))


def occupation_measure(d: int, n: int, memory_mb: int | None = None) -> np.ndarray:
    """sum_(k <= n) p_k(x) over the box [-n, n]^d, accumulated slice by slice."""
    d = validate_dim(d)
    n = validate_horizon(n)
    check_memory_budget(3 * _slice_bytes(d, n + 1), memory_mb, what=f"occupation measure d={d} n={n}")
    total = np.zeros((2 * n + 1,) * d)
    p = np.ones((1,) * d)
    for k in range(n + 1):
        if k > 0:
            p = _advance(p)
        pad = slice(n - k, n + k + 1)
        total[(pad,) * d] += p
    return total


def export_table(table: TransitionTable, path: str) -> None:
    with open(path, 'wb') as fh:
        fh.write(TransitionTableCoder.encode(table))


def load_table(path: str) -> TransitionTable:
    with open(path, 'rb') as fh:
        return TransitionTableCoder.decode(fh.read())


def _norm_mask(coords: np.ndarray, threshold_sq: float, norm: Norm) -> np.ndarray:
    """|x| > sqrt(threshold_sq) for a (..., d) coordinate grid."""
    if norm == 'sup':
        return (coords.astype(np.float64) ** 2).max(axis=-1) > threshold_sq
    return (coords.astype(np.int64) ** 2).sum(axis=-1) > threshold_sq


def gaussian_comparison_constant(d: int, n: int, norm: Norm = 'euclidean', symmetric: bool = False,
                                 memory_mb: int | None = None) -> float:
    """
    max of p_(n/2 - k)(x) / p_(n - k)(x) over |x| > sqrt(n), 0 <= k < n/2 and p_(n-k)(x) > 0, n/2 the integer part.
    Two propagators run in lockstep, the numerator at time a and the denominator at a + (n - n/2).
    :param symmetric: scan only 0 <= x_1 <= ... <= x_d, which the symmetry group maps onto the whole box.
    """
    d = validate_dim(d)
    n = validate_horizon(n)
    if norm not in ('euclidean', 'sup'):
        raise DomainError(f"norm must be 'euclidean' or 'sup', got {norm!r}")
    if n < 1:
        return 0.0
    check_memory_budget(3 * _slice_bytes(d, n + 1), memory_mb, what=f"comparison scan d={d} n={n}")

    half = n // 2
    shift = n - half
    first = half - (n + 1) // 2 + 1  # smallest numerator time, k = ceil(n/2) - 1

    numerator = np.ones((1,) * d)
    for _ in range(first):
        numerator = _advance(numerator)
    denominator = numerator
    for _ in range(shift):
        denominator = _advance(denominator)

    best = 0.0
    for a in range(first, half + 1):
        if a > first:
            numerator = _advance(numerator)
            denominator = _advance(denominator)
        coords = np.moveaxis(np.indices((2 * a + 1,) * d), 0, -1) - a
        mask = _norm_mask(coords, n, norm)
        if symmetric:
            mask &= coords[..., 0] >= 0
            if d > 1:
                mask &= (np.diff(coords, axis=-1) >= 0).all(axis=-1)
        denominator_near = _centered(denominator, a)
        mask &= denominator_near > 0
        if mask.any():
            best = max(best, float((numerator[mask] / denominator_near[mask]).max()))
    return best


@dataclass(frozen=True)
class KilledOperator:
    """Transition operator of the walk killed on leaving the ball, restricted to the ball's sites."""
    dim: int
    ball: BallSpec
    sites: np.ndarray = field(repr=False)  # (m, d), lexicographic
    neighbors: np.ndarray = field(repr=False)  # (m, 2d) site indices, -1 outside the ball
    matrix: sp.csr_matrix = field(repr=False)
    origin: int

    @property
    def size(self) -> int:
        return len(self.sites)


@lru_cache(maxsize=16)
def killed_operator(d: int, ball: BallSpec) -> KilledOperator:
    d = validate_dim(d)
    sites = ball.interior_sites(d)
    candidates = sites[:, None, :] + unit_moves(d)[None, :, :]
    own, asked = site_keys(sites, candidates)
    order = np.argsort(own, kind='stable')
    pos = np.clip(np.searchsorted(own[order], asked), 0, len(own) - 1)
    found = own[order][pos] == asked
    neighbors = np.where(found, order[pos], -1)

    rows, moves = np.nonzero(neighbors >= 0)
    matrix = sp.csr_matrix((np.full(len(rows), 1 / (2 * d)), (rows, neighbors[rows, moves])),
                           shape=(len(sites), len(sites)))
    origin = int(np.flatnonzero((sites == 0).all(axis=1))[0])
    neighbors.setflags(write=False)
    return KilledOperator(dim=d, ball=ball, sites=sites, neighbors=neighbors, matrix=matrix, origin=origin)


@dataclass(frozen=True)
class KilledTable:
    """
    P_0(S_k = x, sigma > k) on the ball's sites, stored as slices normalized to unit mass (`probs`)
    together with log P_0(sigma > k) (`log_survival`), so long horizons do not underflow.
    """
    dim: int
    horizon: int
    ball: BallSpec
    sites: np.ndarray = field(repr=False)
    probs: np.ndarray | None = field(repr=False)
    log_survival: np.ndarray = field(repr=False)

    @property
    def survival(self) -> np.ndarray:
        return np.exp(self.log_survival)

    def slice(self, k: int) -> np.ndarray:
        if self.probs is None:
            raise DomainError("table was built without slices")
        return self.probs[k] * math.exp(self.log_survival[k])


def killed_table(d: int, n: int, ball: BallSpec, keep_slices: bool = True,
                 memory_mb: int | None = None) -> KilledTable:
    n = validate_horizon(n)
    operator = killed_operator(d, ball)
    m = operator.size
    check_memory_budget(8 * m * ((n + 1) if keep_slices else 4), memory_mb, what=f"killed table n={n} |B|={m}")

    probs = np.zeros((n + 1, m)) if keep_slices else None
    log_survival = np.zeros(n + 1)
    current = np.zeros(m)
    current[operator.origin] = 1.0
    if keep_slices:
        probs[0] = current
    for k in range(1, n + 1):
        current = operator.matrix @ current  # symmetric, so forward and backward steps coincide
        mass = current.sum()
        if mass <= 0:
            log_survival[k:] = -np.inf
            break
        log_survival[k] = log_survival[k - 1] + math.log(mass)
        current /= mass
        if keep_slices:
            probs[k] = current
    return KilledTable(dim=operator.dim, horizon=n, ball=ball, sites=operator.sites,
                       probs=probs, log_survival=log_survival)


def log_survival_prob(d: int, n: int, ball: BallSpec, memory_mb: int | None = None) -> float:
    return float(killed_table(d, n, ball, keep_slices=False, memory_mb=memory_mb).log_survival[-1])


def survival_prob(d: int, n: int, ball: BallSpec, memory_mb: int | None = None) -> float:
    """P_0(sigma(r) > n), exact up to floating-point rounding."""
    return math.exp(log_survival_prob(d, n, ball, memory_mb=memory_mb))


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: np.ndarray = field(repr=False)  # positive, sup-normalized, ordered like `sites`
    sites: np.ndarray = field(repr=False)
    residual: float
    iterations: int


def principal_eigen(d: int, ball: BallSpec, tol: float = 1e-10, max_iter: int = 500_000) -> Eigenpair:
    """
    Principal eigenpair of the killed operator K by power iteration on (I + K)/2; the lazy operator
    has no eigenvalue of modulus one besides the principal one, so the bipartite chain converges.
    """
    operator = killed_operator(d, ball)
    K = operator.matrix
    v = np.ones(operator.size)
    value, residual = 0.0, np.inf
    for iteration in range(1, max_iter + 1):
        Kv = K @ v
        value = float(v @ Kv) / float(v @ v)
        residual = float(np.abs(Kv - value * v).max())
        if residual < tol:
            break
        v = (v + Kv) / 2
        v /= v.max()
    else:
        raise ConvergenceError(f"power iteration stopped at residual {residual:.3e} after {max_iter} steps")

    if not 0 < value < 1 or v.min() <= 0:
        raise ConvergenceError(f"degenerate ball {ball}: principal eigenvalue {value}")
    v = v / v.max()
    logger.debug(f"principal eigenvalue {value:.12f} for {ball} after {iteration} iterations")
    return Eigenpair(value=value, vector=v, sites=operator.sites, residual=residual, iterations=iteration)


@dataclass(frozen=True)
class PathDistribution:
    """Exact law of (SILT, range): counts[(silt, range)] paths out of total = (2d)^n."""
    dim: int
    horizon: int
    total: int
    counts: dict[tuple[int, int], int] = field(repr=False)

    def pmf(self, exact: bool = False) -> dict[tuple[int, int], float | Fraction]:
        return {key: Fraction(c, self.total) if exact else c / self.total for key, c in self.counts.items()}

    def silt_pmf(self, exact: bool = False) -> dict[int, float | Fraction]:
        marginal = Counter()
        for (s, _), c in self.counts.items():
            marginal[s] += c
        return {s: Fraction(c, self.total) if exact else c / self.total for s, c in sorted(marginal.items())}

    def mean_silt(self, exact: bool = False) -> float | Fraction:
        value = Fraction(sum(s * c for (s, _), c in self.counts.items()), self.total)
        return value if exact else float(value)

    def mean_range(self, exact: bool = False) -> float | Fraction:
        value = Fraction(sum(r * c for (_, r), c in self.counts.items()), self.total)
        return value if exact else float(value)

    def silt_tail(self, y: float) -> float:
        """P(SILT > y n)."""
        return sum(c for (s, _), c in self.counts.items() if s > y * self.horizon) / self.total

    def range_tail(self, y: float) -> float:
        """P(|R_n| < n / y)."""
        return sum(c for (_, r), c in self.counts.items() if r * y < self.horizon) / self.total


def enumerate_paths(d: int, n: int, max_paths: int = MAX_ENUMERATED_PATHS, chunk_size: int = 2 ** 16) -> PathDistribution:
    d = validate_dim(d)
    n = validate_horizon(n)
    base = 2 * d
    total = base ** n
    if total > max_paths:
        raise DomainError(f"(2d)^n = {total} paths exceeds the enumeration limit {max_paths}")

    powers = base ** np.arange(n, dtype=np.int64)
    counts = Counter()
    for start in range(0, total, chunk_size):
        ids = np.arange(start, min(start + chunk_size, total), dtype=np.int64)
        steps = (ids[:, None] // powers[None, :]) % base
        silts, ranges = batch_silt_range(steps_to_sites(steps, d))
        pairs, multiplicity = np.unique(np.stack([silts, ranges], axis=1), axis=0, return_counts=True)
        for (s, r), c in zip(pairs.tolist(), multiplicity.tolist()):
            counts[(s, r)] += c
    return PathDistribution(dim=d, horizon=n, total=total, counts=dict(sorted(counts.items())))


def _validate_ld_params(n: int, gamma: float, EX2: float, C: float) -> None:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    if not EX2 > 0:
        raise DomainError(f"EX2 must be > 0, got {EX2}")
    if not C > 1:
        raise DomainError(f"C must be > 1, got {C}")


def ld_constant(C: float) -> float:
    """c_u = 3 + e + C."""
    return 3 + math.e + C


def log_ld_bound_rhs(n: int, gamma: float, EX2: float, C: float, x_n: float) -> float:
    _validate_ld_params(n, gamma, EX2, C)
    t = gamma ** 2 * EX2
    return ld_constant(C) * n * max(t, t ** (1 - gamma)) - gamma * x_n / 2


def ld_bound_rhs(n: int, gamma: float, EX2: float, C: float, x_n: float) -> float:
    """
    exp(c_u n max(g^2 E[X^2], (g^2 E[X^2])^(1-g)) - g x_n / 2), the large-deviation bound for sums of
    positive i.i.d. variables with P(X > u) <= C exp(-u); inf when the exponent overflows.
    """
    exponent = log_ld_bound_rhs(n, gamma, EX2, C, x_n)
    return math.exp(exponent) if exponent < 709 else math.inf


def scaled_tail_bound(n: int, gamma: float, Gamma: float, EX2: float, C: float, x_n: float) -> float:
    """exp(-gamma Gamma x_n / 4) under max(G^2 E[X^2], (G^2 E[X^2])^(1-gamma)) <= G x_n / (4 c_u n)."""
    _validate_ld_params(n, gamma, EX2, C)
    if not Gamma > 0:
        raise DomainError(f"Gamma must be > 0, got {Gamma}")
    t = Gamma ** 2 * EX2
    if max(t, t ** (1 - gamma)) > Gamma * x_n / (4 * ld_constant(C) * n):
        raise DomainError("scaled hypothesis fails: x_n is too small for this Gamma")
    return math.exp(-gamma * Gamma * x_n / 4)


@dataclass(frozen=True)
class MomentReport:
    n: int
    d: int
    expected_silt: float
    expected_In: float
    survival: float | None
    c0_empirical: float | None
    kappa_estimate: float | None = None


def moment_report(d: int, n: int, ball: BallSpec | None = None, with_comparison: bool = True,
                  kappa_estimate: float | None = None, memory_mb: int | None = None) -> MomentReport:
    return MomentReport(
        n=n, d=d,
        expected_silt=float(expected_silt(d, n)),
        expected_In=float(expected_mutual_intersection(d, n)),
        survival=survival_prob(d, n, ball, memory_mb=memory_mb) if ball is not None else None,
        c0_empirical=gaussian_comparison_constant(d, n, memory_mb=memory_mb) if with_comparison else None,
        kappa_estimate=kappa_estimate,
    )
