"""
Local-time fields and per-trajectory functionals: SILT, range, level sets and level bands.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from silt_lab.exceptions import DomainError
from silt_lab.walk import Site, Trajectory

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

_KEY_LIMIT = 2 ** 62


class LevelSetParams(BaseModel):
    z: float = 0.0
    band: tuple[float, float] | None = None
    delta: float = 0.5

    @field_validator('z')
    def validate_z(cls, value):
        if value < 0:
            raise ValueError('z must be >= 0')
        return value

    @field_validator('delta')
    def validate_delta(cls, value):
        if not 0 < value < 1:
            raise ValueError('delta must lie in (0, 1)')
        return value

    @model_validator(mode='after')
    def validate_band(self):
        if self.band is not None and not 0 <= self.band[0] < self.band[1]:
            raise ValueError('band needs 0 <= lo < hi')
        return self


def site_keys(*arrays: np.ndarray) -> list[np.ndarray]:
    """
    Pack (..., d) integer site arrays into int64 keys sharing one encoding, so equal sites get equal keys
    across all inputs. Mixed radix over the joint bounding box; falls back to dense ids from np.unique
    when the box does not fit in 62 bits.
    """
    arrays = [np.asarray(a, dtype=np.int64) for a in arrays]
    d = arrays[0].shape[-1]
    flat = [a.reshape(-1, d) for a in arrays]
    nonempty = [f for f in flat if len(f)]
    if not nonempty:
        return [np.zeros(a.shape[:-1], dtype=np.int64) for a in arrays]

    low = np.min([f.min(axis=0) for f in nonempty], axis=0)
    high = np.max([f.max(axis=0) for f in nonempty], axis=0)
    extents = [int(e) for e in high - low + 1]

    box = 1
    for e in extents:
        box *= e
    if box < _KEY_LIMIT:
        radix = np.ones(d, dtype=np.int64)
        for axis in range(d - 2, -1, -1):
            radix[axis] = radix[axis + 1] * extents[axis + 1]
        return [((a - low) * radix).sum(axis=-1) for a in arrays]

    logger.debug(f"site box of {box} cells exceeds the packed key range, using dense ids")
    _, inverse = np.unique(np.concatenate(flat), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1).astype(np.int64)
    keys, start = [], 0
    for a, f in zip(arrays, flat):
        keys.append(inverse[start:start + len(f)].reshape(a.shape[:-1]))
        start += len(f)
    return keys


@dataclass(frozen=True)
class SiltSummary:
    silt: int
    range: int
    horizon: int


@dataclass(frozen=True)
class LocalTimeField:
    """Visited sites (lexicographic order) and their visit counts over times 0..n."""
    dim: int
    horizon: int
    sites: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @classmethod
    def from_dict(cls, counts: dict[Site, int], horizon: int | None = None) -> 'LocalTimeField':
        items = sorted((tuple(k), int(v)) for k, v in counts.items() if v > 0)
        if not items:
            raise DomainError("a local-time field needs at least one visited site")
        sites = np.array([k for k, _ in items], dtype=np.int64)
        values = np.array([v for _, v in items], dtype=np.int64)
        total = int(values.sum())
        return cls(dim=sites.shape[1], horizon=total - 1 if horizon is None else horizon,
                   sites=sites, counts=values)

    @property
    def range_size(self) -> int:
        return len(self.counts)

    @property
    def total_mass(self) -> int:
        return int(self.counts.sum())

    def count_at(self, query: np.ndarray) -> np.ndarray:
        """l(x) for every row of `query` (0 for unvisited sites)."""
        query = np.asarray(query, dtype=np.int64).reshape(-1, self.dim)
        if len(query) == 0:
            return np.zeros(0, dtype=np.int64)
        own, asked = site_keys(self.sites, query)
        order = np.argsort(own, kind='stable')
        own_sorted = own[order]
        pos = np.clip(np.searchsorted(own_sorted, asked), 0, len(own_sorted) - 1)
        found = own_sorted[pos] == asked
        return np.where(found, self.counts[order][pos], 0)

    def as_dict(self) -> dict[Site, int]:
        return {tuple(int(c) for c in s): int(v) for s, v in zip(self.sites, self.counts)}

    def summary(self) -> SiltSummary:
        return SiltSummary(silt=silt(self), range=self.range_size, horizon=self.horizon)


def local_times(traj: Trajectory) -> LocalTimeField:
    sites, counts = np.unique(traj.sites, axis=0, return_counts=True)
    return LocalTimeField(dim=traj.dim, horizon=traj.steps, sites=sites, counts=counts.astype(np.int64))


def silt(field: LocalTimeField) -> int:
    return int((field.counts ** 2).sum())


def self_intersection_pairs(traj: Trajectory) -> int:
    """#{k < k' : S_k = S_k'} by direct comparison; quadratic, meant for checking short paths."""
    sites = traj.sites
    equal = (sites[:, None, :] == sites[None, :, :]).all(axis=-1)
    return int(np.triu(equal, k=1).sum())


def level_set(field: LocalTimeField, z: float) -> np.ndarray:
    """Sites with l(x) > z, as rows of a (m, d) array."""
    if z < 0:
        raise DomainError(f"level z must be >= 0, got {z}")
    return field.sites[field.counts > z]


def level_band(field: LocalTimeField, lo: float, hi: float) -> np.ndarray:
    """Sites with lo <= l(x) < hi."""
    if not 0 <= lo < hi:
        raise DomainError(f"band needs 0 <= lo < hi, got [{lo}, {hi})")
    return field.sites[(field.counts >= lo) & (field.counts < hi)]


def restricted_silt(field: LocalTimeField, site_set: np.ndarray) -> int:
    """Sum of l(x)^2 over a set of sites; absent sites count 0, repeated rows once."""
    site_set = np.asarray(site_set, dtype=np.int64).reshape(-1, field.dim)
    if len(site_set) == 0:
        return 0
    site_set = np.unique(site_set, axis=0)
    return int((field.count_at(site_set) ** 2).sum())


def check_jensen(summary: SiltSummary) -> bool:
    return summary.silt * summary.range >= (summary.horizon + 1) ** 2


def intersection_count(field_a: LocalTimeField, field_b: LocalTimeField) -> int:
    """Mutual intersection sum_x l_a(x) l_b(x)."""
    return int((field_a.counts * field_b.count_at(field_a.sites)).sum())


def sorted_runs(keys: np.ndarray) -> np.ndarray:
    """
    Run lengths of equal keys per row of a (rows, width) array.
    Row r's distinct keys get consecutive labels 0.. and run_lengths[r, label] is the visit count;
    unused labels hold 0.
    """
    rows, width = keys.shape
    ordered = np.sort(keys, axis=1)
    starts = np.ones_like(ordered, dtype=bool)
    starts[:, 1:] = ordered[:, 1:] != ordered[:, :-1]
    labels = np.cumsum(starts, axis=1) - 1
    flat = (np.arange(rows)[:, None] * width + labels).ravel()
    return np.bincount(flat, minlength=rows * width).reshape(rows, width)


def batch_local_times(walks: np.ndarray) -> np.ndarray:
    """Visit-count runs of every walk of a (count, n + 1, d) batch, see `sorted_runs`."""
    (keys,) = site_keys(walks)
    return sorted_runs(keys)


def batch_silt_range(walks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    runs = batch_local_times(walks)
    return (runs ** 2).sum(axis=1), (runs > 0).sum(axis=1)


def band_edges(N: int, chi_low: float, alpha: float, top_exponent: float = 1 / 3) -> list[float]:
    """
    Level-band thresholds 1 = e_0 < e_1 = N^chi_low < e_2 = N^(chi_low + alpha) < ... closed by 2^(N top_exponent).
    Band L_0 is [1, N^chi_low); the last edge opens the top band [e_last, inf).
    """
    if N < 1 or chi_low <= 0 or alpha <= 0 or top_exponent <= 0:
        raise DomainError("band_edges needs N >= 1 and positive chi_low, alpha, top_exponent")
    top = 2.0 ** (N * top_exponent)
    edges = [1.0]
    exponent = chi_low
    while True:
        edge = float(N) ** exponent
        if edge >= top:
            break
        if edge > edges[-1]:
            edges.append(edge)
        exponent += alpha
    if top > edges[-1]:
        edges.append(top)
    return edges


def band_contributions(field: LocalTimeField, edges: Sequence[float]) -> list[int]:
    """Restricted SILT over [e_j, e_j+1) for consecutive edges, then the top band [e_last, inf)."""
    bounds = list(edges) + [np.inf]
    return [restricted_silt(field, field.sites[(field.counts >= lo) & (field.counts < hi)])
            for lo, hi in zip(bounds[:-1], bounds[1:])]


def band_pigeonhole_audit(field: LocalTimeField, edges: Sequence[float], y: float) -> bool:
    """
    If silt > y n then L_0 carries more than (y/2) n, some middle band j carries more than y/(2M) n,
    or the top band is visited. M counts the middle bands.
    """
    n = field.horizon
    if silt(field) <= y * n:
        return True
    contributions = band_contributions(field, edges)
    middle = contributions[1:-1]
    if contributions[-1] > 0:
        return True
    if contributions[0] > y / 2 * n:
        return True
    if not middle:
        return False
    return any(c > y / (2 * len(middle)) * n for c in middle)
