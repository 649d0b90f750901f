"""
Midpoint decomposition of a dyadic path into re-rooted strands and the exact checks built on it.

A strand of 2m + 1 sites splits at its midpoint x~ = S_m into
    child1_k = S_m - S_(m-k),  child2_k = S_m - S_(m+k),  k = 0..m,
and local times satisfy l_parent(x) = l_child1(x~ - x) + l_child2(x~ - x) - 1{x = x~} exactly.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from silt_lab.exceptions import DomainError, TrajectoryError
from silt_lab.generic import log2_exact
from silt_lab.silt import local_times, site_keys, sorted_runs
from silt_lab.walk import Site, Trajectory

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


@dataclass(frozen=True)
class Strand:
    generation: int
    index: int  # 1-based within its generation
    sites: Trajectory
    anchor: Site | None = None  # parent's midpoint; None for the root

    @property
    def steps(self) -> int:
        return self.sites.steps


def _split_sites(paths: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a (..., 2m + 1, d) stack of paths; returns child1, child2 of shape (..., m + 1, d) and anchors."""
    m = (paths.shape[-2] - 1) // 2
    anchor = paths[..., m, :]
    child1 = anchor[..., None, :] - paths[..., m::-1, :]
    child2 = anchor[..., None, :] - paths[..., m:, :]
    return child1, child2, anchor


def _check_splittable(length: int) -> None:
    if length < 3 or length % 2 == 0:
        raise TrajectoryError(f"a strand of {length} sites cannot be split at its midpoint")


def split(strand: Strand) -> tuple[Strand, Strand]:
    _check_splittable(len(strand.sites))
    child1, child2, anchor = _split_sites(strand.sites.sites)
    anchor_site = tuple(int(c) for c in anchor)
    generation = strand.generation + 1
    return (Strand(generation, 2 * strand.index - 1, Trajectory(child1), anchor_site),
            Strand(generation, 2 * strand.index, Trajectory(child2), anchor_site))


def verify_midpoint_identity(parent: Strand, child1: Strand, child2: Strand) -> int:
    """
    Max over sites of |l_parent(x) - l_child1(x~ - x) - l_child2(x~ - x) + 1{x = x~}|.
    Checked over the parent's range and over every site the children map back to.
    """
    length = len(parent.sites)
    _check_splittable(length)
    m = (length - 1) // 2
    if len(child1.sites) != m + 1 or len(child2.sites) != m + 1:
        raise TrajectoryError(f"children of a {length}-site strand must have {m + 1} sites")
    if child1.generation != parent.generation + 1 or child2.generation != parent.generation + 1:
        raise TrajectoryError("children must belong to the next generation")

    midpoint = parent.sites.sites[m]
    parent_field = local_times(parent.sites)
    field1, field2 = local_times(child1.sites), local_times(child2.sites)

    candidates = np.concatenate([parent_field.sites,
                                 midpoint - field1.sites,
                                 midpoint - field2.sites])
    candidates = np.unique(candidates, axis=0)
    mirrored = midpoint - candidates
    is_midpoint = (candidates == midpoint).all(axis=1).astype(np.int64)
    residual = (parent_field.count_at(candidates)
                - field1.count_at(mirrored) - field2.count_at(mirrored) + is_midpoint)
    return int(np.abs(residual).max())


@dataclass(frozen=True)
class StrandTree:
    """
    All generations 0..N of the decomposition of a path with n = 2^N steps.
    levels[l] has shape (2^l, 2^(N-l) + 1, d); anchors[l] (l >= 1) holds the parent midpoints, shape (2^l, d).
    Generation N consists of single-step strands, which makes the cross-intersection sum exhaustive.
    """
    N: int
    levels: tuple[np.ndarray, ...] = field(repr=False)
    anchors: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.levels[0].shape[-1]

    def strand(self, generation: int, index: int) -> Strand:
        if not 0 <= generation <= self.N or not 1 <= index <= 2 ** generation:
            raise DomainError(f"no strand ({generation}, {index}) in a tree of depth {self.N}")
        anchor = None
        if generation > 0:
            anchor = tuple(int(c) for c in self.anchors[generation][index - 1])
        return Strand(generation, index, Trajectory(self.levels[generation][index - 1]), anchor)

    def strands(self, generation: int) -> list[Strand]:
        return [self.strand(generation, i) for i in range(1, 2 ** generation + 1)]

    def identity_residual(self) -> int:
        return max((level_identity_residual(self.levels[l], self.levels[l + 1]) for l in range(self.N)),
                   default=0)


def build_tree(traj: Trajectory) -> StrandTree:
    N = _dyadic_depth(traj)
    levels = [traj.sites[None, :, :]]
    anchors = [np.zeros((1, traj.dim), dtype=np.int64)]
    for _ in range(N):
        parent = levels[-1]
        child1, child2, anchor = _split_sites(parent)
        children = np.empty((2 * parent.shape[0],) + child1.shape[1:], dtype=np.int64)
        children[0::2], children[1::2] = child1, child2
        levels.append(children)
        anchors.append(np.repeat(anchor, 2, axis=0))
    for array in levels + anchors:
        array.setflags(write=False)
    return StrandTree(N=N, levels=tuple(levels), anchors=tuple(anchors))


def _dyadic_depth(traj: Trajectory) -> int:
    try:
        return log2_exact(traj.steps)
    except DomainError:
        raise TrajectoryError(f"decomposition needs 2^N steps, got {traj.steps}") from None


def level_identity_residual(parents: np.ndarray, children: np.ndarray) -> int:
    """
    Midpoint identity for a whole generation at once, as a signed multiset difference per parent:
    parent sites (+1), mirrored child sites (-1) and the shared midpoint (+1) must cancel site by site.
    """
    K, length, d = parents.shape
    m = (length - 1) // 2
    midpoints = parents[:, m, :]
    mirrored = midpoints[:, None, :] - children.reshape(K, 2 * (m + 1), d)
    stacked = np.concatenate([parents, mirrored, midpoints[:, None, :]], axis=1)
    weights = np.concatenate([np.ones(length), -np.ones(2 * (m + 1)), np.ones(1)]).astype(np.int64)

    (keys,) = site_keys(stacked)
    order = np.argsort(keys, axis=1, kind='stable')
    keys = np.take_along_axis(keys, order, axis=1)
    signed = np.broadcast_to(weights, keys.shape)[np.arange(K)[:, None], order]
    starts = np.ones_like(keys, dtype=bool)
    starts[:, 1:] = keys[:, 1:] != keys[:, :-1]
    flat_starts = np.flatnonzero(starts.ravel())
    sums = np.add.reduceat(signed.ravel(), flat_starts)
    return int(np.abs(sums).max())


@dataclass(frozen=True)
class PairTimes:
    """Joint local times of sibling strands, one row per pair; entries past a row's distinct sites are 0."""
    odd: np.ndarray
    even: np.ndarray


def sibling_local_times(children: np.ndarray) -> PairTimes:
    """Pair strands (2i - 1, 2i) of a generation and align their local times site by site."""
    pairs = children.shape[0] // 2
    length = children.shape[1]
    (keys,) = site_keys(children)
    combined = keys.reshape(pairs, 2 * length)
    is_even = np.tile(np.repeat(np.array([0, 1]), length), (pairs, 1))

    order = np.argsort(combined, axis=1, kind='stable')
    ordered = np.take_along_axis(combined, order, axis=1)
    tags = np.take_along_axis(is_even, order, axis=1)
    starts = np.ones_like(ordered, dtype=bool)
    starts[:, 1:] = ordered[:, 1:] != ordered[:, :-1]
    labels = np.cumsum(starts, axis=1) - 1
    width = 2 * length
    flat = (np.arange(pairs)[:, None] * width + labels).ravel()
    even = np.bincount(flat, weights=tags.ravel(), minlength=pairs * width)
    total = np.bincount(flat, minlength=pairs * width)
    even = even.astype(np.int64)
    return PairTimes(odd=(total - even).reshape(pairs, width), even=even.reshape(pairs, width))


@dataclass(frozen=True)
class InclusionCheck:
    level: int
    z: float
    delta: float
    parent_total: int  # sum_i |D_i(z)|
    bound_total: int  # sum_i of the right-hand sides
    violations: int
    cset_violations: int  # strands breaking l_even(D_odd(delta z)) >= delta z |C(delta z)|

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def cset_passed(self) -> bool:
        return self.cset_violations == 0


@dataclass(frozen=True)
class TreeStatistics:
    """Per-generation visit-count runs and sibling pairings of a tree, computed once and shared by all checks."""
    runs: tuple[np.ndarray, ...]  # runs[l]: (2^l, width) local times of each strand
    pairs: tuple[PairTimes | None, ...]  # pairs[l]: siblings of generation l >= 1 aligned site by site
    identity_residual: int


def tree_statistics(tree: StrandTree) -> TreeStatistics:
    runs = tuple(sorted_runs(site_keys(level)[0]) for level in tree.levels)
    pairs = (None,) + tuple(sibling_local_times(tree.levels[l]) for l in range(1, tree.N + 1))
    return TreeStatistics(runs=runs, pairs=pairs, identity_residual=tree.identity_residual())


def _inclusion(l: int, parent_runs: np.ndarray, pair: PairTimes, z: float, delta: float) -> InclusionCheck:
    parent_sizes = (parent_runs > z).sum(axis=1)
    low, split_level = (1 - delta) * z, delta * z
    both = np.minimum(pair.odd, pair.even) > split_level
    bound = (pair.odd > low).sum(axis=1) + (pair.even > low).sum(axis=1) + both.sum(axis=1)

    even_on_odd_set = np.where(pair.odd > split_level, pair.even, 0).sum(axis=1)
    cset_ok = even_on_odd_set >= split_level * both.sum(axis=1)

    return InclusionCheck(level=l, z=z, delta=delta,
                          parent_total=int(parent_sizes.sum()), bound_total=int(bound.sum()),
                          violations=int((parent_sizes > bound).sum()),
                          cset_violations=int((~cset_ok).sum()))


def _check_inclusion_args(tree: StrandTree, l: int, z: float, delta: float) -> None:
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not z > 0:
        raise DomainError(f"z must be > 0, got {z}")
    if not 0 <= l < tree.N:
        raise DomainError(f"generation must lie in [0, {tree.N}), got {l}")


def verify_level_inclusion(tree: StrandTree, l: int, z: float, delta: float) -> InclusionCheck:
    """
    |D_i^(l)(z)| <= |D_2i-1^(l+1)((1 - delta) z)| + |D_2i^(l+1)((1 - delta) z)| + |C_i^(l+1)(delta z)|
    for every strand i of generation l, where C is the set where both children exceed delta z.
    Alongside, l_2i(D_2i-1(delta z)) >= delta z |C_i(delta z)|.
    """
    _check_inclusion_args(tree, l, z, delta)
    (parent_keys,) = site_keys(tree.levels[l])
    return _inclusion(l, sorted_runs(parent_keys), sibling_local_times(tree.levels[l + 1]), z, delta)


def _restricted_pairs(runs: np.ndarray, threshold: float) -> np.ndarray:
    """Per row, sum over sites with 1 <= l <= threshold of l(l - 1)/2."""
    kept = np.where(runs <= threshold, runs, 0)
    return (kept * (kept - 1) // 2).sum(axis=1)


@dataclass(frozen=True)
class DecompReport:
    N: int
    threshold: float
    z0: int
    j_values: tuple[np.ndarray, ...] = field(repr=False)  # j_values[l - 1][k - 1] = J^(l)_k, l = 1..N
    z_values: tuple[np.ndarray, ...] = field(repr=False)  # z_values[l][k - 1] = Z^(l)_k, l = 0..N
    inclusion_checks: tuple[InclusionCheck, ...]
    identity_residual: int
    l0_silt: int
    j_bands: np.ndarray | None = field(default=None, repr=False)  # (N, bands) totals of J^(l)_(k,i) over k

    @property
    def horizon(self) -> int:
        return 2 ** self.N

    @property
    def j_total(self) -> int:
        return int(sum(int(j.sum()) for j in self.j_values))

    @property
    def truncated_bound(self) -> int:
        """sum_(l < N) J + sum_k Z^(N-1)_k."""
        if self.N == 0:
            return 0
        return int(sum(int(j.sum()) for j in self.j_values[:-1]) + self.z_values[self.N - 1].sum())

    @property
    def legall_pass(self) -> bool:
        return self.z0 <= self.j_total

    @property
    def truncated_pass(self) -> bool:
        return self.z0 <= self.truncated_bound

    @property
    def l0_pass(self) -> bool:
        return self.l0_silt <= self.horizon + 1 + 2 * self.z0

    @property
    def inclusion_pass(self) -> bool:
        return all(c.passed for c in self.inclusion_checks)

    @property
    def cset_pass(self) -> bool:
        return all(c.cset_passed for c in self.inclusion_checks)


def legall_decomposition(tree: StrandTree,
                         threshold: float,
                         inclusion_grid: Iterable[tuple[float, float]] = (),
                         band_edges: Sequence[float] | None = None,
                         stats: TreeStatistics | None = None) -> DecompReport:
    """
    Self-intersections of the root restricted to sites with l(x) <= threshold, bounded by the
    cross-intersections of sibling strands over all generations.
    :param tree: tree of a path with 2^N steps.
    :param threshold: visit threshold (>= 1) applied at every strand.
    :param inclusion_grid: (z, delta) pairs checked at every generation l < N.
    :param band_edges: optional edges splitting each J over bands of the odd strand's local time.
    :param stats: precomputed tree_statistics(tree), reused across thresholds.
    """
    if threshold < 1:
        raise DomainError(f"threshold must be >= 1, got {threshold}")
    stats = stats if stats is not None else tree_statistics(tree)

    z_values = tuple(_restricted_pairs(runs, threshold) for runs in stats.runs)
    root_runs = stats.runs[0][0]
    l0_silt = int((np.where(root_runs <= threshold, root_runs, 0) ** 2).sum())

    j_values, band_rows = [], []
    for l in range(1, tree.N + 1):
        pair = stats.pairs[l]
        weights = np.where(pair.odd <= threshold, pair.odd * pair.even, 0)
        j_values.append(weights.sum(axis=1))
        if band_edges is not None:
            bounds = list(band_edges) + [np.inf]
            band_rows.append([int(weights[(pair.odd >= lo) & (pair.odd < hi)].sum())
                              for lo, hi in zip(bounds[:-1], bounds[1:])])

    checks = []
    for z, delta in inclusion_grid:
        for l in range(tree.N):
            _check_inclusion_args(tree, l, z, delta)
            checks.append(_inclusion(l, stats.runs[l], stats.pairs[l + 1], z, delta))

    report = DecompReport(N=tree.N, threshold=threshold, z0=int(z_values[0][0]),
                          j_values=tuple(j_values), z_values=z_values,
                          inclusion_checks=tuple(checks), identity_residual=stats.identity_residual,
                          l0_silt=l0_silt,
                          j_bands=np.array(band_rows, dtype=np.int64) if band_edges is not None else None)
    logger.debug(f"decomposition N={tree.N} threshold={threshold}: Z0={report.z0} sum J={report.j_total}")
    return report
