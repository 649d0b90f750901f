"""
Nearest-neighbour simple random walk on Z^d: reproducible streams, trajectories and exit times.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from silt_lab.exceptions import DomainError, TrajectoryError
from silt_lab.generic import check_memory_budget

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

MAX_DIM = 8
UINT64_LIMIT = 2 ** 64

Site = tuple[int, ...]
Norm = Literal['euclidean', 'sup']


class Survival(enum.Enum):
    SURVIVED = 'survived'


SURVIVED = Survival.SURVIVED


def validate_dim(d: int) -> int:
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= MAX_DIM:
        raise DomainError(f"dimension must be an integer in [1, {MAX_DIM}], got {d!r}")
    return int(d)


def validate_horizon(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise DomainError(f"horizon must be a non-negative integer, got {n!r}")
    return int(n)


@lru_cache(maxsize=None)
def unit_moves(d: int) -> np.ndarray:
    """(2d, d) table of unit steps: row 2a is +e_a, row 2a + 1 is -e_a."""
    moves = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        moves[2 * axis, axis] = 1
        moves[2 * axis + 1, axis] = -1
    moves.setflags(write=False)
    return moves


@dataclass(frozen=True)
class RngStream:
    """
    Counter-based random stream: Philox keyed by (base_seed, stream_index).
    Two streams with the same pair produce the same draws on every platform.
    """
    base_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ('base_seed', 'stream_index'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value < UINT64_LIMIT:
                raise DomainError(f"{name} must be an integer in [0, 2^64), got {value!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.base_seed, self.stream_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, chunk_id: int) -> 'RngStream':
        """Stream of chunk `chunk_id`, offset from this stream's index."""
        return RngStream(self.base_seed, (self.stream_index + chunk_id) % UINT64_LIMIT)


@dataclass(frozen=True)
class BallSpec:
    radius: float
    norm: Norm = 'euclidean'

    def __post_init__(self):
        if not self.radius >= 0 or math.isinf(self.radius):
            raise DomainError(f"ball radius must be finite and >= 0, got {self.radius!r}")
        if self.norm not in ('euclidean', 'sup'):
            raise DomainError(f"norm must be 'euclidean' or 'sup', got {self.norm!r}")

    @property
    def box_radius(self) -> int:
        return int(math.floor(self.radius + 1e-9))

    def contains(self, sites: np.ndarray) -> np.ndarray:
        """Boolean mask of the rows of `sites` lying in the ball."""
        sites = np.asarray(sites)
        if self.norm == 'sup':
            return np.abs(sites).max(axis=-1) <= self.box_radius
        return (sites.astype(np.int64) ** 2).sum(axis=-1) <= self.radius ** 2 + 1e-9

    def interior_sites(self, d: int) -> np.ndarray:
        """Lattice points of the ball in lexicographic order, shape (|B|, d)."""
        d = validate_dim(d)
        r = self.box_radius
        axis = np.arange(-r, r + 1, dtype=np.int64)
        grid = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        return grid[self.contains(grid)]

    def cardinality(self, d: int) -> int:
        return int(len(self.interior_sites(d)))


@dataclass(frozen=True)
class Trajectory:
    """Sites S_0..S_n of one walk, stored as a read-only (n + 1, d) int64 array."""
    sites: np.ndarray = field(repr=False)

    def __post_init__(self):
        sites = np.array(self.sites, dtype=np.int64)
        if sites.ndim != 2 or len(sites) == 0:
            raise TrajectoryError(f"trajectory needs shape (n + 1, d), got {sites.shape}")
        sites.setflags(write=False)
        object.__setattr__(self, 'sites', sites)

    @classmethod
    def from_sites(cls, sites, validate: bool = True) -> 'Trajectory':
        traj = cls(np.asarray(sites, dtype=np.int64))
        if validate:
            traj.validate()
        return traj

    def validate(self) -> None:
        if np.any(self.sites[0] != 0):
            raise TrajectoryError(f"trajectory must start at the origin, starts at {tuple(self.sites[0])}")
        if self.steps and not np.all(np.abs(np.diff(self.sites, axis=0)).sum(axis=1) == 1):
            raise TrajectoryError("consecutive sites must be nearest neighbours")

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @property
    def steps(self) -> int:
        return len(self.sites) - 1

    def __len__(self) -> int:
        return len(self.sites)

    def site(self, k: int) -> Site:
        return tuple(int(c) for c in self.sites[k])


def steps_to_sites(steps: np.ndarray, d: int) -> np.ndarray:
    """
    Turn direction indices in [0, 2d) into positions, origin prepended.
    Works on a single path (n,) or a batch (count, n).
    """
    steps = np.asarray(steps)
    positions = np.cumsum(unit_moves(d)[steps], axis=-2)
    origin = np.zeros(steps.shape[:-1] + (1, d), dtype=np.int64)
    return np.concatenate([origin, positions], axis=-2)


def simulate_walk(d: int, n: int, rng: RngStream | np.random.Generator, memory_mb: int | None = None) -> Trajectory:
    """
    Draw S_0..S_n with S_0 = 0 and i.i.d. uniform unit steps.
    :param d: dimension, 1..8.
    :param n: number of steps.
    :param rng: stream or an already opened generator.
    :param memory_mb: budget for the trajectory array.
    """
    d = validate_dim(d)
    n = validate_horizon(n)
    check_memory_budget((n + 1) * d * 8 * 2, memory_mb, what='trajectory')
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    steps = gen.integers(0, 2 * d, size=n)
    return Trajectory(steps_to_sites(steps, d))


def simulate_walks(d: int, n: int, count: int, gen: np.random.Generator) -> np.ndarray:
    """Batch of `count` independent walks as a (count, n + 1, d) array."""
    steps = gen.integers(0, 2 * d, size=(count, n))
    return steps_to_sites(steps, d)


def exit_time(traj: Trajectory, ball: BallSpec) -> int | Survival:
    """First k with S_k outside the ball, or SURVIVED when the walk stays inside up to n."""
    outside = np.flatnonzero(~ball.contains(traj.sites))
    if len(outside) == 0:
        return SURVIVED
    return int(outside[0])


def batch_exit_times(walks: np.ndarray, ball: BallSpec) -> np.ndarray:
    """Exit time per walk of a (count, n + 1, d) batch, -1 for walks that survive."""
    outside = ~ball.contains(walks)
    first = outside.argmax(axis=1)
    return np.where(outside.any(axis=1), first, -1)
