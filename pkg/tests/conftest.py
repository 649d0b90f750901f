import numpy as np
import pytest

from silt_lab.walk import RngStream, Trajectory


@pytest.fixture
def rng():
    return RngStream(base_seed=20240917)


@pytest.fixture
def generator(rng):
    return rng.generator()


@pytest.fixture
def back_and_forth():
    """0, 1, 0, 1, 0 on the line."""
    return Trajectory.from_sites([[0], [1], [0], [1], [0]])


@pytest.fixture
def straight_line():
    return Trajectory.from_sites([[0], [1], [2], [3], [4]])


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    directory = tmp_path / 'results'
    monkeypatch.setenv('SILT_LAB_OUTPUT_DIR', str(directory))
    monkeypatch.delenv('SILT_LAB_CACHE_DIR', raising=False)
    monkeypatch.delenv('SILT_LAB_MEMORY_MB', raising=False)
    return directory


def _random_trajectory(d: int, n: int, seed: int) -> Trajectory:
    gen = RngStream(seed).generator()
    steps = gen.integers(0, 2 * d, size=n)
    moves = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        moves[2 * axis, axis], moves[2 * axis + 1, axis] = 1, -1
    return Trajectory(np.vstack([np.zeros((1, d), dtype=np.int64), np.cumsum(moves[steps], axis=0)]))


@pytest.fixture
def make_walk():
    """Factory of seeded random walks, `make_walk(d, n, seed)`."""
    return _random_trajectory
