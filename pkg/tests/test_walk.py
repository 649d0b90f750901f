import math

import numpy as np
import pytest

from silt_lab.exceptions import BudgetExceededError, DomainError, TrajectoryError
from silt_lab.oracle import survival_prob
from silt_lab.walk import (SURVIVED, BallSpec, RngStream, Trajectory, batch_exit_times, exit_time, simulate_walk,
                           simulate_walks, steps_to_sites, unit_moves)


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(7, 3).generator().integers(0, 1000, size=20)
        b = RngStream(7, 3).generator().integers(0, 1000, size=20)
        assert np.array_equal(a, b)

    def test_substreams_differ(self, rng):
        a = rng.substream(0).generator().random(10)
        b = rng.substream(1).generator().random(10)
        assert not np.array_equal(a, b)

    def test_substream_offsets_stream_index(self):
        assert RngStream(5, 10).substream(3) == RngStream(5, 13)

    @pytest.mark.parametrize('seed', [-1, 2 ** 64, 1.5])
    def test_invalid_seed(self, seed):
        with pytest.raises(DomainError):
            RngStream(seed)


class TestSimulateWalk:
    def test_zero_steps(self, rng):
        traj = simulate_walk(3, 0, rng)
        assert traj.steps == 0
        assert traj.site(0) == (0, 0, 0)

    def test_one_step_is_a_unit_vector(self, rng):
        traj = simulate_walk(3, 1, rng)
        assert np.abs(traj.sites[1]).sum() == 1

    def test_reproducible(self):
        a = simulate_walk(3, 500, RngStream(11))
        b = simulate_walk(3, 500, RngStream(11))
        assert np.array_equal(a.sites, b.sites)

    def test_is_a_valid_path(self, rng):
        traj = simulate_walk(2, 1000, rng)
        traj.validate()
        assert len(traj) == 1001

    def test_sites_are_read_only(self, rng):
        traj = simulate_walk(1, 10, rng)
        with pytest.raises(ValueError):
            traj.sites[0, 0] = 5

    @pytest.mark.parametrize('d', [0, 9])
    def test_dimension_out_of_range(self, rng, d):
        with pytest.raises(DomainError):
            simulate_walk(d, 10, rng)

    def test_negative_horizon(self, rng):
        with pytest.raises(DomainError):
            simulate_walk(3, -1, rng)

    def test_budget_refusal(self, rng):
        with pytest.raises(BudgetExceededError):
            simulate_walk(3, 10 ** 7, rng, memory_mb=1)

    def test_step_frequencies(self, generator):
        walks = simulate_walks(2, 1, 40_000, generator)
        steps = walks[:, 1, :]
        for move in unit_moves(2):
            share = (steps == move).all(axis=1).mean()
            assert share == pytest.approx(0.25, abs=0.01)


class TestTrajectory:
    def test_rejects_non_neighbour_steps(self):
        with pytest.raises(TrajectoryError):
            Trajectory.from_sites([[0], [2]])

    def test_rejects_paths_not_at_origin(self):
        with pytest.raises(TrajectoryError):
            Trajectory.from_sites([[1], [2]])

    def test_unvalidated_paths_are_kept(self):
        traj = Trajectory.from_sites([[0, 0], [3, 3]], validate=False)
        assert traj.site(1) == (3, 3)

    def test_steps_to_sites(self):
        sites = steps_to_sites(np.array([0, 0, 1, 2]), 2)
        assert sites.tolist() == [[0, 0], [1, 0], [2, 0], [1, 0], [1, 1]]


class TestBallAndExit:
    def test_sup_ball_cardinality(self):
        assert BallSpec(1.0, 'sup').cardinality(3) == 27

    def test_euclidean_ball_cardinality(self):
        assert BallSpec(1.0).cardinality(3) == 7
        assert BallSpec(2 ** 0.5).cardinality(2) == 9

    def test_interior_sites_are_lexicographic(self):
        sites = BallSpec(1.0).interior_sites(2)
        assert [tuple(s) for s in sites] == sorted(tuple(s) for s in sites)

    def test_negative_radius(self):
        with pytest.raises(DomainError):
            BallSpec(-1.0)

    def test_exit_time(self, straight_line):
        assert exit_time(straight_line, BallSpec(2.0)) == 3

    def test_radius_zero_exits_at_first_step(self, straight_line):
        assert exit_time(straight_line, BallSpec(0.0)) == 1

    def test_survives(self, back_and_forth):
        assert exit_time(back_and_forth, BallSpec(1.0)) is SURVIVED

    def test_batch_exit_times(self, straight_line, back_and_forth):
        walks = np.stack([straight_line.sites, back_and_forth.sites])
        assert batch_exit_times(walks, BallSpec(1.0)).tolist() == [2, -1]

    @pytest.mark.slow
    def test_survival_frequency_matches_the_oracle(self, generator):
        ball = BallSpec(3.0)
        walks = simulate_walks(2, 20, 20_000, generator)
        times = batch_exit_times(walks, ball)
        assert all((exit_time(Trajectory(w), ball) is SURVIVED) == (t == -1) for w, t in zip(walks[:500], times))
        exact = survival_prob(2, 20, ball)
        assert 0.01 < exact < 0.99
        assert abs((times == -1).mean() - exact) <= 4 * math.sqrt(exact * (1 - exact) / len(walks))
