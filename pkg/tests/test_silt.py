import numpy as np
import pytest
from pydantic import ValidationError

from silt_lab.exceptions import DomainError
from silt_lab.silt import (LevelSetParams, LocalTimeField, band_contributions, band_edges, band_pigeonhole_audit,
                           batch_silt_range, check_jensen, intersection_count, level_band, level_set, local_times,
                           restricted_silt, self_intersection_pairs, silt, site_keys, sorted_runs)
from silt_lab.walk import Trajectory


def test_silt_from_counts():
    field = LocalTimeField.from_dict({(0,): 3, (1,): 2})
    assert silt(field) == 13
    assert field.horizon == 4


def test_single_site_path():
    field = local_times(Trajectory.from_sites([[0, 0, 0]]))
    assert silt(field) == 1
    assert field.range_size == 1


def test_back_and_forth(back_and_forth):
    field = local_times(back_and_forth)
    assert field.as_dict() == {(0,): 3, (1,): 2}
    assert field.total_mass == 5
    assert silt(field) == 13


def test_straight_line(straight_line):
    summary = local_times(straight_line).summary()
    assert summary.silt == 5
    assert summary.range == 5
    assert check_jensen(summary)


def test_silt_counts_ordered_pairs(make_walk):
    traj = make_walk(2, 300, seed=5)
    field = local_times(traj)
    assert silt(field) == (traj.steps + 1) + 2 * self_intersection_pairs(traj)


def test_jensen_on_random_walks(make_walk):
    for seed in range(20):
        assert check_jensen(local_times(make_walk(3, 256, seed)).summary())


def test_batch_matches_single_walks(make_walk):
    walks = [make_walk(3, 128, seed) for seed in range(8)]
    silts, ranges = batch_silt_range(np.stack([w.sites for w in walks]))
    for traj, s, r in zip(walks, silts, ranges):
        field = local_times(traj)
        assert s == silt(field)
        assert r == field.range_size


def test_count_at_unvisited_site(back_and_forth):
    field = local_times(back_and_forth)
    assert field.count_at(np.array([[0], [1], [5], [-1]])).tolist() == [3, 2, 0, 0]


class TestLevelSets:
    def test_level_set_is_strict(self, back_and_forth):
        field = local_times(back_and_forth)
        assert level_set(field, 2).tolist() == [[0]]
        assert level_set(field, 3).tolist() == []

    def test_level_zero_is_the_range(self, straight_line):
        field = local_times(straight_line)
        assert len(level_set(field, 0)) == field.range_size

    def test_negative_level(self, back_and_forth):
        with pytest.raises(DomainError):
            level_set(local_times(back_and_forth), -1)

    def test_band_is_half_open(self, back_and_forth):
        field = local_times(back_and_forth)
        assert level_band(field, 2, 3).tolist() == [[1]]
        assert level_band(field, 1, 4).tolist() == [[0], [1]]

    def test_empty_band(self, back_and_forth):
        with pytest.raises(DomainError):
            level_band(local_times(back_and_forth), 3, 3)

    def test_restricted_silt(self, back_and_forth):
        field = local_times(back_and_forth)
        assert restricted_silt(field, np.array([[1], [1], [7]])) == 4
        assert restricted_silt(field, np.empty((0, 1))) == 0

    def test_bands_cover_silt(self, make_walk):
        field = local_times(make_walk(1, 2000, seed=2))
        edges = band_edges(11, chi_low=1.0, alpha=0.5)
        assert sum(band_contributions(field, edges)) == silt(field)

    def test_pigeonhole_audit_passes(self, make_walk):
        edges = band_edges(10, chi_low=0.5, alpha=0.5)
        for seed in range(10):
            field = local_times(make_walk(1, 1024, seed))
            assert band_pigeonhole_audit(field, edges, y=2.0)

    def test_band_edges_increase(self):
        edges = band_edges(12, chi_low=1.0, alpha=0.3)
        assert edges[0] == 1.0
        assert edges[-1] == pytest.approx(2.0 ** 4)
        assert all(a < b for a, b in zip(edges, edges[1:]))

    def test_params_validation(self):
        assert LevelSetParams(z=2, delta=0.5).z == 2
        with pytest.raises(ValidationError):
            LevelSetParams(delta=1.0)
        with pytest.raises(ValidationError):
            LevelSetParams(band=(3, 1))


def test_intersection_count(back_and_forth, straight_line):
    a, b = local_times(back_and_forth), local_times(straight_line)
    assert intersection_count(a, b) == 3 * 1 + 2 * 1
    assert intersection_count(a, b) == intersection_count(b, a)


def test_site_keys_shared_encoding():
    first = np.array([[0, 0], [2, -1]])
    second = np.array([[2, -1], [5, 5]])
    keys_a, keys_b = site_keys(first, second)
    assert keys_a[1] == keys_b[0]
    assert keys_a[0] != keys_b[1]


def test_site_keys_far_apart_sites():
    far = np.array([[0, 0, 0], [2 ** 40, -2 ** 40, 2 ** 40], [0, 0, 0]])
    (keys,) = site_keys(far)
    assert keys[0] == keys[2] != keys[1]


def test_sorted_runs():
    runs = sorted_runs(np.array([[4, 1, 4, 4], [2, 2, 2, 2]]))
    assert sorted(runs[0].tolist()) == [0, 0, 1, 3]
    assert runs[1].tolist() == [4, 0, 0, 0]
