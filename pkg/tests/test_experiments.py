import csv
import json
import os

import pytest
from pydantic import ValidationError

from silt_lab import __version__
from silt_lab.cache import TableCache
from silt_lab.exceptions import DomainError
from silt_lab.experiments import ExperimentConfig, run, table_cache
from silt_lab.pandas import write_records


class TestConfig:
    def test_decompose_derives_depth(self, output_dir):
        assert ExperimentConfig(command='decompose', n=1024).N == 10
        config = ExperimentConfig(command='decompose', N=3)
        assert config.n == 8

    def test_decompose_needs_a_power_of_two(self, output_dir):
        with pytest.raises(ValidationError):
            ExperimentConfig(command='decompose', n=1000)

    def test_sweep_needs_three_points(self, output_dir):
        with pytest.raises(ValidationError):
            ExperimentConfig(command='sweep', n_values='16,32')

    def test_lists_from_strings(self, output_dir):
        config = ExperimentConfig(command='sweep', n_values='2^4..2^6', z='2,4')
        assert config.n_values == [16, 32, 64]
        assert config.z == [2.0, 4.0]

    @pytest.mark.parametrize('kwargs', [dict(delta='0.5,1.5'), dict(thresholds='0.5'), dict(d=9), dict(samples=0),
                                        dict(seed=2 ** 64), dict(eps0=1.0), dict(unknown=1),
                                        dict(chi_low=0.0), dict(band_alpha=-1.0)])
    def test_rejected(self, output_dir, kwargs):
        with pytest.raises(ValidationError):
            ExperimentConfig(command='tail', **kwargs)

    def test_output_dir_from_env(self, output_dir):
        assert ExperimentConfig(command='walk').output_dir == str(output_dir)

    def test_echo_leaves_out_output_locations(self, output_dir):
        echo = json.loads(ExperimentConfig(command='walk', stem='w', cache_dir='/tmp/cache').echo())
        assert 'output_dir' not in echo and 'stem' not in echo and 'cache_dir' not in echo
        assert echo['command'] == 'walk'

    def test_output_stem(self, output_dir):
        assert ExperimentConfig(command='oracle', quantity='eigen').output_stem == 'oracle_eigen'
        assert ExperimentConfig(command='sweep', n_values='1,2,3', target='levels').output_stem == 'sweep_levels'
        assert ExperimentConfig(command='tail', stem='mine').output_stem == 'mine'

    def test_ball(self, output_dir):
        assert ExperimentConfig(command='confine', r=2.0).ball().radius == 2.0
        ball = ExperimentConfig(command='confine', n=216, ball_factor=8).ball()
        assert ball.cardinality(3) >= 27


def test_cache_backend(output_dir, tmp_path):
    config = ExperimentConfig(command='oracle', cache_dir=str(tmp_path / 'cache'))
    assert table_cache(config)._config.cache_type == 'FileCache'
    assert table_cache(ExperimentConfig(command='oracle'))._config.cache_type == 'SimpleCache'


class TestRun:
    def test_zeta_record(self, output_dir):
        (record,) = run(ExperimentConfig(command='zeta', alpha=2.0, beta=0.8))
        assert list(record)[:3] == ['record_type', 'command', 'version']
        assert list(record)[-1] == 'config'
        assert (record['record_type'], record['command'], record['version']) == ('result', 'zeta', __version__)
        assert record['region'] == 'III'
        assert record['zeta'] == pytest.approx(0.44)
        assert record['cond_i'] and record['cond_ii']

    def test_zeta_out_of_scope(self, output_dir):
        (record,) = run(ExperimentConfig(command='zeta', alpha=2.0, beta=1.0))
        assert record['region'] == 'IV_out_of_scope'
        assert record['zeta'] is None
        assert 'b' not in record

    def test_walk_records(self, output_dir):
        records = list(run(ExperimentConfig(command='walk', d=2, n=100, samples=30, chunk_size=8)))
        assert [r['sample'] for r in records] == list(range(30))
        assert all(r['jensen_pass'] for r in records)
        assert all(r['exit_time'] is None and r['survived'] is None for r in records)

    def test_walk_exit_times(self, output_dir):
        records = list(run(ExperimentConfig(command='walk', d=1, n=200, samples=20, r=3.0)))
        for r in records:
            assert r['survived'] == (r['exit_time'] is None)
            assert r['survived'] or 4 <= r['exit_time'] <= 200

    def test_decompose_checks_pass(self, output_dir):
        config = ExperimentConfig(command='decompose', d=3, N=8, samples=5, thresholds='2,8', chunk_size=2)
        records = list(run(config))
        assert len(records) == 10
        for r in records:
            assert r['identity_residual'] == 0
            assert r['legall_pass'] and r['truncated_pass'] and r['l0_pass']
            assert r['inclusion_pass'] and r['cset_pass'] and r['jensen_pass']
            assert r['inclusion_violations'] == 0

    def test_tail_invariant_to_worker_count(self, output_dir):
        estimates = []
        for workers in (1, 3):
            (record,) = run(ExperimentConfig(command='tail', d=3, n=64, y=2.0, samples=900, chunk_size=100,
                                             workers=workers, seed=5))
            estimates.append((record['hits'], record['p_hat'], record['stderr']))
        assert estimates[0] == estimates[1]

    def test_tail_rejects_small_y(self, output_dir):
        with pytest.raises(DomainError):
            list(run(ExperimentConfig(command='tail', y=0.5, samples=10)))

    def test_range_tail(self, output_dir):
        (record,) = run(ExperimentConfig(command='tail', event='range', d=1, n=256, y=4.0, samples=500))
        assert record['audit_violations'] == 0

    def test_joint_tail(self, output_dir):
        (record,) = run(ExperimentConfig(command='tail', event='joint', d=3, n=64, y=2.0, samples=200))
        assert record['p_hat'] == record['hits'] / 200

    def test_survival_is_cached(self, output_dir):
        cache = TableCache()
        config = ExperimentConfig(command='oracle', quantity='survival', d=2, n=50, r=2.0)
        first = list(run(config, cache))
        second = list(run(config, cache))
        assert first == second
        assert (cache.hits, cache.misses) == (1, 1)

    def test_table_is_exported(self, output_dir):
        (record,) = run(ExperimentConfig(command='oracle', quantity='table', d=2, n=6))
        assert record['table_file'] == 'oracle_table.table.bin'
        assert os.path.exists(output_dir / 'oracle_table.table.bin')
        assert record['mass_at_n'] == pytest.approx(1.0)

    def test_decompose_band_records(self, output_dir):
        config = ExperimentConfig(command='decompose', d=3, N=10, samples=3, thresholds='4,1024', chi_low=0.5,
                                  band_alpha=0.5, y=1.0)
        records = list(run(config))
        assert len(records) == 6
        for r in records:
            assert r['bands'] == 4
            assert sum(r[f'band_silt_{i}'] for i in range(r['bands'])) == r['silt']
            assert sum(r[f'band_j_{i}'] for i in range(r['bands'])) == r['j_total']
            assert r['band_audit_pass']

    def test_decompose_without_bands(self, output_dir):
        (record,) = run(ExperimentConfig(command='decompose', d=2, N=4, samples=1))
        assert 'bands' not in record and 'band_j_0' not in record

    def test_table_final_slices(self, output_dir):
        (record,) = run(ExperimentConfig(command='oracle', quantity='table', d=2, n=6, full_table=False))
        assert record['table_file'] is None
        assert record['slices'] == 2
        assert record['mass_at_n'] == pytest.approx(1.0)
        assert not os.path.exists(output_dir / 'oracle_table.table.bin')

    def test_enumerate_summary(self, output_dir):
        records = list(run(ExperimentConfig(command='oracle', quantity='enumerate', d=1, n=2)))
        summary = records[-1]
        assert summary['record_type'] == 'summary'
        assert summary['paths'] == 4
        assert summary['mean_silt'] == pytest.approx(summary['expected_silt'])
        assert sum(r['probability'] for r in records[:-1]) == pytest.approx(1.0)

    def test_ld_bound(self, output_dir):
        (record,) = run(ExperimentConfig(command='oracle', quantity='ld_bound', n=100, samples=2000, x_n=40.0))
        assert record['bound_pass']
        assert record['x_n'] == 40.0

    @pytest.mark.slow
    def test_ld_bound_at_a_tuned_level(self, output_dir):
        config = ExperimentConfig(command='oracle', quantity='ld_bound', n=10_000, samples=100_000, level=1e-3)
        (record,) = run(config)
        assert record['p_hat'] == pytest.approx(1e-3, abs=5e-4)
        assert record['bound_pass']

    def test_confine(self, output_dir):
        (record,) = run(ExperimentConfig(command='confine', d=1, n=64, r=3.0, samples=100))
        assert record['ball_size'] == 7
        assert record['audit_violations'] == 0
        assert record['log_survival'] < 0

    def test_rwrs_tails(self, output_dir):
        records = list(run(ExperimentConfig(command='rwrs', n=64, samples=200, alpha=1.0, beta=0.6, y=1.0)))
        assert [r['side'] for r in records] == ['upper', 'lower']
        assert all(r['region'] == 'I' and r['audit_violations'] == 0 for r in records)


class TestSweeps:
    def test_synthetic(self, output_dir):
        records = list(run(ExperimentConfig(command='sweep', target='synthetic', n_values='2^9..2^15')))
        fit = records[-1]
        assert fit['record_type'] == 'fit'
        assert fit['exponent'] == pytest.approx(1 / 3, abs=1e-9)
        assert all(r['target'] == 'synthetic' for r in records)

    def test_intersection_scaling(self, output_dir):
        records = list(run(ExperimentConfig(command='sweep', target='intersection', d=3, n_values='16,32,64')))
        assert records[-1]['ratio_spread'] <= 2

    def test_csv_keeps_integer_horizons(self, output_dir):
        records = list(run(ExperimentConfig(command='sweep', target='intersection', d=3, n_values='16,32,64')))
        csv_path, _ = write_records(records, str(output_dir), 'sweep_intersection')
        with open(csv_path, encoding='utf-8', newline='') as fh:
            assert [row['n'] for row in csv.DictReader(fh)] == ['16', '32', '64', '']

    def test_survival_rate(self, output_dir):
        config = ExperimentConfig(command='sweep', target='survival', d=1, r=1.0, norm='sup', n_values='20,40,60,80')
        fit = list(run(config))[-1]
        assert fit['rate'] == pytest.approx(fit['neg_log_eigenvalue'], rel=1e-6)

    def test_tail_sweep(self, output_dir):
        config = ExperimentConfig(command='sweep', target='tail', d=3, y=1.5, samples=300, n_values='16,32,64')
        records = list(run(config))
        assert len(records) == 4
        assert records[-1]['record_type'] == 'fit'


def test_report(output_dir):
    write_records([{'record_type': 'result', 'command': 'tail', 'p_hat': 0.5}], str(output_dir), 'tail')
    (record,) = run(ExperimentConfig(command='report'))
    assert record['record_type'] == 'summary'
    assert record['file'] == 'tail'
    assert record['records'] == 1
    assert record['mean_p_hat'] == 0.5
