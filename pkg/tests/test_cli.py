import csv
import json

import pytest

from silt_lab.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, build_parser, main, read_config_file


@pytest.fixture
def out(output_dir):
    return ['--output-dir', str(output_dir)]


def _rows(path):
    return [json.loads(line) for line in open(path, encoding='utf-8')]


def test_zeta_writes_results(output_dir, out, capsys):
    assert main(['zeta', '--alpha', '2', '--beta', '0.8', *out]) == EXIT_OK
    (row,) = _rows(output_dir / 'zeta.jsonl')
    assert row['region'] == 'III'
    assert row['zeta'] == pytest.approx(0.44)
    assert (output_dir / 'zeta.csv').exists()
    manifest = json.load(open(output_dir / 'zeta.run.json', encoding='utf-8'))
    assert manifest['record_count'] == 1
    assert 'finished' in (output_dir / 'logs' / 'silt-lab.log').read_text(encoding='utf-8')
    assert '1 records written to' in capsys.readouterr().out


def test_identical_runs_write_identical_files(tmp_path):
    args = ['tail', '--d', '3', '--n', '64', '--y', '2', '--samples', '500', '--seed', '11', '--chunk-size', '64']
    for name in ('a', 'b'):
        assert main([*args, '--output-dir', str(tmp_path / name)]) == EXIT_OK
    for suffix in ('csv', 'jsonl'):
        first = (tmp_path / 'a' / f'tail.{suffix}').read_bytes()
        assert first == (tmp_path / 'b' / f'tail.{suffix}').read_bytes()


def test_invalid_config_exits_with_2(out, capsys):
    assert main(['walk', '--d', '9', *out]) == EXIT_CONFIG
    assert capsys.readouterr().err.startswith('silt-lab: error: d:')


def test_domain_error_exits_with_2(output_dir, out, capsys):
    assert main(['tail', '--y', '0.5', '--samples', '10', *out]) == EXIT_CONFIG
    assert 'y must be > 1' in capsys.readouterr().err
    assert 'ERROR in tail' in (output_dir / 'logs' / 'silt-lab.log').read_text(encoding='utf-8')


def test_budget_exits_with_3(out):
    args = ['oracle', '--quantity', 'table', '--d', '3', '--n', '400', '--memory-mb', '1', *out]
    assert main(args) == EXIT_BUDGET


class TestConfigFile:
    def test_flags_win(self, tmp_path, output_dir, out):
        path = tmp_path / 'zeta.cfg'
        path.write_text('# region III\nalpha = 2\nbeta=0.7\n\nstem=from-file\n', encoding='utf-8')
        assert main(['zeta', '--config', str(path), '--beta', '0.8', *out]) == EXIT_OK
        (row,) = _rows(output_dir / 'from-file.jsonl')
        assert row['beta'] == 0.8
        assert row['alpha'] == 2

    def test_keys_and_lists(self, tmp_path):
        path = tmp_path / 'sweep.cfg'
        path.write_text('n-values=2^9..2^11\nchunk-size=512\nnorm=sup\n', encoding='utf-8')
        assert read_config_file(str(path)) == {'n_values': '2^9..2^11', 'chunk_size': 512, 'norm': 'sup'}

    def test_malformed_line(self, tmp_path, out):
        path = tmp_path / 'bad.cfg'
        path.write_text('alpha 2\n', encoding='utf-8')
        assert main(['zeta', '--config', str(path), *out]) == EXIT_CONFIG

    def test_missing_file(self, tmp_path, out):
        assert main(['zeta', '--config', str(tmp_path / 'nothing.cfg'), *out]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path, out):
        path = tmp_path / 'extra.cfg'
        path.write_text('colour=blue\n', encoding='utf-8')
        assert main(['zeta', '--config', str(path), *out]) == EXIT_CONFIG


def test_unset_flags_are_left_out():
    args = vars(build_parser().parse_args(['tail', '--y', '3']))
    assert args == {'command': 'tail', 'y': 3.0}


def test_threshold_alias():
    args = vars(build_parser().parse_args(['decompose', '--threshold', '4,8']))
    assert args['thresholds'] == '4,8'


def test_report_prints_the_summary(output_dir, out, capsys):
    assert main(['zeta', '--alpha', '1', '--beta', '0.6', *out]) == EXIT_OK
    capsys.readouterr()
    assert main(['report', *out]) == EXIT_OK
    printed = capsys.readouterr().out
    assert 'zeta' in printed and 'mean_zeta' in printed
    assert (output_dir / 'report.csv').exists()


def test_exit_times_are_written_as_integers(output_dir, out):
    args = ['walk', '--d', '1', '--n', '6', '--r', '2', '--norm', 'sup', '--seed', '3', '--samples', '20', *out]
    assert main(args) == EXIT_OK
    with open(output_dir / 'walk.csv', encoding='utf-8', newline='') as fh:
        exit_times = [row['exit_time'] for row in csv.DictReader(fh)]
    assert any(exit_times)
    assert all(value == '' or value.isdigit() for value in exit_times)
    assert [row['exit_time'] for row in _rows(output_dir / 'walk.jsonl')] == [int(v) if v else None
                                                                             for v in exit_times]


def test_band_and_table_flags():
    args = vars(build_parser().parse_args(['decompose', '--chi-low', '0.5', '--band-alpha', '0.25', '--y', '2']))
    assert args == {'command': 'decompose', 'chi_low': 0.5, 'band_alpha': 0.25, 'y': 2.0}
    args = vars(build_parser().parse_args(['oracle', '--quantity', 'table', '--final-slices']))
    assert args['full_table'] is False
