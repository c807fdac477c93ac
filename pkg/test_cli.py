"""
Run configuration and the command line driver
"""
import numpy as np
import pytest

from app import create_parser, main
from config.run_config import RunConfig, load_run_config, parse_coefficient, parse_config_text
from models.exceptions import ConfigError
from services.report_service import read_table
from services.verification_service import VerificationService


def test_parse_config_text():
    values = parse_config_text("p = 2\nomega = 2.5   # frequency\n\neta-star = 20\nsquare = 3\n")
    assert values == {'p': 2, 'omega': 2.5, 'eta_star': '20', 'square': 3}


def test_unknown_key_reports_the_line():
    with pytest.raises(ConfigError, match='line 2'):
        parse_config_text("p = 1\ncolour = blue\n")


def test_invalid_value_reports_the_line():
    with pytest.raises(ConfigError, match='line 1'):
        parse_config_text("levels = many\n")


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text("p = 2\nlevels = 3\n")
    config = load_run_config(str(path), {'p': 3, 'levels': None})
    assert config.p == 3
    assert config.levels == 3


@pytest.mark.parametrize('options', [
    {'q': 1, 'p': 1},
    {'theta': 0.0},
    {'square': 1, 'lshape': 1},
    {'eta_star': '-4'},
    {'omega': 0.0},
    {'command': 'plot'},
])
def test_validation_errors(options):
    with pytest.raises(ConfigError):
        RunConfig(**options).validate()


def test_region_coefficient():
    nu = parse_coefficient('1 | 0:0.5,0:1=10', 'nu')
    values = nu(np.array([[0.25, 0.5], [0.75, 0.5]]))
    np.testing.assert_allclose(values, [10.0, 1.0])
    assert parse_coefficient('2.5', 'eps') == 2.5
    with pytest.raises(ConfigError):
        parse_coefficient('1 | 0:1=2', 'nu')
    with pytest.raises(ConfigError):
        parse_coefficient('0', 'nu')


def test_default_mesh_follows_the_problem():
    assert RunConfig(problem='lshape').build_mesh().num_cells == 6
    assert RunConfig(problem='trig').build_mesh().num_cells == 8


def test_every_command_is_registered():
    parser = create_parser()
    for command in ('solve', 'estimate', 'reconstruct', 'study-h', 'study-p', 'adapt', 'verify'):
        args = parser.parse_args([command])
        assert callable(args.handler)


def test_solve_writes_mesh_field_and_table(tmp_path):
    out = tmp_path / 'solve'
    assert main(['solve', '--square', '1', '--p', '1', '--problem', 'polynomial', '--out', str(out)]) == 0
    assert (out / 'mesh.txt').exists()
    assert (out / 'solution.txt').read_text().startswith('field 1 2 2')
    lines = (out / 'solve.csv').read_text().splitlines()
    assert lines[-1].startswith('# ')
    assert '"version"' in lines[-1]
    table = read_table(str(out / 'solve.csv'))
    assert len(table) == 1
    assert table['cells'].iloc[0] == 2


def test_estimate_reads_a_stored_field(tmp_path):
    first = tmp_path / 'first'
    main(['solve', '--square', '1', '--p', '1', '--out', str(first)])
    second = tmp_path / 'second'
    code = main(['estimate', '--mesh', str(first / 'mesh.txt'), '--field', str(first / 'solution.txt'),
                 '--out', str(second)])
    assert code == 0
    indicators = read_table(str(second / 'indicators.csv'))
    assert list(indicators['cell']) == [0, 1]


def test_reconstruct_writes_patch_table(tmp_path):
    assert main(['reconstruct', '--square', '1', '--p', '1', '--out', str(tmp_path)]) == 0
    assert (tmp_path / 'reconstruction.txt').read_text().startswith('nedelec 3 ')
    assert len(read_table(str(tmp_path / 'patches.csv'))) == 4
    summary = read_table(str(tmp_path / 'reconstruction.csv'))
    assert summary['interior_jump'].iloc[0] < 1e-9


def test_adapt_command(tmp_path):
    code = main(['adapt', '--problem', 'lshape', '--levels', '2', '--theta', '0.5', '--out', str(tmp_path)])
    assert code == 0
    assert len(read_table(str(tmp_path / 'adapt.csv'))) == 2


@pytest.mark.parametrize('arguments', [
    ['solve', '--square', '1', '--theta', '2'],
    ['solve', '--square', '1', '--lshape', '1'],
    ['solve', '--square', '1', '--p', '0'],
    ['solve', '--square', '1', '--problem', 'maxwell'],
])
def test_configuration_errors_exit_with_two(tmp_path, arguments):
    assert main(arguments + ['--out', str(tmp_path)]) == 2


def test_config_file(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text(f"square = 1\np = 1\nout = {tmp_path / 'from_file'}\n")
    assert main(['solve', '--config', str(path)]) == 0
    assert (tmp_path / 'from_file' / 'solve.csv').exists()


def test_unknown_command_is_an_argparse_error():
    with pytest.raises(SystemExit):
        main(['plot'])


def test_verify_exit_codes(tmp_path, monkeypatch):
    monkeypatch.setattr(VerificationService, 'checks', lambda self: [self.integration_by_parts])
    assert main(['verify', '--square', '1', '--out', str(tmp_path / 'ok')]) == 0
    code = main(['verify', '--square', '1', '--debug-flip-orientation', '--out', str(tmp_path / 'flipped')])
    assert code == 1
    table = read_table(str(tmp_path / 'flipped' / 'verify.csv'))
    failed = table.loc[~table['passed'], 'oracle'].tolist()
    assert failed == ['integration_by_parts']


def test_default_verify_passes_every_oracle(tmp_path):
    assert main(['verify', '--out', str(tmp_path)]) == 0
    table = read_table(str(tmp_path / 'verify.csv'))
    assert table['passed'].all(), table.loc[~table['passed'], ['oracle', 'value', 'detail']]
    for p in (1, 2, 3):
        for name in ('theorem_ratio_curl_h', 'theorem_ratio_l2_h', 'poincare_ratio_h'):
            assert f'{name}_p{p}' in set(table['oracle'])
    assert 'helmholtz_orthogonality' in set(table['oracle'])


def test_study_h_reruns_are_bitwise_identical(tmp_path):
    arguments = ['study-h', '--square', '1', '--p', '1', '--levels', '2', '--out', str(tmp_path)]
    assert main(arguments) == 0
    first = (tmp_path / 'study_h.csv').read_bytes()
    assert main(arguments) == 0
    assert (tmp_path / 'study_h.csv').read_bytes() == first


def test_verify_reruns_are_bitwise_identical(tmp_path, monkeypatch):
    monkeypatch.setattr(VerificationService, 'checks',
                        lambda self: [self.partition_of_unity, self.integration_by_parts,
                                      self.coercivity, self.conformity])
    arguments = ['verify', '--square', '1', '--seed', '7', '--out', str(tmp_path)]
    assert main(arguments) == 0
    first = (tmp_path / 'verify.csv').read_bytes()
    assert main(arguments) == 0
    assert (tmp_path / 'verify.csv').read_bytes() == first
