"""test the kprobe command line"""

import json
import math

import pytest
from click.testing import CliRunner

from cli import EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_OK, cli
from reporting.report_writer import read_csv


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **values):
    config = {'schema_version': 1, 'output_dir': 'out', **values}
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(config))
    return str(path)


def test_models_list(runner):
    result = runner.invoke(cli, ['models', 'list'])
    assert result.exit_code == EXIT_OK
    assert '  - decoupled-corank1-synthetic' in result.output


def test_probe_writes_artifacts(runner, tmp_path):
    config = write_config(tmp_path, model='decoupled-corank1-synthetic', points=[[0.3, math.exp(-2.0)]])
    result = runner.invoke(cli, ['probe', '--config', config])
    assert result.exit_code == EXIT_OK, result.output
    assert '✓' in result.output

    out = tmp_path / 'out'
    for name in ('probe.csv', 'probe.json', 'conditions.json', 'manifest.json'):
        assert (out / name).exists()
    frame = read_csv(out / 'probe.csv')
    assert frame['detHess'][0] == pytest.approx(math.exp(2.0) / 8.0, rel=1e-12)
    manifest = json.loads((out / 'manifest.json').read_text())
    assert set(manifest['artifacts']) == {'probe.csv', 'probe.json', 'conditions.json'}


def test_probe_point_option_and_curves(runner, tmp_path):
    config = write_config(tmp_path, model='pendulum-libration')
    result = runner.invoke(cli, ['probe', '--config', config, '--point', '0.1,0.5', '--dump-curves'])
    assert result.exit_code == EXIT_OK, result.output
    assert (tmp_path / 'out' / 'curve_point1_factor1.csv').exists()


def test_probe_control_model_exits_with_hypothesis_code(runner, tmp_path):
    config = write_config(tmp_path, model='control-condition3', points=[[0.3, 0.01]])
    result = runner.invoke(cli, ['probe', '--config', config])
    assert result.exit_code == EXIT_HYPOTHESIS
    assert 'fails conditions [3]' in result.output


@pytest.mark.parametrize('values, args', [
    ({'model': 'decoupled-corank1-synthetic'}, []),
    ({'model': 'decoupled-corank1-synthetic', 'schema_version': 7}, ['--point', '0.3,0.1']),
    ({'model': 'no-such-model'}, ['--point', '0.3,0.1']),
    ({'model': 'decoupled-corank1-synthetic'}, ['--point', '0.3']),
    ({'model': 'decoupled-corank1-synthetic'}, ['--point', '0.3,x']),
])
def test_probe_config_errors(runner, tmp_path, values, args):
    config = write_config(tmp_path, **values)
    result = runner.invoke(cli, ['probe', '--config', config] + args)
    assert result.exit_code == EXIT_CONFIG
    assert '✗ config error' in result.output


def test_probe_outside_corner_is_numerical_failure(runner, tmp_path):
    config = write_config(tmp_path, model='decoupled-corank1-synthetic', points=[[0.3, -0.1]])
    result = runner.invoke(cli, ['probe', '--config', config])
    assert result.exit_code == 1
    assert not (tmp_path / 'out' / 'probe.csv').exists()


def test_fit_action(runner, tmp_path):
    config = write_config(tmp_path, model='decoupled-corank1-saddle', fit={'f_max': 1e-3})
    result = runner.invoke(cli, ['fit-action', '--config', config])
    assert result.exit_code == EXIT_OK, result.output
    assert 'psi0 = -1.0000' in result.output

    record = json.loads((tmp_path / 'out' / 'fit_factor1.json').read_text())
    assert record['psi0'] == pytest.approx(-1.0, abs=1e-6)
    assert record['period_oracle']['psi0'] == pytest.approx(-1.0, abs=1e-6)
    assert (tmp_path / 'out' / 'fit_summary.txt').exists()


@pytest.mark.parametrize('model, psi0', [('duffing-outer', -2.0), ('pendulum-libration', 2.0)])
def test_fit_action_geometric(runner, tmp_path, model, psi0):
    config = write_config(tmp_path, model=model)
    result = runner.invoke(cli, ['fit-action', '--config', config])
    assert result.exit_code == EXIT_OK, result.output

    record = json.loads((tmp_path / 'out' / 'fit_factor1.json').read_text())
    assert record['psi0'] == pytest.approx(psi0, rel=1e-4)
    assert record['period_oracle']['psi0'] == pytest.approx(psi0, rel=1e-4)


def test_fit_action_unknown_option(runner, tmp_path):
    config = write_config(tmp_path, model='decoupled-corank1-synthetic', fit={'degree': 3})
    result = runner.invoke(cli, ['fit-action', '--config', config])
    assert result.exit_code == EXIT_CONFIG
    assert 'fit.degree' in result.output


def test_verify_holds(runner, tmp_path):
    config = write_config(
        tmp_path,
        model='decoupled-corank1-synthetic',
        path={'smooth': [0.3], 't_min': 1e-8, 't_max': 1e-3, 'points': 20},
        verify={'samples': 100},
        seed=3,
    )
    result = runner.invoke(cli, ['verify', '--config', config])
    assert result.exit_code == EXIT_OK, result.output
    assert 'verdict kolmogorov-holds' in result.output

    out = tmp_path / 'out'
    record = json.loads((out / 'verify.json').read_text())
    assert record['verdict'] == 'kolmogorov-holds'
    assert record['scaling']['g_estimate'] == pytest.approx(-1.0, rel=1e-10)
    assert record['sampled']['seed'] == 3
    assert len(read_csv(out / 'scaling.csv')) == 20


def test_verify_command_line_overrides(runner, tmp_path):
    config = write_config(tmp_path, model='decoupled-corank2-synthetic', path={'smooth': [0.1]}, verify={'samples': 100})
    result = runner.invoke(cli, ['verify', '--config', config, '--path-spec', '1,2', '--tmin', '1e-7', '--points', '15'])
    assert result.exit_code == EXIT_OK, result.output
    record = json.loads((tmp_path / 'out' / 'verify.json').read_text())
    assert record['scaling']['path']['coefficients'] == [1.0, 2.0]
    assert record['scaling']['path']['points'] == 15
    assert record['scaling']['g_estimate'] == pytest.approx(1.0, rel=1e-9)


def test_verify_control_model(runner, tmp_path):
    config = write_config(tmp_path, model='control-condition4', path={'smooth': [0.3]}, verify={'samples': 100})
    result = runner.invoke(cli, ['verify', '--config', config])
    assert result.exit_code == EXIT_HYPOTHESIS
    assert 'witness: condition 4' in result.output


def test_verify_condition3_control_model(runner, tmp_path):
    config = write_config(tmp_path, model='control-condition3', path={'smooth': [0.3]}, verify={'samples': 100})
    result = runner.invoke(cli, ['verify', '--config', config])
    assert result.exit_code == EXIT_HYPOTHESIS
    assert 'witness: condition 3' in result.output
    record = json.loads((tmp_path / 'out' / 'verify.json').read_text())
    assert record['verdict'] == 'hypothesis-violated'
    assert record['scaling']['verdict'] == 'hypothesis-violated'


def test_verify_geometric_model(runner, tmp_path):
    config = write_config(tmp_path, model='duffing-outer', verify={'samples': 100})
    result = runner.invoke(cli, ['verify', '--config', config])
    assert result.exit_code == EXIT_OK, result.output
    record = json.loads((tmp_path / 'out' / 'verify.json').read_text())
    assert record['scaling']['g_estimate'] == pytest.approx(-0.25, rel=0.02)
    assert record['scaling']['g_method'] == 'log-extrapolated'


def test_trace(runner, tmp_path):
    config = write_config(tmp_path, model='duffing-outer')
    result = runner.invoke(cli, ['trace', '--config', config, '--factor', '1', '--level', '0', '--separatrix'])
    assert result.exit_code == EXIT_OK, result.output
    frame = read_csv(tmp_path / 'out' / 'curve_factor1.csv')
    assert list(frame.columns) == ['branch', 'q', 'p']
    assert set(frame['branch']) == {0, 1}

    result = runner.invoke(cli, ['trace', '--config', config, '--factor', '3', '--level', '0.1'])
    assert result.exit_code == EXIT_CONFIG


def test_log_level_option(runner):
    result = runner.invoke(cli, ['--log-level', 'loud', 'models', 'list'])
    assert result.exit_code == 2
