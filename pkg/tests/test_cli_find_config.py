import importlib
import os

import pytest


def test_cli_find_cwd_config(tmp_path, monkeypatch):
    """Test that config.yaml is found in current working directory."""
    cli = importlib.import_module('neural_implicit_dict.cli')

    config_file = tmp_path / 'config.yaml'
    config_file.write_text('debug: False\nn_experts: 8\n')

    monkeypatch.chdir(tmp_path)
    assert cli._find_config_path(None) == os.path.join(str(tmp_path), 'config.yaml')


def test_cli_prefers_json_config(tmp_path, monkeypatch):
    """Test that config.json wins over config.yaml."""
    cli = importlib.import_module('neural_implicit_dict.cli')

    (tmp_path / 'config.yaml').write_text('n_experts: 8\n')
    (tmp_path / 'config.json').write_text('{"n_experts": 4}')

    monkeypatch.chdir(tmp_path)
    assert cli._find_config_path(None) == os.path.join(str(tmp_path), 'config.json')


def test_cli_find_explicit_config(tmp_path):
    """Test that explicit --config path works."""
    cli = importlib.import_module('neural_implicit_dict.cli')

    config_file = tmp_path / 'my_config.yaml'
    config_file.write_text('n_experts: 8\n')

    assert cli._find_config_path(str(config_file)) == str(config_file)


def test_cli_missing_explicit_config_raises_error(tmp_path):
    """Test that FileNotFoundError is raised for a missing --config file."""
    cli = importlib.import_module('neural_implicit_dict.cli')

    with pytest.raises(FileNotFoundError) as exc_info:
        cli._find_config_path(str(tmp_path / 'missing.yaml'))
    assert 'Config file not found' in str(exc_info.value)


def test_cli_without_config_uses_defaults(tmp_path, monkeypatch):
    """Test that no config file means built-in defaults."""
    cli = importlib.import_module('neural_implicit_dict.cli')

    monkeypatch.chdir(tmp_path)
    assert cli._find_config_path(None) is None
