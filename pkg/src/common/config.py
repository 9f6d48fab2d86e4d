"""
configuration module
loads default tolerances from yaml, environment from .env, and run configs from json
"""

import json
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml
from dotenv import load_dotenv

from common.errors import ConfigError

load_dotenv()

REPO_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG = REPO_ROOT / 'config' / 'config.yaml'
MODELS_DIR = REPO_ROOT / 'config' / 'models'

SCHEMA_VERSION = 1

LOG_LEVELS = {
    'error': logging.ERROR,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}


@dataclass(frozen=True)
class Settings:
    """numerical tolerances and parameters shared by all modules"""

    tol_nonzero: float = 1e-9
    g_tol: float = 0.02
    fit_tol: float = 1e-6
    cross_tol: float = 1e-6
    sym_tol: float = 1e-4
    quad_tol: float = 1e-13
    max_levels: int = 14
    trace_tol: float = 1e-10
    max_step: float = 1e-2
    angle_step: float = 0.1
    root_tol: float = 1e-13
    h_u: float = 1e-4
    h_rel: float = 1e-4
    f_floor: float = 1e-12
    closed_form: bool = True
    fit_degree: int = 2
    max_degree: int = 8
    tail_min: int = 10
    workers: int = 1

    def override(self, values):
        """
        return a copy with some values replaced

        args:
            values: mapping of setting name to new value

        returns:
            new Settings instance
        """
        if not values:
            return self

        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown tolerance '{key}'", field=f'tolerances.{key}')

            current = getattr(self, key)
            if isinstance(current, bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"'{key}' must be true or false", field=f'tolerances.{key}')
                changes[key] = value
                continue

            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"'{key}' must be a number", field=f'tolerances.{key}')
            if value <= 0:
                raise ConfigError(f"'{key}' must be positive, got {value}", field=f'tolerances.{key}')
            changes[key] = int(value) if isinstance(current, int) else float(value)

        return replace(self, **changes)


def load_settings(path=None, overrides=None):
    """
    load default settings from the yaml file

    args:
        path: optional yaml path, defaults to KPROBE_CONFIG or config/config.yaml
        overrides: optional mapping applied on top of the file values

    returns:
        Settings instance
    """
    path = Path(path or os.getenv('KPROBE_CONFIG') or DEFAULT_CONFIG)
    settings = Settings()

    if path.exists():
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"defaults file {path} must be a mapping")
        settings = settings.override(data)

    return settings.override(overrides)


def setup_logging(level=None):
    """
    configure the root logger from KPROBE_LOG

    args:
        level: optional level name overriding the environment
    """
    name = (level or os.getenv('KPROBE_LOG') or 'error').lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"KPROBE_LOG must be one of {sorted(LOG_LEVELS)}, got '{name}'", field='KPROBE_LOG')

    logging.basicConfig(
        level=LOG_LEVELS[name],
        format='%(levelname)s %(name)s: %(message)s',
        force=True,
    )


@dataclass(frozen=True)
class RunConfig:
    """one batch run: model, command parameters, output location"""

    model_spec: dict
    settings: Settings
    output_dir: Path
    seed: int = 0
    points: tuple = ()
    fit: dict = None
    path: dict = None
    verify: dict = None
    source: Path = None


def list_catalog_models():
    """names of the models shipped in config/models"""
    return sorted(p.stem for p in MODELS_DIR.glob('*.json'))


def load_catalog_model(name):
    """
    read a named model spec from config/models

    args:
        name: model name (file stem)

    returns:
        model spec dict
    """
    path = MODELS_DIR / f'{name}.json'
    if not path.exists():
        raise ConfigError(f"unknown catalog model '{name}', available: {list_catalog_models()}", field='model')
    with open(path) as f:
        return json.load(f)


def _require_mapping(data, key):
    value = data.get(key)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be an object", field=key)
    return value


def parse_run_config(data, base_dir=None, settings=None):
    """
    validate a run config document

    args:
        data: decoded json document
        base_dir: directory that relative paths are resolved against
        settings: defaults to override, loaded from yaml if omitted

    returns:
        RunConfig
    """
    if not isinstance(data, dict):
        raise ConfigError("run config must be a json object")

    base_dir = Path(base_dir or '.')

    version = data.get('schema_version')
    if version is None:
        raise ConfigError("missing 'schema_version'", field='schema_version')
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}", field='schema_version')

    # model: inline object, catalog name, or file
    if 'model' in data and 'model_file' in data:
        raise ConfigError("give either 'model' or 'model_file', not both", field='model')
    if 'model' in data:
        model = data['model']
        if isinstance(model, str):
            model_spec = load_catalog_model(model)
        elif isinstance(model, dict):
            model_spec = model
        else:
            raise ConfigError("'model' must be an object or a catalog model name", field='model')
    elif 'model_file' in data:
        model_path = base_dir / data['model_file']
        if not model_path.exists():
            raise ConfigError(f"model file not found: {model_path}", field='model_file')
        with open(model_path) as f:
            try:
                model_spec = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"model file is not valid json: {e}", field='model_file')
    else:
        raise ConfigError("missing 'model' or 'model_file'", field='model')

    settings = (settings or load_settings()).override(_require_mapping(data, 'tolerances'))

    points = data.get('points', [])
    if not isinstance(points, list) or not all(isinstance(p, list) for p in points):
        raise ConfigError("'points' must be a list of coordinate lists", field='points')
    for point in points:
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in point):
            raise ConfigError("'points' entries must be numbers", field='points')

    seed = data.get('seed', 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer", field='seed')

    output_dir = Path(data.get('output_dir', 'kprobe_out'))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir

    return RunConfig(
        model_spec=model_spec,
        settings=settings,
        output_dir=output_dir,
        seed=seed,
        points=tuple(tuple(float(v) for v in p) for p in points),
        fit=_require_mapping(data, 'fit'),
        path=_require_mapping(data, 'path'),
        verify=_require_mapping(data, 'verify'),
        source=None,
    )


def load_run_config(path, settings=None):
    """
    read and validate a run config file

    args:
        path: path to the json config

    returns:
        RunConfig
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", field='config')

    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid json: {e}", field='config')

    config = parse_run_config(data, base_dir=path.parent, settings=settings)
    return replace(config, source=path)
