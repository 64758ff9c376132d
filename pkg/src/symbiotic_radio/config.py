"""JSON configuration files and ``key=value`` overrides."""

import json

from .channel import Scenario, SystemParams
from .errors import ConfigError
from .experiments import ExperimentConfig, default_config
from .precoder import SolveOptions

SECTIONS = {"scenario": Scenario, "params": SystemParams, "solver": SolveOptions}
NULLABLE = {"r_bd_fraction": (int, float), "output_path": (str,)}


def _coerce(name, current, value):
    if current is None:
        allowed = NULLABLE.get(name)
        if allowed is None or (value is not None and
                               (isinstance(value, bool) or not isinstance(value, allowed))):
            raise ConfigError(f"bad value for {name}: {value!r}")
        return float(value) if value is not None and allowed[0] is int else value
    if value is None and name in NULLABLE:
        return None
    if isinstance(current, bool):
        ok = isinstance(value, bool)
    elif isinstance(current, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(current, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(current, str):
        ok = isinstance(value, str)
    elif isinstance(current, (list, tuple)):
        ok = isinstance(value, list)
    else:
        ok = False
    if not ok:
        raise ConfigError(f"{name} expects {type(current).__name__}, got {value!r}")
    return value


def _apply(cfg, key, value):
    parts = key.split(".")
    try:
        if parts[0] in SECTIONS and len(parts) == 2:
            section = SECTIONS[parts[0]]
            d = getattr(cfg, parts[0]).to_dict()
            if parts[1] not in d:
                raise ConfigError(f"unknown key {key!r}")
            d[parts[1]] = _coerce(key, d[parts[1]], value)
            setattr(cfg, parts[0], section.from_dict(d))
        elif parts[0] == "sweep" and len(parts) == 2:
            if parts[1] not in ("power_dbm", "J", "r_bd") or not isinstance(value, list):
                raise ConfigError(f"bad sweep override {key!r}")
            cfg.sweep = {parts[1]: value}
        elif len(parts) == 1 and hasattr(cfg, key) and parts[0] not in SECTIONS and key != "sweep":
            setattr(cfg, key, _coerce(key, getattr(cfg, key), value))
        else:
            raise ConfigError(f"unknown key {key!r}")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_from_dict(d, figure=None):
    """Merge a (possibly partial) nested dict over the defaults."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    cfg = default_config(figure)
    for key, value in d.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
            for sub, v in value.items():
                _apply(cfg, f"{key}.{sub}", v)
        elif key == "sweep":
            if not isinstance(value, dict) or len(value) != 1:
                raise ConfigError("sweep must hold exactly one list")
            (k, v), = value.items()
            _apply(cfg, f"sweep.{k}", v)
        else:
            _apply(cfg, key, value)
    ExperimentConfig.__post_init__(cfg)
    return cfg


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path=None, figure=None, overrides=()):
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = config_from_dict(data, figure)
    for text in overrides:
        _apply(cfg, *parse_override(text))
    ExperimentConfig.__post_init__(cfg)
    return cfg
