"""Service configuration: YAML file with environment-variable overrides.

Precedence: built-in defaults < config file < GEOSCENE_* environment
variables.  Paths left unset fall back to the packaged bundle catalogue and
gazetteer; store_path has no default (an empty store is legal for tests).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import yaml

from geoscene.bundles import DEFAULT_ALPHA, DEFAULT_TAU
from geoscene.errors import GeoSceneError

NL_MODES = ("builtin_grammar", "external_model")


class ConfigError(GeoSceneError):
    """Bad configuration file or environment override."""


@dataclass
class ServiceConfig:
    store_path: str | None = None
    bundles_path: str | None = None
    gazetteer_path: str | None = None
    vectors_path: str | None = None
    nl_mode: str = "builtin_grammar"
    nl_endpoint: str | None = None
    nl_timeout_s: float = 20.0
    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    max_results: int = 100

    def validate(self) -> None:
        if self.nl_mode not in NL_MODES:
            raise ConfigError(f"nl_mode must be one of {NL_MODES}, got {self.nl_mode!r}")
        if self.nl_mode == "external_model" and not self.nl_endpoint:
            raise ConfigError("nl_mode=external_model requires nl_endpoint")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if self.max_results < 1:
            raise ConfigError(f"max_results must be positive, got {self.max_results}")
        if self.nl_timeout_s <= 0:
            raise ConfigError(f"nl_timeout_s must be positive, got {self.nl_timeout_s}")


_FLOAT_FIELDS = {"nl_timeout_s", "alpha", "tau"}
_INT_FIELDS = {"max_results"}


def _coerce(name: str, value):
    try:
        if name in _FLOAT_FIELDS:
            return float(value)
        if name in _INT_FIELDS:
            return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a number, got {value!r}") from exc
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def load_config(path: str | None = None, env: dict | None = None) -> ServiceConfig:
    if env is None:
        env = dict(os.environ)
    config = ServiceConfig()
    known = {f.name for f in fields(ServiceConfig)}

    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(config, key, _coerce(key, value))

    for name in known:
        var = f"GEOSCENE_{name.upper()}"
        if var in env:
            setattr(config, name, _coerce(name, env[var]))

    config.validate()
    return config
