"""TOML settings for the serving pipeline, with FORGE_* environment overrides.

Every key has a default drawn from the run tables, so an empty (or absent)
file is a valid configuration.  Unknown keys are rejected rather than
ignored; typos should fail loudly.  Environment variables override the file:

    FORGE_HOST, FORGE_PORT, FORGE_ENDPOINT (host:port), FORGE_SEED,
    FORGE_TRANSMISSION_CAPACITY, FORGE_STAGING_CAPACITY,
    FORGE_CACHE_CAPACITY, FORGE_EPOCH_LENGTH, FORGE_CHECKPOINT
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Mapping, Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .equations import Equation, equation_from_name
from .generation import ServerConfig
from .streaming import (
    DEFAULT_CACHE_CAPACITY,
    DEFAULT_EPOCH_LENGTH,
    DEFAULT_STAGING_CAPACITY,
    DEFAULT_TRANSMISSION_CAPACITY,
)

__all__ = ["ConfigError", "ServeSettings", "load_settings"]

_ALL_EQUATIONS = ("diffusion", "hyper-diffusion", "burgers", "kdv", "ks", "fisher-kpp", "swift-hohenberg")


class ConfigError(ValueError):
    """Unparseable, unknown, or out-of-range configuration."""


@dataclass
class ServeSettings:
    host: str = "127.0.0.1"
    port: int = 7421
    seed: int = 0
    equations: tuple[str, ...] = _ALL_EQUATIONS
    resolutions: tuple[int, ...] = (64,)
    warmup_rounds: int = 10
    halt_tolerance: int = 10
    crop_size: int = 96
    normalize: bool = False
    double_precision: bool = False
    transmission_capacity: int = DEFAULT_TRANSMISSION_CAPACITY
    staging_capacity: int = DEFAULT_STAGING_CAPACITY
    cache_capacity: int = DEFAULT_CACHE_CAPACITY
    epoch_length: int = DEFAULT_EPOCH_LENGTH
    checkpoint_path: str = "pdeforge.ckpt"

    def server_config(self) -> ServerConfig:
        try:
            return ServerConfig(
                equations=tuple(equation_from_name(s) for s in self.equations),
                resolutions=self.resolutions,
                warmup_rounds=self.warmup_rounds,
                halt_tolerance=self.halt_tolerance,
                crop_size=self.crop_size,
                normalize=self.normalize,
                double_precision=self.double_precision,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_INT_KEYS = {
    "port",
    "seed",
    "warmup_rounds",
    "halt_tolerance",
    "crop_size",
    "transmission_capacity",
    "staging_capacity",
    "cache_capacity",
    "epoch_length",
}
_BOOL_KEYS = {"normalize", "double_precision"}


def _validate(settings: ServeSettings) -> ServeSettings:
    if not 0 <= settings.port <= 65535:
        raise ConfigError(f"port {settings.port} out of range")
    if settings.seed < 0:
        raise ConfigError("seed must be non-negative")
    for key in ("transmission_capacity", "staging_capacity", "cache_capacity", "epoch_length"):
        if getattr(settings, key) < 1:
            raise ConfigError(f"{key} must be >= 1, got {getattr(settings, key)}")
    if not settings.equations:
        raise ConfigError("equations list is empty")
    for name in settings.equations:
        try:
            equation_from_name(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if not settings.resolutions:
        raise ConfigError("resolutions list is empty")
    for n in settings.resolutions:
        if n < 4 or n % 2:
            raise ConfigError(f"resolution {n} must be even and >= 4")
    if settings.warmup_rounds < 0 or settings.halt_tolerance < 0 or settings.crop_size < 1:
        raise ConfigError("warmup_rounds/halt_tolerance/crop_size out of range")
    return settings


def _apply_env(values: dict, env: Mapping[str, str]) -> dict:
    simple = {
        "FORGE_HOST": "host",
        "FORGE_PORT": "port",
        "FORGE_SEED": "seed",
        "FORGE_TRANSMISSION_CAPACITY": "transmission_capacity",
        "FORGE_STAGING_CAPACITY": "staging_capacity",
        "FORGE_CACHE_CAPACITY": "cache_capacity",
        "FORGE_EPOCH_LENGTH": "epoch_length",
        "FORGE_CHECKPOINT": "checkpoint_path",
    }
    for var, key in simple.items():
        if var in env:
            values[key] = env[var]
    if "FORGE_ENDPOINT" in env:
        endpoint = env["FORGE_ENDPOINT"]
        host, sep, port = endpoint.rpartition(":")
        if not sep or not host:
            raise ConfigError(f"FORGE_ENDPOINT must be host:port, got {endpoint!r}")
        values["host"] = host
        values["port"] = port
    return values


def load_settings(path: Optional[str] = None, env: Optional[Mapping[str, str]] = None) -> ServeSettings:
    """Load settings from a TOML file (optional) and the environment."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                values = tomllib.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    values = _apply_env(values, env if env is not None else os.environ)

    known = {f.name for f in fields(ServeSettings)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    coerced: dict = {}
    for key, raw in values.items():
        try:
            if key in _INT_KEYS:
                coerced[key] = int(raw)
            elif key in _BOOL_KEYS:
                coerced[key] = raw if isinstance(raw, bool) else raw.strip().lower() in ("1", "true", "yes", "on")
            elif key == "equations":
                coerced[key] = tuple(str(s) for s in raw)
            elif key == "resolutions":
                coerced[key] = tuple(int(n) for n in raw)
            else:
                coerced[key] = str(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return _validate(ServeSettings(**coerced))
