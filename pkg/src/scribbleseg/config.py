"""Run configuration: layered INI files with flag overrides.

Precedence, lowest to highest: packaged ``defaults.cfg``, user config file,
command-line flags.  The effective configuration is dumped next to run
outputs for provenance.  ``SCRIBBLESEG_SEED`` serves as a global seed
fallback when neither a flag nor a config file sets one.
"""
from __future__ import annotations

import configparser
import os
from importlib import resources
from pathlib import Path

from .exceptions import ConfigError
from .trainer import TrainConfig

SEED_ENV_VAR = "SCRIBBLESEG_SEED"


def _defaults_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_string(resources.files("scribbleseg").joinpath("defaults.cfg").read_text())
    return cp


def load_config(path=None) -> tuple[configparser.ConfigParser, set[tuple[str, str]]]:
    """Packaged defaults overlaid with an optional user config file.

    Returns the merged parser and the set of (section, key) pairs the user
    file actually provided.  Unknown sections or keys in the user file raise
    ConfigError naming them.
    """
    cp = _defaults_parser()
    user_keys: set[tuple[str, str]] = set()
    if path is None:
        return cp, user_keys
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    user = configparser.ConfigParser()
    try:
        user.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in user.sections():
        if not cp.has_section(section):
            raise ConfigError(f"{path}: unknown config section [{section}]")
        for key, value in user.items(section):
            if not cp.has_option(section, key):
                raise ConfigError(f"{path}: unknown config key '{key}' in [{section}]")
            cp.set(section, key, value)
            user_keys.add((section, key))
    return cp, user_keys


def _get(cp, section, key, convert, what=None):
    raw = cp.get(section, key)
    try:
        return convert(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(
            f"config key '{key}' in [{section}]: cannot parse {raw!r} ({what or exc})")


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _names(raw: str) -> tuple[str, ...]:
    return tuple(tok for tok in raw.replace(",", " ").split())


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def resolve_seed(flag_seed, cp, user_keys, section: str = "train") -> int:
    """Flag > config file > SCRIBBLESEG_SEED env var > packaged default."""
    if flag_seed is not None:
        return int(flag_seed)
    if (section, "seed") in user_keys:
        return cp.getint(section, "seed")
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return cp.getint(section, "seed")


def train_config(cp: configparser.ConfigParser, seed: int,
                 baseline: bool = False) -> TrainConfig:
    """Build a TrainConfig from the [train]/[affinity]/[eval] sections."""
    modes = () if baseline else _get(cp, "train", "alignment_modes", _names)
    cfg = TrainConfig(
        epochs=_get(cp, "train", "epochs", int),
        batch_size=_get(cp, "train", "batch_size", int),
        lr=_get(cp, "train", "lr", float),
        momentum=_get(cp, "train", "momentum", float),
        scale_set=_get(cp, "train", "scale_set", _floats),
        crop_fraction_range=_get(cp, "train", "crop_fraction_range", _floats),
        alignment_modes=modes,
        alignment_weights=_get(cp, "train", "alignment_weights", _floats),
        seed=seed,
        augment=_get(cp, "train", "augment", _bool),
        brightness_jitter=_get(cp, "train", "brightness_jitter", float),
        poly_decay=_get(cp, "train", "poly_decay", _bool),
        poly_power=_get(cp, "train", "poly_power", float),
        detach_global=_get(cp, "train", "detach_global", _bool),
        detach_soft=_get(cp, "affinity", "detach_soft", _bool),
        affinity_stride=_get(cp, "affinity", "stride", int),
        affinity_levels=_get(cp, "affinity", "levels", _ints),
        affinity_scale=cp.get("affinity", "scale"),
        affinity_max_pixels=_get(cp, "affinity", "max_pixels", int),
        num_threads=_get(cp, "train", "num_threads", int),
        threshold=_get(cp, "eval", "threshold", float),
    )
    if len(cfg.crop_fraction_range) != 2:
        raise ConfigError("config key 'crop_fraction_range' in [train]: needs exactly 2 values")
    if len(cfg.alignment_weights) != 3:
        raise ConfigError("config key 'alignment_weights' in [train]: needs exactly 3 values")
    if cfg.affinity_scale not in ("none", "inv_sqrt_c"):
        raise ConfigError("config key 'scale' in [affinity]: must be 'none' or 'inv_sqrt_c'")
    cfg.validate()
    return cfg


def dump_effective(cp: configparser.ConfigParser, seed: int, path) -> None:
    """Write the effective configuration (with the resolved seed) to ``path``."""
    cp.set("train", "seed", str(seed))
    cp.set("data", "seed", str(seed))
    with Path(path).open("w") as fh:
        cp.write(fh)
