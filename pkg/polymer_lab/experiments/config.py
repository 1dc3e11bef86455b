import configparser
import math
import os
from dataclasses import dataclass, fields
from typing import Dict, Tuple

from ..environment import DisorderFamily, create_named_family, format_family_params, parse_family_params
from ..errors import ConfigError, ParameterError
from ..polymer import default_radius_cap, lk_depth
from ..walk import SUPPORTED_DIMENSIONS

# dotted config key -> (field name, value kind)
CONFIG_KEYS = {
    "model.d": ("d", "int"),
    "model.beta": ("beta", "float"),
    "env.family": ("family", "str"),
    "env.params": ("params", "params"),
    "env.seed": ("seed", "int"),
    "experiment.n_grid": ("n_grid", "ints"),
    "experiment.horizon_factor": ("horizon_factor", "int"),
    "experiment.replicates": ("replicates", "int"),
    "experiment.lk_exponent": ("lk_exponent", "float"),
    "experiment.alpha": ("alpha", "float"),
    "experiment.alpha_grid": ("alpha_grid", "floats"),
    "experiment.eps_grid": ("eps_grid", "floats"),
    "experiment.llt_alpha": ("llt_alpha", "float"),
    "experiment.llt_k_grid": ("llt_k_grid", "ints"),
    "experiment.homog_k_grid": ("homog_k_grid", "ints"),
    "mixing.event": ("mixing_event", "str"),
    "mixing.n0": ("mixing_n0", "int"),
    "box.radius_cap": ("radius_cap", "int"),
    "box.clip_tolerance": ("clip_tolerance", "float"),
    "run.smoke": ("smoke", "bool"),
    "run.snapshots": ("snapshots", "bool"),
    "run.allow_outside_l2": ("allow_outside_l2", "bool"),
}

# switches that decide whether a run may start, not what it computes
RUN_ONLY_KEYS = ("run.allow_outside_l2",)


def config_fingerprint(flat: Dict[str, str]) -> Dict[str, str]:
    """The part of a flat config a resumed run must agree on."""
    return {key: value for key, value in flat.items() if key not in RUN_ONLY_KEYS}


MIN_REPLICATES = 100
MIN_HORIZON_FACTOR = 4


def _parse(kind: str, key: str, text: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "str":
            return text
        if kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "ints":
            return tuple(int(v) for v in text.split(",") if v.strip())
        if kind == "floats":
            return tuple(float(v) for v in text.split(",") if v.strip())
        if kind == "params":
            return tuple(sorted(parse_family_params(text).items()))
    except (ValueError, ParameterError) as e:
        raise ConfigError(f"invalid value for {key}: {text!r}") from e
    raise AssertionError(kind)


def _format(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "ints":
        return ",".join(str(v) for v in value)
    if kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    if kind == "params":
        return format_family_params(dict(value))
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything a run depends on. Replicate r reads the environment seeded by ``seed + r``.

    ``radius_cap = 0`` selects the automatic box radius and ``mixing_n0 = 0`` the default
    conditioning time min(n_grid) // 2.
    """

    d: int = 3
    beta: float = 0.4
    family: str = "gaussian"
    params: Tuple[Tuple[str, float], ...] = ()
    seed: int = 20240101
    n_grid: Tuple[int, ...] = (8, 16, 32)
    horizon_factor: int = 8
    replicates: int = 400
    lk_exponent: float = 0.4
    alpha: float = 6.0
    alpha_grid: Tuple[float, ...] = (2.0, 4.0, 6.0, 8.0)
    eps_grid: Tuple[float, ...] = (0.02, 0.05, 0.25, 0.5, 1.0)
    llt_alpha: float = 4.0
    llt_k_grid: Tuple[int, ...] = (8, 32)
    homog_k_grid: Tuple[int, ...] = (16, 64)
    mixing_event: str = "median"
    mixing_n0: int = 0
    radius_cap: int = 0
    clip_tolerance: float = 1e-6
    smoke: bool = False
    snapshots: bool = False
    allow_outside_l2: bool = False

    @property
    def horizon(self) -> int:
        return self.horizon_factor * max(self.n_grid)

    @property
    def n0(self) -> int:
        return self.mixing_n0 or max(1, min(self.n_grid) // 2)

    @property
    def family_params(self) -> Dict[str, float]:
        return dict(self.params)

    @property
    def effective_radius_cap(self) -> int:
        return self.radius_cap or default_radius_cap(self.d, self.horizon)

    def l_k(self, k: int) -> int:
        return lk_depth(k, self.lk_exponent)

    def create_family(self) -> DisorderFamily:
        return create_named_family(self.family, **self.family_params)

    def validate(self) -> "ExperimentConfig":
        if self.d not in SUPPORTED_DIMENSIONS:
            raise ConfigError(f"model.d={self.d} is not one of {SUPPORTED_DIMENSIONS}")
        try:
            self.create_family()
        except ParameterError as e:
            raise ConfigError(str(e)) from e
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ConfigError(f"model.beta must be finite and non-negative, got {self.beta}")
        if not self.n_grid:
            raise ConfigError("experiment.n_grid must not be empty")
        if min(self.n_grid) < 1 or list(self.n_grid) != sorted(set(self.n_grid)):
            raise ConfigError(f"experiment.n_grid must be strictly increasing positive integers, got {self.n_grid}")
        if self.horizon_factor < MIN_HORIZON_FACTOR:
            raise ConfigError(f"experiment.horizon_factor must be >= {MIN_HORIZON_FACTOR}, got {self.horizon_factor}")
        if self.replicates < 2 or (self.replicates < MIN_REPLICATES and not self.smoke):
            raise ConfigError(
                f"experiment.replicates={self.replicates} is below {MIN_REPLICATES}; set run.smoke = true for smoke runs"
            )
        if not 0.0 < self.lk_exponent < 0.5:
            raise ConfigError(f"experiment.lk_exponent must lie in (0, 1/2), got {self.lk_exponent}")
        if self.alpha <= 0.0 or self.llt_alpha <= 0.0 or not self.alpha_grid or min(self.alpha_grid) <= 0.0:
            raise ConfigError("window radii alpha must be positive")
        if not self.eps_grid or min(self.eps_grid) <= 0.0:
            raise ConfigError("experiment.eps_grid must hold positive thresholds")
        for name, grid in (("llt_k_grid", self.llt_k_grid), ("homog_k_grid", self.homog_k_grid)):
            for k in grid:
                if k >= self.horizon or 2 * self.l_k(k) >= k:
                    raise ConfigError(f"experiment.{name}: k={k} needs l_k < k/2 and k < horizon {self.horizon}")
        if self.n0 >= min(self.n_grid):
            raise ConfigError(f"mixing.n0={self.n0} must precede every n of the grid")
        event = self.mixing_event
        if event != "median":
            kind, _, value = event.partition(":")
            try:
                q = float(value)
            except ValueError:
                q = -1.0
            if kind != "quantile" or not 0.0 < q < 1.0:
                raise ConfigError(f"mixing.event must be 'median' or 'quantile:<q>', got {event!r}")
        if self.radius_cap < 0 or self.clip_tolerance <= 0.0:
            raise ConfigError("box.radius_cap must be >= 0 and box.clip_tolerance > 0")
        return self

    def to_flat(self) -> Dict[str, str]:
        return {key: _format(kind, getattr(self, name)) for key, (name, kind) in CONFIG_KEYS.items()}

    def fingerprint(self) -> Dict[str, str]:
        return config_fingerprint(self.to_flat())

    @classmethod
    def from_flat(cls, flat: Dict[str, str]) -> "ExperimentConfig":
        kwargs = {}
        for key, text in flat.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            name, kind = CONFIG_KEYS[key]
            kwargs[name] = _parse(kind, key, text)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path} does not exist")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from e
        flat = {f"{section}.{key}": value for section in parser.sections() for key, value in parser[section].items()}
        return cls.from_flat(flat)


__all__ = ["CONFIG_KEYS", "RUN_ONLY_KEYS", "ExperimentConfig", "config_fingerprint"]
assert {name for name, _ in CONFIG_KEYS.values()} == {f.name for f in fields(ExperimentConfig)}
