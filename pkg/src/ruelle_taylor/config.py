"""Experiment configuration: one JSON file per run, unknown fields rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

COMMANDS = ("check", "jointspec", "resonances", "measures", "mixing", "plotdata")
STOCHASTIC = {"check", "jointspec", "measures", "mixing"}


class ConfigError(ValueError):
    pass


@dataclass
class Tolerances:
    comm: float = 1e-10
    identity: float = 1e-10
    joint: float = 1e-7
    rank: float = 1e-8
    resonance: float = 1e-8
    stability: float = 1e-5
    window: float = 1e-4


@dataclass
class ProfileSpec:
    family: str = "bump"
    center: float = 1.0
    width: float = 1.0
    skew: float = 0.0


@dataclass
class ExperimentConfig:
    command: str
    model: str = "arnold-product"
    eps: float | list | None = None
    A0: list | None = None
    K: int = 32
    N: float = 2.0
    cone_angles: list = field(default_factory=lambda: [0.3, 0.3])
    omega: float = 7.0
    re_max: float = 0.5
    grid_step: float = 0.1
    profiles: list = field(default_factory=list)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int | None = None
    out: str = "out"
    input: str | None = None
    threads: int | None = None
    n_tuples: int = 200
    max_n: int = 8
    max_kappa: int = 3
    inject_noncommuting: bool = False
    tuple: list | None = None
    n_pairs: int = 10
    n_samples: int = 100_000
    T: float = 30.0
    times: list = field(default_factory=lambda: [float(t) for t in range(0, 61, 2)])
    n_directions: int = 3

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if isinstance(self.tolerances, dict):
            self.tolerances = _build(Tolerances, self.tolerances, "tolerances")
        self.profiles = [p if isinstance(p, ProfileSpec) else _build(ProfileSpec, p, "profiles") for p in self.profiles]
        if self.K < 1:
            raise ConfigError("K must be positive")
        if not 0 <= self.N <= 10:
            raise ConfigError("N must lie in [0, 10]")
        if self.grid_step <= 0:
            raise ConfigError("grid_step must be positive")
        if len(self.cone_angles) != 2 or not all(0 < a < 1.5 for a in self.cone_angles):
            raise ConfigError("cone_angles needs two angles in (0, 1.5) radians")

    def require_seed(self):
        if self.command in STOCHASTIC and self.seed is None:
            raise ConfigError(f"command {self.command!r} is stochastic and needs a seed")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of everything that can change the numbers; output location and threads excluded."""
        from .io import config_hash

        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return config_hash(d)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config")


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from None
    return from_dict(data)
