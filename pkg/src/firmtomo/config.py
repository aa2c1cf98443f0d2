"""Experiment configuration, read from and written to JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

SOLVERS = ("firm", "firmplus", "fedpgd", "pgd", "plsqr")
SCALES = ("desk", "paper")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    grid_size: int = 64
    object_width: float = 1.0  # cm; pixel size is object_width / grid_size
    angles: list[int] = field(default_factory=lambda: [25])
    noise_levels: list[float] = field(default_factory=lambda: [0.0])
    gammas: list[float] = field(default_factory=lambda: [1.0])
    trials: int = 3
    seed: int = 0
    variant_seed: int = 0
    weights: list[float] = field(default_factory=lambda: [0.1, 0.6, 0.3])
    incident_energy: float = 1.0
    relative_noise: bool = True
    pre_log_noise: bool = False
    solver: str = "firm"
    beta: float = 1.0
    ratio: float = 0.9
    phase1_rounds: int = 2000
    epsilon: float = 1e-2
    max_total_rounds: int = 200_000
    fedpgd_tol: float | None = None  # None: rescaled from 1e-2 at 250x250
    max_iter: int = 100_000  # budget for FedPGD / PGD / PLSQR
    include_plsqr: bool = False
    workers: int = 1  # threads for the agents' local steps
    pool_workers: int = 1  # processes over sweep cells
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")
        if not self.object_width > 0:
            raise ConfigError("object_width must be positive")
        if not self.angles or any(int(a) < 1 for a in self.angles):
            raise ConfigError("angles must be a nonempty list of positive counts")
        if not self.noise_levels or any(s < 0 for s in self.noise_levels):
            raise ConfigError("noise_levels must be a nonempty list of nonnegative values")
        if not self.gammas or any(not g > 0 for g in self.gammas):
            raise ConfigError("gammas must be a nonempty list of positive values")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if len(self.weights) < 1 or any(c < 0 for c in self.weights) or not 0 < sum(self.weights) <= 1:
            raise ConfigError("weights must be nonnegative with a sum in (0, 1]")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; expected one of {', '.join(SOLVERS)}")
        if self.beta < 1 or not 0 < self.ratio < 1 or not self.epsilon > 0:
            raise ConfigError("schedule needs beta >= 1, 0 < ratio < 1 and epsilon > 0")
        if self.phase1_rounds < 0 or self.max_total_rounds < 1 or self.max_iter < 1:
            raise ConfigError("round budgets must be positive")
        if self.workers < 1 or self.pool_workers < 1:
            raise ConfigError("worker counts must be at least 1")
        if not self.incident_energy > 0:
            raise ConfigError("incident_energy must be positive")

    @property
    def pixel_size(self) -> float:
        return self.object_width / self.grid_size

    @classmethod
    def preset(cls, scale: str) -> "ExperimentConfig":
        if scale == "desk":
            return cls()
        if scale == "paper":
            return cls(grid_size=250, angles=[25, 50, 75, 100, 125, 150, 175],
                       noise_levels=[0.0, 0.01, 0.05, 0.1], gammas=[0.02, 0.05, 0.1, 1.0],
                       trials=10, phase1_rounds=10_000, max_total_rounds=2_000_000,
                       max_iter=1_000_000)
        raise ConfigError(f"unknown scale {scale!r}; expected desk or paper")

    @classmethod
    def from_dict(cls, data: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = asdict(base) if base is not None else {}
        merged.update(data)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path, scale: str = "desk") -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data, cls.preset(scale))

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def cell_seed(global_seed: int, angles: int, s: float, gamma: float, trial: int) -> int:
    """64-bit seed from the cell coordinates; independent of execution order."""
    key = f"{int(global_seed)}|{int(angles)}|{float(s)!r}|{float(gamma)!r}|{int(trial)}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
