"""Run configuration with documented defaults; an optional JSON file overrides any field."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


EPS_GRID = [0.02, 0.035, 0.06, 0.1, 0.2]
THM4_EPS = [0.04, 0.06, 0.09, 0.13, 0.2]


def _default_sweeps():
    return {
        "remark33-1d": {"values": EPS_GRID, "k": 0.0},
        "remark31": {"values": EPS_GRID},
        "thm2-annulus": {"values": EPS_GRID, "n": 2, "k": 0.0},
        "rmk43a-dilation": {"values": [1.0, 2.0, 4.0, 8.0], "k": [-1.0, 0.0, 1.0]},
        "thm4": {"values": THM4_EPS},
    }


@dataclass
class RunConfig:
    """Settings shared by the CLI subcommands and the acceptance battery.

    ``spacing`` maps dimension to the default grid spacing of the random
    suites; ``grid_caps`` bounds the cell count of grids passed to the
    energy commands; ``transport_cap`` bounds positive cells per transport
    side before aggregation.
    """

    spacing: dict = field(default_factory=lambda: {1: 1 / 128, 2: 1 / 24, 3: 1 / 8})
    prop41_spacing: float = 1 / 16
    grid_caps: dict = field(default_factory=lambda: {1: 256, 2: 96 * 96, 3: 32 ** 3})
    transport_cap: int = 2500
    tol_quad_rel: float = 1e-6
    tol_quad_abs: float = 1e-12
    solver_mass_tol: float = 1e-6
    seed: int = 0
    threads: int = None
    samples: dict = field(default_factory=lambda: {
        "riesz": 100, "thm2": 100, "prop41": 100, "lemma31": 50, "lemma32": 50, "loeper": 20,
        "thm1": 50, "thm3": 20, "quadratic": 10})
    sweeps: dict = field(default_factory=_default_sweeps)
    output_dir: str = None

    def __post_init__(self):
        self.spacing = {int(k): float(v) for k, v in self.spacing.items()}
        self.grid_caps = {int(k): int(v) for k, v in self.grid_caps.items()}
        self.validate()

    def validate(self):
        for name in ("tol_quad_rel", "tol_quad_abs", "solver_mass_tol", "prop41_spacing"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for n in (1, 2, 3):
            if n not in self.spacing or not self.spacing[n] > 0:
                raise ConfigError(f"spacing for dim {n} must be positive")
            if self.grid_caps.get(n, 0) < 8 ** n:
                raise ConfigError(f"grid cap for dim {n} must be at least {8 ** n} cells")
        if self.transport_cap < 16:
            raise ConfigError("transport_cap must be at least 16")
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        for k, v in self.samples.items():
            if int(v) < 1:
                raise ConfigError(f"samples[{k!r}] must be >= 1")

    def seed_for(self, offset: int) -> int:
        return int(self.seed) + int(offset)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        base = cls()
        merged = {f.name: getattr(base, f.name) for f in fields(cls)}
        for k, v in data.items():
            if isinstance(merged[k], dict) and isinstance(v, dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        return cls(**merged)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)
