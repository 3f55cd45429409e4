"""Run configuration shared by the CLI and the acceptance harness."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

CONFIG_ENV = "TOPOTORIC_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    tol_cocycle: float = 1e-9
    tol_equivariance: float = 1e-9
    tol_transport: float = 1e-8
    tol_extension: float = 1e-7
    tol_regression: float = 1e-6
    seed: int = 0
    quadrature_n: int = 64
    require_complete: bool = True
    exhaustive_cones: bool = False
    field: str = "Q"

    def __post_init__(self):
        for f in fields(self):
            if f.name.startswith("tol_") and not getattr(self, f.name) > 0:
                raise ConfigError(f"{f.name} must be positive")
        N = self.quadrature_n
        if N < 8 or N & (N - 1):
            raise ConfigError(f"quadrature_n must be a power of two >= 8, got {N}")
        if self.field not in ("Q", "Q(i)"):
            raise ConfigError(f"field must be 'Q' or 'Q(i)', got {self.field!r}")

    @classmethod
    def from_mapping(cls, obj) -> "Config":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def load(cls, path=None) -> "Config":
        """Read ``path``, else the file named by ``$TOPOTORIC_CONFIG``, else defaults."""
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls()
        try:
            with open(Path(path), encoding="utf-8") as fh:
                return cls.from_mapping(json.load(fh))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def pipeline_tolerances(self) -> dict:
        return {
            "step1": self.tol_equivariance,
            "eigenframe": self.tol_equivariance,
            "transport": self.tol_transport,
            "x_independence": self.tol_transport,
            "diagonal": self.tol_transport,
            "extension": self.tol_extension,
            "regression": self.tol_regression,
        }

    def to_json(self) -> dict:
        return asdict(self)
