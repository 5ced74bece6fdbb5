"""Run configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    step_seconds: float = 5
    tick_seconds: float = 1
    k_routes: int = 6
    similarity_threshold: float = 0.5
    per_cluster: int = 2
    path_limit: int = 200
    cost: str = "length"
    budget_secs: float = 10.0
    node_limit: int | None = 50_000
    workers: int = 1
    seed: int = 0
    epoch_steps: int = 1
    max_defer: int = 50
    horizon_cap: int = 100_000
    protect_commitments: bool = True

    def __post_init__(self):
        for name in ("step_seconds", "tick_seconds", "k_routes", "per_cluster", "path_limit",
                     "budget_secs", "workers", "epoch_steps", "max_defer", "horizon_cap"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.similarity_threshold <= 1:
            raise ConfigError("similarity_threshold must be in (0, 1]")
        if self.node_limit is not None and self.node_limit < 1:
            raise ConfigError("node_limit must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        ratio = self.step_seconds / self.tick_seconds
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("step_seconds must be a multiple of tick_seconds")
        if self.cost not in ("length", "time"):
            raise ConfigError(f"unknown cost kind {self.cost!r}")

    def replace(self, **changes) -> "Config":
        return Config(**{**asdict(self), **changes})

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
