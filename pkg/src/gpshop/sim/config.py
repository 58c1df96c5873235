"""Shop configuration and experiment scenarios."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import ConfigError

OBJECTIVE_KEYS = ("Tmax", "Tmean", "Fmean", "WTmean", "WFmean")


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the simulated shop.

    Defaults reproduce the standard experimental setup: 10 machines,
    5,000 Poisson arrivals with a 1,000-job warm-up, 2-10 operations per
    job, workloads U{100..1000} split across machines with rates U[10,15],
    transport distances U{35..500} at speed 5, weights 1/2/4 with
    probabilities 0.2/0.6/0.2, due dates at 1.5x total median work.
    """

    num_machines: int = 10
    total_jobs: int = 5000
    warmup_jobs: int = 1000
    utilization: float = 0.85
    rate_range: tuple[float, float] = (10.0, 15.0)
    workload_range: tuple[int, int] = (100, 1000)
    ops_per_job_range: tuple[int, int] = (2, 10)
    distance_range: tuple[int, int] = (35, 500)
    transport_speed: float = 5.0
    weight_mix: tuple[tuple[int, float], ...] = ((1, 0.2), (2, 0.6), (4, 0.2))
    due_date_factor: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.num_machines < 1:
            raise ConfigError("num_machines must be >= 1")
        if self.total_jobs < 1:
            raise ConfigError("total_jobs must be >= 1")
        if not (0 <= self.warmup_jobs < self.total_jobs):
            raise ConfigError("warmup_jobs must satisfy 0 <= warmup < total_jobs")
        if not (0.0 < self.utilization < 1.0):
            raise ConfigError(f"utilization must lie in (0, 1), got {self.utilization}")
        for name in ("rate_range", "workload_range", "ops_per_job_range", "distance_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if self.transport_speed <= 0:
            raise ConfigError("transport_speed must be positive")
        if self.due_date_factor <= 0:
            raise ConfigError("due_date_factor must be positive")
        total = sum(p for _, p in self.weight_mix)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"weight probabilities must sum to 1, got {total}")
        if any(w <= 0 or p < 0 for w, p in self.weight_mix):
            raise ConfigError("weights must be positive and probabilities non-negative")

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Scenario:
    """An optimization scenario: objective mix, shop load and seed plan.

    ``objectives`` holds one or two keys from OBJECTIVE_KEYS; ``lambdas``
    are the matching weights and must sum to 1.  Training seeds are
    rotated one per generation; test seeds give the held-out estimate.
    """

    objectives: tuple[str, ...]
    lambdas: tuple[float, ...]
    utilization: float = 0.85
    training_seeds: tuple[int, ...] = tuple(range(1, 51))
    test_seeds: tuple[int, ...] = tuple(range(1001, 1051))
    name: str = ""

    def __post_init__(self):
        if not (1 <= len(self.objectives) <= 2):
            raise ConfigError("a scenario needs one or two objectives")
        if len(set(self.objectives)) != len(self.objectives):
            raise ConfigError("objective keys must be distinct")
        for key in self.objectives:
            if key not in OBJECTIVE_KEYS:
                raise ConfigError(f"unknown objective {key!r}; expected one of {OBJECTIVE_KEYS}")
        if len(self.lambdas) != len(self.objectives):
            raise ConfigError("lambdas must match objectives one-to-one")
        if any(not (0.0 <= lam <= 1.0) for lam in self.lambdas):
            raise ConfigError("lambda weights must lie in [0, 1]")
        if abs(sum(self.lambdas) - 1.0) > 1e-9:
            raise ConfigError(f"lambda weights must sum to 1, got {sum(self.lambdas)}")
        if not (0.0 < self.utilization < 1.0):
            raise ConfigError("scenario utilization must lie in (0, 1)")
        if not self.training_seeds or not self.test_seeds:
            raise ConfigError("training and test seed lists must be non-empty")

    @property
    def is_multi_objective(self) -> bool:
        return len(self.objectives) > 1

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        mix = "-".join(self.objectives)
        return f"<{mix}, {self.utilization:g}>"

    def objective_equation(self) -> str:
        """Human-readable weighted sum, e.g. ``0.2*Fmean + 0.8*WTmean``."""
        if len(self.objectives) == 1:
            return self.objectives[0]
        parts = [f"{lam:g}*{key}" for key, lam in zip(self.objectives, self.lambdas)]
        return " + ".join(parts)
