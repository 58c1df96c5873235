"""Schedule quality measures over completed jobs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import ConfigError
from .config import OBJECTIVE_KEYS, Scenario


@dataclass(frozen=True, slots=True)
class CompletedJob:
    """The four facts about a finished job that the objectives need."""

    job_id: int
    release: float
    due: float
    weight: int
    completion: float


@dataclass(frozen=True, slots=True)
class ObjectiveVector:
    """The five standard objectives, all to be minimized."""

    Tmax: float
    Tmean: float
    Fmean: float
    WTmean: float
    WFmean: float

    def get(self, key: str) -> float:
        if key not in OBJECTIVE_KEYS:
            raise KeyError(key)
        return getattr(self, key)

    def as_dict(self) -> dict[str, float]:
        return {key: getattr(self, key) for key in OBJECTIVE_KEYS}


def compute_objectives(jobs: Iterable[CompletedJob]) -> ObjectiveVector:
    """Aggregate tardiness and flowtime statistics.

    Tardiness of a job is max(0, completion - due); flowtime is
    completion - release.  Means are arithmetic over the given jobs in
    the given order (callers pass jobs sorted by id, which makes float
    summation reproducible).
    """
    ordered = list(jobs)
    if not ordered:
        raise ValueError("compute_objectives needs at least one completed job")
    n = len(ordered)
    tmax = 0.0
    t_sum = 0.0
    f_sum = 0.0
    wt_sum = 0.0
    wf_sum = 0.0
    for job in ordered:
        tardiness = job.completion - job.due
        if tardiness < 0.0:
            tardiness = 0.0
        flowtime = job.completion - job.release
        if tardiness > tmax:
            tmax = tardiness
        t_sum += tardiness
        f_sum += flowtime
        wt_sum += job.weight * tardiness
        wf_sum += job.weight * flowtime
    return ObjectiveVector(
        Tmax=tmax,
        Tmean=t_sum / n,
        Fmean=f_sum / n,
        WTmean=wt_sum / n,
        WFmean=wf_sum / n,
    )


def weighted_fitness(
    objectives: ObjectiveVector,
    scenario: Scenario,
    reference: ObjectiveVector | None = None,
) -> float:
    """Scenario fitness of an objective vector (lower is better).

    Single-objective scenarios use the raw value.  Multi-objective
    scenarios form sum(lambda_j * f_j / f_j(reference)), normalizing each
    term by the reference heuristic's value on the same instance, so a
    reference vector is mandatory there.
    """
    if not scenario.is_multi_objective:
        return objectives.get(scenario.objectives[0])
    if reference is None:
        raise ConfigError("multi-objective fitness needs reference objectives for normalization")
    total = 0.0
    for key, lam in zip(scenario.objectives, scenario.lambdas):
        ref = reference.get(key)
        if ref == 0.0:
            raise ConfigError(f"reference value for {key} is zero; cannot normalize")
        total += lam * objectives.get(key) / ref
    return total


def mean_objective_vectors(vectors: Sequence[ObjectiveVector]) -> ObjectiveVector:
    """Componentwise mean, used to average over test seeds."""
    if not vectors:
        raise ValueError("need at least one vector")
    n = len(vectors)
    return ObjectiveVector(
        Tmax=sum(v.Tmax for v in vectors) / n,
        Tmean=sum(v.Tmean for v in vectors) / n,
        Fmean=sum(v.Fmean for v in vectors) / n,
        WTmean=sum(v.WTmean for v in vectors) / n,
        WFmean=sum(v.WFmean for v in vectors) / n,
    )
