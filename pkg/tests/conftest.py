"""Shared fixtures: the hand-derived golden instance and small configs."""
from __future__ import annotations

import numpy as np
import pytest

from gpshop.rules import RulePair
from gpshop.sim.config import SimConfig
from gpshop.sim.instance import Instance, Job, Operation


def _op(workload: float, machines: tuple[int, ...], rates: tuple[float, ...]) -> Operation:
    pts = tuple(workload / rates[m] for m in machines)
    return Operation(
        workload=workload,
        machines=machines,
        proc_times=pts,
        median_proc_time=float(np.median(pts)),
    )


def make_golden_instance() -> Instance:
    """The 3-job, 2-machine oracle instance.

    See tests/data/golden_schedule.md for the full by-hand schedule this
    instance was built around.  All routing decisions are forced (single
    eligible machine) so the schedule depends only on the sequencing rule.
    """
    rates = (10.0, 10.0)
    config = SimConfig(
        num_machines=2,
        total_jobs=3,
        warmup_jobs=0,
        utilization=0.5,
        rate_range=(10.0, 10.0),
        workload_range=(100, 300),
        ops_per_job_range=(1, 2),
        distance_range=(50, 100),
    )
    jobs = (
        Job(id=1, release=0.0, weight=2, due=45.0, operations=(_op(300.0, (0,), rates),)),
        Job(
            id=2,
            release=0.0,
            weight=1,
            due=45.0,
            operations=(_op(200.0, (0,), rates), _op(100.0, (1,), rates)),
        ),
        Job(
            id=3,
            release=5.0,
            weight=4,
            due=42.5,
            operations=(_op(100.0, (0,), rates), _op(150.0, (0,), rates)),
        ),
    )
    return Instance(
        config=config,
        seed=0,
        machine_rates=rates,
        entry_distances=(50.0, 100.0),
        machine_distances=((0.0, 75.0), (75.0, 0.0)),
        jobs=jobs,
    )


@pytest.fixture
def golden_instance() -> Instance:
    return make_golden_instance()


FIFO_RULES = RulePair.from_text("WIQ", "(W - W) - OWT")
SPT_RULES = RulePair.from_text("WIQ", "PT")
