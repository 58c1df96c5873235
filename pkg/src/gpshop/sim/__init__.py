"""Dynamic flexible job shop: instance generation and discrete-event simulation."""
from __future__ import annotations

from .config import OBJECTIVE_KEYS, Scenario, SimConfig  # noqa: F401
from .engine import (  # noqa: F401
    NonFiniteScore,
    QueueOverflow,
    SimOutcome,
    SimulationStalled,
    build_routing_context,
    build_sequencing_context,
    run_simulation,
    simulate,
    trace_to_csv,
    validate_trace,
)
from .objectives import mean_objective_vectors  # noqa: F401
from .instance import (  # noqa: F401
    Instance,
    Job,
    Operation,
    arrival_rate_for_utilization,
    dump_instance,
    generate_instance,
    load_instance,
)
from .objectives import CompletedJob, ObjectiveVector, compute_objectives, weighted_fitness  # noqa: F401
