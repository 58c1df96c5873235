"""Discrete-event simulation of the dynamic flexible job shop.

Event semantics:

* A job release makes its first operation ready; ready operations are
  routed immediately (the routing rule scores every eligible machine and
  the minimum wins, ties to the lowest machine index).
* Routing schedules an arrival event after the transport time, even when
  the job is already at the chosen machine (zero delay).  An operation
  becomes dispatchable only once it has physically arrived, but it counts
  toward the machine's NIQ/WIQ from the moment it is routed: machines see
  committed work, including operations still in transit.  Without this the
  routing rule herds jobs onto machines whose inbound work is invisible
  and the shop runs measurably above the configured utilization.
* When a machine finishes an operation, the job's next operation is
  routed first and only then is the freed machine dispatched, so the
  just-routed operation is never dispatchable in that same instant.
* Dispatching scores all queued operations with the sequencing rule; the
  minimum wins, ties to the earliest ready time and then the lowest job
  id.  An operation's ready time is the moment it was routed (its
  predecessor's completion, or the job release), so waiting time includes
  transport.
* A machine's ready time is the completion time of the operation it is
  working on, or the moment it last fell idle; MWT = now - ready time is
  therefore negative while the machine is busy.

The run ends when every job has completed; machine utilization is
measured as total busy time over num_machines * end time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import TYPE_CHECKING

from ..expr import DecisionContext, compile_expression
from .instance import Instance
from .objectives import CompletedJob, ObjectiveVector, compute_objectives

if TYPE_CHECKING:
    from ..rules import RulePair
    from .config import SimConfig

_READY = 0
_ARRIVE = 1
_COMPLETE = 2

_INF = math.inf


class SimulationStalled(RuntimeError):
    """The event queue drained before every job completed (engine bug)."""


class NonFiniteScore(RuntimeError):
    """A rule produced a non-finite priority (impossible for in-range inputs)."""


class QueueOverflow(RuntimeError):
    """A machine's committed queue exceeded the configured guard.

    Degenerate routing rules (constant across candidates) funnel every
    operation onto one machine, which turns dispatch scans quadratic.  A
    guard lets callers abort such runs early; well-behaved rules stay
    roughly an order of magnitude below sensible thresholds.
    """

    def __init__(self, machine: int, time: float, limit: int):
        super().__init__(
            f"machine {machine} exceeded {limit} committed operations at t={time:.1f}"
        )
        self.machine = machine
        self.time = time
        self.limit = limit


@dataclass
class SimOutcome:
    """Everything a simulation run reports."""

    objectives: ObjectiveVector
    busy_fraction: float
    makespan: float
    completed: list[CompletedJob]
    trace: list[tuple] | None = None
    contexts: list[tuple] | None = None


def build_routing_context(
    *,
    time: float,
    queue_length: float,
    work_in_queue: float,
    machine_ready_at: float,
    proc_time: float,
    transport_time: float,
    next_median_proc_time: float,
    work_remaining: float,
    ops_remaining: float,
    due: float,
    weight: float,
    release: float,
) -> DecisionContext:
    """Terminal values seen when scoring a candidate machine.

    The operation is ready right now, so OWT is zero by construction and
    TRANT is the prospective transport time to the candidate.
    """
    rdd = due - time
    return DecisionContext(
        NIQ=queue_length,
        WIQ=work_in_queue,
        MWT=time - machine_ready_at,
        PT=proc_time,
        NPT=next_median_proc_time,
        OWT=0.0,
        WKR=work_remaining,
        NOR=ops_remaining,
        rDD=rdd,
        SLACK=rdd - work_remaining,
        W=weight,
        TIS=time - release,
        TRANT=transport_time,
    )


def build_sequencing_context(
    *,
    time: float,
    queue_length: float,
    work_in_queue: float,
    machine_ready_at: float,
    proc_time: float,
    transport_incurred: float,
    next_median_proc_time: float,
    work_remaining: float,
    ops_remaining: float,
    due: float,
    weight: float,
    release: float,
    op_ready_time: float,
) -> DecisionContext:
    """Terminal values seen when scoring a queued operation.

    TRANT is the transport time the job actually spent reaching this
    machine; OWT counts from the moment the operation became ready.
    """
    rdd = due - time
    return DecisionContext(
        NIQ=queue_length,
        WIQ=work_in_queue,
        MWT=time - machine_ready_at,
        PT=proc_time,
        NPT=next_median_proc_time,
        OWT=time - op_ready_time,
        WKR=work_remaining,
        NOR=ops_remaining,
        rDD=rdd,
        SLACK=rdd - work_remaining,
        W=weight,
        TIS=time - release,
        TRANT=transport_incurred,
    )


def run_simulation(
    rules: "RulePair",
    instance: Instance,
    config: "SimConfig | None" = None,
    record_trace: bool = False,
    capture_contexts: bool = False,
    max_queue: int | None = None,
) -> SimOutcome:
    """Simulate one instance under a rule pair.

    ``config`` defaults to the instance's own; overriding is only
    meaningful for fields that do not shape the job stream (warm-up
    count, transport speed).  With ``capture_contexts`` every scored
    decision goes through the public context builders and is recorded as
    (kind, time, job_id, op_index, machine, DecisionContext); decisions
    are identical either way, which a test pins.  ``max_queue`` aborts
    the run with QueueOverflow once any machine holds more committed
    operations, which fitness evaluators use to prune degenerate rules.
    """
    cfg = config if config is not None else instance.config
    route_fn = compile_expression(rules.routing)
    seq_fn = compile_expression(rules.sequencing)

    speed = cfg.transport_speed
    jobs = instance.jobs
    n_jobs = len(jobs)
    m = len(instance.machine_rates)

    # Row 0 is travel from the entry point; rows 1..m from each machine.
    trav: list[tuple[float, ...]] = [tuple(d / speed for d in instance.entry_distances)]
    for row in instance.machine_distances:
        trav.append(tuple(d / speed for d in row))

    release = [job.release for job in jobs]
    weight = [job.weight for job in jobs]
    due = [job.due for job in jobs]
    n_ops = [len(job.operations) for job in jobs]
    ops_mach = [[op.machines for op in job.operations] for job in jobs]
    ops_pt = [[op.proc_times for op in job.operations] for job in jobs]
    ops_npt: list[list[float]] = []
    ops_wkr: list[list[float]] = []
    for job in jobs:
        medians = [op.median_proc_time for op in job.operations]
        npts = [medians[k + 1] if k + 1 < len(medians) else 0.0 for k in range(len(medians))]
        wkrs = []
        acc = 0.0
        for med in reversed(medians):
            acc += med
            wkrs.append(acc)
        wkrs.reverse()
        ops_npt.append(npts)
        ops_wkr.append(wkrs)

    cur_op = [0] * n_jobs
    loc = [-1] * n_jobs  # -1 = entry point, else machine index
    queues: list[list] = [[] for _ in range(m)]  # physically arrived, waiting ops
    niq = [0] * m  # committed op counts (queued or in transit)
    wiq = [0.0] * m  # committed work (queued or in transit)
    busy = [False] * m
    mrt = [0.0] * m  # time the machine is/was next ready
    busy_time = [0.0] * m

    completed: list[CompletedJob] = []
    trace: list[tuple] | None = [] if record_trace else None
    contexts: list[tuple] | None = [] if capture_contexts else None

    heap: list[tuple] = []
    seq_counter = 0
    for j in range(n_jobs):
        heappush(heap, (release[j], seq_counter, _READY, j, -1))
        seq_counter += 1

    n_done = 0
    end_time = 0.0
    # Operations in transit, keyed by (job, op): (ready time, proc time,
    # transport incurred).  A job has at most one op in flight.
    pending: dict[tuple[int, int], tuple[float, float, float]] = {}

    def route_op(j: int, t: float) -> None:
        nonlocal seq_counter
        k = cur_op[j]
        machs = ops_mach[j][k]
        pts = ops_pt[j][k]
        row = trav[loc[j] + 1]
        if len(machs) == 1:
            chosen = 0
        elif contexts is None:
            npt = ops_npt[j][k]
            wkr = ops_wkr[j][k]
            nor = n_ops[j] - k
            rdd = due[j] - t
            slack = rdd - wkr
            w_j = weight[j]
            tis = t - release[j]
            best = _INF
            chosen = 0
            for i in range(len(machs)):
                mch = machs[i]
                s = route_fn(
                    niq[mch], wiq[mch], t - mrt[mch], pts[i], npt,
                    0.0, wkr, nor, rdd, slack, w_j, tis, row[mch],
                )
                if not (-_INF < s < _INF):
                    raise NonFiniteScore(f"routing rule returned {s!r}")
                if s < best:
                    best = s
                    chosen = i
        else:
            best = _INF
            chosen = 0
            for i in range(len(machs)):
                mch = machs[i]
                ctx = build_routing_context(
                    time=t,
                    queue_length=niq[mch],
                    work_in_queue=wiq[mch],
                    machine_ready_at=mrt[mch],
                    proc_time=pts[i],
                    transport_time=row[mch],
                    next_median_proc_time=ops_npt[j][k],
                    work_remaining=ops_wkr[j][k],
                    ops_remaining=n_ops[j] - k,
                    due=due[j],
                    weight=weight[j],
                    release=release[j],
                )
                contexts.append(("route", t, j + 1, k, mch, ctx))
                s = route_fn(*ctx.as_args())
                if not (-_INF < s < _INF):
                    raise NonFiniteScore(f"routing rule returned {s!r}")
                if s < best:
                    best = s
                    chosen = i
        mch = machs[chosen]
        trant = row[mch]
        niq[mch] += 1
        if max_queue is not None and niq[mch] > max_queue:
            raise QueueOverflow(mch, t, max_queue)
        wiq[mch] += pts[chosen]
        heappush(heap, (t + trant, seq_counter, _ARRIVE, j, mch))
        seq_counter += 1
        pending[(j, k)] = (t, pts[chosen], trant)

    def dispatch(mch: int, t: float) -> None:
        nonlocal seq_counter
        queue = queues[mch]
        if not queue:
            return
        if len(queue) == 1:
            idx = 0
        elif contexts is None:
            n_committed = niq[mch]
            w_in_q = wiq[mch]
            mwt = t - mrt[mch]
            best = _INF
            best_ready = _INF
            best_job = -1
            idx = 0
            for i in range(len(queue)):
                j, k, ready_t, pt, trant, npt, wkr, nor = queue[i]
                rdd = due[j] - t
                s = seq_fn(
                    n_committed, w_in_q, mwt, pt, npt, t - ready_t, wkr, nor,
                    rdd, rdd - wkr, weight[j], t - release[j], trant,
                )
                if not (-_INF < s < _INF):
                    raise NonFiniteScore(f"sequencing rule returned {s!r}")
                if s < best or (s == best and (ready_t, j) < (best_ready, best_job)):
                    best = s
                    best_ready = ready_t
                    best_job = j
                    idx = i
        else:
            best = _INF
            best_ready = _INF
            best_job = -1
            idx = 0
            for i in range(len(queue)):
                j, k, ready_t, pt, trant, npt, wkr, nor = queue[i]
                ctx = build_sequencing_context(
                    time=t,
                    queue_length=niq[mch],
                    work_in_queue=wiq[mch],
                    machine_ready_at=mrt[mch],
                    proc_time=pt,
                    transport_incurred=trant,
                    next_median_proc_time=npt,
                    work_remaining=wkr,
                    ops_remaining=nor,
                    due=due[j],
                    weight=weight[j],
                    release=release[j],
                    op_ready_time=ready_t,
                )
                contexts.append(("sequence", t, j + 1, k, mch, ctx))
                s = seq_fn(*ctx.as_args())
                if not (-_INF < s < _INF):
                    raise NonFiniteScore(f"sequencing rule returned {s!r}")
                if s < best or (s == best and (ready_t, j) < (best_ready, best_job)):
                    best = s
                    best_ready = ready_t
                    best_job = j
                    idx = i
        j, k, ready_t, pt, trant, npt, wkr, nor = queue.pop(idx)
        niq[mch] -= 1
        wiq[mch] -= pt
        busy[mch] = True
        busy_time[mch] += pt
        mrt[mch] = t + pt
        heappush(heap, (t + pt, seq_counter, _COMPLETE, j, mch))
        seq_counter += 1
        if trace is not None:
            trace.append((t, mch, j + 1, k, "start"))

    while heap:
        t, _, kind, j, mch = heappop(heap)
        if kind == _COMPLETE:
            k = cur_op[j]
            if trace is not None:
                trace.append((t, mch, j + 1, k, "complete"))
            busy[mch] = False
            mrt[mch] = t
            loc[j] = mch
            cur_op[j] = k + 1
            if k + 1 < n_ops[j]:
                route_op(j, t)
            else:
                completed.append(
                    CompletedJob(
                        job_id=j + 1,
                        release=release[j],
                        due=due[j],
                        weight=weight[j],
                        completion=t,
                    )
                )
                n_done += 1
                if n_done == n_jobs:
                    end_time = t
                    break
            dispatch(mch, t)
        elif kind == _ARRIVE:
            k = cur_op[j]
            ready_t, pt, trant = pending.pop((j, k))
            queues[mch].append(
                (j, k, ready_t, pt, trant, ops_npt[j][k], ops_wkr[j][k], n_ops[j] - k)
            )
            if not busy[mch]:
                dispatch(mch, t)
        else:  # _READY: job released at the shop entry
            route_op(j, t)

    if n_done < n_jobs:
        raise SimulationStalled(f"only {n_done} of {n_jobs} jobs completed")

    completed.sort(key=lambda c: c.job_id)
    counted = [c for c in completed if c.job_id > cfg.warmup_jobs]
    objectives = compute_objectives(counted)
    busy_fraction = sum(busy_time) / (m * end_time) if end_time > 0 else 0.0
    return SimOutcome(
        objectives=objectives,
        busy_fraction=busy_fraction,
        makespan=end_time,
        completed=completed,
        trace=trace,
        contexts=contexts,
    )


def simulate(rules: "RulePair", instance: Instance, config: "SimConfig | None" = None) -> ObjectiveVector:
    """Objectives of one rule pair on one instance."""
    return run_simulation(rules, instance, config).objectives


def validate_trace(trace: list[tuple], instance: Instance) -> list[str]:
    """Check a recorded trace against the instance; returns violations.

    Verified: every operation starts and completes exactly once on an
    eligible machine, durations match the machine's processing time,
    operations of a job run in order with transport respected, and no
    machine overlaps two operations.  An empty list means a clean trace.
    """
    eps = 1e-9
    problems: list[str] = []
    speed = instance.config.transport_speed
    jobs = {job.id: job for job in instance.jobs}

    starts: dict[tuple[int, int], tuple[float, int]] = {}
    completes: dict[tuple[int, int], tuple[float, int]] = {}
    for time, mch, job_id, op_idx, kind in trace:
        key = (job_id, op_idx)
        bucket = starts if kind == "start" else completes
        if key in bucket:
            problems.append(f"job {job_id} op {op_idx}: duplicate {kind}")
        else:
            bucket[key] = (time, mch)

    machine_intervals: dict[int, list[tuple[float, float, int, int]]] = {}
    for job in jobs.values():
        prev_complete = None
        prev_machine = None
        for op_idx, op in enumerate(job.operations):
            key = (job.id, op_idx)
            if key not in starts or key not in completes:
                problems.append(f"job {job.id} op {op_idx}: missing start or complete")
                continue
            s_time, s_mch = starts[key]
            c_time, c_mch = completes[key]
            if s_mch != c_mch:
                problems.append(f"job {job.id} op {op_idx}: started on {s_mch}, completed on {c_mch}")
            if s_mch not in op.machines:
                problems.append(f"job {job.id} op {op_idx}: machine {s_mch} not eligible")
            else:
                pt = op.proc_times[op.machines.index(s_mch)]
                if abs((c_time - s_time) - pt) > eps:
                    problems.append(
                        f"job {job.id} op {op_idx}: duration {c_time - s_time} != processing time {pt}"
                    )
            if op_idx == 0:
                earliest = job.release + instance.entry_distances[s_mch] / speed
            else:
                if prev_complete is None:
                    earliest = None
                else:
                    earliest = prev_complete + instance.machine_distances[prev_machine][s_mch] / speed
            if earliest is not None and s_time < earliest - eps:
                problems.append(
                    f"job {job.id} op {op_idx}: starts at {s_time} before reachable time {earliest}"
                )
            prev_complete = c_time
            prev_machine = s_mch
            machine_intervals.setdefault(s_mch, []).append((s_time, c_time, job.id, op_idx))

    for mch, intervals in machine_intervals.items():
        intervals.sort()
        for (s1, c1, j1, o1), (s2, c2, j2, o2) in zip(intervals, intervals[1:]):
            if s2 < c1 - eps:
                problems.append(
                    f"machine {mch}: job {j1} op {o1} [{s1}, {c1}] overlaps job {j2} op {o2} [{s2}, {c2}]"
                )
    return problems


def trace_to_csv(trace: list[tuple], path: str) -> None:
    """Write trace rows as CSV (time, machine, job, op, event); op is 0-based."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time,machine,job,op,event\n")
        for time, mch, job_id, op_idx, kind in trace:
            fh.write(f"{time!r},{mch},{job_id},{op_idx},{kind}\n")
