"""Genetic programming engine over routing/sequencing rule pairs.

Generational GP with tournament selection, slot-wise subtree crossover,
subtree mutation and reproduction, a single elite, and per-generation
rotation of the training instance.  Populations can start random (ramped
half-and-half) or warm-started from externally supplied rule pairs.
"""
from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .expr import (
    Expression,
    MAX_DEPTH,
    depth,
    format_expr,
    iter_subtrees,
    random_tree,
    replace_subtree,
)
from .rules import RulePair
from .sim.config import Scenario, SimConfig
from .sim.engine import QueueOverflow, run_simulation
from .sim.instance import Instance, generate_instance
from .sim.objectives import ObjectiveVector, weighted_fitness

__all__ = [
    "GPParams",
    "Individual",
    "GenerationStats",
    "EvolutionLog",
    "SeedRejection",
    "FitnessEvaluator",
    "DEGENERATE_FITNESS",
    "init_random",
    "init_seeded",
    "tournament_select",
    "crossover",
    "mutate",
    "phenotypic_diversity",
    "evolve",
    "test_performance",
]

# Fitness assigned to rules whose simulation was aborted by the queue
# guard; large enough that selection always prefers any completed run.
DEGENERATE_FITNESS = 1e12


@dataclass(frozen=True)
class GPParams:
    """Search parameters; defaults follow the standard full-scale setup."""

    population_size: int = 100
    generations: int = 50
    init_depth: tuple[int, int] = (2, 6)
    max_depth: int = MAX_DEPTH
    crossover_rate: float = 0.80
    mutation_rate: float = 0.15
    reproduction_rate: float = 0.05
    tournament_size: int = 4
    terminal_rate: float = 0.10
    mutation_grow_depth: tuple[int, int] = (2, 4)

    def __post_init__(self):
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        lo, hi = self.init_depth
        if not (1 <= lo <= hi <= self.max_depth):
            raise ConfigError(f"init_depth must lie within [1, {self.max_depth}]")
        if self.max_depth != MAX_DEPTH:
            raise ConfigError(f"max_depth is fixed at {MAX_DEPTH}")
        total = self.crossover_rate + self.mutation_rate + self.reproduction_rate
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"operator rates must sum to 1, got {total}")
        if min(self.crossover_rate, self.mutation_rate, self.reproduction_rate) < 0:
            raise ConfigError("operator rates must be non-negative")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")
        if not (0.0 <= self.terminal_rate <= 1.0):
            raise ConfigError("terminal_rate must lie in [0, 1]")


@dataclass
class Individual:
    genome: RulePair
    fitness: float | None = None
    origin: str = "random"  # random | llm-seeded | crossover | mutation | reproduction


@dataclass(frozen=True)
class SeedRejection:
    index: int
    cause: str


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    diversity: float
    best_routing: str
    best_sequencing: str
    wall_time: float
    op_counts: dict[str, int] = field(default_factory=dict)


@dataclass
class EvolutionLog:
    entries: list[GenerationStats] = field(default_factory=list)
    gen0_fitness: list[float] = field(default_factory=list)
    seed_rejections: list[SeedRejection] = field(default_factory=list)

    def to_csv(self, path: str) -> None:
        import os

        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("generation,best,mean,diversity\n")
            for e in self.entries:
                fh.write(f"{e.generation},{e.best_fitness!r},{e.mean_fitness!r},{e.diversity!r}\n")
        os.replace(tmp, path)


# ------------------------------------------------------------- population

def _ramped_pairs(count: int, params: GPParams, rng: np.random.Generator) -> list[RulePair]:
    """Ramped half-and-half: cycle depth levels, alternating full/grow.

    Levels run init_depth lo..hi; a population of 100 over levels 2..6
    gets 20 individuals per level, half full and half grow.  Routing and
    sequencing trees are generated independently.
    """
    lo, hi = params.init_depth
    levels = list(range(lo, hi + 1))
    pairs = []
    for i in range(count):
        level = levels[(i // 2) % len(levels)]
        mode = "full" if i % 2 == 0 else "grow"
        routing = random_tree(rng, mode, (level, level), params.terminal_rate)
        sequencing = random_tree(rng, mode, (level, level), params.terminal_rate)
        pairs.append(RulePair(routing=routing, sequencing=sequencing))
    return pairs


def init_random(params: GPParams, rng: np.random.Generator) -> list[Individual]:
    return [Individual(genome=pair) for pair in _ramped_pairs(params.population_size, params, rng)]


def init_seeded(
    seed_rules: list[RulePair],
    params: GPParams,
    rng: np.random.Generator,
) -> tuple[list[Individual], list[SeedRejection]]:
    """Warm-started population: accepted seeds verbatim, random refill.

    Seeds beyond population_size are truncated preserving order; seeds
    whose trees exceed the depth cap are rejected with index and cause
    (the caller decides whether to refill or fail).
    """
    accepted: list[Individual] = []
    rejections: list[SeedRejection] = []
    for index, pair in enumerate(seed_rules):
        d = max(depth(pair.routing), depth(pair.sequencing))
        if d > params.max_depth:
            rejections.append(SeedRejection(index=index, cause=f"max depth exceeded ({d} > {params.max_depth})"))
            continue
        if len(accepted) < params.population_size:
            accepted.append(Individual(genome=pair, origin="llm-seeded"))
    filler = _ramped_pairs(params.population_size - len(accepted), params, rng)
    population = accepted + [Individual(genome=pair) for pair in filler]
    return population, rejections


# -------------------------------------------------------------- evaluation

class FitnessEvaluator:
    """Maps rule pairs to scenario fitness via simulation.

    Caches generated instances (bounded) and the reference heuristic's
    objectives per seed (needed to normalize multi-objective fitness).
    Rules whose simulation trips the queue guard get DEGENERATE_FITNESS.
    """

    def __init__(self, config: SimConfig, scenario: Scenario, max_queue: int | None = None, cache_size: int = 8):
        self.config = config.with_overrides(utilization=scenario.utilization)
        self.scenario = scenario
        if max_queue is None:
            # An order of magnitude above what well-behaved rules reach.
            max_queue = max(100, self.config.total_jobs // 10)
        self.max_queue = max_queue
        self.evaluations = 0
        self._instances: OrderedDict[int, Instance] = OrderedDict()
        self._cache_size = cache_size
        self._reference: dict[int, ObjectiveVector] = {}

    def instance(self, seed: int) -> Instance:
        cached = self._instances.get(seed)
        if cached is not None:
            self._instances.move_to_end(seed)
            return cached
        inst = generate_instance(self.config, seed=seed)
        self._instances[seed] = inst
        if len(self._instances) > self._cache_size:
            self._instances.popitem(last=False)
        return inst

    def reference_objectives(self, seed: int) -> ObjectiveVector:
        if seed not in self._reference:
            outcome = run_simulation(RulePair.reference(), self.instance(seed))
            self._reference[seed] = outcome.objectives
        return self._reference[seed]

    def objectives(self, pair: RulePair, seed: int) -> ObjectiveVector:
        return run_simulation(pair, self.instance(seed), max_queue=self.max_queue).objectives

    def fitness(self, pair: RulePair, seed: int) -> float:
        self.evaluations += 1
        reference = self.reference_objectives(seed) if self.scenario.is_multi_objective else None
        try:
            objectives = self.objectives(pair, seed)
        except QueueOverflow:
            return DEGENERATE_FITNESS
        return weighted_fitness(objectives, self.scenario, reference)

    def evaluate_population(self, population: list[Individual], seed: int) -> None:
        """Assign fitness to every individual on the given instance seed."""
        for ind in population:
            ind.fitness = self.fitness(ind.genome, seed)

    def test_performance(self, pair: RulePair) -> float:
        """Mean fitness across the scenario's held-out test seeds."""
        total = 0.0
        for seed in self.scenario.test_seeds:
            reference = self.reference_objectives(seed) if self.scenario.is_multi_objective else None
            try:
                objectives = self.objectives(pair, seed)
            except QueueOverflow:
                total += DEGENERATE_FITNESS
                continue
            total += weighted_fitness(objectives, self.scenario, reference)
        return total / len(self.scenario.test_seeds)


def test_performance(best: Individual | RulePair, evaluator: FitnessEvaluator) -> float:
    pair = best.genome if isinstance(best, Individual) else best
    return evaluator.test_performance(pair)


# --------------------------------------------------------------- operators

def tournament_select(
    population: list[Individual],
    rng: np.random.Generator,
    k: int = 4,
) -> Individual:
    """Best of k uniform-with-replacement contestants; ties to lower index."""
    n = len(population)
    best_idx = int(rng.integers(n))
    best_fit = population[best_idx].fitness
    for _ in range(k - 1):
        idx = int(rng.integers(n))
        fit = population[idx].fitness
        if fit < best_fit or (fit == best_fit and idx < best_idx):
            best_idx = idx
            best_fit = fit
    return population[best_idx]


def _biased_node_path(tree: Expression, rng: np.random.Generator) -> tuple[int, ...]:
    """Crossover point: 0.90 internal / 0.10 leaf (leaf if no internals)."""
    internal = []
    leaves = []
    for path, node in iter_subtrees(tree):
        (leaves if node.is_leaf else internal).append(path)
    if internal and rng.random() < 0.90:
        return internal[int(rng.integers(len(internal)))]
    return leaves[int(rng.integers(len(leaves)))]


def _uniform_node_path(tree: Expression, rng: np.random.Generator) -> tuple[int, ...]:
    paths = [path for path, _ in iter_subtrees(tree)]
    return paths[int(rng.integers(len(paths)))]


def _with_slot(pair: RulePair, slot: int, tree: Expression) -> RulePair:
    if slot == 0:
        return RulePair(routing=tree, sequencing=pair.sequencing)
    return RulePair(routing=pair.routing, sequencing=tree)


def crossover(
    a: Individual,
    b: Individual,
    rng: np.random.Generator,
    params: GPParams,
) -> tuple[Individual, Individual]:
    """Swap subtrees in one slot (routing or sequencing) of both parents.

    A child whose tree would exceed the depth cap is replaced by its own
    unmodified parent's genome.
    """
    slot = int(rng.integers(2))
    tree_a = a.genome.routing if slot == 0 else a.genome.sequencing
    tree_b = b.genome.routing if slot == 0 else b.genome.sequencing
    path_a = _biased_node_path(tree_a, rng)
    path_b = _biased_node_path(tree_b, rng)
    sub_a = tree_a
    for step in path_a:
        sub_a = sub_a.left if step == 0 else sub_a.right
    sub_b = tree_b
    for step in path_b:
        sub_b = sub_b.left if step == 0 else sub_b.right
    new_a = replace_subtree(tree_a, path_a, sub_b)
    new_b = replace_subtree(tree_b, path_b, sub_a)
    genome_a = _with_slot(a.genome, slot, new_a) if depth(new_a) <= params.max_depth else a.genome
    genome_b = _with_slot(b.genome, slot, new_b) if depth(new_b) <= params.max_depth else b.genome
    return (
        Individual(genome=genome_a, origin="crossover"),
        Individual(genome=genome_b, origin="crossover"),
    )


def mutate(a: Individual, rng: np.random.Generator, params: GPParams) -> Individual:
    """Replace a uniformly chosen subtree with a fresh grow subtree."""
    slot = int(rng.integers(2))
    tree = a.genome.routing if slot == 0 else a.genome.sequencing
    path = _uniform_node_path(tree, rng)
    fresh = random_tree(rng, "grow", params.mutation_grow_depth, params.terminal_rate)
    mutated = replace_subtree(tree, path, fresh)
    genome = _with_slot(a.genome, slot, mutated) if depth(mutated) <= params.max_depth else a.genome
    return Individual(genome=genome, origin="mutation")


def phenotypic_diversity(population: list[Individual]) -> float:
    """Fraction of distinct fitness values in the population."""
    values = set()
    for ind in population:
        if ind.fitness is None:
            raise ValueError("phenotypic_diversity requires a fully evaluated population")
        values.add(ind.fitness)
    return len(values) / len(population)


def _breed(
    population: list[Individual],
    params: GPParams,
    rng: np.random.Generator,
) -> tuple[list[Individual], dict[str, int]]:
    """Next generation: one elite copy, then rate-driven operator events."""
    elite = min(population, key=lambda ind: ind.fitness)
    out = [Individual(genome=elite.genome, origin=elite.origin)]
    counts = {"crossover": 0, "mutation": 0, "reproduction": 0}
    n = params.population_size
    k = params.tournament_size
    cx = params.crossover_rate
    mu = cx + params.mutation_rate
    while len(out) < n:
        r = rng.random()
        if r < cx:
            p1 = tournament_select(population, rng, k)
            p2 = tournament_select(population, rng, k)
            c1, c2 = crossover(p1, p2, rng, params)
            counts["crossover"] += 1
            out.append(c1)
            if len(out) < n:
                out.append(c2)
        elif r < mu:
            parent = tournament_select(population, rng, k)
            out.append(mutate(parent, rng, params))
            counts["mutation"] += 1
        else:
            parent = tournament_select(population, rng, k)
            out.append(Individual(genome=parent.genome, origin="reproduction"))
            counts["reproduction"] += 1
    return out, counts


# ---------------------------------------------------------------- evolve

def evolve(
    params: GPParams,
    scenario: Scenario,
    config: SimConfig,
    rng: np.random.Generator,
    seed_rules: list[RulePair] | None = None,
    evaluator: FitnessEvaluator | None = None,
    on_generation=None,
) -> tuple[Individual, EvolutionLog]:
    """Run the generational loop; returns (best-ever individual, log).

    Generation g evaluates on training seed g mod len(training_seeds).
    generations = 0 evaluates the initial population only (empty log).
    Because the instance rotates, the best-ever comparison is across
    generations' training instances; the elite itself is re-evaluated
    every generation.  ``on_generation(g, population)`` is called after
    each evaluation, mainly so tests can audit populations.
    """
    if seed_rules is None:
        population = init_random(params, rng)
        rejections: list[SeedRejection] = []
    else:
        population, rejections = init_seeded(seed_rules, params, rng)

    if evaluator is None:
        evaluator = FitnessEvaluator(config, scenario)
    log = EvolutionLog(seed_rejections=rejections)
    train_seeds = scenario.training_seeds

    if params.generations == 0:
        evaluator.evaluate_population(population, train_seeds[0])
        log.gen0_fitness = [ind.fitness for ind in population]
        best = min(population, key=lambda ind: ind.fitness)
        if on_generation is not None:
            on_generation(0, population)
        return Individual(genome=best.genome, fitness=best.fitness, origin=best.origin), log

    best_ever: Individual | None = None
    op_counts: dict[str, int] = {"init": params.population_size}
    for g in range(params.generations):
        t0 = time.perf_counter()
        seed = train_seeds[g % len(train_seeds)]
        evaluator.evaluate_population(population, seed)
        if g == 0:
            log.gen0_fitness = [ind.fitness for ind in population]
        gen_best = min(population, key=lambda ind: ind.fitness)
        if best_ever is None or gen_best.fitness < best_ever.fitness:
            best_ever = Individual(genome=gen_best.genome, fitness=gen_best.fitness, origin=gen_best.origin)
        log.entries.append(
            GenerationStats(
                generation=g,
                best_fitness=gen_best.fitness,
                mean_fitness=sum(ind.fitness for ind in population) / len(population),
                diversity=phenotypic_diversity(population),
                best_routing=format_expr(gen_best.genome.routing),
                best_sequencing=format_expr(gen_best.genome.sequencing),
                wall_time=time.perf_counter() - t0,
                op_counts=dict(op_counts),
            )
        )
        if on_generation is not None:
            on_generation(g, population)
        if g < params.generations - 1:
            population, op_counts = _breed(population, params, rng)
    return best_ever, log
