"""Generational loop: stats, control, flood, scaling, pairing, variation, elitism."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from antgp import ant_world, gp_core
from antgp.adaptive_control import (
    ControlDirective, Controller, ControllerSettings, GenerationStats, Pairing,
    aga_crossover_prob, aga_mutation_prob, free_pairing, new_blood_pairing,
)
from antgp.ant_world import TrailGrid
from antgp.gp_core import ConfigurationError, EvolutionParams, Individual, Population

EVENTS = ("none", "avsmr_high", "avsmr_reset", "flood")


@dataclass(frozen=True)
class RunConfig:
    params: EvolutionParams = field(default_factory=EvolutionParams)
    mechanism: str = "none"
    settings: ControllerSettings = field(default_factory=ControllerSettings)
    trail: TrailGrid | None = None
    runs: int = 1
    base_seed: int = 0
    memory_size: int = ant_world.MEMORY_SIZE
    check_invariants: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")

    def resolved_trail(self) -> TrailGrid:
        return self.trail if self.trail is not None else ant_world.santa_fe_trail()


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    avg_fitness: float
    max_fitness: float
    p_mutation: float
    event: str = "none"


@dataclass
class RunTrace:
    run: int
    seed: int
    records: list[GenerationRecord] = field(default_factory=list)
    best: Individual | None = None
    food_count: int = ant_world.SANTA_FE_FOOD

    @property
    def best_fitness(self) -> int:
        return int(max((r.max_fitness for r in self.records), default=0))

    @property
    def success(self) -> bool:
        return self.best_fitness >= self.food_count

    @property
    def generations_used(self) -> int:
        return len(self.records)

    def event_count(self, event: str) -> int:
        return sum(r.event == event for r in self.records)


def evaluate(members: list[Individual], trail: TrailGrid, params: EvolutionParams, memory_size: int) -> None:
    """Fill in raw fitness for the given members, in place."""
    if not members:
        return
    fitness = ant_world.evaluate_many([m.tree for m in members], trail, params.step_budget, memory_size)
    for m, f in zip(members, fitness):
        m.raw_fitness = int(f)


def _check(pop: Population, params: EvolutionParams) -> None:
    if len(pop) != params.pop_size:
        raise AssertionError(f"population size {len(pop)} != {params.pop_size}")
    for m in pop.members:
        gp_core.validate_tree(m.tree, ant_world.ANT_PRIMITIVES, params.max_depth)


def _offspring(pop: Population, pairs, directive: ControlDirective, stats: GenerationStats,
               config: RunConfig, rng: np.random.Generator) -> tuple[list[Individual], float]:
    """Children of each pair, with variation applied, and the p_mutation in effect.

    Under AGA the rate varies per child; the mean over children is reported.
    """
    params = config.params
    prims = ant_world.ANT_PRIMITIVES
    aga = config.settings.aga
    children = []
    applied = []
    for ia, ib in pairs:
        a, b = pop.members[ia], pop.members[ib]
        if directive.per_individual:
            p_c = aga_crossover_prob(max(a.raw_fitness, b.raw_fitness), stats, aga)
        else:
            p_c = directive.p_crossover
        if rng.random() < p_c:
            ca, cb = gp_core.subtree_crossover(a, b, rng, params.max_depth, prims)
            varied = [True, True]
        else:
            ca, cb = Individual(a.tree, a.raw_fitness), Individual(b.tree, b.raw_fitness)
            varied = [False, False]
        for k, (child, parent) in enumerate(((ca, a), (cb, b))):
            if directive.per_individual:
                p_m = aga_mutation_prob(parent.raw_fitness, stats, aga)
            else:
                p_m = directive.p_mutation
            applied.append(p_m)
            if rng.random() < p_m:
                child = gp_core.subtree_mutation(child, rng, params.max_depth, prims, params.mutation_depth)
                varied[k] = True
            child.is_new_blood = False
            # an unvaried copy keeps its parent's (pure) fitness
            child.raw_fitness = -1 if varied[k] else parent.raw_fitness
            children.append(child)
    if directive.per_individual:
        return children[:params.pop_size], float(np.mean(applied[:params.pop_size]))
    return children[:params.pop_size], directive.p_mutation


def run_generation(pop: Population, controller: Controller, config: RunConfig, rng: np.random.Generator,
                   trail: TrailGrid | None = None) -> tuple[Population, GenerationRecord]:
    """Advance one generation. ``pop`` must already be evaluated.

    Returns the next, evaluated population and the record describing the
    current one (post-flood stats when a flood fired).
    """
    params = config.params
    trail = trail or config.resolved_trail()
    stats = GenerationStats.of(pop)
    directive = controller.observe(stats)
    event = directive.event
    if directive.flood_now:
        pop = controller.flood_population(pop, ant_world.ANT_PRIMITIVES, rng)
        evaluate([m for m in pop.members if m.is_new_blood], trail, params, config.memory_size)
        stats = GenerationStats.of(pop)
        directive = controller.after_flood()
        event = "flood"

    gp_core.apply_scaling(pop, directive.scaling_exponent)
    n_pairs = (params.pop_size + 1) // 2
    if directive.pairing_rule is Pairing.REQUIRE_NEW_BLOOD:
        pairs = new_blood_pairing(pop, rng, n_pairs)
    else:
        pairs = free_pairing(pop, rng, n_pairs)
    children, p_used = _offspring(pop, pairs, directive, stats, config, rng)
    evaluate([c for c in children if c.raw_fitness < 0], trail, params, config.memory_size)
    nxt = gp_core.apply_elitism(pop, Population(children, generation=pop.generation + 1), params.elite_count)
    for m in nxt.members:
        m.is_new_blood = False
    if config.check_invariants:
        _check(nxt, params)

    record = GenerationRecord(stats.generation, stats.avg_fitness, stats.max_fitness, p_used, event)
    return nxt, record


def run_single(config: RunConfig, run_index: int, trail: TrailGrid | None = None) -> RunTrace:
    params = config.params
    trail = trail or config.resolved_trail()
    seed = config.base_seed + run_index
    rng = np.random.default_rng(seed)
    controller = Controller(config.mechanism, params, config.settings)
    pop = gp_core.init_population(params, ant_world.ANT_PRIMITIVES, rng)
    evaluate(pop.members, trail, params, config.memory_size)
    trace = RunTrace(run=run_index, seed=seed, food_count=trail.food_count)
    for _ in range(params.max_generations):
        best = pop.members[int(gp_core.best_indices(pop.raw_fitness(), 1)[0])]
        pop, record = run_generation(pop, controller, config, rng, trail)
        trace.records.append(record)
        trace.best = best.copy()
        if record.max_fitness >= trail.food_count:
            break
    return trace


def run_experiment(config: RunConfig, trail: TrailGrid | None = None) -> list[RunTrace]:
    """``config.runs`` independent runs seeded ``base_seed + run_index``."""
    trail = trail or config.resolved_trail()
    return [run_single(config, k, trail) for k in range(config.runs)]
