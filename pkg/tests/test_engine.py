import numpy as np
import pytest

from antgp import adaptive_control as ac
from antgp import ant_world, engine, gp_core
from antgp.engine import RunConfig
from antgp.gp_core import ConfigurationError, EvolutionParams

SMALL = EvolutionParams(pop_size=60, max_generations=25, max_depth=8)


def config(mechanism="none", **kw):
    settings = ac.ControllerSettings(**kw)
    return RunConfig(params=SMALL, mechanism=mechanism, settings=settings, check_invariants=True)


@pytest.fixture(scope="module")
def trail():
    return ant_world.santa_fe_trail()


def test_run_config_rejects_zero_runs():
    with pytest.raises(ConfigurationError):
        RunConfig(runs=0)


def test_baseline_keeps_normal_rate(trail):
    trace = engine.run_single(config("none"), 0, trail)
    assert {r.p_mutation for r in trace.records} == {SMALL.p_mutation_normal}
    assert {r.event for r in trace.records} == {"none"}


@pytest.mark.parametrize("mechanism", sorted(ac.MECHANISMS))
def test_elitism_and_population_size(mechanism, trail):
    trace = engine.run_single(config(mechanism), 3, trail)
    maxima = [r.max_fitness for r in trace.records]
    assert all(b >= a for a, b in zip(maxima, maxima[1:]))
    assert 1 <= len(trace.records) <= SMALL.max_generations
    assert [r.generation for r in trace.records] == list(range(len(trace.records)))


def test_same_seed_same_trace(trail):
    a = engine.run_single(config("avsmr"), 7, trail)
    b = engine.run_single(config("avsmr"), 7, trail)
    assert a.records == b.records
    assert np.array_equal(a.best.tree, b.best.tree)


def test_avsmr_uses_two_rates(trail):
    trace = engine.run_single(config("avsmr", avsmr_streak=1, avsmr_threshold=0.5), 1, trail)
    rates = {r.p_mutation for r in trace.records}
    assert rates == {SMALL.p_mutation_normal, SMALL.p_mutation_high}
    assert trace.event_count("avsmr_high") >= 1


@pytest.mark.parametrize("mechanism", ["flood_simple", "fmlps", "new_blood"])
def test_floods_spaced(mechanism, trail):
    trace = engine.run_single(config(mechanism, flood_theta=0.5), 2, trail)
    floods = [r.generation for r in trace.records if r.event == "flood"]
    assert floods, "flood never fired with a permissive threshold"
    assert all(b - a >= 7 for a, b in zip(floods, floods[1:]))


def test_run_generation_phases(trail):
    cfg = config("new_blood")
    rng = np.random.default_rng(0)
    pop = gp_core.init_population(SMALL, ant_world.ANT_PRIMITIVES, rng)
    engine.evaluate(pop.members, trail, SMALL, cfg.memory_size)
    controller = ac.Controller("new_blood", SMALL, cfg.settings)
    # force a flood on the next observation
    controller.flood = ac.FloodState(variant=ac.FloodVariant.NEW_BLOOD, window=(1.0,) * 6, theta=1e9,
                                     survivor_count=6)
    nxt, record = engine.run_generation(pop, controller, cfg, rng, trail)
    assert record.event == "flood"
    assert len(nxt) == SMALL.pop_size
    assert not any(m.is_new_blood for m in nxt.members)
    assert nxt.generation == 1
    assert nxt.raw_fitness().max() >= pop.raw_fitness().max()
    assert all(m.raw_fitness >= 0 for m in nxt.members)


def test_cached_fitness_is_true_fitness(trail):
    cfg = config("none")
    rng = np.random.default_rng(4)
    pop = gp_core.init_population(SMALL, ant_world.ANT_PRIMITIVES, rng)
    engine.evaluate(pop.members, trail, SMALL, cfg.memory_size)
    controller = ac.Controller("none", SMALL)
    for _ in range(3):
        pop, _ = engine.run_generation(pop, controller, cfg, rng, trail)
    fresh = ant_world.evaluate_many([m.tree for m in pop.members], trail)
    assert list(fresh) == list(pop.raw_fitness())


def test_aga_records_mean_rate(trail):
    trace = engine.run_single(config("aga"), 0, trail)
    assert all(0.0 <= r.p_mutation <= 1.0 for r in trace.records)
    assert len({r.p_mutation for r in trace.records}) > 1


def test_early_stop_on_full_food():
    # a two-pellet line is solved by "always MOVE" in the first generation
    tiny = ant_world.parse_trail("5 1 0 0 E\n.##..\n")
    params = EvolutionParams(pop_size=30, max_generations=40, max_depth=4, step_budget=20)
    trace = engine.run_single(RunConfig(params=params, trail=tiny), 0)
    assert trace.success
    assert trace.generations_used < 40
    assert trace.records[-1].max_fitness == 2


def test_experiment_seeds(trail):
    cfg = RunConfig(params=EvolutionParams(pop_size=30, max_generations=5, max_depth=6), runs=5, base_seed=40)
    traces = engine.run_experiment(cfg, trail)
    assert [t.seed for t in traces] == [40, 41, 42, 43, 44]
    again = engine.run_experiment(cfg, trail)
    assert [t.records for t in traces] == [t.records for t in again]
