"""Parameter-control mechanisms driven by per-generation fitness statistics.

Pure functions over small state dataclasses, plus :class:`Controller`, the
stateful wrapper the engine talks to once per generation.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from antgp import gp_core
from antgp.gp_core import ConfigurationError, EvolutionParams, Individual, Population, PrimitiveSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    avg_fitness: float
    max_fitness: float

    def __post_init__(self):
        if not self.max_fitness >= self.avg_fitness >= 0:
            raise ValueError(f"need max >= avg >= 0, got max={self.max_fitness} avg={self.avg_fitness}")

    @classmethod
    def of(cls, pop: Population) -> GenerationStats:
        raw = pop.raw_fitness()
        return cls(pop.generation, float(raw.mean()), float(raw.max()))


# --- static and dynamic schedules ------------------------------------------

@dataclass(frozen=True)
class StaticScheduleParams:
    L: int = 100


@dataclass(frozen=True)
class HesserMannerParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.01
    lam: int = 500
    L: int = 100

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.lam, self.L) <= 0:
            raise ConfigurationError("Hesser-Manner constants must be strictly positive")


def muhlenbein_rate(params: StaticScheduleParams) -> float:
    if params.L < 1:
        raise ConfigurationError(f"L must be >= 1, got {params.L}")
    return 1.0 / params.L


def fogarty_rate(t: int) -> float:
    if t < 0:
        raise ValueError("generation counter must be nonnegative")
    return 1.0 / 240.0 + 0.11375 / 2.0 ** t


def hesser_manner_rate(t: int, params: HesserMannerParams) -> float:
    # decay constant is gamma; the printed formula shows lambda there as well
    return (math.sqrt(params.alpha / params.beta) * math.exp(-params.gamma * t / 2.0)
            / (params.lam * math.sqrt(params.L)))


# --- AGA ---------------------------------------------------------------------

@dataclass(frozen=True)
class AgaParams:
    k1: float = 0.999
    k2: float = 0.5
    k3: float = 0.999
    k4: float = 0.5

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4"):
            k = getattr(self, name)
            if not 0.0 < k <= 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {k}")
        if self.k1 >= 1.0 or self.k2 >= 1.0:
            raise ConfigurationError("k1 and k2 must be below 1.0")


def _aga(f: float, stats: GenerationStats, k_scale: float, k_low: float) -> float:
    f_bar, f_max = stats.avg_fitness, stats.max_fitness
    if f_max <= f_bar:
        return k_low
    if f >= f_bar:
        return min(1.0, max(0.0, k_scale * (f_max - f) / (f_max - f_bar)))
    return k_low


def aga_crossover_prob(f_prime: float, stats: GenerationStats, params: AgaParams) -> float:
    """Crossover probability for a pair whose fitter parent has ``f_prime``."""
    return _aga(f_prime, stats, params.k1, params.k3)


def aga_mutation_prob(f: float, stats: GenerationStats, params: AgaParams) -> float:
    return _aga(f, stats, params.k2, params.k4)


# --- AVSMR -------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSumState:
    delta_sum: float = 0.0
    feedback_alpha: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.feedback_alpha < 1.0:
            raise ConfigurationError("feedback_alpha must lie in [0, 1)")


def update_delta_sum(state: DeltaSumState, f_bar_i: float, f_bar_prev: float) -> DeltaSumState:
    """Exponentially fed-back relative change of the average fitness."""
    if f_bar_i < 0 or f_bar_prev < 0:
        raise ValueError("average fitness must be nonnegative")
    change = (f_bar_i - f_bar_prev) / f_bar_i if f_bar_i > 0 else 0.0
    return replace(state, delta_sum=state.feedback_alpha * state.delta_sum + change)


class Mode(enum.Enum):
    NORMAL = "normal"
    HIGH = "high"


@dataclass(frozen=True)
class AvsmrState:
    mode: Mode = Mode.NORMAL
    low_streak: int = 0
    threshold: float = 0.01
    streak_required: int = 3
    high_age: int = 0
    n_limit: int = 5
    last_max_fitness: float = -math.inf

    def __post_init__(self):
        if self.streak_required < 1 or self.n_limit < 1:
            raise ConfigurationError("streak_required and n_limit must be >= 1")


class Pairing(enum.Enum):
    FREE = "free"
    REQUIRE_NEW_BLOOD = "require_new_blood"


@dataclass(frozen=True)
class ControlDirective:
    p_mutation: float
    p_crossover: float
    flood_now: bool = False
    scaling_exponent: float = 1.0
    pairing_rule: Pairing = Pairing.FREE
    per_individual: bool = False  # AGA: probabilities come from the parents' fitness
    event: str = "none"

    def __post_init__(self):
        if not (0.0 <= self.p_mutation <= 1.0 and 0.0 <= self.p_crossover <= 1.0):
            raise ValueError("directive probabilities must lie in [0, 1]")


def avsmr_step(state: AvsmrState, ds: DeltaSumState, stats: GenerationStats,
               params: EvolutionParams) -> tuple[AvsmrState, ControlDirective]:
    """Switch the mutation rate between its normal and high value.

    ``ds`` must already include this generation. Event is ``avsmr_high`` on
    the generation that switches up and ``avsmr_reset`` on the one that
    switches back.
    """
    event = "none"
    improved = stats.max_fitness > state.last_max_fitness
    low = ds.delta_sum < state.threshold
    if state.mode is Mode.NORMAL:
        streak = state.low_streak + 1 if low else 0
        if streak >= state.streak_required:
            state = replace(state, mode=Mode.HIGH, low_streak=0, high_age=1)
            event = "avsmr_high"
        else:
            state = replace(state, low_streak=streak)
    else:
        if not low or improved or state.high_age >= state.n_limit:
            state = replace(state, mode=Mode.NORMAL, high_age=0, low_streak=0)
            event = "avsmr_reset"
        else:
            state = replace(state, high_age=state.high_age + 1)
    state = replace(state, last_max_fitness=max(state.last_max_fitness, stats.max_fitness))
    p_m = params.p_mutation_high if state.mode is Mode.HIGH else params.p_mutation_normal
    return state, ControlDirective(p_mutation=p_m, p_crossover=params.p_crossover, event=event)


# --- floods ------------------------------------------------------------------

class FloodVariant(enum.Enum):
    SIMPLE = "simple"
    FMLPS = "fmlps"
    NEW_BLOOD = "new_blood"


@dataclass(frozen=True)
class FloodState:
    variant: FloodVariant = FloodVariant.SIMPLE
    window: tuple[float, ...] = ()
    window_size: int = 7
    theta: float = 0.05
    survivor_count: int = 50
    fmlps_countdown: int = 0
    fmlps_duration: int = 5
    low_pressure_exponent: float = 0.3
    pairing_rule: Pairing = Pairing.FREE
    survivor_policy: str = "truncation"

    def __post_init__(self):
        if self.survivor_policy not in ("truncation", "roulette"):
            raise ConfigurationError(f"unknown survivor policy {self.survivor_policy!r}")
        if self.window_size < 2:
            raise ConfigurationError("flood window must hold at least 2 generations")
        if self.survivor_count < 1:
            raise ConfigurationError("survivor_count must be >= 1")
        if len(self.window) > self.window_size:
            raise ValueError("flood window overfull")


def window_progress(window) -> float:
    """Sum of successive differences over the window, done term by term."""
    return float(sum(window[i] - window[i - 1] for i in range(1, len(window))))


def flood_trigger(state: FloodState, stats: GenerationStats) -> tuple[FloodState, bool]:
    """Append this generation's average and test for stagnation.

    Relative form: summed successive differences over the last N averages,
    divided by the current average, below ``theta``. The window is cleared
    on activation, so the next N-1 generations cannot fire.
    """
    window = (state.window + (stats.avg_fitness,))[-state.window_size:]
    if len(window) < state.window_size:
        return replace(state, window=window), False
    current = window[-1]
    ratio = window_progress(window) / current if current > 0 else 0.0
    if ratio < state.theta:
        return replace(state, window=()), True
    return replace(state, window=window), False


def flood_apply(pop: Population, state: FloodState, prims: PrimitiveSet, params: EvolutionParams,
                rng: np.random.Generator) -> tuple[Population, FloodState]:
    """Keep ``survivor_count`` members and regenerate the rest.

    Survivors are the fittest (``truncation``) or a fitness-proportionate
    sample without replacement (``roulette``).

    Newcomers come from the same ramped half-and-half generator as the
    initial population and carry ``is_new_blood``; they are returned
    unevaluated (fitness 0).
    """
    n = len(pop)
    if state.survivor_count >= n:
        raise ConfigurationError(f"survivor_count {state.survivor_count} must be < population size {n}")
    raw = pop.raw_fitness()
    if state.survivor_policy == "truncation":
        keep = gp_core.best_indices(raw, state.survivor_count)
    else:
        weights = raw.astype(np.float64) + 1e-12
        keep = np.sort(rng.choice(n, size=state.survivor_count, replace=False, p=weights / weights.sum()))
    survivors = []
    for i in keep:
        m = pop.members[int(i)].copy()
        m.is_new_blood = False
        survivors.append(m)
    fresh = gp_core.ramped_trees(n - len(survivors), params.max_depth, prims, rng)
    members = survivors + [Individual(t, is_new_blood=True) for t in fresh]
    if state.variant is FloodVariant.FMLPS:
        state = replace(state, fmlps_countdown=state.fmlps_duration)
    elif state.variant is FloodVariant.NEW_BLOOD:
        state = replace(state, pairing_rule=Pairing.REQUIRE_NEW_BLOOD)
    return Population(members, generation=pop.generation), state


def fmlps_directive(state: FloodState, params: EvolutionParams) -> tuple[FloodState, ControlDirective]:
    """Low-pressure scaling while the post-flood countdown runs."""
    if state.variant is FloodVariant.FMLPS and state.fmlps_countdown > 0:
        state = replace(state, fmlps_countdown=state.fmlps_countdown - 1)
        exponent = state.low_pressure_exponent
    else:
        exponent = 1.0
    return state, ControlDirective(p_mutation=params.p_mutation_normal,
                                   p_crossover=params.p_crossover, scaling_exponent=exponent)


def new_blood_pairing(pop: Population, rng: np.random.Generator, n_pairs: int | None = None) -> list[tuple[int, int]]:
    """Mating pairs (member indices) each holding at least one newcomer.

    The newcomer is drawn uniformly from the new-blood members, the partner
    by roulette over the whole population. With no newcomers, falls back to
    free roulette pairing.
    """
    n = len(pop)
    n_pairs = (n + 1) // 2 if n_pairs is None else n_pairs
    scaled = pop.scaled_fitness()
    fresh = np.flatnonzero(pop.new_blood_mask())
    if fresh.size == 0:
        log.warning("new-blood pairing requested but no new-blood members; using free pairing")
        return free_pairing(pop, rng, n_pairs)
    pairs = []
    for _ in range(n_pairs):
        newcomer = int(fresh[rng.integers(fresh.size)])
        partner = int(gp_core.roulette_indices(scaled, 1, rng)[0])
        pairs.append((newcomer, partner))
    return pairs


def free_pairing(pop: Population, rng: np.random.Generator, n_pairs: int | None = None) -> list[tuple[int, int]]:
    n = len(pop)
    n_pairs = (n + 1) // 2 if n_pairs is None else n_pairs
    picks = gp_core.roulette_indices(pop.scaled_fitness(), 2 * n_pairs, rng)
    return [(int(picks[2 * k]), int(picks[2 * k + 1])) for k in range(n_pairs)]


# --- controller wrapper --------------------------------------------------------

MECHANISMS = {
    "none": "standard GP, constant rates",
    "static": "constant mutation rate 1/L",
    "fogarty": "deterministic decay 1/240 + 0.11375/2^t",
    "hesser_manner": "deterministic exponential decay",
    "aga": "per-individual crossover/mutation probabilities from parent fitness",
    "avsmr": "adaptive value-switching of the mutation rate",
    "flood_simple": "flood: replace all but the best on stagnation",
    "fmlps": "flood followed by low-pressure power scaling",
    "new_blood": "flood followed by newcomer-constrained mating",
}

FLOOD_VARIANTS = {
    "flood_simple": FloodVariant.SIMPLE,
    "fmlps": FloodVariant.FMLPS,
    "new_blood": FloodVariant.NEW_BLOOD,
}


@dataclass
class ControllerSettings:
    """Every mechanism constant, with defaults. Unused ones are ignored."""

    static: StaticScheduleParams = field(default_factory=StaticScheduleParams)
    hesser_manner: HesserMannerParams = field(default_factory=HesserMannerParams)
    aga: AgaParams = field(default_factory=AgaParams)
    feedback_alpha: float = 0.4
    avsmr_threshold: float = 0.01
    avsmr_streak: int = 3
    avsmr_n_limit: int = 5
    flood_window: int = 7
    flood_theta: float = 0.05
    flood_survivors: int | None = None  # None: 10% of the population
    flood_survivor_policy: str = "truncation"
    fmlps_duration: int = 5
    fmlps_exponent: float = 0.3

    def survivor_count(self, pop_size: int) -> int:
        if self.flood_survivors is not None:
            return self.flood_survivors
        return max(1, pop_size // 10)


class Controller:
    """Holds one mechanism's state and turns each generation's stats into a directive."""

    def __init__(self, kind: str, params: EvolutionParams, settings: ControllerSettings | None = None):
        if kind not in MECHANISMS:
            raise ConfigurationError(f"unknown mechanism {kind!r}; choose from {sorted(MECHANISMS)}")
        self.kind = kind
        self.params = params
        self.settings = settings or ControllerSettings()
        s = self.settings
        self.delta = DeltaSumState(feedback_alpha=s.feedback_alpha)
        self.avsmr = AvsmrState(threshold=s.avsmr_threshold, streak_required=s.avsmr_streak,
                                n_limit=s.avsmr_n_limit)
        self.flood = None
        if kind in FLOOD_VARIANTS:
            survivors = s.survivor_count(params.pop_size)
            if survivors >= params.pop_size:
                raise ConfigurationError("flood_survivors must be below pop_size")
            self.flood = FloodState(variant=FLOOD_VARIANTS[kind], window_size=s.flood_window,
                                    theta=s.flood_theta, survivor_count=survivors,
                                    fmlps_duration=s.fmlps_duration,
                                    survivor_policy=s.flood_survivor_policy,
                                    low_pressure_exponent=s.fmlps_exponent)
        self._prev_avg = None

    @property
    def is_flood(self) -> bool:
        return self.flood is not None

    def observe(self, stats: GenerationStats) -> ControlDirective:
        """Directive for the reproduction phase that follows ``stats``.

        For flood mechanisms, ``flood_now`` asks the engine to call
        :meth:`flood` before reproducing, then :meth:`after_flood`.
        """
        p = self.params
        kind = self.kind
        if kind == "none":
            return ControlDirective(p.p_mutation_normal, p.p_crossover)
        if kind == "static":
            return ControlDirective(muhlenbein_rate(self.settings.static), p.p_crossover)
        if kind == "fogarty":
            return ControlDirective(fogarty_rate(stats.generation), p.p_crossover)
        if kind == "hesser_manner":
            return ControlDirective(min(1.0, hesser_manner_rate(stats.generation, self.settings.hesser_manner)),
                                    p.p_crossover)
        if kind == "aga":
            return ControlDirective(p.p_mutation_normal, p.p_crossover, per_individual=True)
        if kind == "avsmr":
            if self._prev_avg is not None:
                self.delta = update_delta_sum(self.delta, stats.avg_fitness, self._prev_avg)
                self.avsmr, directive = avsmr_step(self.avsmr, self.delta, stats, p)
            else:
                # first generation: no change to measure yet
                self.avsmr = replace(self.avsmr, last_max_fitness=stats.max_fitness)
                directive = ControlDirective(p.p_mutation_normal, p.p_crossover)
            self._prev_avg = stats.avg_fitness
            return directive
        self.flood, fire = flood_trigger(self.flood, stats)
        if fire:
            return ControlDirective(p.p_mutation_normal, p.p_crossover, flood_now=True, event="flood")
        return self._reproduction_directive()

    def flood_population(self, pop: Population, prims: PrimitiveSet, rng: np.random.Generator) -> Population:
        pop, self.flood = flood_apply(pop, self.flood, prims, self.params, rng)
        return pop

    def after_flood(self) -> ControlDirective:
        return replace(self._reproduction_directive(), flood_now=True, event="flood")

    def _reproduction_directive(self) -> ControlDirective:
        self.flood, directive = fmlps_directive(self.flood, self.params)
        pairing = self.flood.pairing_rule
        if pairing is Pairing.REQUIRE_NEW_BLOOD:
            # one reproduction phase only
            self.flood = replace(self.flood, pairing_rule=Pairing.FREE)
        return replace(directive, pairing_rule=pairing)
