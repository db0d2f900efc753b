"""Program trees, population initialization, variation, selection and elitism.

A tree is a read-only prefix-order ``int8`` numpy array of primitive ids.
Primitive ids index into a :class:`PrimitiveSet`; terminals come first.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from antgp import kernels


class ConfigurationError(ValueError):
    """Raised for parameter combinations that cannot produce a valid run."""


@dataclass(frozen=True)
class PrimitiveSet:
    """Terminals (arity 0) followed by functions; the id of a primitive is its position."""

    terminals: tuple[str, ...]
    functions: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.terminals:
            raise ConfigurationError("primitive set needs at least one terminal")
        if not self.functions:
            raise ConfigurationError("primitive set needs at least one function")
        names = list(self.terminals) + [name for name, _ in self.functions]
        if len(set(names)) != len(names):
            raise ConfigurationError("primitive names must be unique")
        if any(arity < 1 for _, arity in self.functions):
            raise ConfigurationError("function arity must be >= 1")
        arity = [0] * len(self.terminals) + [a for _, a in self.functions]
        object.__setattr__(self, "arity", np.array(arity, dtype=np.int8))

    @property
    def names(self) -> list[str]:
        return list(self.terminals) + [name for name, _ in self.functions]

    @property
    def n_terminals(self) -> int:
        return len(self.terminals)

    def __len__(self):
        return len(self.terminals) + len(self.functions)

    def id_of(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class EvolutionParams:
    pop_size: int = 500
    max_generations: int = 150
    max_depth: int = 10
    p_crossover: float = 0.9
    p_mutation_normal: float = 0.1
    p_mutation_high: float = 0.8
    elite_count: int = 1
    rng_seed: int = 0
    step_budget: int = 400
    mutation_depth: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.pop_size <= 0:
            raise ConfigurationError(f"pop_size must be positive, got {self.pop_size}")
        if self.max_generations <= 0:
            raise ConfigurationError("max_generations must be positive")
        if self.max_depth < 2:
            raise ConfigurationError("max_depth must be >= 2")
        for name in ("p_crossover", "p_mutation_normal", "p_mutation_high"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")
        if not self.p_mutation_high > self.p_mutation_normal:
            raise ConfigurationError("p_mutation_high must exceed p_mutation_normal")
        if self.elite_count < 1:
            raise ConfigurationError("elite_count must be >= 1")
        if self.pop_size <= self.elite_count:
            raise ConfigurationError("pop_size must exceed elite_count")
        if self.step_budget <= 0:
            raise ConfigurationError("step_budget must be positive")
        if self.mutation_depth < 1:
            raise ConfigurationError("mutation_depth must be >= 1")


@dataclass
class Individual:
    tree: np.ndarray
    raw_fitness: int = 0
    scaled_fitness: float = 0.0
    is_new_blood: bool = False

    def copy(self) -> Individual:
        # trees are immutable, so sharing the array is a verbatim copy
        return replace(self)


@dataclass
class Population:
    members: list[Individual]
    generation: int = 0

    def __len__(self):
        return len(self.members)

    def raw_fitness(self) -> np.ndarray:
        return np.array([m.raw_fitness for m in self.members], dtype=np.int64)

    def scaled_fitness(self) -> np.ndarray:
        return np.array([m.scaled_fitness for m in self.members], dtype=np.float64)

    def new_blood_mask(self) -> np.ndarray:
        return np.array([m.is_new_blood for m in self.members], dtype=bool)


# --- trees -----------------------------------------------------------------

def freeze(code) -> np.ndarray:
    tree = np.asarray(code, dtype=np.int8).copy()
    tree.setflags(write=False)
    return tree


def tree_depth(tree: np.ndarray, prims: PrimitiveSet) -> int:
    return int(kernels.node_depths(tree, prims.arity).max())


def validate_tree(tree: np.ndarray, prims: PrimitiveSet, max_depth: int | None = None) -> None:
    """Raise ``ValueError`` unless ``tree`` is arity-correct and within depth."""
    if tree.ndim != 1 or tree.size == 0:
        raise ValueError("tree must be a non-empty 1-d array")
    if not kernels.is_well_formed(tree, prims.arity):
        raise ValueError("tree is not arity-correct")
    if max_depth is not None and tree_depth(tree, prims) > max_depth:
        raise ValueError(f"tree depth exceeds {max_depth}")


def to_sexpr(tree: np.ndarray, prims: PrimitiveSet) -> str:
    names = prims.names
    out = []
    pending = []
    for op in tree:
        k = int(prims.arity[op])
        if k == 0:
            out.append(names[op])
        else:
            out.append(f"({names[op]}")
        if k > 0:
            pending.append(k)
            continue
        while pending:
            pending[-1] -= 1
            if pending[-1] > 0:
                break
            pending.pop()
            out[-1] += ")"
    return " ".join(out)


def parse_sexpr(text: str, prims: PrimitiveSet) -> np.ndarray:
    """Inverse of :func:`to_sexpr`, e.g. ``(PROG2 (WRITE 1 2) (READ 1))``."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    names = prims.names
    code = []
    depth = 0
    for tok in tokens:
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        else:
            code.append(names.index(tok))
    if depth != 0:
        raise ValueError("unbalanced parentheses")
    tree = freeze(code)
    validate_tree(tree, prims)
    return tree


def _generate(rng: np.random.Generator, prims: PrimitiveSet, depth: int, full: bool,
              root_function: bool = True) -> list[int]:
    """One tree of depth <= ``depth``; root forced to a function when depth >= 2."""
    n_term = prims.n_terminals
    n_all = len(prims)
    arity = prims.arity
    code: list[int] = []
    stack = [1]
    while stack:
        d = stack.pop()
        if d >= depth:
            op = int(rng.integers(n_term))
        elif full or (d == 1 and root_function):
            op = int(rng.integers(n_term, n_all))
        else:
            op = int(rng.integers(n_all))
        code.append(op)
        stack.extend([d + 1] * int(arity[op]))
    return code


def grow_tree(rng, prims, depth):
    return freeze(_generate(rng, prims, depth, full=False))


def full_tree(rng, prims, depth):
    return freeze(_generate(rng, prims, depth, full=True))


def ramped_trees(n: int, max_depth: int, prims: PrimitiveSet, rng: np.random.Generator,
                 min_depth: int = 2) -> list[np.ndarray]:
    """Ramped half-and-half: depths cycle over [min_depth, max_depth], alternating full/grow."""
    if n <= 0:
        raise ConfigurationError(f"cannot generate {n} trees")
    if max_depth < min_depth:
        raise ConfigurationError(f"max_depth {max_depth} < min_depth {min_depth}")
    levels = list(range(min_depth, max_depth + 1))
    trees = []
    for i in range(n):
        depth = levels[(i // 2) % len(levels)]
        trees.append(full_tree(rng, prims, depth) if i % 2 == 0 else grow_tree(rng, prims, depth))
    return trees


def init_population(params: EvolutionParams, prims: PrimitiveSet, rng: np.random.Generator) -> Population:
    params.validate()
    trees = ramped_trees(params.pop_size, params.max_depth, prims, rng)
    return Population([Individual(t) for t in trees], generation=0)


# --- variation -------------------------------------------------------------

CROSSOVER_RETRIES = 5


def subtree_crossover(a: Individual, b: Individual, rng: np.random.Generator, max_depth: int,
                      prims: PrimitiveSet) -> tuple[Individual, Individual]:
    """Swap uniformly chosen subtrees.

    Point pairs that would push either child past ``max_depth`` are redrawn
    up to ``CROSSOVER_RETRIES`` times; after that the parents are copied.
    Children start with zero fitness.
    """
    ta, tb = a.tree, b.tree
    ends_a = kernels.subtree_ends(ta, prims.arity)
    ends_b = kernels.subtree_ends(tb, prims.arity)
    depth_a = kernels.node_depths(ta, prims.arity)
    depth_b = kernels.node_depths(tb, prims.arity)
    for _ in range(CROSSOVER_RETRIES):
        i = int(rng.integers(ta.size))
        j = int(rng.integers(tb.size))
        ei, ej = int(ends_a[i]), int(ends_b[j])
        height_a = int(depth_a[i:ei].max()) - int(depth_a[i]) + 1
        height_b = int(depth_b[j:ej].max()) - int(depth_b[j]) + 1
        # a's remaining part may be deeper than the spliced-in branch
        if depth_a[i] - 1 + height_b > max_depth or depth_b[j] - 1 + height_a > max_depth:
            continue
        child_a = np.concatenate((ta[:i], tb[j:ej], ta[ei:]))
        child_b = np.concatenate((tb[:j], ta[i:ei], tb[ej:]))
        child_a.setflags(write=False)
        child_b.setflags(write=False)
        return Individual(child_a), Individual(child_b)
    return Individual(ta), Individual(tb)


def subtree_mutation(ind: Individual, rng: np.random.Generator, max_depth: int,
                     prims: PrimitiveSet, mutation_depth: int = 4) -> Individual:
    """Replace one uniformly chosen subtree with a freshly grown one."""
    tree = ind.tree
    i = int(rng.integers(tree.size))
    end = int(kernels.subtree_ends(tree, prims.arity)[i])
    node_depth = int(kernels.node_depths(tree, prims.arity)[i])
    limit = min(max_depth - node_depth + 1, mutation_depth)
    fresh = np.array(_generate(rng, prims, limit, full=False, root_function=False), dtype=np.int8)
    child = np.concatenate((tree[:i], fresh, tree[end:]))
    child.setflags(write=False)
    return Individual(child)


# --- selection and scaling -------------------------------------------------

def power_scaling(raw, exponent: float):
    """``raw ** exponent`` for nonnegative fitness; works on scalars and arrays."""
    if exponent <= 0:
        raise ValueError(f"exponent must be positive, got {exponent}")
    values = np.asarray(raw, dtype=np.float64)
    if np.any(values < 0):
        raise ValueError("power scaling needs nonnegative fitness")
    out = np.power(values, exponent)
    return float(out) if out.ndim == 0 else out


def apply_scaling(pop: Population, exponent: float) -> None:
    scaled = power_scaling(pop.raw_fitness(), exponent)
    for m, s in zip(pop.members, scaled):
        m.scaled_fitness = float(s)


def roulette_indices(scaled: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` fitness-proportionate draws; uniform when all fitness is zero."""
    scaled = np.asarray(scaled, dtype=np.float64)
    total = scaled.sum()
    if total <= 0.0:
        return rng.integers(scaled.size, size=n)
    cumulative = np.cumsum(scaled)
    picks = np.searchsorted(cumulative, rng.random(n) * total, side="right")
    return np.minimum(picks, scaled.size - 1)


def roulette_select(pop: Population, rng: np.random.Generator) -> Individual:
    if not pop.members:
        raise ValueError("cannot select from an empty population")
    return pop.members[int(roulette_indices(pop.scaled_fitness(), 1, rng)[0])]


# --- elitism ---------------------------------------------------------------

def best_indices(raw: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k fittest, ties to the lower index."""
    return np.argsort(-np.asarray(raw), kind="stable")[:k]


def apply_elitism(old: Population, next_pop: Population, elite_count: int) -> Population:
    """Copy the ``elite_count`` best of ``old`` over the worst of ``next_pop``."""
    elites = best_indices(old.raw_fitness(), elite_count)
    worst = np.argsort(next_pop.raw_fitness(), kind="stable")[:elite_count]
    members = list(next_pop.members)
    for slot, src in zip(worst, elites):
        members[int(slot)] = old.members[int(src)].copy()
    return Population(members, generation=next_pop.generation)


def mean_and_max(pop: Population) -> tuple[float, int]:
    raw = pop.raw_fitness()
    return float(raw.mean()), int(raw.max())


__all__ = [
    "ConfigurationError", "PrimitiveSet", "EvolutionParams", "Individual", "Population",
    "freeze", "tree_depth", "validate_tree", "to_sexpr", "parse_sexpr", "grow_tree",
    "full_tree", "ramped_trees", "init_population", "subtree_crossover", "subtree_mutation",
    "power_scaling", "apply_scaling", "roulette_indices", "roulette_select", "best_indices",
    "apply_elitism", "mean_and_max", "CROSSOVER_RETRIES",
]
