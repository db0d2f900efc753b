"""Santa Fe trail world with a whole-program-per-step ant and indexed memory.

Every step the ant's program is run once from the root; its integer value
mod 3 selects MOVE, LEFT or RIGHT. State carried between steps lives only in
the ant's indexed memory, which is zeroed at the start of each evaluation.

Trail file format::

    width height start_x start_y heading
    <height rows of width chars, '#' = food, '.' = empty>
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from antgp import kernels
from antgp.gp_core import PrimitiveSet

MEMORY_SIZE = 16
DEFAULT_STEP_BUDGET = 400

SANTA_FE_SHA256 = "410e91c62fd91d6fffd438800a3c51b338b325603b3ed79d5ba18ed8ce2b53e2"
SANTA_FE_FOOD = 89

HEADINGS = "NESW"

ANT_PRIMITIVES = PrimitiveSet(
    terminals=("0", "1", "2"),
    functions=(("IF-FOOD-AHEAD", 2), ("PROG2", 2), ("ADD", 2), ("READ", 1), ("WRITE", 2)),
)
assert np.array_equal(ANT_PRIMITIVES.arity, kernels.ANT_ARITY)


class TrailFormatError(ValueError):
    pass


class Action(enum.IntEnum):
    MOVE = kernels.ACTION_MOVE
    LEFT = kernels.ACTION_LEFT
    RIGHT = kernels.ACTION_RIGHT


@dataclass(frozen=True)
class TrailGrid:
    width: int
    height: int
    food_cells: frozenset
    start_pos: tuple[int, int]
    start_heading: str = "E"
    toroidal: bool = True

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise TrailFormatError("grid dimensions must be positive")
        if self.start_heading not in HEADINGS:
            raise TrailFormatError(f"heading must be one of {HEADINGS}, got {self.start_heading!r}")
        if not self.in_bounds(self.start_pos):
            raise TrailFormatError(f"start {self.start_pos} outside {self.width}x{self.height} grid")
        for cell in self.food_cells:
            if not self.in_bounds(cell):
                raise TrailFormatError(f"food cell {cell} out of bounds")

    def in_bounds(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def food_count(self) -> int:
        return len(self.food_cells)

    @property
    def heading_index(self) -> int:
        return HEADINGS.index(self.start_heading)

    def food_array(self) -> np.ndarray:
        """Row-major ``uint8`` food map, the layout the kernels consume."""
        grid = np.zeros(self.width * self.height, dtype=np.uint8)
        for x, y in self.food_cells:
            grid[y * self.width + x] = 1
        return grid

    def kernel_args(self):
        x, y = self.start_pos
        return (self.food_array(), self.width, self.height, x, y, self.heading_index, self.toroidal)


def parse_trail(text: str, toroidal: bool = True) -> TrailGrid:
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise TrailFormatError("empty trail file")
    header = lines[0].split()
    if len(header) != 5:
        raise TrailFormatError("header must be 'width height start_x start_y heading'")
    try:
        width, height, sx, sy = (int(v) for v in header[:4])
    except ValueError as exc:
        raise TrailFormatError(f"bad header: {lines[0]!r}") from exc
    heading = header[4].upper()
    rows = lines[1:]
    if len(rows) != height:
        raise TrailFormatError(f"expected {height} rows, found {len(rows)}")
    food = set()
    for y, row in enumerate(rows):
        if len(row) != width:
            raise TrailFormatError(f"row {y + 1} has {len(row)} cells, expected {width}")
        for x, ch in enumerate(row):
            if ch == "#":
                food.add((x, y))
            elif ch != ".":
                raise TrailFormatError(f"unexpected character {ch!r} at row {y + 1}, column {x + 1}")
    return TrailGrid(width, height, frozenset(food), (sx, sy), heading, toroidal)


def load_trail(path, toroidal: bool = True) -> TrailGrid:
    return parse_trail(Path(path).read_text(), toroidal=toroidal)


def santa_fe_text() -> str:
    return resources.files("antgp").joinpath("data/santa_fe.trail").read_text()


def santa_fe_trail() -> TrailGrid:
    text = santa_fe_text()
    digest = hashlib.sha256(text.encode()).hexdigest()
    if digest != SANTA_FE_SHA256:
        raise TrailFormatError("bundled Santa Fe fixture failed its checksum")
    trail = parse_trail(text)
    assert trail.food_count == SANTA_FE_FOOD
    return trail


class IndexedMemory:
    """Fixed bank of signed cells; every index is taken mod the bank size."""

    def __init__(self, size: int = MEMORY_SIZE):
        if size < 1:
            raise ValueError("memory needs at least one cell")
        self.cells = np.zeros(size, dtype=np.int64)

    def __len__(self):
        return self.cells.shape[0]

    def read(self, index: int) -> int:
        return int(self.cells[index % len(self)])

    def write(self, index: int, value: int) -> int:
        self.cells[index % len(self)] = value
        return value


@dataclass
class AntState:
    pos: tuple[int, int]
    heading: int
    remaining_food: set
    food_eaten: int = 0
    steps_used: int = 0
    memory: IndexedMemory = field(default_factory=IndexedMemory)

    @classmethod
    def at_start(cls, trail: TrailGrid, memory_size: int = MEMORY_SIZE) -> AntState:
        return cls(trail.start_pos, trail.heading_index, set(trail.food_cells),
                   memory=IndexedMemory(memory_size))


def _ahead(ant: AntState, trail: TrailGrid):
    x, y = ant.pos
    nx, ny = x + int(kernels.DX[ant.heading]), y + int(kernels.DY[ant.heading])
    if trail.toroidal:
        return nx % trail.width, ny % trail.height
    if trail.in_bounds((nx, ny)):
        return nx, ny
    return None


def sense_food_ahead(ant: AntState, trail: TrailGrid) -> bool:
    cell = _ahead(ant, trail)
    return cell is not None and cell in ant.remaining_food


def step_interpret(tree: np.ndarray, ant: AntState, trail: TrailGrid) -> Action:
    """Run the whole program once and decode its value into an action.

    Memory writes made by the program persist in ``ant.memory``.
    """
    ends = kernels.subtree_ends(tree, ANT_PRIMITIVES.arity)
    frames = np.empty((tree.size, 3), dtype=np.int64)
    value = kernels.run_program(tree, ends, sense_food_ahead(ant, trail), ant.memory.cells, frames)
    return Action(int(value) % 3)


def apply_action(ant: AntState, trail: TrailGrid, action: Action, step_budget: int = DEFAULT_STEP_BUDGET) -> AntState:
    if ant.steps_used >= step_budget:
        raise ValueError("step budget exhausted")
    if action == Action.MOVE:
        cell = _ahead(ant, trail)
        if cell is not None:
            ant.pos = cell
            if cell in ant.remaining_food:
                ant.remaining_food.discard(cell)
                ant.food_eaten += 1
    elif action == Action.LEFT:
        ant.heading = (ant.heading + 3) % 4
    else:
        ant.heading = (ant.heading + 1) % 4
    ant.steps_used += 1
    return ant


def simulate(tree: np.ndarray, trail: TrailGrid, step_budget: int = DEFAULT_STEP_BUDGET,
             memory_size: int = MEMORY_SIZE) -> AntState:
    """Step-by-step reference evaluation built from the public operations."""
    ant = AntState.at_start(trail, memory_size)
    while ant.steps_used < step_budget and ant.remaining_food:
        apply_action(ant, trail, step_interpret(tree, ant, trail), step_budget)
    return ant


def evaluate_fitness(tree: np.ndarray, trail: TrailGrid, step_budget: int = DEFAULT_STEP_BUDGET,
                     memory_size: int = MEMORY_SIZE) -> int:
    food, w, h, x, y, heading, toroidal = trail.kernel_args()
    return int(kernels.run_ant(tree, ANT_PRIMITIVES.arity, food, w, h, x, y, heading,
                               toroidal, step_budget, memory_size))


def pack_trees(trees) -> tuple[np.ndarray, np.ndarray]:
    sizes = np.fromiter((t.size for t in trees), dtype=np.int64, count=len(trees))
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    codes = np.concatenate(trees) if trees else np.zeros(0, dtype=np.int8)
    return codes, offsets


def evaluate_many(trees, trail: TrailGrid, step_budget: int = DEFAULT_STEP_BUDGET,
                  memory_size: int = MEMORY_SIZE) -> np.ndarray:
    """Fitness of each tree, in order. One kernel call for the whole batch."""
    if not trees:
        return np.zeros(0, dtype=np.int64)
    codes, offsets = pack_trees(trees)
    food, w, h, x, y, heading, toroidal = trail.kernel_args()
    return kernels.run_population(codes, offsets, ANT_PRIMITIVES.arity, food, w, h, x, y,
                                  heading, toroidal, step_budget, memory_size)


def evaluate_actions(actions, trail: TrailGrid, step_budget: int = DEFAULT_STEP_BUDGET) -> int:
    """Score a fixed action script; bypasses the program interpreter."""
    script = np.asarray([int(a) for a in actions], dtype=np.int8)
    food, w, h, x, y, heading, toroidal = trail.kernel_args()
    return int(kernels.run_actions(script, food, w, h, x, y, heading, toroidal, step_budget))
