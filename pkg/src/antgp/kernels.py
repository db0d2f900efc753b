"""Hot loops: prefix-tree bookkeeping and the ant simulation.

Programs are flat prefix-order ``int8`` opcode arrays. The opcode layout is
fixed here and mirrored by :data:`antgp.ant_world.ANT_PRIMITIVES`:

    0, 1, 2   integer constants with that value
    3         IF-FOOD-AHEAD(a, b)
    4         PROG2(a, b)
    5         ADD(a, b)
    6         READ(i)
    7         WRITE(i, v)

Everything in this module must stay numba-compilable.
"""

import numpy as np

from antgp._accel import jit

OP_IF_FOOD = 3
OP_PROG2 = 4
OP_ADD = 5
OP_READ = 6
OP_WRITE = 7
N_OPCODES = 8

ANT_ARITY = np.array([0, 0, 0, 2, 2, 2, 1, 2], dtype=np.int8)

# heading 0..3 = N, E, S, W; y grows downward
DX = np.array([0, 1, 0, -1], dtype=np.int64)
DY = np.array([-1, 0, 1, 0], dtype=np.int64)

ACTION_MOVE = 0
ACTION_LEFT = 1
ACTION_RIGHT = 2

_I32_SPAN = 1 << 32
_I32_HALF = 1 << 31


@jit
def wrap_i32(v):
    return ((v + _I32_HALF) % _I32_SPAN) - _I32_HALF


@jit
def subtree_ends(code, arity):
    """ends[i] is the index one past the subtree rooted at node i."""
    n = code.shape[0]
    ends = np.empty(n, dtype=np.int32)
    stack = np.empty(n, dtype=np.int32)
    sp = 0
    for i in range(n - 1, -1, -1):
        k = arity[code[i]]
        if k == 0:
            ends[i] = i + 1
        else:
            # children sit on the stack in order; the last one popped is the last child
            sp -= k
            ends[i] = stack[sp]
        stack[sp] = ends[i]
        sp += 1
    return ends


@jit
def node_depths(code, arity):
    """Depth of every node, root = 1."""
    n = code.shape[0]
    depth = np.empty(n, dtype=np.int32)
    pending = np.empty(n + 1, dtype=np.int32)
    level = np.empty(n + 1, dtype=np.int32)
    sp = 0
    for i in range(n):
        d = 1 if sp == 0 else level[sp - 1] + 1
        depth[i] = d
        if sp > 0:
            pending[sp - 1] -= 1
            if pending[sp - 1] == 0:
                sp -= 1
        k = arity[code[i]]
        if k > 0:
            pending[sp] = k
            level[sp] = d
            sp += 1
    return depth


@jit
def is_well_formed(code, arity):
    """True when the prefix array encodes exactly one complete tree."""
    need = 1
    for i in range(code.shape[0]):
        if need == 0:
            return False
        op = code[i]
        if op < 0 or op >= arity.shape[0]:
            return False
        need += arity[op] - 1
    return need == 0


@jit
def run_program(code, ends, food_ahead, memory, frames):
    """Evaluate one program once and return its integer value.

    Only the taken branch of IF-FOOD-AHEAD is visited. WRITE side effects
    land in ``memory``. ``frames`` is scratch space of shape (len(code), 3).
    """
    m = memory.shape[0]
    sp = 0
    frames[0, 0] = 0
    frames[0, 1] = 0
    sp = 1
    value = 0
    returning = False
    while sp > 0:
        top = sp - 1
        node = frames[top, 0]
        op = code[node]
        if not returning:
            if op <= 2:
                value = op
                sp -= 1
                returning = True
                continue
            if op == OP_IF_FOOD:
                child = node + 1 if food_ahead else ends[node + 1]
            else:
                child = node + 1
            frames[top, 1] = 1
            frames[sp, 0] = child
            frames[sp, 1] = 0
            sp += 1
            continue

        stage = frames[top, 1]
        if op == OP_IF_FOOD:
            sp -= 1
        elif op == OP_READ:
            value = memory[value % m]
            sp -= 1
        elif stage == 1:
            frames[top, 1] = 2
            frames[top, 2] = value
            frames[sp, 0] = ends[node + 1]
            frames[sp, 1] = 0
            sp += 1
            returning = False
        else:
            first = frames[top, 2]
            if op == OP_ADD:
                value = wrap_i32(first + value)
            elif op == OP_WRITE:
                memory[first % m] = value
            sp -= 1
    return value


@jit
def run_ant(code, arity, grid, width, height, x0, y0, heading0, toroidal,
            step_budget, mem_size):
    """Drive the ant with ``code`` and return pellets eaten.

    The whole program is evaluated once per step; its value mod 3 picks
    MOVE, LEFT or RIGHT. ``grid`` is a flat ``uint8`` food map (row major)
    and is not modified.
    """
    food = grid.copy()
    remaining = 0
    for i in range(food.shape[0]):
        remaining += food[i]
    total = remaining
    ends = subtree_ends(code, arity)
    frames = np.empty((code.shape[0], 3), dtype=np.int64)
    memory = np.zeros(mem_size, dtype=np.int64)
    x = x0
    y = y0
    h = heading0
    eaten = 0
    for _ in range(step_budget):
        if eaten == total:
            break
        ax = x + DX[h]
        ay = y + DY[h]
        inside = True
        if toroidal:
            ax %= width
            ay %= height
        elif ax < 0 or ax >= width or ay < 0 or ay >= height:
            inside = False
        ahead = inside and food[ay * width + ax] == 1
        action = run_program(code, ends, ahead, memory, frames) % 3
        if action == ACTION_MOVE:
            if inside:
                x = ax
                y = ay
                cell = y * width + x
                if food[cell] == 1:
                    food[cell] = 0
                    eaten += 1
        elif action == ACTION_LEFT:
            h = (h + 3) % 4
        else:
            h = (h + 1) % 4
    return eaten


@jit
def run_population(codes, offsets, arity, grid, width, height, x0, y0,
                   heading0, toroidal, step_budget, mem_size):
    """Fitness of every program packed in ``codes`` (bounds in ``offsets``)."""
    n = offsets.shape[0] - 1
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        code = codes[offsets[k]:offsets[k + 1]]
        out[k] = run_ant(code, arity, grid, width, height, x0, y0, heading0,
                         toroidal, step_budget, mem_size)
    return out


@jit
def run_actions(actions, grid, width, height, x0, y0, heading0, toroidal,
                step_budget):
    """Play a fixed action script instead of a program; returns pellets eaten."""
    food = grid.copy()
    total = 0
    for i in range(food.shape[0]):
        total += food[i]
    x = x0
    y = y0
    h = heading0
    eaten = 0
    steps = min(step_budget, actions.shape[0])
    for t in range(steps):
        if eaten == total:
            break
        a = actions[t]
        if a == ACTION_MOVE:
            nx = x + DX[h]
            ny = y + DY[h]
            if toroidal:
                nx %= width
                ny %= height
            elif nx < 0 or nx >= width or ny < 0 or ny >= height:
                continue
            x = nx
            y = ny
            cell = y * width + x
            if food[cell] == 1:
                food[cell] = 0
                eaten += 1
        elif a == ACTION_LEFT:
            h = (h + 3) % 4
        else:
            h = (h + 1) % 4
    return eaten
