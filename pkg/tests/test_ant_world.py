import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from antgp import ant_world as aw
from antgp import gp_core
from antgp.ant_world import ANT_PRIMITIVES as P, Action, AntState

from oracles import perfect_walk, replay


def tree(expr):
    return gp_core.parse_sexpr(expr, P)


# "3" is not a terminal; ADD 1 2 builds it
THREE = "(ADD 1 2)"


def grid(rows, start=(0, 0), heading="E", toroidal=True):
    text = f"{len(rows[0])} {len(rows)} {start[0]} {start[1]} {heading}\n" + "\n".join(rows)
    return aw.parse_trail(text, toroidal=toroidal)


@pytest.fixture(scope="module")
def santa_fe():
    return aw.santa_fe_trail()


class TestTrailFile:
    def test_fixture(self, santa_fe):
        assert santa_fe.food_count == 89
        assert (santa_fe.width, santa_fe.height) == (32, 32)
        assert santa_fe.start_pos == (0, 0) and santa_fe.start_heading == "E"
        assert (0, 0) not in santa_fe.food_cells

    def test_ragged_rows_rejected(self):
        with pytest.raises(aw.TrailFormatError):
            aw.parse_trail("3 2 0 0 E\n...\n..\n")

    def test_out_of_range_start_rejected(self):
        with pytest.raises(aw.TrailFormatError):
            aw.parse_trail("3 2 3 0 E\n...\n...\n")

    def test_bad_heading_rejected(self):
        with pytest.raises(aw.TrailFormatError):
            aw.parse_trail("3 2 0 0 Q\n...\n...\n")

    def test_row_count_checked(self):
        with pytest.raises(aw.TrailFormatError):
            aw.parse_trail("3 3 0 0 E\n...\n...\n")

    def test_load_from_path(self, tmp_path):
        path = tmp_path / "t.trail"
        path.write_text("4 1 0 0 E\n.##.\n")
        t = aw.load_trail(path)
        assert t.food_cells == {(1, 0), (2, 0)}


class TestSensing:
    def test_food_ahead(self):
        t = grid([".#.", "...", "..."])
        assert aw.sense_food_ahead(AntState.at_start(t), t)

    def test_empty_ahead(self):
        t = grid(["..#", "...", "..."])
        assert not aw.sense_food_ahead(AntState.at_start(t), t)

    def test_wraps_east_edge(self):
        t = grid(["#..", "...", "..."], start=(2, 0))
        assert aw.sense_food_ahead(AntState.at_start(t), t)

    def test_no_wrap_when_bounded(self):
        t = grid(["#..", "...", "..."], start=(2, 0), toroidal=False)
        assert not aw.sense_food_ahead(AntState.at_start(t), t)


class TestInterpreter:
    def test_constant_zero_moves(self):
        t = grid(["...", "...", "..."])
        assert aw.step_interpret(tree("0"), AntState.at_start(t), t) is Action.MOVE

    def test_if_food_ahead(self):
        prog = tree("(IF-FOOD-AHEAD 0 1)")
        with_food = grid([".#.", "...", "..."])
        without = grid(["...", "...", "..."])
        assert aw.step_interpret(prog, AntState.at_start(with_food), with_food) is Action.MOVE
        assert aw.step_interpret(prog, AntState.at_start(without), without) is Action.LEFT

    def test_write_then_read(self):
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        prog = tree(f"(PROG2 (WRITE {THREE} 2) (READ {THREE}))")
        assert aw.step_interpret(prog, ant, t) is Action.RIGHT
        assert ant.memory.read(3) == 2

    def test_only_taken_branch_runs(self):
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        aw.step_interpret(tree("(IF-FOOD-AHEAD (WRITE 1 2) 0)"), ant, t)
        assert ant.memory.read(1) == 0

    def test_memory_persists_across_steps(self):
        # counter in cell 0: value 1, 2, 3 -> LEFT, RIGHT, MOVE
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        prog = tree("(WRITE 0 (ADD (READ 0) 1))")
        seen = [aw.step_interpret(prog, ant, t) for _ in range(3)]
        assert seen == [Action.LEFT, Action.RIGHT, Action.MOVE]

    def test_negative_index_wraps(self):
        mem = aw.IndexedMemory(16)
        mem.write(-1, 7)
        assert mem.read(15) == 7

    def test_add_wraps_to_int32(self):
        # doubling a cell every step overflows quickly; stays in int32 range
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        prog = tree("(PROG2 (WRITE 0 (ADD (READ 0) 1)) (WRITE 0 (ADD (READ 0) (READ 0))))")
        for _ in range(80):
            aw.step_interpret(prog, ant, t)
        assert -2**31 <= ant.memory.read(0) < 2**31


class TestActions:
    def test_left_then_right(self):
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        aw.apply_action(ant, t, Action.LEFT)
        aw.apply_action(ant, t, Action.RIGHT)
        assert ant.heading == 1 and ant.steps_used == 2

    def test_four_lefts(self):
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        for _ in range(4):
            aw.apply_action(ant, t, Action.LEFT)
        assert ant.heading == 1

    def test_move_eats(self):
        t = grid([".#.", "...", "..."])
        ant = AntState.at_start(t)
        aw.apply_action(ant, t, Action.MOVE)
        assert ant.food_eaten == 1 and (1, 0) not in ant.remaining_food

    def test_budget_enforced(self):
        t = grid(["...", "...", "..."])
        ant = AntState.at_start(t)
        aw.apply_action(ant, t, Action.LEFT, step_budget=1)
        with pytest.raises(ValueError):
            aw.apply_action(ant, t, Action.LEFT, step_budget=1)


class TestFitness:
    def test_spinner_scores_zero(self, santa_fe):
        assert aw.evaluate_fitness(tree("1"), santa_fe) == 0

    def test_perfect_walk(self, santa_fe):
        walk = perfect_walk(santa_fe)
        assert replay(walk, santa_fe) == 89
        assert len(walk) <= aw.DEFAULT_STEP_BUDGET
        assert aw.evaluate_actions(walk, santa_fe) == 89

    def test_straight_line(self, santa_fe):
        # MOVE forever along row 0 of the torus eats the 3 pellets at x=1..3
        assert aw.evaluate_fitness(tree("0"), santa_fe) == 3

    def test_kernel_matches_stepwise(self, santa_fe):
        rng = np.random.default_rng(0)
        for t in gp_core.ramped_trees(60, 8, P, rng):
            ref = aw.simulate(t, santa_fe)
            assert ref.food_eaten == aw.evaluate_fitness(t, santa_fe)
            assert ref.food_eaten + len(ref.remaining_food) == 89

    def test_batch_matches_single(self, santa_fe):
        trees = gp_core.ramped_trees(40, 10, P, np.random.default_rng(1))
        batch = aw.evaluate_many(trees, santa_fe)
        assert list(batch) == [aw.evaluate_fitness(t, santa_fe) for t in trees]

    def test_repeatable(self, santa_fe):
        t = gp_core.full_tree(np.random.default_rng(2), P, 7)
        assert aw.evaluate_fitness(t, santa_fe) == aw.evaluate_fitness(t, santa_fe)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(-10_000, 10_000), st.integers(-2**31, 2**31 - 1))
    def test_memory_round_trip(self, index, value):
        mem = aw.IndexedMemory()
        mem.write(index, value)
        assert mem.read(index) == value
        assert mem.read(index % 16) == value

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_conservation(self, seed):
        t = aw.santa_fe_trail()
        prog = gp_core.grow_tree(np.random.default_rng(seed), P, 6)
        ant = AntState.at_start(t)
        while ant.steps_used < 60:
            aw.apply_action(ant, t, aw.step_interpret(prog, ant, t))
            assert ant.food_eaten + len(ant.remaining_food) == 89
