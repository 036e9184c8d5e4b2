import os
import sys

import numpy as np
import pytest

from tamp2d.harness.generate import TASKS, generate_problem
from tamp2d.io import parse_problem

sys.path.insert(0, os.path.dirname(__file__))

# symbolic-only problem: one item on a table, one closed box
TOY_BOX = """(problem toy-box
  (objects (item a1) (surface table1) (container box1) (door box1:door1 box1) (space box1:space1 box1)
           (robot robot1))
  (init (atconf (baseconf 0 0 0)) (canmove) (handempty) (graspable a1)
        (supported a1 table1 (pose 1 1 0)) (atpose a1 (pose 1 1 0)) (on a1 table1)
        (stackable a1 table1) (containable a1 box1:space1)
        (isjoint box1:door1 box1) (atangle box1:door1 (jointangle 0)) (closed box1:door1))
  (goal (in a1 box1:space1)))"""

TABLE_PICK = """(problem table-pick
  (objects (item tomato1) (surface table2) (robot robot1))
  (init (atconf (baseconf 0 0 0)) (canmove) (handempty) (graspable tomato1)
        (supported tomato1 table2 (pose 1 1 0)) (atpose tomato1 (pose 1 1 0)) (on tomato1 table2)
        (stackable tomato1 table2))
  (goal (holding tomato1)))"""


def toy(text: str):
    return parse_problem(text)


def generated(task: str, seed: int, name: str = "problem"):
    return generate_problem(TASKS[task], np.random.default_rng(seed), name=name)


@pytest.fixture
def toy_box():
    return toy(TOY_BOX)


@pytest.fixture
def table_pick():
    return toy(TABLE_PICK)


def toy_text(name, n_items=1, n_tables=1, boxes=(), goal="holding", stack_all=True):
    """Symbolic-only problem text. ``boxes`` lists door states ("open"/"closed")."""
    objs = ["(robot robot1)"]
    init = ["(atconf (baseconf 0 0 0))", "(canmove)", "(handempty)"]
    for t in range(1, n_tables + 1):
        objs.append(f"(surface table{t})")
    for b, state in enumerate(boxes, 1):
        objs += [f"(container box{b})", f"(door box{b}:door1 box{b})", f"(space box{b}:space1 box{b})"]
        init += [f"(isjoint box{b}:door1 box{b})", f"({state} box{b}:door1)",
                 f"(atangle box{b}:door1 (jointangle {0 if state == 'closed' else 1}))"]
    for i in range(1, n_items + 1):
        objs.append(f"(item a{i})")
        p = f"(pose {i} 1 0)"
        init += [f"(graspable a{i})", f"(supported a{i} table1 {p})", f"(atpose a{i} {p})", f"(on a{i} table1)"]
        for t in range(1, n_tables + 1):
            if stack_all or t == 1:
                init.append(f"(stackable a{i} table{t})")
        for b in range(1, len(boxes) + 1):
            init.append(f"(containable a{i} box{b}:space1)")
    goals = {
        "holding": "(holding a1)",
        "on": f"(on a1 table{n_tables})",
        "in": "(in a1 box1:space1)",
        "in-closed": "(in a1 box1:space1) (closed box1:door1)",
        "two": f"(holding a1) (on a2 table{n_tables})",
    }
    return (f"(problem {name} (objects {' '.join(objs)}) (init {' '.join(init)}) (goal {goals[goal]}))")


TOY_SPECS = [
    dict(goal="holding"),
    dict(goal="holding", boxes=("closed",)),
    dict(goal="on", n_tables=2),
    dict(goal="in", boxes=("closed",)),
    dict(goal="in", boxes=("open",)),
    dict(goal="in-closed", boxes=("open",)),
    dict(goal="holding", n_items=2),
    dict(goal="on", n_tables=2, boxes=("closed",)),
    dict(goal="in", boxes=("closed", "open")),
    dict(goal="two", n_items=2, n_tables=2),
]


def toy_problems():
    return [toy(toy_text(f"toy{i}", **spec)) for i, spec in enumerate(TOY_SPECS)]
