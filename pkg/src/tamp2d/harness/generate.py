"""Random desk-scale scenes and problems for the five benchmark tasks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Category, ObjectRef, Problem, baseconf, jointangle, lit, pose
from ..geometry import Container, GeometryError, Item, Robot, Surface, World2D, min_clearance, validate_world

BOUNDS = (0.0, 0.0, 4.0, 3.0)
MAX_TRIES = 1000

# item variants: model name -> (radius, color id)
ITEM_MODELS = {
    "food0": (0.045, 0),
    "food1": (0.05, 1),
    "food2": (0.055, 2),
    "food3": (0.06, 3),
    "stapler0": (0.075, 4),
}
FOOD_MODELS = ("food0", "food1", "food2", "food3")
TABLE_COLOR = 7


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    name: str
    containers: int
    items_per_container: tuple = (1, 2)
    table_items: tuple = (0, 2)
    goal: str = "holding"  # holding | in-from-table | in-across
    table_model: str = "food"  # food | stapler
    door_closed_p: float = 0.5
    exclude_models: tuple = ()
    require_model: str | None = None  # every problem's goal item uses this model

    def __post_init__(self):
        if self.containers < 1:
            raise ValueError("at least one container")
        if self.goal == "in-across" and self.containers < 2:
            raise ValueError("in-across needs two containers")
        if self.goal == "in-from-table" and self.table_items[0] < 1:
            raise ValueError("in-from-table needs a table item")
        if self.items_per_container[0] < 1 or self.items_per_container[1] < self.items_per_container[0]:
            raise ValueError("bad items_per_container")

    def food_models(self) -> tuple:
        return tuple(m for m in FOOD_MODELS if m not in self.exclude_models)


TASKS = {
    "one_container_pick": TaskSpec("one_container_pick", 1, goal="holding"),
    "two_container_pick": TaskSpec("two_container_pick", 2, goal="holding"),
    "one_container_table_in": TaskSpec("one_container_table_in", 1, table_items=(1, 2), goal="in-from-table"),
    "two_container_in": TaskSpec("two_container_in", 2, goal="in-across"),
    "stapler_in": TaskSpec("stapler_in", 1, table_items=(1, 2), goal="in-from-table", table_model="stapler"),
}


def sample_door_angle(rng: np.random.Generator, limit: float, closed_p: float = 0.5) -> float:
    """Closed with probability ``closed_p``, otherwise uniform on (0, limit]."""
    if rng.random() < closed_p:
        return 0.0
    return float(limit - rng.uniform(0.0, limit))  # (0, limit]


def _containers(spec: TaskSpec, rng) -> list[Container]:
    centers = [rng.uniform(1.2, 2.8)] if spec.containers == 1 else [rng.uniform(0.7, 1.3), rng.uniform(2.5, 3.3)]
    if spec.containers > 2:
        raise GenerationError("at most two containers fit along the wall")
    out = []
    for j, cx in enumerate(centers):
        w = rng.uniform(0.45, 0.55)
        y0 = rng.uniform(2.45, 2.55)
        depth = rng.uniform(0.30, 0.38)
        limit = rng.uniform(math.pi / 2, 3 * math.pi / 4)
        angle = sample_door_angle(rng, limit, spec.door_closed_p)
        out.append(Container(f"fridge{j + 1}", cx - w / 2, y0, cx + w / 2, y0 + depth, 0.04, "south",
                             limit, angle, 5 + j))
    return out


def _table(rng) -> Surface:
    y0 = rng.uniform(0.15, 0.3)
    depth = rng.uniform(0.4, 0.6)
    width = rng.uniform(1.2, 2.0)
    x0 = rng.uniform(0.4, 3.6 - width)
    return Surface("table1", x0, y0, x0 + width, y0 + depth, TABLE_COLOR)


def _place_items(area, models, prefix_counts, rng, placed: list, walls) -> list[Item]:
    x0, y0, x1, y1 = area
    out = []
    for model in models:
        r, color = ITEM_MODELS[model]
        kind = "stapler" if model.startswith("stapler") else "food"
        prefix_counts[kind] = prefix_counts.get(kind, 0) + 1
        iid = f"{kind}{prefix_counts[kind]}"
        for _ in range(MAX_TRIES):
            x, y = rng.uniform(x0 + r, x1 - r), rng.uniform(y0 + r, y1 - r)
            if all(math.hypot(x - it.pose[0], y - it.pose[1]) >= r + it.radius + 0.01 for it in placed + out):
                if all(w.rect.sdf(x, y) >= r for w in walls):
                    out.append(Item(iid, r, (x, y, rng.uniform(-math.pi, math.pi)), color, model))
                    break
        else:
            raise GenerationError(f"could not place {iid}")
    return out


def generate_world(spec: TaskSpec, rng: np.random.Generator):
    """Scene plus the goal item and the per-region item lists."""
    containers = _containers(spec, rng)
    table = _table(rng)
    foods = spec.food_models()
    if not foods:
        raise GenerationError("every food model is excluded")
    counts: dict = {}
    items, where = [], {}
    walls = [w for c in containers for w in c.walls]
    for c in containers:
        n = int(rng.integers(spec.items_per_container[0], spec.items_per_container[1] + 1))
        models = [foods[int(rng.integers(len(foods)))] for _ in range(n)]
        new = _place_items(c.area, models, counts, rng, items, walls)
        where.update({it.id: c.space_id for it in new})
        items += new
    nt = int(rng.integers(spec.table_items[0], spec.table_items[1] + 1))
    if spec.table_model == "stapler":
        models = ["stapler0"] * nt
    else:
        models = [foods[int(rng.integers(len(foods)))] for _ in range(nt)]
    new = _place_items(table.area, models, counts, rng, items, [])
    where.update({it.id: table.id for it in new})
    items += new
    robot = Robot("robot1", 0.15, 0.8, (0.0, 0.0, 0.0))
    world = World2D(BOUNDS, robot, (), (table,), tuple(containers), tuple(items))
    for _ in range(MAX_TRIES):
        x, y = rng.uniform(0.3, 3.7), rng.uniform(1.0, 2.0)
        if min_clearance(world, x, y, "base") >= robot.radius + 0.02:
            world = world.with_robot_conf((x, y, rng.uniform(-math.pi, math.pi)))
            break
    else:
        raise GenerationError("no free initial base conf")
    return world, where


def _goal_item(spec: TaskSpec, world: World2D, where: dict, rng):
    spaces = [c.space_id for c in world.containers]
    if spec.goal == "holding":
        cands = [i for i in world.items if where[i.id] in spaces]
    elif spec.goal == "in-from-table":
        cands = [i for i in world.items if where[i.id] == "table1"]
    else:
        cands = [i for i in world.items if where[i.id] == spaces[0]]
    if spec.require_model is not None:
        cands = [i for i in cands if i.model == spec.require_model]
    if not cands:
        return None
    return cands[int(rng.integers(len(cands)))]


def build_problem(name: str, spec: TaskSpec, world: World2D, where: dict, goal_item: Item,
                  world_file: str | None = None) -> Problem:
    objs = {"robot1": ObjectRef("robot1", Category.ROBOT)}
    for s in world.surfaces:
        objs[s.id] = ObjectRef(s.id, Category.SURFACE)
    for c in world.containers:
        cref = ObjectRef(c.id, Category.CONTAINER)
        objs[c.id] = cref
        objs[c.door_id] = ObjectRef(c.door_id, Category.DOOR, cref)
        objs[c.space_id] = ObjectRef(c.space_id, Category.SPACE, cref)
    for it in world.items:
        objs[it.id] = ObjectRef(it.id, Category.ITEM)
    init = [lit("HandEmpty"), lit("CanMove"), lit("AtConf", baseconf(*world.robot.conf))]
    for c in world.containers:
        d, cref = objs[c.door_id], objs[c.id]
        init += [lit("IsJoint", d, cref), lit("AtAngle", d, jointangle(c.angle)),
                 lit("Closed", d) if c.angle == 0.0 else lit("Open", d)]
    for it in world.items:
        o = objs[it.id]
        r = objs[where[it.id]]
        p = pose(*it.pose)
        init += [lit("Graspable", o), lit("Supported", o, r, p), lit("AtPose", o, p)]
        init.append(lit("On", o, r) if r.category is Category.SURFACE else lit("In", o, r))
        for s in world.surfaces:
            init.append(lit("Stackable", o, objs[s.id]))
        for c in world.containers:
            init.append(lit("Containable", o, objs[c.space_id]))
    g = objs[goal_item.id]
    if spec.goal == "holding":
        goal = [lit("Holding", g)]
    elif spec.goal == "in-from-table":
        goal = [lit("In", g, objs[world.containers[0].space_id])]
    else:
        goal = [lit("In", g, objs[world.containers[1].space_id])]
    return Problem(name, tuple(objs.values()), frozenset(init), frozenset(goal), world_file, world)


@dataclass
class GeneratedProblem:
    problem: Problem
    world: World2D
    seed: int
    attempts: int = 1
    feasible_keys: list = field(default_factory=list)


def generate_problem(spec: TaskSpec, rng: np.random.Generator, name: str = "problem",
                     world_file: str | None = None) -> Problem:
    """Geometric sampling only; see ``harness.dataset`` for the feasibility filter."""
    for _ in range(MAX_TRIES):
        try:
            world, where = generate_world(spec, rng)
            validate_world(world)
        except GenerationError:
            continue
        except GeometryError:
            continue
        item = _goal_item(spec, world, where, rng)
        if item is None:
            continue
        return build_problem(name, spec, world, where, item, world_file)
    raise GenerationError(f"{spec.name}: no valid problem after {MAX_TRIES} attempts")
