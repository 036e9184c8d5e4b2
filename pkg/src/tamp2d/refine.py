"""Binding a skeleton's free continuous parameters (sampling with backtracking).

Variables are bound in skeleton order, except that a move's target conf is
bound together with the manipulation that follows it (the conf depends on
that action's grasp and target). Each variable owns an rng stream derived
from (seed, attempt, variable index) and a per-attempt draw counter capped at
``budget.samples``; hitting a cap ends the attempt. Within one visit of a
stage at most ``VISIT_TRIES`` draws may fail before control returns to the
previous stage.
"""

from __future__ import annotations

import math
import time
import zlib
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .core import (
    MOVE, PICK, PLACE_IN, PLACE_ON, PULL_CLOSE, PULL_OPEN, BoundValue, Free, GroundAction, Problem,
    Skeleton, Solution, Value, ValueKind, angle_diff, baseconf, grasp, jointangle, trajectory,
)

VISIT_TRIES = 8
KNOWN_TAGS = {"motion", "grasp", "kinematics", "stable", "joint-limit", "door-sweep"}
SWEEP_STEP = 0.02  # radians between door poses checked against static obstacles
OPEN_MIN = 1e-3


class UnknownConstraintError(ValueError):
    pass


class _BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class RefinementBudget:
    samples: int = 30  # per variable per attempt
    restarts: int = 10
    wall_clock: float = 20.0

    def __post_init__(self):
        if self.samples <= 0 or self.restarts <= 0 or self.wall_clock <= 0:
            raise ValueError("budget values must be positive")


# ---------------------------------------------------------------------------
# constraint graph

@dataclass(frozen=True)
class Variable:
    id: str
    kind: ValueKind
    index: int
    first_step: int
    sampler: str  # which sampler produces it


@dataclass(frozen=True)
class Constraint:
    tag: str
    step: int
    args: tuple  # Free ids / literal descriptions of the schema arguments


@dataclass
class ConstraintGraph:
    variables: list
    constraints: list

    def variable(self, vid: str) -> Variable:
        for v in self.variables:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def uses(self, vid: str) -> list:
        return [c for c in self.constraints if vid in c.args]


_SAMPLER_BY_KIND = {
    ValueKind.POSE: "placement",
    ValueKind.GRASP: "grasp",
    ValueKind.BASECONF: "base-conf",
    ValueKind.JOINTANGLE: "joint-angle",
    ValueKind.TRAJECTORY: "derived",
}


def extract_constraints(skeleton: Skeleton, problem: Problem) -> ConstraintGraph:
    variables: dict = {}
    constraints = []
    for i, a in enumerate(skeleton):
        b = a.binding()
        for p, s in zip(a.schema.continuous_params, a.slots):
            if isinstance(s, Free) and s.id not in variables:
                sampler = _SAMPLER_BY_KIND[ValueKind(p.type)]
                if p.type == "grasp" and a.schema in (PULL_OPEN, PULL_CLOSE):
                    sampler = "handle-grasp"
                variables[s.id] = Variable(s.id, ValueKind(p.type), len(variables), i, sampler)
        for tag, names in a.schema.constraints:
            if tag not in KNOWN_TAGS:
                raise UnknownConstraintError(f"{a.schema.name}: unknown constraint tag {tag!r}")
            args = []
            for n in names:
                v = b[n]
                args.append(v.id if isinstance(v, Free) else repr(v))
            constraints.append(Constraint(tag, i, tuple(args)))
    return ConstraintGraph(list(variables.values()), constraints)


# ---------------------------------------------------------------------------
# results

@dataclass
class RefinementStats:
    samples: int = 0
    per_variable: dict = field(default_factory=dict)
    constraints_checked: int = 0
    attempts: int = 0
    elapsed: float = 0.0
    failures: Counter = field(default_factory=Counter)
    timed_out: bool = False

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "per_variable": dict(self.per_variable),
            "constraints_checked": self.constraints_checked,
            "attempts": self.attempts,
            "elapsed": self.elapsed,
            "failures": dict(sorted(self.failures.items())),
            "timed_out": self.timed_out,
        }


@dataclass
class RefinementResult:
    outcome: str  # "bound" | "exhausted"
    solution: Solution | None
    stats: RefinementStats

    @property
    def bound(self) -> bool:
        return self.outcome == "bound"


# ---------------------------------------------------------------------------
# geometric helpers shared by the stages

def stable_seed(*parts) -> int:
    """Platform-independent 32-bit seed from strings/ints."""
    return zlib.crc32("|".join(map(str, parts)).encode("utf-8"))


def refinement_seed(problem: Problem, skeleton) -> int:
    """Seed shared by dataset labelling and the planner for one (problem, skeleton)."""
    key = skeleton.key if isinstance(skeleton, Skeleton) else tuple(skeleton)
    return stable_seed(problem.name, key)


def held_radius(world: geo.World2D) -> float:
    return world.item(world.held).radius if world.held else 0.0


def _on_ray_grasp(base_xy, target_xy, offset: float):
    dx, dy = target_xy[0] - base_xy[0], target_xy[1] - base_xy[1]
    phi = math.atan2(dy, dx)
    return grasp(offset * math.cos(phi), offset * math.sin(phi), phi)


def _kin_ok(world, base: Value, target_xy, g: Value, *, ignore, stop_short=0.0, carry=0.0, margin=0.0) -> bool:
    """Fixed base: target within reach on the approach ray and arm path clear."""
    bx, by = base.xy
    wx, wy = geo.tool_point(target_xy, g)
    rho = math.hypot(wx - bx, wy - by)
    robot = world.robot
    if rho > robot.reach or rho < robot.radius + geo.ARM_RADIUS:
        return False
    if angle_diff(math.atan2(wy - by, wx - bx), g.data[2]) > 1e-6:
        return False
    if geo.min_clearance(world, bx, by, "base") < robot.radius + margin:
        return False
    return geo.approach_clear(world, (bx, by), target_xy, g, ignore, stop_short, carry)


def sector_distance(px, py, cx, cy, L, phi0, phi1) -> float:
    """Distance from a point to the circular sector swept by a segment of length L."""
    lo, hi = min(phi0, phi1), max(phi0, phi1)
    rx, ry = px - cx, py - cy
    r = math.hypot(rx, ry)
    ang = math.atan2(ry, rx)
    # bring ang into [lo, lo + 2pi)
    k = math.floor((ang - lo) / (2 * math.pi))
    ang -= k * 2 * math.pi
    if ang <= hi:
        return max(0.0, r - L)
    best = math.inf
    for phi in (lo, hi):
        ex, ey = cx + L * math.cos(phi), cy + L * math.sin(phi)
        best = min(best, geo.point_segment_distance(px, py, cx, cy, ex, ey))
    return best


def _arc_reach_ok(container, a1, a2, base_xy, limit) -> bool:
    """Handle stays within ``limit`` of the base while the door turns from a1 to a2."""
    px, py = container.pivot
    L = container.door_length
    lo, hi = sorted((container.base_angle + a1, container.base_angle + a2))
    cands = [lo, hi]
    away = math.atan2(py - base_xy[1], px - base_xy[0])
    k = math.ceil((lo - away) / (2 * math.pi))
    away += k * 2 * math.pi
    if away <= hi:
        cands.append(away)
    for phi in cands:
        hx, hy = px + L * math.cos(phi), py + L * math.sin(phi)
        if math.hypot(hx - base_xy[0], hy - base_xy[1]) > limit:
            return False
    return True


def _sweep_clear(world, container, a1, a2, base_xy) -> tuple[bool, str]:
    px, py = container.pivot
    L = container.door_length
    b0 = container.base_angle
    d = sector_distance(base_xy[0], base_xy[1], px, py, L, b0 + a1, b0 + a2)
    if d < world.robot.radius + geo.DOOR_HALF:
        return False, "robot"
    n = max(1, int(math.ceil(abs(a2 - a1) / SWEEP_STEP)))
    step = abs(a2 - a1) / n
    slack = geo.DOOR_HALF + L * step / 2.0
    ignore = {container.id, container.door_id}
    for j in range(n + 1):
        a = a1 + (a2 - a1) * j / n
        e = (px + L * math.cos(b0 + a), py + L * math.sin(b0 + a))
        for ob in world.obstacles("base"):
            if ob.id in ignore:
                continue
            if ob.segment_distance((px, py), e) < slack:
                return False, ob.id
    return True, ""


def handle_limit(world) -> float:
    return world.robot.reach + geo.GRIPPER_OFFSET


# ---------------------------------------------------------------------------
# the sampler

class _Run:
    def __init__(self, skeleton: Skeleton, problem: Problem, budget: RefinementBudget, seed: int,
                 graph: ConstraintGraph, stats: RefinementStats, deadline: float):
        self.sk = list(skeleton)
        self.problem = problem
        self.budget = budget
        self.seed = seed
        self.graph = graph
        self.stats = stats
        self.deadline = deadline
        self.vars = {v.id: v for v in graph.variables}
        self.stages = self._stages()

    # stage layout -----------------------------------------------------------
    def _stages(self) -> list:
        stages = []
        n = len(self.sk)
        for i, a in enumerate(self.sk):
            if a.schema is MOVE:
                tgt = a.slots[1]
                consumed = (
                    i + 1 < n and self.sk[i + 1].schema is not MOVE and isinstance(tgt, Free)
                    and _conf_slot(self.sk[i + 1]) == tgt
                )
                if not consumed:
                    stages.append(("move", i))
            else:
                stages.append(("manip", i))
        return stages

    # draws --------------------------------------------------------------------
    def start_attempt(self, attempt: int):
        self.attempt = attempt
        self.draws = {vid: 0 for vid in self.vars}
        self.rngs = {}

    def rng(self, vid: str) -> np.random.Generator:
        r = self.rngs.get(vid)
        if r is None:
            r = np.random.default_rng([self.seed, self.attempt, self.vars[vid].index])
            self.rngs[vid] = r
        return r

    def draw(self, vid: str):
        if self.draws[vid] >= self.budget.samples:
            raise _BudgetExhausted(vid)
        if time.perf_counter() > self.deadline:
            self.stats.timed_out = True
            raise _BudgetExhausted("wall-clock")
        self.draws[vid] += 1
        self.stats.samples += 1
        self.stats.per_variable[vid] = self.stats.per_variable.get(vid, 0) + 1

    def fail(self, tag: str):
        self.stats.failures[tag] += 1
        return None

    def check(self):
        self.stats.constraints_checked += 1

    # value lookup ---------------------------------------------------------------
    def val(self, slot, assign):
        if isinstance(slot, BoundValue):
            return slot.value
        return assign.get(slot.id)

    # world threading ----------------------------------------------------------
    def initial_world(self) -> geo.World2D:
        w = self.problem.world
        for l in self.problem.init:
            if l.predicate == "AtConf":
                w = w.with_robot_conf(l.args[0])
        return w

    # search -------------------------------------------------------------------
    def run(self) -> dict | None:
        world = self.initial_world()
        assign: dict = {}
        try:
            if self.visit(0, world, assign):
                return assign
        except _BudgetExhausted:
            pass
        return None

    def visit(self, k: int, world, assign) -> bool:
        if k == len(self.stages):
            return True
        kind, i = self.stages[k]
        samples = self.stage_samples(kind, i, assign)
        fails = 0
        while True:
            new = self.try_stage(kind, i, world, assign)
            if new is not None:
                added, nworld = new
                assign.update(added)
                if self.visit(k + 1, nworld, assign):
                    return True
                for key in added:
                    del assign[key]
            if not samples:
                return False
            fails += 1
            if fails >= VISIT_TRIES and k > 0:
                return False

    def stage_samples(self, kind, i, assign) -> bool:
        a = self.sk[i]
        slots = list(a.slots)
        if kind == "manip" and i > 0 and self.sk[i - 1].schema is MOVE:
            slots.append(self.sk[i - 1].slots[1])
        return any(isinstance(s, Free) and s.id not in assign and self.vars[s.id].sampler != "derived"
                   for s in slots)

    def world_after(self, world, a: GroundAction, assign):
        b = {p.name: self.val(s, assign) for p, s in zip(a.schema.continuous_params, a.slots)}
        if a.schema is MOVE:
            return world.with_robot_conf(b["q2"])
        w = world.with_robot_conf(b["q"])
        if a.schema is PICK:
            return w.with_held(a.objects[0].id)
        if a.schema in (PLACE_ON, PLACE_IN):
            return w.with_item_pose(a.objects[0].id, b["p"]).with_held(None)
        return w.with_door(a.objects[1].id, b["a2"].data[0])

    def try_stage(self, kind, i, world, assign):
        a = self.sk[i]
        if kind == "move":
            return self.move_stage(i, a, world, assign)
        added: dict = {}
        prev_move = i > 0 and self.sk[i - 1].schema is MOVE and _conf_slot(a) == self.sk[i - 1].slots[1]
        if a.schema is PICK:
            ok = self.pick_place(a, world, assign, added, place=False)
        elif a.schema in (PLACE_ON, PLACE_IN):
            ok = self.pick_place(a, world, assign, added, place=True)
        else:
            ok = self.pull(a, world, assign, added)
        if not ok:
            return None
        merged = {**assign, **added}
        if prev_move:
            m = self.sk[i - 1]
            self.check()
            q1, q2 = self.val(m.slots[0], merged), self.val(m.slots[1], merged)
            if not geo.motion_connected(world, q1, q2, held_radius(world)):
                return self.fail("motion")
        return added, self.world_after(world, a, merged)

    def move_stage(self, i, a, world, assign):
        added = {}
        q1 = self.val(a.slots[0], assign)
        q2 = self.val(a.slots[1], assign)
        hr = held_radius(world)
        if q2 is None:
            vid = a.slots[1].id
            self.draw(vid)
            rng = self.rng(vid)
            bx0, by0, bx1, by1 = world.bounds
            R = world.robot.radius + hr
            x, y = rng.uniform(bx0 + R, bx1 - R), rng.uniform(by0 + R, by1 - R)
            th = rng.uniform(-math.pi, math.pi)
            q2 = baseconf(x, y, th)
            added[vid] = q2
        self.check()
        if not geo.motion_connected(world, q1, q2, hr):
            return self.fail("motion")
        return added, world.with_robot_conf(q2)

    # -----------------------------------------------------------------------
    def _bind(self, slot, assign, added, make):
        v = self.val(slot, {**assign, **added})
        if v is not None:
            return v, False
        self.draw(slot.id)
        v = make(self.rng(slot.id))
        if v is None:
            return None, True
        added[slot.id] = v
        return v, True

    def pick_place(self, a, world, assign, added, place: bool) -> bool:
        b = dict(zip((p.name for p in a.schema.continuous_params), a.slots))
        o = a.objects[0].id
        region = a.objects[1].id
        item = world.item(o)
        r = item.radius
        if place:
            def mk_pose(rng):
                try:
                    return geo.sample_placement(world, o, region, rng)
                except geo.RegionTooSmall:
                    return None
            p, _ = self._bind(b["p"], assign, added, mk_pose)
            if p is None:
                return bool(self.fail("stable"))
            self.check()
            x0, y0, x1, y1 = world.region_area(region)
            if not (x0 + r - 1e-9 <= p.data[0] <= x1 - r + 1e-9 and y0 + r - 1e-9 <= p.data[1] <= y1 - r + 1e-9):
                return bool(self.fail("stable"))
            if geo.check_collision(world, geo.CollisionQuery(r, p, {o})):
                return bool(self.fail("stable"))
        else:
            p = self.val(b["p"], assign)
        target = p.xy
        q_slot, g_slot = b["q"], b["g"]
        q_known = self.val(q_slot, {**assign, **added})
        if q_known is not None and self.val(g_slot, {**assign, **added}) is None:
            g, _ = self._bind(g_slot, assign, added,
                              lambda rng: _on_ray_grasp(q_known.xy, target, r + geo.GRIPPER_OFFSET))
        else:
            g, _ = self._bind(g_slot, assign, added, lambda rng: geo.sample_grasp(world, o, rng))
        self.check()
        if abs(math.hypot(g.data[0], g.data[1]) - (r + geo.GRIPPER_OFFSET)) > 1e-9:
            return bool(self.fail("grasp"))
        kw = dict(ignore={o}, carry=r, margin=r)
        q, sampled = self._bind(q_slot, assign, added, lambda rng: geo.sample_base_conf(
            world, target, g, rng, ignore={o}, carry_radius=r, base_margin=r))
        self.check()
        if q is None:
            return bool(self.fail("kinematics"))
        if not sampled and not _kin_ok(world, q, target, g, **kw):
            return bool(self.fail("kinematics"))
        t_slot = b["t"]
        if isinstance(t_slot, Free) and t_slot.id not in assign and t_slot.id not in added:
            self.draw(t_slot.id)
            wx, wy = geo.tool_point(target, g)
            added[t_slot.id] = trajectory([q.data, (wx, wy, g.data[2])])
        return True

    def pull(self, a, world, assign, added) -> bool:
        b = dict(zip((p.name for p in a.schema.continuous_params), a.slots))
        c = world.container(a.objects[1].id)
        a1 = self.val(b["a1"], assign).data[0]
        if a.schema is PULL_OPEN:
            lo = min(c.limit, a1 + OPEN_MIN)
            a2v, _ = self._bind(b["a2"], assign, added, lambda rng: jointangle(rng.uniform(lo, c.limit)))
        else:
            a2v = self.val(b["a2"], {**assign, **added})
        a2 = a2v.data[0]
        self.check()
        if not (0.0 <= a2 <= c.limit + 1e-9) or (a.schema is PULL_OPEN and a2 <= a1):
            return bool(self.fail("joint-limit"))
        hp = geo.handle_point(c, a1)
        q_known = self.val(b["q"], {**assign, **added})
        if q_known is not None and self.val(b["g"], {**assign, **added}) is None:
            g, _ = self._bind(b["g"], assign, added,
                              lambda rng: _on_ray_grasp(q_known.xy, hp, geo.GRIPPER_OFFSET))
        else:
            g, _ = self._bind(b["g"], assign, added, lambda rng: geo.sample_handle_grasp(world, c.door_id, rng))
        self.check()
        nx, ny = geo.door_normal(c, a1)
        if angle_diff(g.data[2], math.atan2(-ny, -nx)) > geo.HANDLE_SPREAD + 1e-9:
            return bool(self.fail("grasp"))
        q, sampled = self._bind(b["q"], assign, added, lambda rng: geo.sample_base_conf(
            world, hp, g, rng, stop_short=geo.HANDLE_STOP))
        self.check()
        if q is None:
            return bool(self.fail("kinematics"))
        if not sampled and not _kin_ok(world, q, hp, g, ignore=set(), stop_short=geo.HANDLE_STOP):
            return bool(self.fail("kinematics"))
        self.check()
        if not _arc_reach_ok(c, a1, a2, q.xy, handle_limit(world)):
            return bool(self.fail("door-sweep"))
        ok, _ = _sweep_clear(world, c, a1, a2, q.xy)
        if not ok:
            return bool(self.fail("door-sweep"))
        t_slot = b["t"]
        if isinstance(t_slot, Free) and t_slot.id not in assign and t_slot.id not in added:
            self.draw(t_slot.id)
            n = max(2, int(math.ceil(abs(a2 - a1) / 0.1)) + 1)
            wps = []
            for j in range(n):
                ang = a1 + (a2 - a1) * j / (n - 1)
                hx, hy = geo.handle_point(c, ang)
                wps.append((hx, hy, c.base_angle + ang))
            added[t_slot.id] = trajectory(wps)
        return True


def _conf_slot(a: GroundAction):
    for p, s in zip(a.schema.continuous_params, a.slots):
        if p.name == "q":
            return s
    return None


def _bind_skeleton(skeleton: Skeleton, assign: dict) -> tuple:
    out = []
    for a in skeleton:
        slots = tuple(BoundValue(assign[s.id]) if isinstance(s, Free) else s for s in a.slots)
        out.append(GroundAction(a.schema, a.objects, slots))
    return tuple(out)


def _motions(problem: Problem, actions: tuple, world0: geo.World2D) -> tuple | None:
    out = []
    world = world0
    for a in actions:
        b = a.binding()
        if a.schema is MOVE:
            traj = geo.plan_motion(world, b["q1"], b["q2"], held_radius(world))
            if traj is None:
                return None
            out.append(traj)
            world = world.with_robot_conf(b["q2"])
            continue
        out.append(None)
        world = world.with_robot_conf(b["q"])
        if a.schema is PICK:
            world = world.with_held(a.objects[0].id)
        elif a.schema in (PLACE_ON, PLACE_IN):
            world = world.with_item_pose(a.objects[0].id, b["p"]).with_held(None)
        else:
            world = world.with_door(a.objects[1].id, b["a2"].data[0])
    return tuple(out)


def sample_plan(skeleton: Skeleton, problem: Problem, budget: RefinementBudget | None = None,
                rng=0) -> RefinementResult:
    """Try to bind every free parameter; ``rng`` is an int seed or a Generator."""
    budget = budget or RefinementBudget()
    if problem.world is None:
        raise ValueError("problem has no world attached")
    seed = int(rng.integers(2**32)) if isinstance(rng, np.random.Generator) else int(rng)
    graph = extract_constraints(skeleton, problem)
    stats = RefinementStats()
    t0 = time.perf_counter()
    run = _Run(skeleton, problem, budget, seed, graph, stats, t0 + budget.wall_clock)
    for attempt in range(budget.restarts):
        stats.attempts += 1
        run.start_attempt(attempt)
        assign = run.run()
        if assign is not None:
            actions = _bind_skeleton(skeleton, assign)
            motions = _motions(problem, actions, run.initial_world())
            if motions is not None:
                stats.elapsed = time.perf_counter() - t0
                return RefinementResult("bound", Solution(actions, motions), stats)
            stats.failures["motion"] += 1
        if stats.timed_out:
            break
    stats.elapsed = time.perf_counter() - t0
    return RefinementResult("exhausted", None, stats)
