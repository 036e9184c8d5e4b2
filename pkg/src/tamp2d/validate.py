"""Independent re-simulation of a fully bound plan.

Deliberately written against the public collision query only: every swept
shape is checked by point sampling at ``STEP`` rather than with the exact
segment distances the sampler uses. A sampler bug therefore shows up here as
a violated constraint instead of being silently shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    MOVE, PICK, PLACE_IN, PLACE_ON, PULL_OPEN, Free, PreconditionError, Problem, ValueKind,
    apply_abstract, goal_satisfied, wrap_angle,
)
from .geometry import (
    ARM_RADIUS, DOOR_HALF, GRIPPER_OFFSET, HANDLE_SPREAD, HANDLE_STOP, CollisionQuery, check_collision,
)

STEP = 0.005
TOL = 1e-6


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    step: int | None = None
    constraint: str | None = None
    message: str = ""

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return f"step {self.step}: {self.constraint} violated ({self.message})"


class _Violation(Exception):
    def __init__(self, constraint, message):
        self.constraint = constraint
        self.message = message


def _points(a, b, step=STEP):
    n = max(1, int(math.ceil(math.hypot(b[0] - a[0], b[1] - a[1]) / step)))
    for j in range(n + 1):
        t = j / n
        yield a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])


def _disc_free(world, xy, r, ignore=(), layer="arm") -> bool:
    return not check_collision(world, CollisionQuery(r, (xy[0], xy[1], 0.0), frozenset(ignore), layer))


def _held_r(world):
    if world.held is None:
        return 0.0
    for it in world.items:
        if it.id == world.held:
            return it.radius
    return 0.0


def _check_motion(world, q1, q2, traj):
    if traj is None or traj.kind is not ValueKind.TRAJECTORY:
        raise _Violation("motion", "move has no trajectory")
    wps = traj.data
    if math.dist(wps[0][:2], q1.xy) > TOL or math.dist(wps[-1][:2], q2.xy) > TOL:
        raise _Violation("motion", "trajectory endpoints differ from the move's confs")
    R = world.robot.radius + _held_r(world)
    for a, b in zip(wps, wps[1:] or wps):
        for p in _points(a, b):
            if not _disc_free(world, p, R, layer="base"):
                raise _Violation("motion", f"robot collides at ({p[0]:.3f}, {p[1]:.3f})")
    if len(wps) == 1 and not _disc_free(world, wps[0], R, layer="base"):
        raise _Violation("motion", "robot collides at its only waypoint")


def _check_reach(world, q, target, g, *, ignore, stop_short, carry):
    bx, by = q.xy
    dx, dy, phi = g.data
    wx, wy = target[0] - dx, target[1] - dy
    ux, uy = math.cos(phi), math.sin(phi)
    robot = world.robot
    if not _disc_free(world, (bx, by), robot.radius, layer="base"):
        raise _Violation("kinematics", "base conf in collision")
    rho = math.hypot(wx - bx, wy - by)
    if rho > robot.reach + TOL:
        raise _Violation("kinematics", f"target {rho:.3f} beyond reach")
    if abs(wrap_angle(math.atan2(wy - by, wx - bx) - phi)) > 1e-5:
        raise _Violation("kinematics", "base is not on the approach line")
    tip = (wx + (GRIPPER_OFFSET - stop_short) * ux, wy + (GRIPPER_OFFSET - stop_short) * uy)
    ign = set(ignore) | ({world.held} if world.held else set())
    for p in _points((bx, by), tip):
        if not _disc_free(world, p, ARM_RADIUS, ign):
            raise _Violation("kinematics", f"arm collides at ({p[0]:.3f}, {p[1]:.3f})")
    if carry > 0:
        sx, sy = bx + (robot.radius + carry) * ux, by + (robot.radius + carry) * uy
        if (target[0] - sx) * ux + (target[1] - sy) * uy > 0:
            for p in _points((sx, sy), target):
                if not _disc_free(world, p, carry, ign):
                    raise _Violation("kinematics", "carried item collides along the approach")


def _door_sweep(world, c, a1, a2, q):
    px, py = c.pivot
    L = c.door_length
    n = max(1, int(math.ceil(abs(a2 - a1) * L / STEP)))
    rb = world.robot.radius
    base_world = world
    ignore = {c.id, c.door_id}
    for j in range(n + 1):
        a = a1 + (a2 - a1) * j / n
        phi = c.base_angle + a
        end = (px + L * math.cos(phi), py + L * math.sin(phi))
        if math.dist(end, q.xy) > world.robot.reach + GRIPPER_OFFSET + TOL:
            raise _Violation("door-sweep", "handle leaves the robot's reach")
        for p in _points((px, py), end):
            if math.dist(p, q.xy) < rb + DOOR_HALF:
                raise _Violation("door-sweep", "door hits the robot")
            if not _disc_free(base_world, p, DOOR_HALF, ignore | {"bounds"}, layer="base"):
                raise _Violation("door-sweep", f"door hits an obstacle at ({p[0]:.3f}, {p[1]:.3f})")


def validate_solution(solution, problem: Problem) -> ValidationReport:
    """Re-simulate ``solution`` (a Solution or sequence of bound actions)."""
    actions = list(getattr(solution, "actions", solution))
    motions = list(getattr(solution, "motions", [None] * len(actions)))
    world = problem.world
    if world is None:
        return ValidationReport(False, None, "world", "problem has no world attached")
    state = frozenset(problem.init)
    for l in state:
        if l.predicate == "AtConf":
            world = world.with_robot_conf(l.args[0])
    i = -1
    try:
        for i, a in enumerate(actions):
            for s in a.slots:
                if isinstance(s, Free):
                    raise _Violation("binding", f"slot #{s.id} is unbound")
            try:
                state = apply_abstract(state, a)
            except PreconditionError as exc:
                raise _Violation("precondition", str(exc.literal)) from None
            b = a.binding()
            if a.schema is MOVE:
                _check_motion(world, b["q1"], b["q2"], motions[i] if i < len(motions) else None)
                world = world.with_robot_conf(b["q2"])
                continue
            q, g = b["q"], b["g"]
            if a.schema in (PICK, PLACE_ON, PLACE_IN):
                o = a.objects[0].id
                item = next(it for it in world.items if it.id == o)
                r = item.radius
                if abs(math.hypot(g.data[0], g.data[1]) - (r + GRIPPER_OFFSET)) > TOL:
                    raise _Violation("grasp", "grasp standoff does not touch the item")
                p = b["p"]
                if a.schema is PICK:
                    if math.dist(p.xy, item.pose[:2]) > TOL:
                        raise _Violation("kinematics", "pick pose is not the item's pose")
                else:
                    region = a.objects[1]
                    x0, y0, x1, y1 = world.region_area(region.id)
                    x, y = p.xy
                    if not (x0 + r - TOL <= x <= x1 - r + TOL and y0 + r - TOL <= y <= y1 - r + TOL):
                        raise _Violation("stable", f"pose outside {region.id}")
                    if not _disc_free(world, p.xy, r, {o}):
                        raise _Violation("stable", "placed item overlaps something")
                _check_reach(world, q, p.xy, g, ignore={o}, stop_short=0.0, carry=r)
                world = world.with_robot_conf(q)
                if a.schema is PICK:
                    world = world.with_held(o)
                else:
                    world = world.with_item_pose(o, p).with_held(None)
            else:
                c = world.container(a.objects[1].id)
                a1, a2 = b["a1"].data[0], b["a2"].data[0]
                if abs(a1 - c.angle) > TOL:
                    raise _Violation("joint-limit", "start angle differs from the door's angle")
                if not (-TOL <= a2 <= c.limit + TOL) or (a.schema is PULL_OPEN and a2 <= a1):
                    raise _Violation("joint-limit", f"angle {a2:.4f} not reachable")
                phi_n = c.base_angle + a1
                inward = math.atan2(-math.cos(phi_n), math.sin(phi_n))
                if abs(wrap_angle(g.data[2] - inward)) > HANDLE_SPREAD + TOL:
                    raise _Violation("grasp", "handle approached from the wrong side")
                if abs(math.hypot(g.data[0], g.data[1]) - GRIPPER_OFFSET) > TOL:
                    raise _Violation("grasp", "handle standoff")
                px, py = c.pivot
                L = c.door_length
                hp = (px + L * math.cos(phi_n), py + L * math.sin(phi_n))
                _check_reach(world, q, hp, g, ignore=(), stop_short=HANDLE_STOP, carry=0.0)
                _door_sweep(world, c, a1, a2, q)
                world = world.with_robot_conf(q).with_door(c.id, a2)
        if not goal_satisfied(state, problem.goal):
            missing = sorted(repr(g) for g in problem.goal if g not in state)
            raise _Violation("goal", f"missing {', '.join(missing)}")
    except _Violation as v:
        step = None if v.constraint == "goal" else i
        return ValidationReport(False, step, v.constraint, v.message)
    return ValidationReport(True)
