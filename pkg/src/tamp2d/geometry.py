"""Planar stand-in for a kitchen scene.

Top-down view: the robot is a disc that drives on the floor; tables and
container footprints block the base but not the arm; container walls,
doors, and items block the arm. Doors are thick segments hinged at one
corner of the container opening.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import ndimage
from skimage.graph import MCP_Geometric

from .core import Value, ValueKind, baseconf, grasp, pose, trajectory, wrap_angle

DOOR_HALF = 0.01  # doors are 0.02 thick
GRIPPER_OFFSET = 0.03
ARM_RADIUS = 0.01
GRID_RES = 0.02
N_IK = 64
GEOM_TOL = 1e-6
HANDLE_SPREAD = math.pi / 4
HANDLE_STOP = 0.035
OPENINGS = ("south", "north", "east", "west")


class GeometryError(ValueError):
    pass


class RegionTooSmall(GeometryError):
    pass


# ---------------------------------------------------------------------------
# primitive distances

@dataclass(frozen=True)
class Rect:
    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    @classmethod
    def from_bounds(cls, x0, y0, x1, y1) -> Rect:
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0, 0.0)

    def corners(self) -> list[tuple[float, float]]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = self.w / 2, self.h / 2
        out = []
        for lx, ly in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
            out.append((self.cx + c * lx - s * ly, self.cy + s * lx + c * ly))
        return out

    def edges(self):
        cs = self.corners()
        return [(cs[i], cs[(i + 1) % 4]) for i in range(4)]

    def sdf(self, px: float, py: float) -> float:
        dx, dy = px - self.cx, py - self.cy
        c, s = math.cos(self.theta), math.sin(self.theta)
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        qx, qy = abs(lx) - self.w / 2, abs(ly) - self.h / 2
        outside = math.hypot(max(qx, 0.0), max(qy, 0.0))
        return outside + min(max(qx, qy), 0.0)

    def sdf_many(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        dx, dy = px - self.cx, py - self.cy
        c, s = math.cos(self.theta), math.sin(self.theta)
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        qx, qy = np.abs(lx) - self.w / 2, np.abs(ly) - self.h / 2
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return outside + np.minimum(np.maximum(qx, qy), 0.0)


def point_segment_distance(px, py, ax, ay, bx, by) -> float:
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * vx + (py - ay) * vy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def _point_segment_many(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def segments_intersect(a, b, c, d) -> bool:
    d1 = _cross(*c, *d, *a)
    d2 = _cross(*c, *d, *b)
    d3 = _cross(*a, *b, *c)
    d4 = _cross(*a, *b, *d)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    return False


def segment_segment_distance(a, b, c, d) -> float:
    if segments_intersect(a, b, c, d):
        return 0.0
    return min(
        point_segment_distance(*a, *c, *d),
        point_segment_distance(*b, *c, *d),
        point_segment_distance(*c, *a, *b),
        point_segment_distance(*d, *a, *b),
    )


def _clips_box(ax, ay, bx, by, hw, hh) -> bool:
    """Liang-Barsky: does segment ab meet the box |x| <= hw, |y| <= hh?"""
    t0, t1 = 0.0, 1.0
    dx, dy = bx - ax, by - ay
    for p, q in ((-dx, ax + hw), (dx, hw - ax), (-dy, ay + hh), (dy, hh - ay)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    return True


def segment_rect_distance(a, b, rect: Rect) -> float:
    """Signed-ish distance: negative when an endpoint is inside."""
    inside = min(rect.sdf(*a), rect.sdf(*b))
    if inside <= 0.0:
        return inside
    c, s = math.cos(rect.theta), math.sin(rect.theta)
    ax, ay = a[0] - rect.cx, a[1] - rect.cy
    bx, by = b[0] - rect.cx, b[1] - rect.cy
    ax, ay = c * ax + s * ay, -s * ax + c * ay
    bx, by = c * bx + s * by, -s * bx + c * by
    hw, hh = rect.w / 2, rect.h / 2
    if _clips_box(ax, ay, bx, by, hw, hh):
        return 0.0
    # disjoint convex shapes: the closest pair involves an endpoint or a corner
    best = inside
    for kx, ky in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        best = min(best, point_segment_distance(kx, ky, ax, ay, bx, by))
    return best


# ---------------------------------------------------------------------------
# scene objects

@dataclass(frozen=True)
class StaticShape:
    id: str
    rect: Rect


@dataclass(frozen=True)
class Surface:
    id: str
    x0: float
    y0: float
    x1: float
    y1: float
    color: int = 7

    @property
    def rect(self) -> Rect:
        return Rect.from_bounds(self.x0, self.y0, self.x1, self.y1)

    @property
    def area(self) -> tuple:
        return self.x0, self.y0, self.x1, self.y1


@dataclass(frozen=True)
class Container:
    """Box with three walls; the fourth side is closed by a hinged door."""

    id: str
    x0: float
    y0: float
    x1: float
    y1: float
    wall: float = 0.04
    opening: str = "south"
    limit: float = math.pi / 2
    angle: float = 0.0
    color: int = 5

    def __post_init__(self):
        if self.opening not in OPENINGS:
            raise GeometryError(f"{self.id}: unknown opening side {self.opening!r}")
        if not (0.0 < self.limit <= math.pi):
            raise GeometryError(f"{self.id}: joint limit must lie in (0, pi]")
        if not (-GEOM_TOL <= self.angle <= self.limit + GEOM_TOL):
            raise GeometryError(f"{self.id}: door angle {self.angle} outside [0, {self.limit}]")

    @property
    def door_id(self) -> str:
        return f"{self.id}:door1"

    @property
    def space_id(self) -> str:
        return f"{self.id}:space1"

    @property
    def area(self) -> tuple:
        return self.x0, self.y0, self.x1, self.y1

    @property
    def pivot(self) -> tuple[float, float]:
        return {
            "south": (self.x1, self.y0),
            "north": (self.x0, self.y1),
            "east": (self.x1, self.y1),
            "west": (self.x0, self.y0),
        }[self.opening]

    @property
    def base_angle(self) -> float:
        return {"south": math.pi, "north": 0.0, "east": -math.pi / 2, "west": math.pi / 2}[self.opening]

    @property
    def door_length(self) -> float:
        if self.opening in ("south", "north"):
            return self.x1 - self.x0
        return self.y1 - self.y0

    @property
    def walls(self) -> tuple:
        x0, y0, x1, y1, w = self.x0, self.y0, self.x1, self.y1, self.wall
        sides = {
            "south": (x0 - w, y0 - w, x1 + w, y0),
            "north": (x0 - w, y1, x1 + w, y1 + w),
            "west": (x0 - w, y0 - w, x0, y1 + w),
            "east": (x1, y0 - w, x1 + w, y1 + w),
        }
        return tuple(
            StaticShape(f"{self.id}:wall-{side}", Rect.from_bounds(*b))
            for side, b in sides.items()
            if side != self.opening
        )

    @property
    def footprint(self) -> Rect:
        w = self.wall
        x0, y0, x1, y1 = self.x0 - w, self.y0 - w, self.x1 + w, self.y1 + w
        if self.opening == "south":
            y0 = self.y0
        elif self.opening == "north":
            y1 = self.y1
        elif self.opening == "west":
            x0 = self.x0
        else:
            x1 = self.x1
        return Rect.from_bounds(x0, y0, x1, y1)

    def door_segment(self, angle: float | None = None):
        return door_fk(self, self.angle if angle is None else angle)


def door_fk(container: Container, angle: float):
    """Door endpoints (pivot, free end) at ``angle``; 0 is fully closed."""
    if angle < -GEOM_TOL or angle > container.limit + GEOM_TOL:
        raise GeometryError(f"{container.id}: angle {angle} outside [0, {container.limit}]")
    px, py = container.pivot
    L = container.door_length
    phi = container.base_angle + angle
    return (px, py), (px + L * math.cos(phi), py + L * math.sin(phi))


def door_normal(container: Container, angle: float) -> tuple[float, float]:
    """Unit normal pointing away from the container interior."""
    phi = container.base_angle + angle
    return -math.sin(phi), math.cos(phi)


@dataclass(frozen=True)
class Item:
    id: str
    radius: float
    pose: tuple  # (x, y, theta)
    color: int = 0
    model: str = "food0"


@dataclass(frozen=True)
class Robot:
    id: str = "robot1"
    radius: float = 0.15
    reach: float = 0.6
    conf: tuple = (0.5, 0.5, 0.0)


@dataclass(frozen=True)
class Obstacle:
    id: str
    kind: str  # rect | capsule | disc
    geom: tuple
    aabb: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "rect":
            cs = self.geom[0].corners()
            xs, ys = [c[0] for c in cs], [c[1] for c in cs]
            box = (min(xs), min(ys), max(xs), max(ys))
        elif self.kind == "capsule":
            ax, ay, bx, by, r = self.geom
            box = (min(ax, bx) - r, min(ay, by) - r, max(ax, bx) + r, max(ay, by) + r)
        else:
            cx, cy, r = self.geom
            box = (cx - r, cy - r, cx + r, cy + r)
        object.__setattr__(self, "aabb", box)

    def box_gap(self, x0, y0, x1, y1) -> float:
        """Lower bound on the distance from this obstacle to the given box."""
        bx0, by0, bx1, by1 = self.aabb
        return math.hypot(max(bx0 - x1, x0 - bx1, 0.0), max(by0 - y1, y0 - by1, 0.0))

    def sdf(self, px: float, py: float) -> float:
        if self.kind == "rect":
            return self.geom[0].sdf(px, py)
        if self.kind == "capsule":
            ax, ay, bx, by, r = self.geom
            return point_segment_distance(px, py, ax, ay, bx, by) - r
        cx, cy, r = self.geom
        return math.hypot(px - cx, py - cy) - r

    def sdf_many(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.kind == "rect":
            return self.geom[0].sdf_many(X, Y)
        if self.kind == "capsule":
            ax, ay, bx, by, r = self.geom
            return _point_segment_many(X, Y, ax, ay, bx, by) - r
        cx, cy, r = self.geom
        return np.hypot(X - cx, Y - cy) - r

    def segment_distance(self, a, b) -> float:
        if self.kind == "rect":
            return segment_rect_distance(a, b, self.geom[0])
        if self.kind == "capsule":
            ax, ay, bx, by, r = self.geom
            return segment_segment_distance(a, b, (ax, ay), (bx, by)) - r
        cx, cy, r = self.geom
        return point_segment_distance(cx, cy, *a, *b) - r


@dataclass(frozen=True)
class World2D:
    bounds: tuple = (0.0, 0.0, 4.0, 3.0)
    robot: Robot = field(default_factory=Robot)
    statics: tuple = ()
    surfaces: tuple = ()
    containers: tuple = ()
    items: tuple = ()
    held: str | None = None

    def __post_init__(self):
        for name in ("statics", "surfaces", "containers", "items"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    # lookups -------------------------------------------------------------
    def item(self, iid: str) -> Item:
        for it in self.items:
            if it.id == iid:
                return it
        raise KeyError(iid)

    def container(self, cid: str) -> Container:
        for c in self.containers:
            if cid in (c.id, c.door_id, c.space_id):
                return c
        raise KeyError(cid)

    def surface(self, sid: str) -> Surface:
        for s in self.surfaces:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def region_area(self, rid: str) -> tuple:
        for s in self.surfaces:
            if s.id == rid:
                return s.area
        for c in self.containers:
            if c.space_id == rid:
                return c.area
        raise KeyError(rid)

    def region_of(self, x: float, y: float, radius: float = 0.0) -> str | None:
        for s in self.surfaces:
            if _inside_area(s.area, x, y, radius):
                return s.id
        for c in self.containers:
            if _inside_area(c.area, x, y, radius):
                return c.space_id
        return None

    # updates ---------------------------------------------------------------
    def with_door(self, cid: str, angle: float) -> World2D:
        cs = tuple(replace(c, angle=float(angle)) if c.id == self.container(cid).id else c for c in self.containers)
        return replace(self, containers=cs)

    def with_item_pose(self, iid: str, p) -> World2D:
        p = tuple(p.data) if isinstance(p, Value) else tuple(p)
        items = tuple(replace(it, pose=p) if it.id == iid else it for it in self.items)
        return replace(self, items=items)

    def with_held(self, iid: str | None) -> World2D:
        return replace(self, held=iid)

    def with_robot_conf(self, conf) -> World2D:
        conf = tuple(conf.data) if isinstance(conf, Value) else tuple(conf)
        return replace(self, robot=replace(self.robot, conf=conf))

    # obstacles -------------------------------------------------------------
    def obstacles(self, layer: str = "arm") -> list[Obstacle]:
        if layer not in ("arm", "base"):
            raise ValueError(f"unknown layer {layer!r}")
        return list(_obstacles(self, layer))

    def base_key(self) -> tuple:
        return self.bounds, self.statics, self.surfaces, self.containers

    def all_ids(self) -> set:
        ids = {s.id for s in self.statics} | {s.id for s in self.surfaces} | {i.id for i in self.items}
        for c in self.containers:
            ids |= {c.id, c.door_id, c.space_id} | {w.id for w in c.walls}
        ids.add(self.robot.id)
        ids.add("bounds")
        return ids


def _inside_area(area, x, y, r) -> bool:
    x0, y0, x1, y1 = area
    return x0 + r - GEOM_TOL <= x <= x1 - r + GEOM_TOL and y0 + r - GEOM_TOL <= y <= y1 - r + GEOM_TOL


def _door_obstacle(c: Container) -> Obstacle:
    (ax, ay), (bx, by) = c.door_segment()
    return Obstacle(c.door_id, "capsule", (ax, ay, bx, by, DOOR_HALF))


def _obstacles(world: World2D, layer: str) -> tuple:
    key = "_obstacles_" + layer
    cached = world.__dict__.get(key)
    if cached is None:
        cached = tuple(_build_obstacles(world, layer))
        object.__setattr__(world, key, cached)
    return cached


def _build_obstacles(world: World2D, layer: str):
    for s in world.statics:
        yield Obstacle(s.id, "rect", (s.rect,))
    if layer == "base":
        for s in world.surfaces:
            yield Obstacle(s.id, "rect", (s.rect,))
        for c in world.containers:
            yield Obstacle(c.id, "rect", (c.footprint,))
            yield _door_obstacle(c)
    else:
        for c in world.containers:
            for w in c.walls:
                yield Obstacle(w.id, "rect", (w.rect,))
            yield _door_obstacle(c)
        for it in world.items:
            if it.id != world.held:
                yield Obstacle(it.id, "disc", (it.pose[0], it.pose[1], it.radius))


# ---------------------------------------------------------------------------
# collision queries

@dataclass(frozen=True)
class CollisionQuery:
    radius: float
    pose: tuple
    ignore: frozenset = frozenset()
    layer: str = "arm"

    def __post_init__(self):
        object.__setattr__(self, "ignore", frozenset(self.ignore))
        p = self.pose.data if isinstance(self.pose, Value) else self.pose
        object.__setattr__(self, "pose", tuple(float(v) for v in p))


def _outside_bounds(world: World2D, x, y, r) -> bool:
    bx0, by0, bx1, by1 = world.bounds
    return x - r < bx0 or x + r > bx1 or y - r < by0 or y + r > by1


def check_collision(world: World2D, query: CollisionQuery) -> bool:
    """True iff the query disc intersects a non-ignored obstacle."""
    x, y = query.pose[0], query.pose[1]
    unknown = query.ignore - world.all_ids()
    if unknown:
        raise ValueError(f"ignore set has unknown ids {sorted(unknown)}")
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("query pose must be finite")
    if query.layer == "base" and "bounds" not in query.ignore and _outside_bounds(world, x, y, query.radius):
        return True
    for ob in _obstacles(world, query.layer):
        if ob.id in query.ignore or _container_of(ob.id) in query.ignore:
            continue
        if ob.sdf(x, y) < query.radius:
            return True
    return False


def _container_of(oid: str) -> str:
    return oid.split(":", 1)[0] if ":" in oid else ""


def min_clearance(world: World2D, x: float, y: float, layer: str, ignore=()) -> float:
    ignore = set(ignore)
    best = math.inf
    for ob in _obstacles(world, layer):
        if ob.id in ignore:
            continue
        best = min(best, ob.sdf(x, y))
    if layer == "base":
        bx0, by0, bx1, by1 = world.bounds
        best = min(best, x - bx0, bx1 - x, y - by0, by1 - y)
    return best


def segment_clearance(world: World2D, a, b, layer: str, ignore=(), limit: float | None = None) -> float:
    """Smallest distance between segment ab and any non-ignored obstacle.

    With ``limit`` set, obstacles provably farther than ``limit`` are skipped,
    so the result is exact only when it is below ``limit``.
    """
    ignore = set(ignore)
    best = math.inf
    box = (min(a[0], b[0]), min(a[1], b[1]), max(a[0], b[0]), max(a[1], b[1]))
    for ob in _obstacles(world, layer):
        if ob.id in ignore:
            continue
        if limit is not None and ob.box_gap(*box) >= limit:
            continue
        best = min(best, ob.segment_distance(a, b))
        if best < 0:
            return best
    if layer == "base":
        bx0, by0, bx1, by1 = world.bounds
        for px, py in (a, b):
            best = min(best, px - bx0, bx1 - px, py - by0, by1 - py)
    return best


def validate_world(world: World2D) -> None:
    """Reject scenes whose shapes interpenetrate by more than ``GEOM_TOL``."""
    problems = []
    items = list(world.items)
    for c in world.containers:
        if c.wall <= 0 or c.x1 <= c.x0 or c.y1 <= c.y0:
            problems.append(f"{c.id} has degenerate geometry")
    for i, a in enumerate(items):
        if _outside_bounds(world, a.pose[0], a.pose[1], a.radius - GEOM_TOL):
            problems.append(f"{a.id} outside bounds")
        for b in items[i + 1:]:
            d = math.hypot(a.pose[0] - b.pose[0], a.pose[1] - b.pose[1])
            if d < a.radius + b.radius - GEOM_TOL:
                problems.append(f"{a.id} overlaps {b.id}")
        if world.held == a.id:
            continue
        if world.region_of(a.pose[0], a.pose[1], a.radius) is None:
            problems.append(f"{a.id} is not inside any surface or container space")
        for ob in _obstacles(world, "arm"):
            if ob.kind == "disc":
                continue
            if ob.sdf(a.pose[0], a.pose[1]) < a.radius - GEOM_TOL:
                problems.append(f"{a.id} overlaps {ob.id}")
    rx, ry, _ = world.robot.conf
    for ob in _obstacles(world, "base"):
        if ob.sdf(rx, ry) < world.robot.radius - GEOM_TOL:
            problems.append(f"{world.robot.id} overlaps {ob.id}")
    if _outside_bounds(world, rx, ry, world.robot.radius - GEOM_TOL):
        problems.append(f"{world.robot.id} outside bounds")
    for c in world.containers:
        (ax, ay), (bx, by) = c.door_segment()
        for ob in _obstacles(world, "base"):
            if ob.id == c.id or ob.id == c.door_id:
                continue
            if ob.segment_distance((ax, ay), (bx, by)) < DOOR_HALF - GEOM_TOL:
                problems.append(f"{c.door_id} overlaps {ob.id}")
    if problems:
        raise GeometryError("; ".join(problems))


# ---------------------------------------------------------------------------
# samplers

def sample_grasp(world: World2D, item_id: str, rng: np.random.Generator) -> Value:
    """Approach direction uniform on the circle; tool sits ``r + offset`` back."""
    r = world.item(item_id).radius
    phi = rng.uniform(0.0, 2.0 * math.pi)
    s = r + GRIPPER_OFFSET
    return grasp(s * math.cos(phi), s * math.sin(phi), phi)


def sample_handle_grasp(world: World2D, door_id: str, rng: np.random.Generator) -> Value:
    c = world.container(door_id)
    nx, ny = door_normal(c, c.angle)
    phi = math.atan2(-ny, -nx) + rng.uniform(-HANDLE_SPREAD, HANDLE_SPREAD)
    s = GRIPPER_OFFSET
    return grasp(s * math.cos(phi), s * math.sin(phi), phi)


def handle_point(container: Container, angle: float | None = None) -> tuple[float, float]:
    return door_fk(container, container.angle if angle is None else angle)[1]


def sample_placement(world: World2D, item_id: str, region_id: str, rng: np.random.Generator,
                     max_tries: int = 100) -> Value:
    r = world.item(item_id).radius
    x0, y0, x1, y1 = world.region_area(region_id)
    lo_x, hi_x, lo_y, hi_y = x0 + r, x1 - r, y0 + r, y1 - r
    if hi_x < lo_x - 1e-12 or hi_y < lo_y - 1e-12:
        raise RegionTooSmall(f"{item_id} (radius {r}) does not fit in {region_id}")
    hi_x, hi_y = max(hi_x, lo_x), max(hi_y, lo_y)
    statics = [ob for ob in _obstacles(world, "arm") if ob.kind == "rect"]
    for _ in range(max_tries):
        x = rng.uniform(lo_x, hi_x) if hi_x > lo_x else lo_x
        y = rng.uniform(lo_y, hi_y) if hi_y > lo_y else lo_y
        th = rng.uniform(-math.pi, math.pi)
        if all(ob.sdf(x, y) >= r for ob in statics):
            return pose(x, y, th)
    raise RegionTooSmall(f"no static-free placement for {item_id} in {region_id}")


def tool_point(target_xy, g: Value) -> tuple[float, float]:
    dx, dy, _ = g.data
    return target_xy[0] - dx, target_xy[1] - dy


def approach_clear(world: World2D, base_xy, target_xy, g: Value, ignore=(),
                   stop_short: float = 0.0, carry_radius: float = 0.0) -> bool:
    """Arm segment (and optional carried disc) free from base to target."""
    phi = g.data[2]
    ux, uy = math.cos(phi), math.sin(phi)
    wx, wy = tool_point(target_xy, g)
    fx, fy = wx + GRIPPER_OFFSET * ux - stop_short * ux, wy + GRIPPER_OFFSET * uy - stop_short * uy
    ignore = set(ignore)
    if world.held:
        ignore.add(world.held)
    if segment_clearance(world, base_xy, (fx, fy), "arm", ignore, limit=ARM_RADIUS) < ARM_RADIUS:
        return False
    if carry_radius > 0.0:
        rr = world.robot.radius + carry_radius
        sx, sy = base_xy[0] + rr * ux, base_xy[1] + rr * uy
        if (target_xy[0] - sx) * ux + (target_xy[1] - sy) * uy > 0:
            if segment_clearance(world, (sx, sy), target_xy, "arm", ignore, limit=carry_radius) < carry_radius:
                return False
    return True


def sample_base_conf(world: World2D, target, g: Value, rng: np.random.Generator, *,
                     ignore=(), stop_short: float = 0.0, carry_radius: float = 0.0,
                     base_margin: float = 0.0, n: int = N_IK) -> Value | None:
    """Base pose on the approach ray of ``g`` with the target within reach."""
    tx, ty = (target.xy if isinstance(target, Value) else (target[0], target[1]))
    phi = g.data[2]
    ux, uy = math.cos(phi), math.sin(phi)
    wx, wy = tool_point((tx, ty), g)
    robot = world.robot
    lo, hi = robot.radius + ARM_RADIUS, robot.reach
    rb = robot.radius + base_margin
    rhos = rng.uniform(lo, hi, size=n)
    bx, by = wx - rhos * ux, wy - rhos * uy
    bx0, by0, bx1, by1 = world.bounds
    ok = (bx - rb >= bx0) & (bx + rb <= bx1) & (by - rb >= by0) & (by + rb <= by1)
    for ob in _obstacles(world, "base"):
        ok &= ob.sdf_many(bx, by) >= rb
    # the arm segment for a larger rho contains the one for a smaller rho, so
    # clearance is monotone along the ray; remember the known clear/blocked bounds
    clear_upto, blocked_from = -math.inf, math.inf
    for j in np.flatnonzero(ok):
        rho = rhos[j]
        if rho >= blocked_from:
            continue
        if rho > clear_upto:
            if approach_clear(world, (bx[j], by[j]), (tx, ty), g, ignore, stop_short, carry_radius):
                clear_upto = rho
            else:
                blocked_from = rho
                continue
        return baseconf(float(bx[j]), float(by[j]), phi)
    return None


def reach_exists_grid(world: World2D, target_xy, target_radius: float, ignore=(), res: float = 0.01,
                      step: float = 0.005) -> bool:
    """Brute-force check: is there any free base cell from which the arm reaches ``target_xy``?

    Independent of the samplers: bases on a ``res`` grid, the approach ray
    fixed by base and target, and the arm tested by point sampling. Used as
    an oracle to certify that a target is unreachable.
    """
    robot = world.robot
    tx, ty = target_xy
    s = target_radius + GRIPPER_OFFSET
    lo, hi = robot.radius + ARM_RADIUS, robot.reach
    x0, y0, x1, y1 = world.bounds
    gx = np.arange(max(x0, tx - hi - s), min(x1, tx + hi + s) + 1e-12, res)
    gy = np.arange(max(y0, ty - hi - s), min(y1, ty + hi + s) + 1e-12, res)
    BX, BY = (a.ravel() for a in np.meshgrid(gx, gy))
    dist = np.hypot(tx - BX, ty - BY)
    rho = dist - s
    ok = (rho >= lo - GEOM_TOL) & (rho <= hi + GEOM_TOL)
    rb = robot.radius
    ok &= (BX - rb >= x0) & (BX + rb <= x1) & (BY - rb >= y0) & (BY + rb <= y1)
    for ob in _obstacles(world, "base"):
        ok &= ob.sdf_many(BX, BY) >= rb - GEOM_TOL
    BX, BY, dist = BX[ok], BY[ok], dist[ok]
    if not len(BX):
        return False
    ux, uy = (tx - BX) / dist, (ty - BY) / dist
    # arm from base to the fingertip, which stops at the target surface
    tip = dist - target_radius
    n = int(math.ceil((hi + s) / step)) + 1
    t = np.linspace(0.0, 1.0, n)
    PX = BX[:, None] + ux[:, None] * tip[:, None] * t[None, :]
    PY = BY[:, None] + uy[:, None] * tip[:, None] * t[None, :]
    free = np.ones(PX.shape, dtype=bool)
    ignore = set(ignore)
    if world.held:
        ignore.add(world.held)
    for ob in _obstacles(world, "arm"):
        if ob.id in ignore:
            continue
        free &= ob.sdf_many(PX, PY) >= ARM_RADIUS - GEOM_TOL
    return bool(free.all(axis=1).any())


# ---------------------------------------------------------------------------
# base motion

@dataclass
class _Grid:
    x0: float
    y0: float
    res: float
    free: np.ndarray  # [ix, iy]
    labels: np.ndarray

    def center(self, ix, iy):
        return self.x0 + (ix + 0.5) * self.res, self.y0 + (iy + 0.5) * self.res


@lru_cache(maxsize=256)
def _grid(base_key: tuple, radius: float, res: float) -> _Grid:
    bounds, statics, surfaces, containers = base_key
    world = World2D(bounds=bounds, statics=statics, surfaces=surfaces, containers=containers)
    bx0, by0, bx1, by1 = bounds
    nx, ny = int(math.ceil((bx1 - bx0) / res)), int(math.ceil((by1 - by0) / res))
    xs = bx0 + (np.arange(nx) + 0.5) * res
    ys = by0 + (np.arange(ny) + 0.5) * res
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    # margin keeps every point on a segment between adjacent free centres clear
    need = radius + res * math.sqrt(2.0) / 2.0
    clear = np.minimum(np.minimum(X - bx0, bx1 - X), np.minimum(Y - by0, by1 - Y))
    for ob in _obstacles(world, "base"):
        clear = np.minimum(clear, ob.sdf_many(X, Y))
    free = clear >= need
    labels, _ = ndimage.label(free, structure=np.ones((3, 3), dtype=int))
    return _Grid(bx0, by0, res, free, labels)


def _attach(world: World2D, grid: _Grid, x: float, y: float, radius: float, max_cells: int = 24):
    """Free cells reachable from (x, y) by a straight collision-free segment."""
    ix, iy = int((x - grid.x0) / grid.res), int((y - grid.y0) / grid.res)
    span = 4
    nx, ny = grid.free.shape
    lo_x, hi_x = max(ix - span, 0), min(ix + span + 1, nx)
    lo_y, hi_y = max(iy - span, 0), min(iy + span + 1, ny)
    cand = []
    for cx in range(lo_x, hi_x):
        for cy in range(lo_y, hi_y):
            if grid.free[cx, cy]:
                px, py = grid.center(cx, cy)
                cand.append((math.hypot(px - x, py - y), cx, cy))
    cand.sort()
    out = []
    for _, cx, cy in cand[:max_cells]:
        if segment_clearance(world, (x, y), grid.center(cx, cy), "base") >= radius:
            out.append((cx, cy))
    return out


def _conf_xy(c):
    data = c.data if isinstance(c, Value) else c
    return float(data[0]), float(data[1]), float(data[2])


def base_free(world: World2D, conf, radius: float) -> bool:
    x, y, _ = _conf_xy(conf)
    return min_clearance(world, x, y, "base") >= radius


def motion_connected(world: World2D, start, end, held_radius: float = 0.0, res: float = GRID_RES) -> bool:
    """Cheap reachability test consistent with ``plan_motion``."""
    return _motion(world, start, end, held_radius, res, want_path=False) is not None


def plan_motion(world: World2D, start, end, held_radius: float = 0.0, res: float = GRID_RES) -> Value | None:
    """Collision-free base polyline from ``start`` to ``end`` or None."""
    return _motion(world, start, end, held_radius, res, want_path=True)


def _motion(world, start, end, held_radius, res, want_path):
    R = world.robot.radius + held_radius
    s = _conf_xy(start)
    e = _conf_xy(end)
    if not base_free(world, s, R) or not base_free(world, e, R):
        return None
    if math.hypot(e[0] - s[0], e[1] - s[1]) <= 1e-9 and abs(wrap_angle(e[2] - s[2])) <= 1e-9:
        return trajectory([s])
    if segment_clearance(world, s[:2], e[:2], "base") >= R:
        return trajectory([s, e]) if want_path else True
    grid = _grid(world.base_key(), round(R, 9), res)
    starts = _attach(world, grid, s[0], s[1], R)
    ends = _attach(world, grid, e[0], e[1], R)
    common = {grid.labels[c] for c in starts} & {grid.labels[c] for c in ends}
    if not common:
        return None
    if not want_path:
        return True
    cost = np.where(grid.free, 1.0, -1.0)
    mcp = MCP_Geometric(cost, fully_connected=True)
    cum, _ = mcp.find_costs(starts, ends)
    best = min(ends, key=lambda c: cum[c])
    cells = mcp.traceback(best)
    pts = [s[:2]] + [grid.center(cx, cy) for cx, cy in cells] + [e[:2]]
    pts = _shortcut(world, pts, R)
    wps = []
    for i, (x, y) in enumerate(pts):
        if i == 0:
            th = s[2]
        elif i == len(pts) - 1:
            th = e[2]
        else:
            px, py = pts[i - 1]
            th = math.atan2(y - py, x - px)
        wps.append((x, y, th))
    return trajectory(wps)


def _shortcut(world: World2D, pts: list, radius: float) -> list:
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and segment_clearance(world, pts[i], pts[j], "base") < radius:
            j -= 1
        out.append(pts[j])
        i = j
    return out


# ---------------------------------------------------------------------------
# debug output

_PALETTE = ["#d62728", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#1f77b4", "#7f7f7f"]


def world_to_svg(world: World2D, scale: float = 200.0) -> str:
    bx0, by0, bx1, by1 = world.bounds
    W, H = (bx1 - bx0) * scale, (by1 - by0) * scale

    def X(x):
        return (x - bx0) * scale

    def Y(y):
        return H - (y - by0) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}">',
             f'<rect x="0" y="0" width="{W:.0f}" height="{H:.0f}" fill="white" stroke="black"/>']

    def rect(r: Rect, fill):
        pts = " ".join(f"{X(x):.1f},{Y(y):.1f}" for x, y in r.corners())
        parts.append(f'<polygon points="{pts}" fill="{fill}" stroke="black" stroke-width="0.5"/>')

    for s in world.statics:
        rect(s.rect, "#444")
    for s in world.surfaces:
        rect(s.rect, "#e8d8b0")
    for c in world.containers:
        rect(Rect.from_bounds(*c.area), "#f4f4f4")
        for w in c.walls:
            rect(w.rect, _PALETTE[c.color % 8])
        (ax, ay), (qx, qy) = c.door_segment()
        parts.append(f'<line x1="{X(ax):.1f}" y1="{Y(ay):.1f}" x2="{X(qx):.1f}" y2="{Y(qy):.1f}" '
                     f'stroke="{_PALETTE[c.color % 8]}" stroke-width="{2 * DOOR_HALF * scale:.1f}"/>')
    for it in world.items:
        parts.append(f'<circle cx="{X(it.pose[0]):.1f}" cy="{Y(it.pose[1]):.1f}" r="{it.radius * scale:.1f}" '
                     f'fill="{_PALETTE[it.color % 8]}"/>')
    rx, ry, rt = world.robot.conf
    parts.append(f'<circle cx="{X(rx):.1f}" cy="{Y(ry):.1f}" r="{world.robot.radius * scale:.1f}" '
                 f'fill="none" stroke="blue"/>')
    parts.append(f'<line x1="{X(rx):.1f}" y1="{Y(ry):.1f}" x2="{X(rx + world.robot.radius * math.cos(rt)):.1f}" '
                 f'y2="{Y(ry + world.robot.radius * math.sin(rt)):.1f}" stroke="blue"/>')
    parts.append("</svg>")
    return "\n".join(parts)
