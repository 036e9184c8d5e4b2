import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tamp2d import geometry as geo
from tamp2d.core import baseconf, grasp, pose
from tamp2d.geometry import (
    CollisionQuery, Container, GeometryError, Item, Rect, RegionTooSmall, Robot, StaticShape, Surface, World2D,
    check_collision, door_fk, plan_motion, reach_exists_grid, sample_base_conf, sample_grasp, sample_placement,
    segment_rect_distance, segments_intersect,
)

from conftest import generated
from oracles import _inside, _pt_seg, segment_rect_distance_ref

STEP = 0.005


def box_world(door_angle=0.0, items=True):
    c = Container("fridge1", 1.6, 1.6, 2.4, 2.2, opening="south", limit=math.pi / 2, angle=door_angle)
    its = (Item("food1", 0.06, (2.0, 1.9, 0.0)),) if items else ()
    return World2D((0.0, 0.0, 4.0, 3.0), Robot("robot1", 0.15, 0.8, (0.5, 0.5, 0.0)),
                   surfaces=(Surface("table1", 0.2, 2.0, 1.0, 2.8),), containers=(c,), items=its)


def test_zero_radius_disc_in_free_space():
    w = box_world()
    assert not check_collision(w, CollisionQuery(0.0, (0.5, 1.0, 0.0)))


def test_disc_inside_closed_door_thickness():
    w = box_world(0.0)
    (ax, ay), (bx, by) = door_fk(w.containers[0], 0.0)
    mx, my = (ax + bx) / 2, (ay + by) / 2 - 0.005  # within the 0.01 half thickness
    assert check_collision(w, CollisionQuery(0.001, (mx, my, 0.0)))


def test_item_ignores_itself():
    w = box_world()
    it = w.items[0]
    q = CollisionQuery(it.radius, it.pose, ignore={it.id})
    assert not check_collision(w, q)
    assert check_collision(w, CollisionQuery(it.radius, it.pose))


def test_unknown_ignore_id_rejected():
    with pytest.raises(ValueError):
        check_collision(box_world(), CollisionQuery(0.1, (1, 1, 0), ignore={"nope"}))


def test_door_fk_examples():
    c = Container("box1", 0.0, -1.0, 1.0, 0.0, opening="north", limit=math.pi / 2)
    assert c.pivot == (0.0, 0.0) and c.base_angle == 0.0 and c.door_length == 1.0
    p, e = door_fk(c, math.pi / 4)
    assert p == (0.0, 0.0)
    assert e == pytest.approx((math.sqrt(2) / 2, math.sqrt(2) / 2), abs=1e-15)
    # closed door seals the opening: it runs along the container's north edge
    _, e0 = door_fk(c, 0.0)
    assert e0 == pytest.approx((1.0, 0.0))
    _, e1 = door_fk(c, c.limit)
    assert math.atan2(e1[1], e1[0]) == pytest.approx(c.limit)
    with pytest.raises(GeometryError):
        door_fk(c, c.limit + 0.1)
    with pytest.raises(GeometryError):
        door_fk(c, -0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, math.pi / 2), st.floats(0, math.pi / 2))
def test_door_fk_lipschitz(a, b):
    c = box_world().containers[0]
    _, ea = door_fk(c, a)
    _, eb = door_fk(c, b)
    assert math.dist(ea, eb) <= c.door_length * abs(a - b) + 1e-12


def test_container_limit_validation():
    with pytest.raises(GeometryError):
        Container("c", 0, 0, 1, 1, limit=0.0)
    with pytest.raises(GeometryError):
        Container("c", 0, 0, 1, 1, limit=4.0)


def test_grasp_standoff_and_uniformity():
    w = box_world()
    rng = np.random.default_rng(0)
    r = w.item("food1").radius
    angs = []
    for _ in range(1000):
        g = sample_grasp(w, "food1", rng)
        dx, dy, phi = g.data
        assert math.hypot(dx, dy) == pytest.approx(r + geo.GRIPPER_OFFSET)
        angs.append(phi % (2 * math.pi))
    counts, _ = np.histogram(angs, bins=16, range=(0, 2 * math.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_grasp_sampler_deterministic():
    w = box_world()
    a = [sample_grasp(w, "food1", np.random.default_rng(5)) for _ in range(3)]
    b = [sample_grasp(w, "food1", np.random.default_rng(5)) for _ in range(3)]
    assert a == b


def test_placement_uniform_in_empty_region():
    w = World2D(robot=Robot("robot1", 0.15, 0.8, (3.5, 2.5, 0)), surfaces=(Surface("table1", 0.5, 0.5, 1.5, 1.1),))
    rng = np.random.default_rng(1)
    r = 0.05
    w = World2D(w.bounds, w.robot, surfaces=w.surfaces, items=(Item("food1", r, (1.0, 0.8, 0)),))
    xs, ys = [], []
    for _ in range(1000):
        p = sample_placement(w, "food1", "table1", rng)
        xs.append(p.data[0])
        ys.append(p.data[1])
    assert stats.kstest(xs, "uniform", args=(0.5 + r, 1.0 - 2 * r)).pvalue > 0.01
    assert stats.kstest(ys, "uniform", args=(0.5 + r, 0.6 - 2 * r)).pvalue > 0.01


def test_placement_limit_cases():
    s = Surface("table1", 0.5, 0.5, 1.5, 0.7)  # short side 0.2
    w = World2D(robot=Robot("robot1", 0.15, 0.8, (3.5, 2.5, 0)), surfaces=(s,),
                items=(Item("food1", 0.1, (3.0, 0.5, 0)), Item("food2", 0.3, (3.0, 1.5, 0))))
    rng = np.random.default_rng(0)
    ys = {round(sample_placement(w, "food1", "table1", rng).data[1], 12) for _ in range(20)}
    assert ys == {0.6}
    with pytest.raises(RegionTooSmall):
        sample_placement(w, "food2", "table1", rng)


def test_base_conf_open_space():
    w = World2D(robot=Robot("robot1", 0.15, 0.8, (0.5, 0.5, 0)), items=(Item("food1", 0.05, (2.0, 1.5, 0)),))
    rng = np.random.default_rng(3)
    g = sample_grasp(w, "food1", rng)
    q = sample_base_conf(w, pose(2.0, 1.5), g, rng, ignore=("food1",))
    assert q is not None
    tx, ty = geo.tool_point((2.0, 1.5), g)
    assert math.hypot(q.data[0] - tx, q.data[1] - ty) <= w.robot.reach + 1e-12


def test_base_conf_closed_container_none_open_found():
    w = box_world(0.0)
    target = w.items[0]
    rng = np.random.default_rng(7)
    for _ in range(30):
        g = sample_grasp(w, target.id, rng)
        assert sample_base_conf(w, target.pose, g, rng, ignore=(target.id,)) is None
    assert not reach_exists_grid(w, target.pose[:2], target.radius, ignore=(target.id,))
    wo = w.with_door("fridge1", w.containers[0].limit)
    assert reach_exists_grid(wo, target.pose[:2], target.radius, ignore=(target.id,))
    found = None
    for _ in range(60):
        g = sample_grasp(wo, target.id, rng)
        found = sample_base_conf(wo, target.pose, g, rng, ignore=(target.id,))
        if found is not None:
            break
    assert found is not None


def test_motion_identity():
    w = box_world()
    t = plan_motion(w, baseconf(0.5, 0.5), baseconf(0.5, 0.5))
    assert len(t.data) == 1


def _walled(gap):
    # a vertical wall across the world with an optional doorway of width ``gap`` centred at y=1.5
    R = Robot("robot1", 0.15, 0.8, (0.5, 1.5, 0))
    if gap <= 0:
        return World2D(robot=R, statics=(StaticShape("wall", Rect(2.0, 1.5, 0.1, 3.0)),))
    lo = 1.5 - gap / 2
    hi = 1.5 + gap / 2
    return World2D(robot=R, statics=(
        StaticShape("wall-a", Rect.from_bounds(1.95, 0.0, 2.05, lo)),
        StaticShape("wall-b", Rect.from_bounds(1.95, hi, 2.05, 3.0)),
    ))


def test_blocking_wall_disconnects():
    assert plan_motion(_walled(0), baseconf(0.5, 1.5), baseconf(3.5, 1.5)) is None


@pytest.mark.parametrize("gap,ok", [(0.40, True), (0.34, True), (0.26, False), (0.20, False)])
def test_doorway_width(gap, ok):
    w = _walled(gap)
    t = plan_motion(w, baseconf(0.5, 1.5), baseconf(3.5, 1.5))
    assert (t is not None) == ok
    # grid connectivity at resolution 0.01 agrees
    assert _grid_connected(w, (0.5, 1.5), (3.5, 1.5), 0.01) == ok
    if t is not None:
        _assert_traj_free(w, t, w.robot.radius)


def _grid_connected(world, s, e, res):
    from scipy import ndimage
    x0, y0, x1, y1 = world.bounds
    xs = np.arange(x0, x1 + 1e-9, res)
    ys = np.arange(y0, y1 + 1e-9, res)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    free = np.ones(X.shape, bool)
    R = world.robot.radius
    for ob in geo._obstacles(world, "base"):
        free &= ob.sdf_many(X, Y) >= R
    free &= (X - R >= x0) & (X + R <= x1) & (Y - R >= y0) & (Y + R <= y1)
    lab, _ = ndimage.label(free, structure=np.ones((3, 3)))
    a = lab[int(round((s[0] - x0) / res)), int(round((s[1] - y0) / res))]
    b = lab[int(round((e[0] - x0) / res)), int(round((e[1] - y0) / res))]
    return a != 0 and a == b


def _assert_traj_free(world, t, R):
    pts = [w[:2] for w in t.data]
    for (ax, ay), (bx, by) in zip(pts, pts[1:] or pts):
        n = max(1, int(math.ceil(math.hypot(bx - ax, by - ay) / STEP)))
        for j in range(n + 1):
            x, y = ax + (bx - ax) * j / n, ay + (by - ay) * j / n
            assert geo.min_clearance(world, x, y, "base") >= R - 1e-9


def test_generated_trajectories_collision_free():
    rng = np.random.default_rng(0)
    checked = 0
    for seed in range(6):
        w = generated("two_container_in", seed).world
        R = w.robot.radius
        for _ in range(6):
            x0, y0, x1, y1 = w.bounds
            e = (rng.uniform(x0 + R, x1 - R), rng.uniform(y0 + R, y1 - R), 0.0)
            if not geo.base_free(w, e, R):
                continue
            t = plan_motion(w, w.robot.conf, e)
            if t is not None:
                _assert_traj_free(w, t, R)
                checked += 1
    assert checked >= 10


def _obstacle_distance_ref(ob, x, y):
    if ob.kind == "rect":
        cs = ob.geom[0].corners()
        if _inside((x, y), cs):
            return 0.0
        return min(_pt_seg((x, y), cs[i], cs[(i + 1) % 4]) for i in range(4))
    if ob.kind == "capsule":
        ax, ay, bx, by, r = ob.geom
        return _pt_seg((x, y), (ax, ay), (bx, by)) - r
    cx, cy, r = ob.geom
    return math.hypot(x - cx, y - cy) - r


def test_collision_agrees_with_point_oracle():
    rng = np.random.default_rng(11)
    worlds = [generated(t, s).world for t, s in (("two_container_in", 0), ("stapler_in", 1), ("one_container_pick", 2))]
    disagreements = 0
    for i in range(10_000):
        w = worlds[i % 3]
        layer = "arm" if i % 2 else "base"
        x0, y0, x1, y1 = w.bounds
        x, y = rng.uniform(x0, x1), rng.uniform(y0, y1)
        r = 0.0 if i % 4 < 2 else rng.uniform(0.0, 0.2)
        got = check_collision(w, CollisionQuery(r, (x, y, 0.0), ignore={"bounds"} if layer == "base" else (),
                                                layer=layer))
        dists = [_obstacle_distance_ref(ob, x, y) for ob in geo._obstacles(w, layer)]
        d = min(dists) if dists else math.inf
        want = d < r if r > 0 else d <= 0.0
        if got != want and abs(d - r) > 1e-6:
            disagreements += 1
    assert disagreements == 0


def test_segment_rect_distance_matches_reference():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20_000):
        rect = Rect(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.05, 1.5), rng.uniform(0.05, 1.5),
                    rng.uniform(-math.pi, math.pi))
        a = tuple(float(v) for v in rng.uniform(-2, 2, 2))
        b = a if rng.random() < 0.05 else tuple(float(v) for v in rng.uniform(-2, 2, 2))
        got = segment_rect_distance(a, b, rect)
        # signed like the other shapes: negative iff an endpoint is strictly inside
        if min(rect.sdf(*a), rect.sdf(*b)) < 0:
            assert got < 0
        worst = max(worst, abs(max(got, 0.0) - segment_rect_distance_ref(a, b, rect)))
    assert worst < 1e-9


@settings(max_examples=300, deadline=None)
@given(*(st.tuples(st.floats(-5, 5), st.floats(-5, 5)) for _ in range(4)))
def test_intersection_symmetric(a, b, c, d):
    assert segments_intersect(a, b, c, d) == segments_intersect(c, d, a, b)
    assert geo.segment_segment_distance(a, b, c, d) == pytest.approx(geo.segment_segment_distance(c, d, a, b),
                                                                      abs=1e-12)


def test_svg_dump_is_static_text():
    svg = geo.world_to_svg(box_world(0.5))
    assert svg.startswith("<svg") and "</svg>" in svg and "<script" not in svg
