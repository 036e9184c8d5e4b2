"""Reference implementations used only by the tests.

They share no code with the search or the samplers beyond the core
vocabulary (schemas, literals, ``apply_abstract``).
"""

import itertools
import math
from collections import Counter

from tamp2d.core import (
    MOVE, PICK, PLACE_IN, PLACE_ON, PULL_CLOSE, PULL_OPEN, BoundValue, Category, Free, GroundAction,
    PreconditionError, apply_abstract, goal_satisfied, jointangle,
)


def _slot(x):
    return x if isinstance(x, Free) else BoundValue(x)


def brute_force_plans(problem, depth: int, multiset: bool = False):
    """Stripped keys of every valid plan of length <= depth.

    A plan is valid when each action's preconditions hold and the goal first
    becomes true after its last action. With ``multiset`` the result counts
    ground plans per key (placements differing only by region share a key).
    """
    objs = problem.objects
    items = [o for o in objs if o.category is Category.ITEM]
    regions = [o for o in objs if o.category in (Category.SURFACE, Category.SPACE)]
    doors = [o for o in objs if o.category is Category.DOOR]
    counter = itertools.count()

    def fresh():
        return Free(f"v{next(counter)}")

    def candidates(state):
        conf = next(l.args[0] for l in state if l.predicate == "AtConf")
        yield GroundAction(MOVE, (), (_slot(conf), fresh()))
        for o in items:
            for l in [l for l in state if l.predicate == "Supported" and l.args[0] == o]:
                yield GroundAction(PICK, (o, l.args[1]), (_slot(l.args[2]), _slot(conf), fresh(), fresh()))
            for r in regions:
                schema = PLACE_ON if r.category is Category.SURFACE else PLACE_IN
                yield GroundAction(schema, (o, r), (fresh(), _slot(conf), fresh(), fresh()))
        for d in doors:
            for l in [l for l in state if l.predicate == "AtAngle" and l.args[0] == d]:
                a = _slot(l.args[1])
                yield GroundAction(PULL_OPEN, (d, d.parent), (a, fresh(), _slot(conf), fresh(), fresh()))
                yield GroundAction(PULL_CLOSE, (d, d.parent),
                                   (a, BoundValue(jointangle(0.0)), _slot(conf), fresh(), fresh()))

    out = Counter()

    def rec(state, path):
        if len(path) == depth:
            return
        for a in list(candidates(state)):
            try:
                nxt = apply_abstract(state, a)
            except PreconditionError:
                continue
            path.append(a.stripped)
            if goal_satisfied(nxt, problem.goal):
                out[tuple(path)] += 1
            else:
                rec(nxt, path)
            path.pop()

    if not goal_satisfied(problem.init, problem.goal):
        rec(frozenset(problem.init), [])
    return out if multiset else set(out)


def segment_rect_distance_ref(a, b, rect) -> float:
    """Distance from segment ab to a (possibly rotated) filled rectangle.

    Zero when an endpoint lies inside or the segment crosses an edge;
    otherwise the minimum over the four edges of the segment-segment distance.
    """
    cs = rect.corners()
    if _inside(a, cs) or _inside(b, cs):
        return 0.0
    best = math.inf
    for i in range(4):
        c, d = cs[i], cs[(i + 1) % 4]
        if _cross_segments(a, b, c, d):
            return 0.0
        best = min(best, _seg_seg(a, b, c, d))
    return best


def _inside(p, cs):
    # convex polygon, either winding
    signs = []
    for i in range(4):
        c, d = cs[i], cs[(i + 1) % 4]
        signs.append((d[0] - c[0]) * (p[1] - c[1]) - (d[1] - c[1]) * (p[0] - c[0]))
    return all(s >= 0 for s in signs) or all(s <= 0 for s in signs)


def _orient(p, q, r):
    v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return int(v > 0) - int(v < 0)


def _cross_segments(a, b, c, d):
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    return o1 != o2 and o3 != o4


def _pt_seg(p, a, b):
    ax, ay, bx, by = a[0], a[1], b[0], b[1]
    dx, dy = bx - ax, by - ay
    L = dx * dx + dy * dy
    t = 0.0 if L == 0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L))
    return math.hypot(p[0] - ax - t * dx, p[1] - ay - t * dy)


def _seg_seg(a, b, c, d):
    # non-crossing segments: the minimum is attained at an endpoint
    return min(_pt_seg(a, c, d), _pt_seg(b, c, d), _pt_seg(c, a, b), _pt_seg(d, a, b))
