"""Diverse skeleton enumeration over an optimistic object-level abstraction.

The symbolic search runs on atoms that mention objects only. Continuous
arguments are represented by optimistic placeholders: their existence gates
which actions may be used, and once an abstract plan is found its slots are
threaded through fresh ``Free`` ids (poses, grasps, confs, angles,
trajectories). Every returned skeleton is checked by folding the real action
schemas over the problem's initial state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .core import (
    MOVE, PICK, PLACE_IN, PLACE_ON, PULL_CLOSE, PULL_OPEN, BoundValue, Category, Free, GroundAction,
    Literal, Problem, Skeleton, Value, ValueKind, fold_skeleton, goal_satisfied, jointangle,
)

DEFAULT_DEPTH = 14
# literals whose only role is carrying a continuous value
_VALUE_ONLY = {"AtPose", "AtAngle", "AtConf"}


# ---------------------------------------------------------------------------
# optimistic parameters

@dataclass(frozen=True)
class OptimisticParam:
    id: str
    kind: ValueKind
    family: str  # sampler that would produce it: grasp, handle, placement, angle, conf
    subject: tuple  # object ids (and parameter ids for confs) it was made for
    level: int


@dataclass
class OptimisticParameterSet:
    params: list = field(default_factory=list)
    level: int = 0
    _counter: itertools.count = field(default_factory=itertools.count, repr=False)

    def fresh_id(self) -> str:
        return f"x{next(self._counter)}"

    def ids(self) -> set:
        return {p.id for p in self.params}

    def by_family(self, family: str) -> list:
        return [p for p in self.params if p.family == family]

    def gates(self) -> frozenset:
        """(family, subject objects) pairs for which at least one placeholder exists."""
        out = set()
        for p in self.params:
            if p.family == "conf":
                out.add(("conf", p.subject[0]))
            else:
                out.add((p.family, p.subject))
        return frozenset(out)

    def __len__(self):
        return len(self.params)


def new_parameters(objects, init, X: OptimisticParameterSet) -> list[OptimisticParam]:
    """Grow ``X`` by one level and return the additions.

    Per level: one grasp per graspable item, one placement per compatible
    (item, region) pair, one open angle and one handle grasp per door, and
    one conf per (item, pose, grasp) and per (door, angle, handle grasp).
    """
    X.level += 1
    lvl = X.level
    init = frozenset(init)
    items = [o for o in objects if o.category is Category.ITEM and Literal("Graspable", (o,)) in init]
    doors = [o for o in objects if o.category is Category.DOOR and any(
        l.predicate == "IsJoint" and l.args[0] == o for l in init)]
    added = []

    def add(kind, family, subject):
        p = OptimisticParam(X.fresh_id(), kind, family, subject, lvl)
        X.params.append(p)
        added.append(p)
        return p

    grasps = {o.id: add(ValueKind.GRASP, "grasp", (o.id,)) for o in items}
    placements = []
    for o in items:
        for l in sorted(init, key=repr):
            if l.predicate in ("Stackable", "Containable") and l.args[0] == o:
                placements.append(add(ValueKind.POSE, "placement", (o.id, l.args[1].id)))
    handles, angles = {}, {}
    for d in doors:
        angles[d.id] = add(ValueKind.JOINTANGLE, "angle", (d.id,))
        handles[d.id] = add(ValueKind.GRASP, "handle", (d.id,))
    # confs: every known pose of an item (initial + all placements so far) with this level's grasp
    for o in items:
        poses = [l.args[2] for l in init if l.predicate == "Supported" and l.args[0] == o]
        pose_ids = ["init"] * len(poses) + [p.id for p in X.params if p.family == "placement" and p.subject[0] == o.id]
        for pid in pose_ids:
            add(ValueKind.BASECONF, "conf", (o.id, pid, grasps[o.id].id))
    for d in doors:
        angle_ids = ["init"] + [p.id for p in X.params if p.family == "angle" and p.subject[0] == d.id]
        for aid in angle_ids:
            add(ValueKind.BASECONF, "conf", (d.id, aid, handles[d.id].id))
    return added


# ---------------------------------------------------------------------------
# forbidden plans

class ForbiddenSet:
    """Trie over stripped action-tuple sequences."""

    def __init__(self, plans=()):
        self.root: dict = {}
        self._plans: list = []
        for p in plans:
            self.add(p)

    _END = object()

    def add(self, plan) -> bool:
        plan = tuple(tuple(a) for a in plan)
        node = self.root
        for a in plan:
            node = node.setdefault(a, {})
        if ForbiddenSet._END in node:
            return False
        node[ForbiddenSet._END] = True
        self._plans.append(plan)
        return True

    def __contains__(self, plan) -> bool:
        node = self.root
        for a in plan:
            node = node.get(tuple(a))
            if node is None:
                return False
        return ForbiddenSet._END in node

    @staticmethod
    def step(node: dict | None, a: tuple) -> dict | None:
        return None if node is None else node.get(a)

    @staticmethod
    def terminal(node: dict | None) -> bool:
        return node is not None and ForbiddenSet._END in node

    def __len__(self):
        return len(self._plans)

    def __iter__(self):
        return iter(self._plans)


# ---------------------------------------------------------------------------
# grounding

@dataclass(frozen=True)
class _Op:
    schema: object
    objects: tuple  # ObjectRefs in schema order
    pre: frozenset
    add: frozenset
    delete: frozenset
    gate: tuple  # required (family, subject) gates
    order: tuple  # sort key for deterministic child order
    stripped: tuple
    primary: str | None  # object whose goal literals this action may satisfy

    @property
    def is_move(self) -> bool:
        return self.schema is MOVE


def _atom(l: Literal) -> tuple | None:
    if l.predicate in _VALUE_ONLY:
        return None
    return (l.predicate,) + tuple(a.id for a in l.args if not isinstance(a, (Value, Free)))


def _ground(problem_objects, init_atoms: frozenset) -> list[_Op]:
    items = sorted((o for o in problem_objects if o.category is Category.ITEM), key=lambda o: o.id)
    regions = sorted((o for o in problem_objects if o.category in (Category.SURFACE, Category.SPACE)),
                     key=lambda o: o.id)
    doors = sorted((o for o in problem_objects if o.category is Category.DOOR), key=lambda o: o.id)
    ops = [_Op(MOVE, (), frozenset({("CanMove",)}), frozenset({("Arrived",)}), frozenset({("CanMove",)}),
               (), ("move",), ("move",), None)]
    for o in items:
        for r in regions:
            ops.append(_Op(
                PICK, (o, r),
                frozenset({("Graspable", o.id), ("Supported", o.id, r.id), ("HandEmpty",), ("Arrived",)}),
                frozenset({("Holding", o.id), ("CanMove",)}),
                frozenset({("Supported", o.id, r.id), ("On", o.id, r.id), ("In", o.id, r.id),
                           ("HandEmpty",), ("Arrived",)}),
                (("grasp", (o.id,)), ("conf", o.id)), ("pick", o.id, r.id), ("pick", o.id), o.id,
            ))
            if r.category is Category.SURFACE:
                schema, compat, placed = PLACE_ON, "Stackable", "On"
            else:
                schema, compat, placed = PLACE_IN, "Containable", "In"
            if (compat, o.id, r.id) not in init_atoms:
                continue
            ops.append(_Op(
                schema, (o, r),
                frozenset({("Holding", o.id), (compat, o.id, r.id), ("Arrived",)}),
                frozenset({("Supported", o.id, r.id), (placed, o.id, r.id), ("HandEmpty",), ("CanMove",)}),
                frozenset({("Holding", o.id), ("Arrived",)}),
                (("grasp", (o.id,)), ("placement", (o.id, r.id)), ("conf", o.id)),
                ("place", o.id, r.id), ("place", o.id), o.id,
            ))
    for d in doors:
        c = d.parent
        if ("IsJoint", d.id, c.id) not in init_atoms:
            continue
        ops.append(_Op(
            PULL_OPEN, (d, c),
            frozenset({("IsJoint", d.id, c.id), ("HandEmpty",), ("Arrived",)}),
            frozenset({("Open", d.id), ("CanMove",)}),
            frozenset({("Closed", d.id), ("Arrived",)}),
            (("angle", (d.id,)), ("handle", (d.id,)), ("conf", d.id)),
            ("pullopen", d.id, c.id), ("pullopen", d.id), d.id,
        ))
        ops.append(_Op(
            PULL_CLOSE, (d, c),
            frozenset({("IsJoint", d.id, c.id), ("Open", d.id), ("HandEmpty",), ("Arrived",)}),
            frozenset({("Closed", d.id), ("CanMove",)}),
            frozenset({("Open", d.id), ("Arrived",)}),
            (("handle", (d.id,)), ("conf", d.id)),
            ("pullclose", d.id, c.id), ("pullclose", d.id), d.id,
        ))
    ops.sort(key=lambda op: op.order)
    return ops


def _relaxed_reachable(state: frozenset, ops, goal: frozenset) -> bool:
    reached = set(state)
    changed = True
    while changed:
        if goal <= reached:
            return True
        changed = False
        for op in ops:
            if op.pre <= reached and not op.add <= reached:
                reached |= op.add
                changed = True
    return goal <= reached


@dataclass
class SearchStats:
    nodes_expanded: int = 0
    max_depth: int = 0
    iterations: int = 0
    found: bool = False
    reason: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class SearchSpace:
    """Grounded abstraction of one problem plus a cross-call failure memo."""

    def __init__(self, problem: Problem, depth: int = DEFAULT_DEPTH):
        self.problem = problem
        self.depth = depth
        self.init = frozenset(a for a in map(_atom, problem.init) if a is not None)
        goal = []
        for g in problem.goal:
            if any(isinstance(a, Value) for a in g.args):
                raise ValueError(f"goal literal {g!r} has a continuous argument; not supported")
            goal.append(_atom(g))
        self.goal = frozenset(goal)
        self.all_ops = _ground(problem.objects, self.init)
        self._gates = None
        self.ops: list = []
        self._succ: dict = {}
        self._fail: dict = {}  # state -> largest remaining budget proven goal-free

    def set_gates(self, gates: frozenset):
        if gates == self._gates:
            return
        self._gates = gates
        self.ops = [op for op in self.all_ops if all(g in gates for g in op.gate)]
        self._succ = {}
        self._fail = {}

    def h(self, state: frozenset) -> int:
        objs = {g[1] for g in self.goal if len(g) > 1 and g not in state}
        return max(0, 2 * len(objs) - (("Arrived",) in state))

    def is_goal(self, state) -> bool:
        return self.goal <= state

    def successors(self, state: frozenset) -> list:
        out = self._succ.get(state)
        if out is None:
            out = []
            seen = set()
            for op in self.ops:
                if op.pre <= state:
                    nxt = (state - op.delete) | op.add
                    if (op.order, nxt) in seen:
                        continue
                    seen.add((op.order, nxt))
                    out.append((op, nxt))
            self._succ[state] = out
        return out

    # -----------------------------------------------------------------------
    def search(self, forbidden: ForbiddenSet, stats: SearchStats | None = None, depth: int | None = None):
        """IDA*: shortest non-forbidden plan, ties broken lexicographically."""
        stats = stats if stats is not None else SearchStats()
        depth = self.depth if depth is None else depth
        if not _relaxed_reachable(self.init, self.ops, self.goal):
            stats.reason = "goal unreachable under relaxation"
            return None
        bound = self.h(self.init)
        path: list = []
        while bound <= depth:
            stats.iterations += 1
            nxt_bound = [depth + 1]
            found = self._dfs(self.init, 0, bound, forbidden.root, None, path, nxt_bound, stats)
            if found:
                stats.found = True
                return list(path)
            if nxt_bound[0] <= bound:
                break
            bound = nxt_bound[0]
        stats.reason = "exhausted within depth bound"
        return None

    def _dfs(self, state, g, bound, trie, last, path, nxt_bound, stats) -> bool:
        f = g + self.h(state)
        if f > bound:
            nxt_bound[0] = min(nxt_bound[0], f)
            return False
        stats.max_depth = max(stats.max_depth, g)
        if g > 0 and self.is_goal(state) and not last.is_move:
            # extensions of a plan are not plans: the goal must first hold at the last step
            return not ForbiddenSet.terminal(trie)
        remaining = bound - g
        if remaining == 0:
            return False
        off_trie = trie is None
        if off_trie and self._fail.get(state, -1) >= remaining:
            nxt_bound[0] = min(nxt_bound[0], g + self._fail[state] + 1)
            return False
        stats.nodes_expanded += 1
        for op, nxt in self.successors(state):
            path.append(op)
            sub = ForbiddenSet.step(trie, op.stripped)
            if self._dfs(nxt, g + 1, bound, sub, op, path, nxt_bound, stats):
                return True
            path.pop()
        if off_trie:
            # no valid completion within `remaining`, whatever is forbidden
            self._fail[state] = max(self._fail.get(state, -1), remaining)
        return False

    def enumerate_plans(self, depth: int):
        """Every valid op sequence of length <= depth (no forbidding)."""
        def rec(state, path):
            if path and self.is_goal(state) and not path[-1].is_move:
                yield list(path)
                return
            if len(path) == depth:
                return
            for op, nxt in self.successors(state):
                path.append(op)
                yield from rec(nxt, path)
                path.pop()
        yield from rec(self.init, [])


# ---------------------------------------------------------------------------
# materialization

class _Namer:
    def __init__(self):
        self.counts: dict = {}

    def __call__(self, prefix: str) -> Free:
        n = self.counts.get(prefix, 0) + 1
        self.counts[prefix] = n
        return Free(f"{prefix}{n}")


def materialize(problem: Problem, ops: list) -> Skeleton:
    """Attach continuous slots to an abstract op sequence."""
    fresh = _Namer()
    conf = None
    poses, angles = {}, {}
    for l in problem.init:
        if l.predicate == "AtConf":
            conf = BoundValue(l.args[0])
        elif l.predicate == "Supported":
            poses[l.args[0].id] = BoundValue(l.args[2])
        elif l.predicate == "AtAngle":
            angles[l.args[0].id] = BoundValue(l.args[1])
    held_grasp: dict = {}
    actions = []
    for i, op in enumerate(ops):
        if op.is_move:
            target = fresh("q")
            actions.append(GroundAction(MOVE, (), (conf, target)))
            conf = target
            continue
        q = conf
        if op.schema is PICK:
            o = op.objects[0].id
            g = fresh("g")
            held_grasp[o] = g
            slots = (poses.pop(o), q, g, fresh("t"))
        elif op.schema in (PLACE_ON, PLACE_IN):
            o = op.objects[0].id
            p = fresh("p")
            g = held_grasp.pop(o, None) or fresh("g")
            slots = (p, q, g, fresh("t"))
            poses[o] = p
        elif op.schema is PULL_OPEN:
            d = op.objects[0].id
            if d not in angles:
                raise ValueError(f"door {d} has no AtAngle literal in the initial state")
            a2 = fresh("a")
            slots = (angles[d], a2, q, fresh("g"), fresh("t"))
            angles[d] = a2
        else:
            d = op.objects[0].id
            a2 = BoundValue(jointangle(0.0))
            slots = (angles[d], a2, q, fresh("g"), fresh("t"))
            angles[d] = a2
        actions.append(GroundAction(op.schema, op.objects, slots))
    return Skeleton(tuple(actions))


def check_skeleton(problem: Problem, skeleton: Skeleton) -> bool:
    """Fold the real schemas over init and test the goal."""
    return goal_satisfied(fold_skeleton(problem.init, skeleton), problem.goal)


# ---------------------------------------------------------------------------
# public entry points

def forbid_search(problem: Problem, X: OptimisticParameterSet, forbidden: ForbiddenSet, *,
                  depth: int = DEFAULT_DEPTH, stats: SearchStats | None = None,
                  space: SearchSpace | None = None) -> Skeleton | None:
    """Shortest skeleton whose stripped form is not forbidden, or None."""
    space = space if space is not None else SearchSpace(problem, depth)
    space.set_gates(X.gates())
    ops = space.search(forbidden, stats, depth)
    if ops is None:
        return None
    return materialize(problem, ops)


@dataclass
class SkeletonSearch:
    """Stateful generator of diverse skeletons for one planner run (X and the forbidden set)."""

    problem: Problem
    depth: int = DEFAULT_DEPTH
    X: OptimisticParameterSet = field(default_factory=OptimisticParameterSet)
    forbidden: ForbiddenSet = field(default_factory=ForbiddenSet)
    stats: list = field(default_factory=list)
    new_parameter_calls: int = 0

    def __post_init__(self):
        self.space = SearchSpace(self.problem, self.depth)
        self._exhausted_gates = None

    def _grow(self):
        new_parameters(self.problem.objects, self.problem.init, self.X)
        self.new_parameter_calls += 1

    def next(self) -> Skeleton | None:
        """One search; on failure grow X and retry while growth can matter."""
        while True:
            gates = self.X.gates()
            if gates == self._exhausted_gates:
                self._grow()
                return None
            st = SearchStats()
            sk = forbid_search(self.problem, self.X, self.forbidden, depth=self.depth, stats=st,
                               space=self.space)
            self.stats.append(st)
            if sk is not None:
                self.forbidden.add(sk.key)
                return sk
            self._exhausted_gates = gates
            self._grow()
            if self.X.gates() == gates:
                return None

    def batch(self, k: int) -> list[Skeleton]:
        if k < 1:
            raise ValueError("k must be >= 1")
        out = []
        while len(out) < k:
            sk = self.next()
            if sk is None:
                # growing X further cannot change the object-level abstraction
                break
            out.append(sk)
        return out


def batch_skeletons(problem: Problem, k: int, *, depth: int = DEFAULT_DEPTH,
                    search: SkeletonSearch | None = None):
    """Up to ``k`` distinct skeletons, plus the updated X and forbidden set."""
    search = search if search is not None else SkeletonSearch(problem, depth)
    out = search.batch(k)
    return out, search.X, search.forbidden


def enumerate_plans(problem: Problem, depth: int):
    """All valid abstract plans up to ``depth``, as materialized skeletons."""
    space = SearchSpace(problem, depth)
    X = OptimisticParameterSet()
    new_parameters(problem.objects, problem.init, X)
    space.set_gates(X.gates())
    for ops in space.enumerate_plans(depth):
        yield materialize(problem, ops)
