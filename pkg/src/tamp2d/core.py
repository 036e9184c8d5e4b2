"""Planning vocabulary shared by every other module.

Objects, continuous values, literals, action schemas, and skeletons. All
types are immutable. Symbolic semantics (``apply_abstract``,
``goal_satisfied``) ignore geometry entirely; continuous constraints are the
refinement module's business.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

VALUE_TOL = 1e-9


class Category(str, Enum):
    ITEM = "item"
    SURFACE = "surface"
    CONTAINER = "container"
    DOOR = "door"
    SPACE = "space"
    ROBOT = "robot"


CATEGORY_ORDER = tuple(Category)


class ValueKind(str, Enum):
    POSE = "pose"
    GRASP = "grasp"
    BASECONF = "baseconf"
    JOINTANGLE = "jointangle"
    TRAJECTORY = "trajectory"


VALUE_KIND_ORDER = tuple(ValueKind)
VALUE_ARITY = {
    ValueKind.POSE: 3,
    ValueKind.GRASP: 3,
    ValueKind.BASECONF: 3,
    ValueKind.JOINTANGLE: 1,
}
# index of the angular component per kind
_ANGLE_SLOT = {
    ValueKind.POSE: 2,
    ValueKind.GRASP: 2,
    ValueKind.BASECONF: 2,
    ValueKind.JOINTANGLE: 0,
}


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    r = math.remainder(float(a), 2.0 * math.pi)
    return math.pi if r <= -math.pi else r


def angle_diff(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


@dataclass(frozen=True, eq=False)
class ObjectRef:
    id: str
    category: Category
    parent: ObjectRef | None = None

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        if self.category in (Category.DOOR, Category.SPACE) and self.parent is None:
            raise ValueError(f"{self.category.value} {self.id!r} needs a parent")
        seen = {self.id}
        p = self.parent
        while p is not None:
            if p.id in seen:
                raise ValueError(f"cyclic parent chain at {self.id!r}")
            seen.add(p.id)
            p = p.parent

    def __eq__(self, other):
        if not isinstance(other, ObjectRef):
            return NotImplemented
        return (
            self.id == other.id
            and self.category == other.category
            and (self.parent.id if self.parent else None) == (other.parent.id if other.parent else None)
        )

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return self.id


@dataclass(frozen=True, eq=False)
class Value:
    """A continuous argument. ``data`` arity is fixed by ``kind``.

    Trajectories hold a tuple of (x, y, theta) waypoints. Angular components
    are wrapped into (-pi, pi] on construction. Equality is tolerant
    (``VALUE_TOL``) and compares angles modulo 2*pi, so the hash only covers
    the kind.
    """

    kind: ValueKind
    data: tuple

    def __post_init__(self):
        kind = ValueKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ValueKind.TRAJECTORY:
            wps = tuple(_norm_vec(ValueKind.BASECONF, w) for w in self.data)
            if not wps:
                raise ValueError("trajectory needs at least one waypoint")
            object.__setattr__(self, "data", wps)
        else:
            object.__setattr__(self, "data", _norm_vec(kind, self.data))

    def __eq__(self, other):
        if not isinstance(other, Value):
            return NotImplemented
        if self.kind is not other.kind or len(self.data) != len(other.data):
            return False
        if self.kind is ValueKind.TRAJECTORY:
            return all(_vec_close(ValueKind.BASECONF, a, b) for a, b in zip(self.data, other.data))
        return _vec_close(self.kind, self.data, other.data)

    def __hash__(self):
        return hash(self.kind)

    def __repr__(self):
        if self.kind is ValueKind.TRAJECTORY:
            return f"trajectory[{len(self.data)}]"
        return f"{self.kind.value}({', '.join(f'{x:.4g}' for x in self.data)})"

    @property
    def xy(self) -> tuple[float, float]:
        return self.data[0], self.data[1]

    @property
    def angle(self) -> float:
        return self.data[_ANGLE_SLOT[self.kind]]


def _norm_vec(kind: ValueKind, data) -> tuple:
    vals = tuple(float(x) for x in data)
    if len(vals) != VALUE_ARITY[kind]:
        raise ValueError(f"{kind.value} takes {VALUE_ARITY[kind]} numbers, got {len(vals)}")
    if not all(math.isfinite(x) for x in vals):
        raise ValueError(f"non-finite {kind.value} value")
    k = _ANGLE_SLOT[kind]
    return vals[:k] + (wrap_angle(vals[k]),) + vals[k + 1:]


def _vec_close(kind: ValueKind, a, b) -> bool:
    k = _ANGLE_SLOT[kind]
    for i, (x, y) in enumerate(zip(a, b)):
        d = angle_diff(x, y) if i == k else abs(x - y)
        if d > VALUE_TOL:
            return False
    return True


def pose(x, y, theta=0.0) -> Value:
    return Value(ValueKind.POSE, (x, y, theta))


def baseconf(x, y, theta=0.0) -> Value:
    return Value(ValueKind.BASECONF, (x, y, theta))


def grasp(dx, dy, approach) -> Value:
    return Value(ValueKind.GRASP, (dx, dy, approach))


def jointangle(a) -> Value:
    return Value(ValueKind.JOINTANGLE, (a,))


def trajectory(waypoints) -> Value:
    return Value(ValueKind.TRAJECTORY, tuple(tuple(w) for w in waypoints))


@dataclass(frozen=True)
class Free:
    """An unbound continuous parameter. Equal ids denote the same variable."""

    id: str

    def __repr__(self):
        return f"#{self.id}"


Arg = Union[ObjectRef, Value, Free]


# ---------------------------------------------------------------------------
# predicates

@dataclass(frozen=True)
class PredicateDecl:
    name: str
    params: tuple  # type names: category values, "region", or value kinds

    @property
    def arity(self) -> int:
        return len(self.params)


REGION = "region"
_REGION_CATS = (Category.SURFACE, Category.SPACE)

PREDICATES: dict[str, PredicateDecl] = {
    d.name: d
    for d in (
        PredicateDecl("Graspable", ("item",)),
        PredicateDecl("IsJoint", ("door", "container")),
        PredicateDecl("Containable", ("item", "space")),
        PredicateDecl("Stackable", ("item", "surface")),
        PredicateDecl("Supported", ("item", REGION, "pose")),
        PredicateDecl("AtPose", ("item", "pose")),
        PredicateDecl("Holding", ("item",)),
        PredicateDecl("HandEmpty", ()),
        PredicateDecl("On", ("item", "surface")),
        PredicateDecl("In", ("item", "space")),
        PredicateDecl("Closed", ("door",)),
        PredicateDecl("Open", ("door",)),
        PredicateDecl("AtAngle", ("door", "jointangle")),
        PredicateDecl("AtConf", ("baseconf",)),
        PredicateDecl("CanMove", ()),
        PredicateDecl("Arrived", ()),
    )
}
PREDICATE_BY_KEYWORD = {name.lower(): name for name in PREDICATES}


def _is_value_type(t: str) -> bool:
    return t in ValueKind._value2member_map_


def arg_matches(type_name: str, arg) -> bool:
    if _is_value_type(type_name):
        if isinstance(arg, Free):
            return True
        return isinstance(arg, Value) and arg.kind.value == type_name
    if not isinstance(arg, ObjectRef):
        return False
    if type_name == REGION:
        return arg.category in _REGION_CATS
    return arg.category.value == type_name


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple = ()

    def __post_init__(self):
        decl = PREDICATES.get(self.predicate)
        if decl is None:
            raise ValueError(f"unknown predicate {self.predicate!r}")
        args = tuple(self.args)
        object.__setattr__(self, "args", args)
        if len(args) != decl.arity:
            raise ValueError(f"{self.predicate} takes {decl.arity} arguments, got {len(args)}")
        for t, a in zip(decl.params, args):
            if not arg_matches(t, a):
                raise ValueError(f"{self.predicate}: argument {a!r} is not a {t}")

    def __repr__(self):
        return f"{self.predicate}({', '.join(map(repr, self.args))})"

    @property
    def objects(self) -> tuple:
        return tuple(a for a in self.args if isinstance(a, ObjectRef))

    @property
    def values(self) -> tuple:
        return tuple(a for a in self.args if isinstance(a, Value))


def lit(predicate: str, *args) -> Literal:
    return Literal(predicate, args)


# ---------------------------------------------------------------------------
# action schemas

@dataclass(frozen=True)
class Param:
    name: str
    type: str  # category/region for objects, value kind for continuous
    hidden: bool = False  # object fixed by a continuous argument; not tokenized


@dataclass(frozen=True)
class Template:
    predicate: str
    args: tuple  # parameter names


@dataclass(frozen=True)
class ActionSchema:
    name: str
    family: str
    object_params: tuple
    continuous_params: tuple
    preconditions: tuple
    add_effects: tuple
    del_effects: tuple
    constraints: tuple = ()
    # continuous params whose value is a fixed constant rather than a variable
    constants: tuple = ()

    def __post_init__(self):
        names = [p.name for p in self.object_params + self.continuous_params]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate parameter names")
        used = set()
        for t in self.preconditions + self.add_effects + self.del_effects:
            used.update(t.args)
        for _, args in self.constraints:
            used.update(args)
        unused = set(names) - used
        if unused:
            raise ValueError(f"{self.name}: unused parameters {sorted(unused)}")

    @property
    def params(self) -> tuple:
        return self.object_params + self.continuous_params

    def __repr__(self):
        return f"<schema {self.name}>"


def _t(pred, *args):
    return Template(pred, args)


_P = Param
MOVE = ActionSchema(
    name="move",
    family="move",
    object_params=(),
    continuous_params=(_P("q1", "baseconf"), _P("q2", "baseconf")),
    preconditions=(_t("AtConf", "q1"), _t("CanMove")),
    add_effects=(_t("AtConf", "q2"), _t("Arrived")),
    del_effects=(_t("AtConf", "q1"), _t("CanMove")),
    constraints=(("motion", ("q1", "q2")),),
)
PICK = ActionSchema(
    name="pick",
    family="pick",
    object_params=(_P("o", "item"), _P("r", REGION, hidden=True)),
    continuous_params=(_P("p", "pose"), _P("q", "baseconf"), _P("g", "grasp"), _P("t", "trajectory")),
    preconditions=(
        _t("Graspable", "o"), _t("Supported", "o", "r", "p"), _t("AtPose", "o", "p"),
        _t("HandEmpty"), _t("Arrived"), _t("AtConf", "q"),
    ),
    add_effects=(_t("Holding", "o"), _t("CanMove")),
    del_effects=(
        _t("Supported", "o", "r", "p"), _t("AtPose", "o", "p"), _t("On", "o", "r"),
        _t("In", "o", "r"), _t("HandEmpty"), _t("Arrived"),
    ),
    constraints=(("grasp", ("o", "g")), ("kinematics", ("o", "p", "q", "g", "t")),),
)


def _place(name: str, region_type: str, compat: str, placed: str) -> ActionSchema:
    return ActionSchema(
        name=name,
        family="place",
        object_params=(_P("o", "item"), _P("r", region_type, hidden=True)),
        continuous_params=(_P("p", "pose"), _P("q", "baseconf"), _P("g", "grasp"), _P("t", "trajectory")),
        preconditions=(_t("Holding", "o"), _t(compat, "o", "r"), _t("Arrived"), _t("AtConf", "q")),
        add_effects=(
            _t("Supported", "o", "r", "p"), _t("AtPose", "o", "p"), _t(placed, "o", "r"),
            _t("HandEmpty"), _t("CanMove"),
        ),
        del_effects=(_t("Holding", "o"), _t("Arrived")),
        constraints=(
            ("stable", ("o", "r", "p")), ("grasp", ("o", "g")),
            ("kinematics", ("o", "p", "q", "g", "t")),
        ),
    )


PLACE_ON = _place("place-on", "surface", "Stackable", "On")
PLACE_IN = _place("place-in", "space", "Containable", "In")

PULL_OPEN = ActionSchema(
    name="pullopen",
    family="pullopen",
    object_params=(_P("d", "door"), _P("c", "container", hidden=True)),
    continuous_params=(
        _P("a1", "jointangle"), _P("a2", "jointangle"), _P("q", "baseconf"),
        _P("g", "grasp"), _P("t", "trajectory"),
    ),
    preconditions=(
        _t("IsJoint", "d", "c"), _t("AtAngle", "d", "a1"), _t("HandEmpty"),
        _t("Arrived"), _t("AtConf", "q"),
    ),
    add_effects=(_t("AtAngle", "d", "a2"), _t("Open", "d"), _t("CanMove")),
    del_effects=(_t("AtAngle", "d", "a1"), _t("Closed", "d"), _t("Arrived")),
    constraints=(
        ("joint-limit", ("d", "a1", "a2")),
        ("door-sweep", ("d", "a1", "a2", "q", "g", "t")),
    ),
)
PULL_CLOSE = ActionSchema(
    name="pullclose",
    family="pullclose",
    object_params=(_P("d", "door"), _P("c", "container", hidden=True)),
    continuous_params=(
        _P("a1", "jointangle"), _P("a2", "jointangle"), _P("q", "baseconf"),
        _P("g", "grasp"), _P("t", "trajectory"),
    ),
    preconditions=(
        _t("IsJoint", "d", "c"), _t("Open", "d"), _t("AtAngle", "d", "a1"),
        _t("HandEmpty"), _t("Arrived"), _t("AtConf", "q"),
    ),
    add_effects=(_t("AtAngle", "d", "a2"), _t("Closed", "d"), _t("CanMove")),
    del_effects=(_t("AtAngle", "d", "a1"), _t("Open", "d"), _t("Arrived")),
    constraints=(
        ("joint-limit", ("d", "a1", "a2")),
        ("door-sweep", ("d", "a1", "a2", "q", "g", "t")),
    ),
    constants=(("a2", 0.0),),
)

SCHEMAS: dict[str, ActionSchema] = {
    s.name: s for s in (MOVE, PICK, PLACE_ON, PLACE_IN, PULL_OPEN, PULL_CLOSE)
}
ACTION_FAMILIES = ("move", "pick", "place", "pullclose", "pullopen")


# ---------------------------------------------------------------------------
# ground actions and skeletons

@dataclass(frozen=True)
class BoundValue:
    value: Value

    def __repr__(self):
        return repr(self.value)


Slot = Union[BoundValue, Free]


@dataclass(frozen=True)
class GroundAction:
    """A schema with objects bound and continuous slots as values or frees."""

    schema: ActionSchema
    objects: tuple
    slots: tuple

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "slots", tuple(self.slots))
        if len(self.objects) != len(self.schema.object_params):
            raise ValueError(f"{self.schema.name}: wrong number of objects")
        if len(self.slots) != len(self.schema.continuous_params):
            raise ValueError(f"{self.schema.name}: wrong number of continuous slots")
        for p, o in zip(self.schema.object_params, self.objects):
            if not arg_matches(p.type, o):
                raise ValueError(f"{self.schema.name}: {o!r} is not a {p.type}")
        for p, s in zip(self.schema.continuous_params, self.slots):
            if isinstance(s, BoundValue):
                if s.value.kind.value != p.type:
                    raise ValueError(f"{self.schema.name}: slot {p.name} needs a {p.type}")
            elif not isinstance(s, Free):
                raise ValueError(f"{self.schema.name}: slot {p.name} must be BoundValue or Free")

    def binding(self) -> dict:
        out = {p.name: o for p, o in zip(self.schema.object_params, self.objects)}
        for p, s in zip(self.schema.continuous_params, self.slots):
            out[p.name] = s.value if isinstance(s, BoundValue) else s
        return out

    def slot(self, name: str) -> Slot:
        for p, s in zip(self.schema.continuous_params, self.slots):
            if p.name == name:
                return s
        raise KeyError(name)

    def obj(self, name: str) -> ObjectRef:
        for p, o in zip(self.schema.object_params, self.objects):
            if p.name == name:
                return o
        raise KeyError(name)

    @property
    def stripped(self) -> tuple:
        visible = tuple(
            o.id for p, o in zip(self.schema.object_params, self.objects) if not p.hidden
        )
        return (self.schema.family,) + visible

    def __repr__(self):
        objs = ", ".join(o.id for o in self.objects)
        slots = ", ".join(map(repr, self.slots))
        sep = "; " if objs and slots else ""
        return f"{self.schema.name}({objs}{sep}{slots})"


def _instantiate(templates, binding, lenient: bool = False) -> list[Literal]:
    out = []
    for t in templates:
        args = tuple(binding[a] for a in t.args)
        if lenient and not all(arg_matches(ty, a) for ty, a in zip(PREDICATES[t.predicate].params, args)):
            # an ill-typed delete can never match a well-typed state
            continue
        out.append(Literal(t.predicate, args))
    return out


class PreconditionError(Exception):
    def __init__(self, action, literal):
        self.action = action
        self.literal = literal
        super().__init__(f"{action!r}: precondition {literal!r} does not hold")


def action_effects(action: GroundAction) -> tuple[list[Literal], list[Literal]]:
    b = action.binding()
    return _instantiate(action.schema.add_effects, b), _instantiate(action.schema.del_effects, b, lenient=True)


def apply_abstract(state: Iterable[Literal], action: GroundAction) -> frozenset:
    """Symbolic successor: ``state - del + add``. Geometry is not consulted."""
    state = frozenset(state)
    b = action.binding()
    for pre in _instantiate(action.schema.preconditions, b):
        if pre not in state:
            raise PreconditionError(action, pre)
    adds = _instantiate(action.schema.add_effects, b)
    dels = _instantiate(action.schema.del_effects, b, lenient=True)
    return (state - frozenset(dels)) | frozenset(adds)


def goal_satisfied(state: Iterable[Literal], goal: Iterable[Literal]) -> bool:
    state = frozenset(state)
    return all(g in state for g in goal)


@dataclass(frozen=True)
class Skeleton:
    actions: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def free_ids(self) -> list[str]:
        seen = []
        for a in self.actions:
            for s in a.slots:
                if isinstance(s, Free) and s.id not in seen:
                    seen.append(s.id)
        return seen

    @property
    def key(self) -> tuple:
        return tuple(strip_continuous(self))

    def __repr__(self):
        return "[" + ", ".join(map(repr, self.actions)) + "]"


def strip_continuous(skeleton: Skeleton | Sequence) -> list[tuple]:
    """Drop every continuous slot (and objects implied by one), keep order."""
    out = []
    for a in skeleton:
        out.append(a if isinstance(a, tuple) else a.stripped)
    return out


def fold_skeleton(init: Iterable[Literal], skeleton) -> frozenset:
    state = frozenset(init)
    for a in skeleton:
        state = apply_abstract(state, a)
    return state


# ---------------------------------------------------------------------------
# problems

@dataclass
class Solution:
    actions: tuple  # fully bound GroundActions
    motions: tuple = None  # trajectory Value for each move, None elsewhere

    def __post_init__(self):
        self.actions = tuple(self.actions)
        self.motions = tuple(self.motions) if self.motions is not None else (None,) * len(self.actions)
        if len(self.motions) != len(self.actions):
            raise ValueError("one motion entry per action")

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class Problem:
    name: str
    objects: tuple
    init: frozenset
    goal: frozenset
    world_file: str | None = None
    world: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        # canonical order so that equality does not depend on declaration order
        objs = sorted(self.objects, key=lambda o: (CATEGORY_ORDER.index(o.category), o.id))
        object.__setattr__(self, "objects", tuple(objs))
        object.__setattr__(self, "init", frozenset(self.init))
        object.__setattr__(self, "goal", frozenset(self.goal))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate object ids")

    def object(self, oid: str) -> ObjectRef:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def objects_of(self, category: Category) -> list[ObjectRef]:
        return [o for o in self.objects if o.category is Category(category)]

    def init_value(self, predicate: str, obj: ObjectRef) -> Value | None:
        for l in self.init:
            if l.predicate == predicate and l.args and l.args[0] == obj:
                for a in l.args:
                    if isinstance(a, Value):
                        return a
        return None

    def with_world(self, world) -> Problem:
        from dataclasses import replace
        return replace(self, world=world)


class ProblemError(ValueError):
    pass


def validate_problem(problem: Problem) -> None:
    """Check the semantic invariants a planner relies on."""
    known = set(problem.objects)
    for l in problem.init | problem.goal:
        for o in l.objects:
            if o not in known:
                raise ProblemError(f"{l!r} mentions undeclared object {o.id!r}")
    robots = problem.objects_of(Category.ROBOT)
    if len(robots) != 1:
        raise ProblemError(f"expected exactly one robot, found {len(robots)}")
    for item in problem.objects_of(Category.ITEM):
        placed = [l for l in problem.init if l.predicate == "Supported" and l.args[0] == item]
        held = lit("Holding", item) in problem.init
        if len(placed) + held != 1:
            raise ProblemError(f"item {item.id!r} needs exactly one Supported literal")
    confs = [l for l in problem.init if l.predicate == "AtConf"]
    if len(confs) != 1:
        raise ProblemError("initial state needs exactly one AtConf literal")
