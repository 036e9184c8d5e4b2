"""Text formats: ``.prob`` problems, ``.world`` scenes, ``.skel`` skeleton lists.

All three are s-expression documents with lowercase keywords. Continuous
values are written as ``(pose x y th)``, ``(grasp dx dy phi)``,
``(baseconf x y th)``, ``(jointangle a)``, or ``(trajectory (x y th) ...)``.
Unbound skeleton slots are written as ``#id``.
"""

from __future__ import annotations

from .core import (
    PREDICATE_BY_KEYWORD, PREDICATES, SCHEMAS, BoundValue, Category, Free, GroundAction,
    Literal, ObjectRef, Problem, Skeleton, Solution, Value, ValueKind, arg_matches,
)
from .geometry import Container, GeometryError, Item, Rect, Robot, StaticShape, Surface, World2D, validate_world
from .sexpr import Atom, ParseError, SList, SourceSpan, fmt_number, lexeme, read_one


class ArityError(ParseError):
    pass


class UnknownObjectError(ParseError):
    pass


# ---------------------------------------------------------------------------
# small readers

def _expect_list(node, what: str, head: str | None = None) -> SList:
    if not isinstance(node, SList):
        raise ParseError(node.span, what, lexeme(node))
    if head is not None and node.head != head:
        raise ParseError(node.span, f"({head} ...)", lexeme(node))
    return node


def _symbol(node, what: str = "symbol") -> str:
    if not isinstance(node, Atom) or node.is_number:
        raise ParseError(node.span, what, lexeme(node))
    return node.value


def _number(node, what: str = "number") -> float:
    if not isinstance(node, Atom) or not node.is_number:
        raise ParseError(node.span, what, lexeme(node))
    return node.value


def _numbers(node: SList, n: int, what: str) -> tuple:
    args = node.tail
    if len(args) != n:
        span = args[n].span if len(args) > n else node.span
        raise ArityError(span, f"{what} with {n} numbers", lexeme(node))
    return tuple(_number(a) for a in args)


def _keyword_sections(root: SList, allowed: set, start: int = 1) -> list:
    out = []
    for node in root.items[start:]:
        sl = _expect_list(node, "section")
        if sl.head not in allowed:
            raise ParseError(sl.span, f"one of {sorted(allowed)}", lexeme(sl))
        out.append(sl)
    return out


def _top_level(text, file: str, head: str) -> SList:
    node = read_one(text, file)
    return _expect_list(node, f"({head} ...)", head)


# ---------------------------------------------------------------------------
# values

def parse_value(node) -> Value:
    sl = _expect_list(node, "value")
    kind = sl.head
    if kind not in ValueKind._value2member_map_:
        raise ParseError(sl.span, "value kind", lexeme(sl))
    try:
        if kind == "trajectory":
            if not sl.tail:
                raise ArityError(sl.span, "at least one waypoint", lexeme(sl))
            wps = []
            for w in sl.tail:
                wl = _expect_list(w, "(x y theta) waypoint")
                if len(wl) != 3:
                    raise ArityError(wl.span, "waypoint with 3 numbers", lexeme(wl))
                wps.append(tuple(_number(a) for a in wl.items))
            return Value(ValueKind.TRAJECTORY, tuple(wps))
        arity = {"pose": 3, "grasp": 3, "baseconf": 3, "jointangle": 1}[kind]
        return Value(ValueKind(kind), _numbers(sl, arity, kind))
    except ValueError as exc:
        raise ParseError(sl.span, "valid value", str(exc)) from None


def value_sexpr(v: Value) -> str:
    if v.kind is ValueKind.TRAJECTORY:
        wps = " ".join("(" + " ".join(fmt_number(x) for x in w) + ")" for w in v.data)
        return f"(trajectory {wps})"
    return f"({v.kind.value} " + " ".join(fmt_number(x) for x in v.data) + ")"


# ---------------------------------------------------------------------------
# problems

def _parse_objects(section: SList) -> dict:
    """``(objects (item a) (door c:door1 c) ...)``; parents may come later."""
    pending = []
    for node in section.tail:
        sl = _expect_list(node, "(category id [parent])")
        cat = sl.head
        if cat not in Category._value2member_map_:
            raise ParseError(sl.span, "object category", lexeme(sl))
        if len(sl) not in (2, 3):
            raise ArityError(sl.span, "(category id [parent])", lexeme(sl))
        oid = _symbol(sl.items[1], "object id")
        parent = _symbol(sl.items[2], "parent id") if len(sl) == 3 else None
        if any(oid == p[0] for p in pending):
            raise ParseError(sl.items[1].span, "unique object id", oid)
        pending.append((oid, Category(cat), parent, sl))
    objects: dict = {}
    todo = list(pending)
    while todo:
        progressed = False
        rest = []
        for oid, cat, parent, sl in todo:
            if parent is not None and parent not in objects:
                rest.append((oid, cat, parent, sl))
                continue
            try:
                objects[oid] = ObjectRef(oid, cat, objects[parent] if parent else None)
            except ValueError as exc:
                raise ParseError(sl.span, "valid object", str(exc)) from None
            progressed = True
        if not progressed:
            oid, _, parent, sl = rest[0]
            raise UnknownObjectError(sl.items[2].span, "declared parent object", parent)
        todo = rest
    return objects


def _infer_objects(literal_nodes: list) -> dict:
    """Assign categories from predicate signatures when no objects section exists."""
    objects: dict = {}

    def scoped(oid: str) -> ObjectRef | None:
        if ":" not in oid:
            return None
        base, part = oid.split(":", 1)
        parent = objects.get(base) or ObjectRef(base, Category.CONTAINER)
        objects.setdefault(base, parent)
        cat = Category.DOOR if part.startswith("door") else Category.SPACE
        return ObjectRef(oid, cat, parent)

    for sl in literal_nodes:
        name = PREDICATE_BY_KEYWORD.get(sl.head or "")
        if name is None:
            continue
        for t, a in zip(PREDICATES[name].params, sl.tail):
            if not isinstance(a, Atom) or a.is_number or t in ValueKind._value2member_map_:
                continue
            oid = a.value
            if oid in objects:
                continue
            ref = scoped(oid)
            if ref is None:
                cat = Category.SURFACE if t == "region" else Category._value2member_map_.get(t)
                if cat is None:
                    continue
                ref = ObjectRef(oid, cat)
            objects[oid] = ref
    return objects


def _parse_literal(node, objects: dict, strict: bool) -> Literal:
    sl = _expect_list(node, "literal")
    name = PREDICATE_BY_KEYWORD.get(sl.head or "")
    if name is None:
        raise ParseError(sl.items[0].span if sl.items else sl.span, "known predicate", lexeme(sl))
    decl = PREDICATES[name]
    if len(sl.tail) != decl.arity:
        raise ArityError(sl.span, f"{decl.arity} arguments for {sl.head}", lexeme(sl))
    args = []
    for t, a in zip(decl.params, sl.tail):
        if t in ValueKind._value2member_map_:
            v = parse_value(a)
            if v.kind.value != t:
                raise ParseError(a.span, f"{t} value", lexeme(a))
            args.append(v)
            continue
        oid = _symbol(a, "object id")
        ref = objects.get(oid)
        if ref is None:
            raise UnknownObjectError(a.span, "declared object", oid)
        if not arg_matches(t, ref):
            raise ParseError(a.span, f"{t} object", oid)
        args.append(ref)
    return Literal(name, tuple(args))


def parse_problem(text, file: str = "<problem>") -> Problem:
    root = _top_level(text, file, "problem")
    if len(root) < 2:
        raise ParseError(root.span, "problem name", lexeme(root))
    name = _symbol(root.items[1], "problem name")
    sections = _keyword_sections(root, {"world-file", "objects", "init", "goal"}, start=2)
    by = {}
    for s in sections:
        if s.head in by:
            raise ParseError(s.span, f"a single ({s.head} ...) section", lexeme(s))
        by[s.head] = s
    for req in ("init", "goal"):
        if req not in by:
            raise ParseError(root.span, f"({req} ...) section", lexeme(root))
    world_file = None
    if "world-file" in by:
        wf = by["world-file"]
        if len(wf) != 2 or not isinstance(wf.items[1], Atom) or wf.items[1].is_number:
            raise ParseError(wf.span, '(world-file "path")', lexeme(wf))
        world_file = wf.items[1].value
    lit_nodes = [_expect_list(n, "literal") for k in ("init", "goal") for n in by[k].tail]
    if "objects" in by:
        objects = _parse_objects(by["objects"])
    else:
        objects = _infer_objects(lit_nodes)
    init = [_parse_literal(n, objects, True) for n in by["init"].tail]
    goal = [_parse_literal(n, objects, True) for n in by["goal"].tail]
    return Problem(name, tuple(objects.values()), frozenset(init), frozenset(goal), world_file)


def literal_sexpr(l: Literal) -> str:
    parts = [l.predicate.lower()]
    for a in l.args:
        parts.append(value_sexpr(a) if isinstance(a, Value) else a.id)
    return "(" + " ".join(parts) + ")"


def _object_order(o: ObjectRef):
    return (list(Category).index(o.category), o.id)


def serialize_problem(problem: Problem) -> str:
    lines = [f"(problem {problem.name}"]
    if problem.world_file is not None:
        wf = problem.world_file.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  (world-file "{wf}")')
    objs = []
    for o in sorted(problem.objects, key=_object_order):
        objs.append(f"({o.category.value} {o.id}" + (f" {o.parent.id})" if o.parent else ")"))
    lines.append("  (objects" + "".join("\n    " + s for s in objs) + ")")
    for section, lits in (("init", problem.init), ("goal", problem.goal)):
        body = sorted(literal_sexpr(l) for l in lits)
        lines.append(f"  ({section}" + "".join("\n    " + s for s in body) + ")")
    return "\n".join(lines) + ")\n"


# ---------------------------------------------------------------------------
# worlds

def _fields(sl: SList, start: int, allowed: dict) -> dict:
    """Parse ``(key n1 n2 ...)`` or ``(key sym)`` entries after ``start``."""
    out = {}
    for node in sl.items[start:]:
        f = _expect_list(node, "field")
        if f.head not in allowed:
            raise ParseError(f.span, f"one of {sorted(allowed)}", lexeme(f))
        if f.head in out:
            raise ParseError(f.span, f"a single {f.head} field", lexeme(f))
        n = allowed[f.head]
        if n == "sym":
            if len(f) != 2:
                raise ArityError(f.span, f"({f.head} symbol)", lexeme(f))
            out[f.head] = _symbol(f.items[1])
        else:
            out[f.head] = _numbers(f, n, f.head)
    return out


def _need(fields: dict, key: str, sl: SList):
    if key not in fields:
        raise ParseError(sl.span, f"({key} ...) field", lexeme(sl))
    return fields[key]


def parse_world(text, file: str = "<world>", validate: bool = True) -> World2D:
    root = _top_level(text, file, "world")
    sections = _keyword_sections(root, {"bounds", "robot", "static", "surface", "container", "item", "held"})
    bounds = (0.0, 0.0, 4.0, 3.0)
    robot = None
    statics, surfaces, containers, items = [], [], [], []
    held = None
    seen_ids = {}
    try:
        for s in sections:
            if s.head == "bounds":
                bounds = _numbers(s, 4, "bounds")
                if bounds[2] <= bounds[0] or bounds[3] <= bounds[1]:
                    raise ParseError(s.span, "non-empty bounds", lexeme(s))
                continue
            if s.head == "held":
                if len(s) != 2:
                    raise ArityError(s.span, "(held item-id)", lexeme(s))
                held = _symbol(s.items[1])
                continue
            if len(s) < 2:
                raise ParseError(s.span, f"({s.head} id ...)", lexeme(s))
            oid = _symbol(s.items[1], "id")
            if oid in seen_ids:
                raise ParseError(s.items[1].span, "unique id", oid)
            seen_ids[oid] = s
            if s.head == "robot":
                if robot is not None:
                    raise ParseError(s.span, "a single robot", lexeme(s))
                f = _fields(s, 2, {"radius": 1, "reach": 1, "conf": 3})
                robot = Robot(oid, _need(f, "radius", s)[0], _need(f, "reach", s)[0], _need(f, "conf", s))
                if robot.radius <= 0 or robot.reach <= robot.radius:
                    raise ParseError(s.span, "0 < radius < reach", lexeme(s))
            elif s.head == "static":
                f = _fields(s, 2, {"rect": 5})
                cx, cy, w, h, th = _need(f, "rect", s)
                if w <= 0 or h <= 0:
                    raise ParseError(s.span, "positive rectangle size", lexeme(s))
                statics.append(StaticShape(oid, Rect(cx, cy, w, h, th)))
            elif s.head == "surface":
                f = _fields(s, 2, {"area": 4, "color": 1})
                x0, y0, x1, y1 = _need(f, "area", s)
                if x1 <= x0 or y1 <= y0:
                    raise ParseError(s.span, "non-empty area", lexeme(s))
                surfaces.append(Surface(oid, x0, y0, x1, y1, int(f.get("color", (7,))[0])))
            elif s.head == "container":
                f = _fields(s, 2, {"area": 4, "wall": 1, "opening": "sym", "limit": 1, "angle": 1, "color": 1})
                x0, y0, x1, y1 = _need(f, "area", s)
                containers.append(Container(
                    oid, x0, y0, x1, y1, f.get("wall", (0.04,))[0], f.get("opening", "south"),
                    _need(f, "limit", s)[0], f.get("angle", (0.0,))[0], int(f.get("color", (5,))[0]),
                ))
            elif s.head == "item":
                f = _fields(s, 2, {"radius": 1, "pose": 3, "color": 1, "model": "sym"})
                r = _need(f, "radius", s)[0]
                if r <= 0:
                    raise ParseError(s.span, "positive radius", lexeme(s))
                items.append(Item(oid, r, _need(f, "pose", s), int(f.get("color", (0,))[0]),
                                  f.get("model", "food0")))
    except GeometryError as exc:
        raise ParseError(s.span, "valid geometry", str(exc)) from None
    if robot is None:
        raise ParseError(root.span, "(robot ...) section", lexeme(root))
    if held is not None and held not in {i.id for i in items}:
        raise ParseError(root.span, "held item declared as (item ...)", held)
    world = World2D(bounds, robot, tuple(statics), tuple(surfaces), tuple(containers), tuple(items), held)
    if validate:
        validate_world(world)
    return world


def serialize_world(world: World2D) -> str:
    n = fmt_number
    lines = ["(world", "  (bounds " + " ".join(n(b) for b in world.bounds) + ")"]
    r = world.robot
    lines.append(f"  (robot {r.id} (radius {n(r.radius)}) (reach {n(r.reach)}) (conf {' '.join(n(x) for x in r.conf)}))")
    for s in world.statics:
        rc = s.rect
        lines.append(f"  (static {s.id} (rect {n(rc.cx)} {n(rc.cy)} {n(rc.w)} {n(rc.h)} {n(rc.theta)}))")
    for s in world.surfaces:
        lines.append(f"  (surface {s.id} (area {' '.join(n(v) for v in s.area)}) (color {s.color}))")
    for c in world.containers:
        lines.append(
            f"  (container {c.id} (area {' '.join(n(v) for v in c.area)}) (wall {n(c.wall)}) "
            f"(opening {c.opening}) (limit {n(c.limit)}) (angle {n(c.angle)}) (color {c.color}))"
        )
    for i in world.items:
        lines.append(
            f"  (item {i.id} (radius {n(i.radius)}) (pose {' '.join(n(v) for v in i.pose)}) "
            f"(color {i.color}) (model {i.model}))"
        )
    if world.held is not None:
        lines.append(f"  (held {world.held})")
    return "\n".join(lines) + ")\n"


# ---------------------------------------------------------------------------
# skeletons and solutions

def action_sexpr(a: GroundAction) -> str:
    objs = " ".join(o.id for o in a.objects)
    slots = " ".join(f"#{s.id}" if isinstance(s, Free) else value_sexpr(s.value) for s in a.slots)
    return f"({a.schema.name} ({objs}) ({slots}))"


def serialize_skeleton(skeleton: Skeleton) -> str:
    """One line: the stripped key, then the full actions with ``#`` slots."""
    key = " ".join("(" + " ".join(t) + ")" for t in skeleton.key)
    acts = " ".join(action_sexpr(a) for a in skeleton)
    return f"(skeleton (key {key}) (actions {acts}))"


def _parse_action(node, problem: Problem) -> GroundAction:
    sl = _expect_list(node, "action")
    schema = SCHEMAS.get(sl.head or "")
    if schema is None:
        raise ParseError(sl.span, "action schema name", lexeme(sl))
    if len(sl) != 3:
        raise ArityError(sl.span, f"({sl.head} (objects) (slots))", lexeme(sl))
    on = _expect_list(sl.items[1], "object list")
    vn = _expect_list(sl.items[2], "slot list")
    if len(on) != len(schema.object_params):
        raise ArityError(on.span, f"{len(schema.object_params)} objects", lexeme(on))
    if len(vn) != len(schema.continuous_params):
        raise ArityError(vn.span, f"{len(schema.continuous_params)} slots", lexeme(vn))
    objs = []
    for a in on.items:
        oid = _symbol(a, "object id")
        try:
            objs.append(problem.object(oid))
        except KeyError:
            raise UnknownObjectError(a.span, "declared object", oid) from None
    slots = []
    for a in vn.items:
        if isinstance(a, Atom) and a.is_symbol and a.value.startswith("#") and len(a.value) > 1:
            slots.append(Free(a.value[1:]))
        else:
            slots.append(BoundValue(parse_value(a)))
    try:
        return GroundAction(schema, tuple(objs), tuple(slots))
    except ValueError as exc:
        raise ParseError(sl.span, "well-typed action", str(exc)) from None


def parse_skeleton(text, problem: Problem, file: str = "<skeleton>") -> Skeleton:
    root = _top_level(text, file, "skeleton")
    sections = _keyword_sections(root, {"key", "actions"})
    acts = [s for s in sections if s.head == "actions"]
    if len(acts) != 1:
        raise ParseError(root.span, "one (actions ...) section", lexeme(root))
    sk = Skeleton(tuple(_parse_action(n, problem) for n in acts[0].tail))
    keys = [s for s in sections if s.head == "key"]
    if keys:
        want = tuple(tuple(_symbol(x) for x in _expect_list(t, "key tuple").items) for t in keys[0].tail)
        if want != sk.key:
            raise ParseError(keys[0].span, f"key matching actions {sk.key}", lexeme(keys[0]))
    return sk


def write_skel_file(path, skeletons) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sk in skeletons:
            fh.write(serialize_skeleton(sk) + "\n")


def read_skel_file(path, problem: Problem) -> list[Skeleton]:
    out = []
    with open(path, "rb") as fh:
        for i, line in enumerate(fh.read().split(b"\n"), 1):
            if line.strip():
                out.append(parse_skeleton(line, problem, f"{path}:{i}"))
    return out


def serialize_solution(problem: Problem, solution) -> str:
    """Bound actions, one per line; moves may carry ``(motion <trajectory>)``."""
    actions = list(getattr(solution, "actions", solution))
    motions = list(getattr(solution, "motions", None) or [None] * len(actions))
    lines = []
    for a, m in zip(actions, motions):
        text = action_sexpr(a)
        if m is not None:
            text = text[:-1] + f" (motion {value_sexpr(m)}))"
        lines.append("\n  " + text)
    return f"(solution {problem.name}{''.join(lines)})\n"


def parse_solution(text, problem: Problem, file: str = "<solution>") -> Solution:
    root = _top_level(text, file, "solution")
    if len(root) < 2:
        raise ParseError(root.span, "problem name", lexeme(root))
    name = _symbol(root.items[1], "problem name")
    if name != problem.name.lower():
        raise ParseError(root.items[1].span, f"solution for {problem.name}", name)
    acts, motions = [], []
    for n in root.items[2:]:
        motion = None
        if isinstance(n, SList) and len(n) == 4:
            extra = _expect_list(n.items[3], "motion")
            if extra.head != "motion" or len(extra) != 2 or n.head != "move":
                raise ParseError(extra.span, "(motion <trajectory>) on a move", lexeme(extra))
            motion = parse_value(extra.items[1])
            if motion.kind is not ValueKind.TRAJECTORY:
                raise ParseError(extra.span, "trajectory", lexeme(extra.items[1]))
            n = SList(n.items[:3], n.span)
        a = _parse_action(n, problem)
        for s in a.slots:
            if isinstance(s, Free):
                raise ParseError(root.span, "fully bound solution", f"#{s.id}")
        acts.append(a)
        motions.append(motion)
    return Solution(tuple(acts), tuple(motions))


def load_problem(path, with_world: bool = True) -> Problem:
    """Read a ``.prob`` file and attach its world (resolved next to it)."""
    import os
    with open(path, "rb") as fh:
        problem = parse_problem(fh.read(), str(path))
    if with_world and problem.world_file:
        wpath = os.path.join(os.path.dirname(os.path.abspath(path)), problem.world_file)
        with open(wpath, "rb") as fh:
            problem = problem.with_world(parse_world(fh.read(), wpath))
    return problem


__all__ = [
    "ArityError", "UnknownObjectError", "ParseError", "SourceSpan", "parse_problem", "serialize_problem",
    "parse_world", "serialize_world", "parse_value", "value_sexpr", "literal_sexpr", "serialize_skeleton",
    "parse_skeleton", "write_skel_file", "read_skel_file", "serialize_solution", "parse_solution",
    "load_problem",
]
