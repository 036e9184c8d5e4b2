"""Fixed-width numeric features for objects and continuous values."""

from __future__ import annotations

import re

import numpy as np

from ..core import ACTION_FAMILIES, CATEGORY_ORDER, PREDICATES, VALUE_KIND_ORDER, Category, ObjectRef, Value, ValueKind
from ..geometry import DOOR_HALF, World2D

N_COLORS = 8
OBJECT_WIDTH = len(CATEGORY_ORDER) + 2 + N_COLORS + 1  # 17
VALUE_WIDTH = len(VALUE_KIND_ORDER) + 3 + 3 + 3 + 1  # 15
MAX_IDENT = 8  # identity slots for same-category objects (food1, food2, ...)

# value slots start after the type one-hot; trajectories carry only their type bit
_VALUE_SLOTS = {
    ValueKind.POSE: (5, 3),
    ValueKind.GRASP: (8, 3),
    ValueKind.BASECONF: (11, 3),
    ValueKind.JOINTANGLE: (14, 1),
    ValueKind.TRAJECTORY: (15, 0),
}

# names the predictor can embed: predicates, then action families
NAME_VOCAB = tuple(PREDICATES) + ACTION_FAMILIES
NAME_INDEX = {n: i for i, n in enumerate(NAME_VOCAB)}


def value_feature(v: Value) -> np.ndarray:
    out = np.zeros(VALUE_WIDTH)
    out[VALUE_KIND_ORDER.index(v.kind)] = 1.0
    start, n = _VALUE_SLOTS[v.kind]
    if n:
        out[start:start + n] = v.data[:n]
    return out


def _dims_and_color(obj: ObjectRef, world: World2D | None):
    """(width, height, color id or None, joint limit)."""
    if world is None:
        return 0.0, 0.0, None, 0.0
    cat = obj.category
    if cat is Category.ITEM:
        it = world.item(obj.id)
        return 2 * it.radius, 2 * it.radius, it.color, 0.0
    if cat is Category.SURFACE:
        s = world.surface(obj.id)
        return s.x1 - s.x0, s.y1 - s.y0, s.color, 0.0
    if cat is Category.ROBOT:
        r = world.robot.radius
        return 2 * r, 2 * r, None, 0.0
    c = world.container(obj.id)
    if cat is Category.DOOR:
        return c.door_length, 2 * DOOR_HALF, c.color, c.limit
    return c.x1 - c.x0, c.y1 - c.y0, c.color, 0.0


def object_feature(obj: ObjectRef, world: World2D | None) -> np.ndarray:
    out = np.zeros(OBJECT_WIDTH)
    out[CATEGORY_ORDER.index(obj.category)] = 1.0
    w, h, color, limit = _dims_and_color(obj, world)
    k = len(CATEGORY_ORDER)
    out[k], out[k + 1] = w, h
    if color is not None:
        out[k + 2 + int(color) % N_COLORS] = 1.0
    out[-1] = limit
    return out


_SUFFIX = re.compile(r"(\d+)$")


def object_ident(obj: ObjectRef) -> int:
    """Small integer telling apart objects that share features (food1 vs food2).

    Scoped parts (``fridge2:door1``) take the number of their parent.
    """
    base = obj.id.split(":", 1)[0]
    m = _SUFFIX.search(base)
    n = int(m.group(1)) if m else 0
    return n % MAX_IDENT
