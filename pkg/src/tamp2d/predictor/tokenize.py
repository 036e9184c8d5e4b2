"""Turning (problem, skeleton) pairs into token sequences with attention masks.

Sequence order is actions, then goal literals, then initial literals. Only
init literals are ever dropped: when the sequence would exceed ``max_len`` they
are shuffled with the caller's rng and the tail is cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..core import GroundAction, Literal, ObjectRef, Problem, Skeleton, Value, ValueKind
from .features import NAME_INDEX, OBJECT_WIDTH, VALUE_WIDTH, object_feature, object_ident, value_feature

MAX_LEN = 32
ACTION, GOAL, INIT = 0, 1, 2
KIND_NAMES = ("action", "goal", "init")
VALUE_MODES = ("all", "none", "no-poses", "no-angles")


class SequenceOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class Element:
    kind: str  # name | object | value
    index: int = 0  # name id, or identity slot for objects
    feature: tuple = ()

    def __repr__(self):
        return f"Element({self.kind}, {self.index})"


@dataclass(frozen=True)
class Token:
    kind: int  # ACTION | GOAL | INIT
    elements: tuple
    position: int = 0  # action index; 0 for goal/init
    text: str = ""


@dataclass
class TokenSequence:
    tokens: list
    mask: np.ndarray  # [T, T] bool, True where attention is allowed
    n_actions: int
    n_goal: int
    n_init: int
    n_init_total: int = 0
    # flat element arrays used by the batched model
    arrays: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.tokens)

    @property
    def kinds(self) -> np.ndarray:
        return np.array([t.kind for t in self.tokens], dtype=np.int64)


def build_mask(n_actions: int, n_other: int) -> np.ndarray:
    """Actions see earlier actions plus every goal/init token; the rest see everything."""
    T = n_actions + n_other
    m = np.ones((T, T), dtype=bool)
    if n_actions:
        m[:n_actions, :n_actions] = np.tril(np.ones((n_actions, n_actions), dtype=bool))
    return m


def _keep_value(v: Value, values: str) -> bool:
    if values == "all":
        return True
    if values == "none":
        return False
    if values == "no-poses":
        return v.kind is not ValueKind.POSE
    return v.kind is not ValueKind.JOINTANGLE


def _object_element(o: ObjectRef, world, object_features: bool) -> Element:
    f = object_feature(o, world) if object_features else np.zeros(OBJECT_WIDTH)
    return Element("object", object_ident(o), tuple(f))


def _action_token(a, i: int, problem: Problem, object_features: bool) -> Token:
    stripped = a.stripped if isinstance(a, GroundAction) else tuple(a)
    name, ids = stripped[0], stripped[1:]
    els = [Element("name", NAME_INDEX[name])]
    for oid in ids:
        els.append(_object_element(problem.object(oid), problem.world, object_features))
    return Token(ACTION, tuple(els), i, " ".join(stripped))


def _literal_token(l: Literal, kind: int, problem: Problem, values: str, object_features: bool) -> Token:
    els = [Element("name", NAME_INDEX[l.predicate])]
    for arg in l.args:
        if isinstance(arg, ObjectRef):
            els.append(_object_element(arg, problem.world, object_features))
        elif _keep_value(arg, values):
            els.append(Element("value", 0, tuple(value_feature(arg))))
    return Token(kind, tuple(els), 0, repr(l))


def _literal_order(lits) -> list:
    return sorted(lits, key=repr)


def tokenize(problem: Problem, skeleton, rng=None, *, max_len: int = MAX_LEN, include_init: bool = True,
             values: str = "all", object_features: bool = True) -> TokenSequence:
    """Token sequence and mask for one (problem, skeleton) pair."""
    if values not in VALUE_MODES:
        raise ValueError(f"values must be one of {VALUE_MODES}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    actions = list(skeleton.actions if isinstance(skeleton, Skeleton) else skeleton)
    if not actions:
        raise ValueError("skeleton has no actions")
    toks = [_action_token(a, i, problem, object_features) for i, a in enumerate(actions)]
    goals = [_literal_token(l, GOAL, problem, values, object_features) for l in _literal_order(problem.goal)]
    if len(toks) + len(goals) > max_len:
        raise SequenceOverflowError(f"{len(toks)} actions + {len(goals)} goals exceed {max_len} tokens")
    init = _literal_order(problem.init) if include_init else []
    room = max_len - len(toks) - len(goals)
    n_total = len(init)
    if len(init) > room:
        order = rng.permutation(len(init))
        init = [init[j] for j in order[:room]]
    inits = [_literal_token(l, INIT, problem, values, object_features) for l in init]
    tokens = toks + goals + inits
    seq = TokenSequence(tokens, build_mask(len(toks), len(goals) + len(inits)), len(toks), len(goals),
                        len(inits), n_total)
    seq.arrays = pack_elements(tokens)
    return seq


def pack_elements(tokens) -> dict:
    """Flatten a token list into per-element-kind arrays keyed by token index."""
    name_tok, name_id = [], []
    obj_tok, obj_feat, obj_ident = [], [], []
    val_tok, val_feat = [], []
    counts = np.zeros(len(tokens))
    for t, tok in enumerate(tokens):
        counts[t] = len(tok.elements)
        for e in tok.elements:
            if e.kind == "name":
                name_tok.append(t)
                name_id.append(e.index)
            elif e.kind == "object":
                obj_tok.append(t)
                obj_feat.append(e.feature)
                obj_ident.append(e.index)
            else:
                val_tok.append(t)
                val_feat.append(e.feature)
    return {
        "name_tok": np.array(name_tok, dtype=np.int64),
        "name_id": np.array(name_id, dtype=np.int64),
        "obj_tok": np.array(obj_tok, dtype=np.int64),
        "obj_feat": np.array(obj_feat, dtype=float).reshape(-1, OBJECT_WIDTH),
        "obj_ident": np.array(obj_ident, dtype=np.int64),
        "val_tok": np.array(val_tok, dtype=np.int64),
        "val_feat": np.array(val_feat, dtype=float).reshape(-1, VALUE_WIDTH),
        "counts": counts,
        "kinds": np.array([tok.kind for tok in tokens], dtype=np.int64),
        "positions": np.array([tok.position for tok in tokens], dtype=np.int64),
    }


def _item_seed(seed, problem: Problem, skeleton) -> list:
    from ..refine import stable_seed
    key = skeleton.key if isinstance(skeleton, Skeleton) else tuple(skeleton)
    return [int(seed), stable_seed(problem.name, key)]


class PlanTokenizer(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: X is a list of (problem, skeleton) pairs.

    The shuffle rng for each pair is derived from ``seed`` and the pair
    itself, so the output does not depend on batch composition or order.
    """

    def __init__(self, max_len=MAX_LEN, seed=0, include_init=True, values="all", object_features=True):
        self.max_len = max_len
        self.seed = seed
        self.include_init = include_init
        self.values = values
        self.object_features = object_features

    def fit(self, X=None, y=None):
        if self.values not in VALUE_MODES:
            raise ValueError(f"values must be one of {VALUE_MODES}")
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        out = []
        for problem, skeleton in X:
            rng = np.random.default_rng(_item_seed(self.seed, problem, skeleton))
            out.append(tokenize(problem, skeleton, rng, max_len=self.max_len, include_init=self.include_init,
                                values=self.values, object_features=self.object_features))
        return out
