"""Central finite-difference check of ``loss_and_gradients``."""

from __future__ import annotations

import numpy as np

from .model import Model, loss_and_gradients


GRAD_FLOOR = 1e-6  # far above rounding noise (~1e-12), far below real gradient norms


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRAD_FLOOR) -> float:
    """Norm-wise relative error of one parameter group.

    Element-wise ratios blow up for entries whose true gradient is ~0, so
    the group is compared as a vector. ``floor`` covers groups whose exact
    gradient vanishes (the key bias: softmax ignores a per-row shift), where
    both sides are pure rounding noise.
    """
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(num / den)


def numeric_gradients(model: Model, seqs, labels, h: float = 1e-4, groups=None) -> dict:
    out = {}
    for name in groups or model.params:
        p = model.params[name]
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp, _ = loss_and_gradients(model, seqs, labels)
            flat[i] = old - h
            lm, _ = loss_and_gradients(model, seqs, labels)
            flat[i] = old
            gflat[i] = (lp - lm) / (2 * h)
        out[name] = g
    return out


def check_gradients(model: Model, seqs, labels, h: float = 1e-4) -> dict:
    """Per-group relative error between analytic and numeric gradients."""
    _, analytic = loss_and_gradients(model, seqs, labels)
    groups = [k for k in model.params if k not in model.frozen]
    numeric = numeric_gradients(model, seqs, labels, h, groups)
    return {k: relative_error(analytic[k], numeric[k]) for k in groups}


def random_sequence(rng: np.random.Generator, max_len: int = 12):
    """Synthetic token sequence with random elements (first token an action)."""
    from .features import MAX_IDENT, NAME_VOCAB, OBJECT_WIDTH, VALUE_WIDTH
    from .tokenize import ACTION, GOAL, INIT, Element, Token, TokenSequence, build_mask, pack_elements

    def elements(with_values):
        els = [Element("name", int(rng.integers(len(NAME_VOCAB))))]
        for _ in range(int(rng.integers(0, 3))):
            els.append(Element("object", int(rng.integers(MAX_IDENT)), tuple(rng.normal(size=OBJECT_WIDTH))))
        if with_values and rng.random() < 0.5:
            els.append(Element("value", 0, tuple(rng.normal(size=VALUE_WIDTH))))
        return tuple(els)

    na = int(rng.integers(1, 4))
    ng = int(rng.integers(0, 3))
    ni = int(rng.integers(0, max(1, max_len - na - ng)))
    toks = [Token(ACTION, elements(False), i) for i in range(na)]
    toks += [Token(GOAL, elements(True)) for _ in range(ng)]
    toks += [Token(INIT, elements(True)) for _ in range(ni)]
    seq = TokenSequence(toks, build_mask(na, ng + ni), na, ng, ni, ni)
    seq.arrays = pack_elements(toks)
    return seq


def relu_margin(model: Model, seqs) -> float:
    """Smallest |pre-activation| over every ReLU in a forward pass.

    Central differences are only meaningful when no ReLU changes state
    within +-h, so callers draw test instances with a margin well above h.
    """
    from .model import _forward
    _, (a, ecache, caches, *_rest) = _forward(model, list(seqs))
    pres = [ecache[0], ecache[1]] + [c[9] for c in caches]
    vals = [np.abs(p).min() for p in pres if p.size]
    return float(min(vals)) if vals else float("inf")


def random_instance(seed: int, *, d=8, layers=1, heads=1, ff=16, n_seqs=4, margin=1e-3, max_tries=100):
    """A random model, batch and labels whose ReLUs all sit ``margin`` away from a kink."""
    from .model import ModelConfig, init_model
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        model = init_model(ModelConfig(d=d, layers=layers, heads=heads, ff=ff, init_scale=0.5), rng)
        for k in model.params:
            model.params[k] = model.params[k] + rng.normal(0.0, 0.1, model.params[k].shape)
        seqs = [random_sequence(rng) for _ in range(n_seqs)]
        y = rng.integers(0, 2, n_seqs)
        if relu_margin(model, seqs) >= margin:
            return model, seqs, y
    raise RuntimeError("no kink-free instance found")
