"""Masked pre-norm transformer encoder over fused plan tokens, in plain numpy.

Everything is float64 and batched: a batch of token sequences is padded to a
common length T, padded keys are masked out, and only position 0 is read out.
Gradients are written by hand; ``gradcheck`` compares them with central
differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import MAX_IDENT, NAME_VOCAB, OBJECT_WIDTH, VALUE_WIDTH
from .tokenize import ACTION, GOAL, INIT, Token, TokenSequence, pack_elements

LN_EPS = 1e-5
NEG = -1e30


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 32
    layers: int = 2
    heads: int = 2
    ff: int = 64
    name_mode: str = "learned"  # learned | onehot (fixed, not trained)
    init_scale: float = 0.1

    def __post_init__(self):
        if self.d <= 0 or self.layers < 0 or self.heads <= 0 or self.ff <= 0:
            raise ValueError("model sizes must be positive")
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")
        if self.name_mode not in ("learned", "onehot"):
            raise ValueError("name_mode must be learned or onehot")
        if self.name_mode == "onehot" and self.d < len(NAME_VOCAB):
            raise ValueError(f"one-hot names need d >= {len(NAME_VOCAB)}")


_LAYER_KEYS = ("ln1_g", "ln1_b", "Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo",
               "ln2_g", "ln2_b", "W1", "b1", "W2", "b2")


def param_shapes(cfg: ModelConfig) -> dict:
    d, f = cfg.d, cfg.ff
    shapes = {
        "name_emb": (len(NAME_VOCAB), d),
        "obj_W": (OBJECT_WIDTH, d),
        "obj_b": (d,),
        "ident_emb": (MAX_IDENT, d),
        "val_W": (VALUE_WIDTH, d),
        "val_b": (d,),
        "pe_init": (d,),
        "pe_goal": (d,),
    }
    per = {"ln1_g": (d,), "ln1_b": (d,), "Wq": (d, d), "bq": (d,), "Wk": (d, d), "bk": (d,),
           "Wv": (d, d), "bv": (d,), "Wo": (d, d), "bo": (d,), "ln2_g": (d,), "ln2_b": (d,),
           "W1": (d, f), "b1": (f,), "W2": (f, d), "b2": (d,)}
    for l in range(cfg.layers):
        for k in _LAYER_KEYS:
            shapes[f"l{l}.{k}"] = per[k]
    shapes.update({"lnf_g": (d,), "lnf_b": (d,), "out_w": (d,), "out_b": (1,)})
    return shapes


@dataclass
class Model:
    config: ModelConfig
    params: dict = field(default_factory=dict)

    @property
    def frozen(self) -> set:
        return {"name_emb"} if self.config.name_mode == "onehot" else set()

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> Model:
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})

    def config_dict(self) -> dict:
        return asdict(self.config)


def _onehot_names(d: int) -> np.ndarray:
    e = np.zeros((len(NAME_VOCAB), d))
    e[np.arange(len(NAME_VOCAB)), np.arange(len(NAME_VOCAB))] = 1.0
    return e


def init_model(config: ModelConfig | None = None, rng=0) -> Model:
    cfg = config or ModelConfig()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.split(".")[-1]
        if leaf.endswith("_g"):
            params[name] = np.ones(shape)
        elif leaf.startswith("b") or leaf.endswith("_b"):
            params[name] = np.zeros(shape)
        elif len(shape) == 2 and leaf not in ("name_emb", "ident_emb"):
            params[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
        else:
            params[name] = rng.normal(0.0, cfg.init_scale, shape)
    if cfg.name_mode == "onehot":
        params["name_emb"] = _onehot_names(cfg.d)
    return Model(cfg, params)


def zero_model(config: ModelConfig | None = None) -> Model:
    cfg = config or ModelConfig()
    return Model(cfg, {k: np.zeros(s) for k, s in param_shapes(cfg).items()})


def sinusoidal_pe(positions, d: int) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)[..., None]
    i = np.arange(d)
    rate = 1.0 / np.power(10000.0, (2 * (i // 2)) / d)
    ang = pos * rate
    return np.where(i % 2 == 0, np.sin(ang), np.cos(ang))


# ---------------------------------------------------------------------------
# embeddings

def _element_embeddings(P, a):
    name_e = P["name_emb"][a["name_id"]]
    obj_pre = a["obj_feat"] @ P["obj_W"] + P["obj_b"]
    obj_e = np.maximum(obj_pre, 0.0) + P["ident_emb"][a["obj_ident"]]
    val_pre = a["val_feat"] @ P["val_W"] + P["val_b"]
    val_e = np.maximum(val_pre, 0.0)
    return name_e, obj_pre, obj_e, val_pre, val_e


def fuse_token(token: Token, model: Model) -> np.ndarray:
    """Mean of the token's element embeddings plus its positional encoding."""
    P = model.params
    a = pack_elements([token])
    name_e, _, obj_e, _, val_e = _element_embeddings(P, a)
    total = name_e.sum(0) + obj_e.sum(0) + val_e.sum(0)
    out = total / len(token.elements)
    return out + _pe_for(model, token.kind, token.position)


def _pe_for(model: Model, kind: int, position: int) -> np.ndarray:
    if kind == ACTION:
        return sinusoidal_pe(position, model.config.d)
    return model.params["pe_goal"] if kind == GOAL else model.params["pe_init"]


def _pack_batch(seqs):
    """Concatenate per-sequence element arrays with flat token offsets."""
    B = len(seqs)
    T = max(len(s) for s in seqs)
    keys = ("name", "obj", "val")
    out = {f"{k}_tok": [] for k in keys}
    out.update(name_id=[], obj_feat=[], obj_ident=[], val_feat=[])
    counts = np.ones(B * T)
    kinds = np.full(B * T, -1, dtype=np.int64)
    positions = np.zeros(B * T, dtype=np.int64)
    mask = np.zeros((B, T, T), dtype=bool)
    for b, s in enumerate(seqs):
        a = s.arrays or pack_elements(s.tokens)
        off = b * T
        n = len(s)
        for k in keys:
            out[f"{k}_tok"].append(a[f"{k}_tok"] + off)
        out["name_id"].append(a["name_id"])
        out["obj_feat"].append(a["obj_feat"])
        out["obj_ident"].append(a["obj_ident"])
        out["val_feat"].append(a["val_feat"])
        counts[off:off + n] = a["counts"]
        kinds[off:off + n] = a["kinds"]
        positions[off:off + n] = a["positions"]
        mask[b, :n, :n] = s.mask
        idx = np.arange(n, T)
        mask[b, idx, idx] = True  # padded rows attend to themselves only
    packed = {k: np.concatenate(v) for k, v in out.items()}
    packed["obj_feat"] = packed["obj_feat"].reshape(-1, OBJECT_WIDTH)
    packed["val_feat"] = packed["val_feat"].reshape(-1, VALUE_WIDTH)
    packed.update(counts=counts, kinds=kinds, positions=positions, mask=mask, B=B, T=T)
    return packed


def _embed(model: Model, a):
    P = model.params
    d = model.config.d
    B, T = a["B"], a["T"]
    name_e, obj_pre, obj_e, val_pre, val_e = _element_embeddings(P, a)
    S = np.zeros((B * T, d))
    np.add.at(S, a["name_tok"], name_e)
    np.add.at(S, a["obj_tok"], obj_e)
    np.add.at(S, a["val_tok"], val_e)
    X = S / a["counts"][:, None]
    kinds = a["kinds"]
    pe = np.zeros((B * T, d))
    act = kinds == ACTION
    pe[act] = sinusoidal_pe(a["positions"][act], d)
    pe[kinds == GOAL] = P["pe_goal"]
    pe[kinds == INIT] = P["pe_init"]
    X = X + pe
    cache = (obj_pre, val_pre)
    return X.reshape(B, T, d), cache


def _embed_backward(model: Model, a, cache, dX, grads):
    P = model.params
    d = model.config.d
    obj_pre, val_pre = cache
    dX = dX.reshape(-1, d)
    kinds = a["kinds"]
    grads["pe_goal"] += dX[kinds == GOAL].sum(0)
    grads["pe_init"] += dX[kinds == INIT].sum(0)
    dS = dX / a["counts"][:, None]
    d_name = dS[a["name_tok"]]
    np.add.at(grads["name_emb"], a["name_id"], d_name)
    d_obj = dS[a["obj_tok"]]
    np.add.at(grads["ident_emb"], a["obj_ident"], d_obj)
    d_obj_pre = d_obj * (obj_pre > 0)
    grads["obj_W"] += a["obj_feat"].T @ d_obj_pre
    grads["obj_b"] += d_obj_pre.sum(0)
    d_val_pre = dS[a["val_tok"]] * (val_pre > 0)
    grads["val_W"] += a["val_feat"].T @ d_val_pre
    grads["val_b"] += d_val_pre.sum(0)


# ---------------------------------------------------------------------------
# layers

def _ln(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xh = xc * inv
    return xh * g + b, (xh, inv)


def _ln_backward(dy, g, cache):
    xh, inv = cache
    dxh = dy * g
    dx = inv * (dxh - dxh.mean(-1, keepdims=True) - xh * (dxh * xh).mean(-1, keepdims=True))
    red = tuple(range(dy.ndim - 1))
    return dx, (dy * xh).sum(red), dy.sum(red)


def _split(x, H):
    B, T, d = x.shape
    return x.reshape(B, T, H, d // H).transpose(0, 2, 1, 3)


def _merge(x):
    B, H, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)


def _layer_forward(P, pre, x, mask, H):
    h, ln1 = _ln(x, P[pre + "ln1_g"], P[pre + "ln1_b"])
    q = _split(h @ P[pre + "Wq"] + P[pre + "bq"], H)
    k = _split(h @ P[pre + "Wk"] + P[pre + "bk"], H)
    v = _split(h @ P[pre + "Wv"] + P[pre + "bv"], H)
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = (q @ k.transpose(0, 1, 3, 2)) * scale
    s = np.where(mask[:, None], s, NEG)
    s = s - s.max(-1, keepdims=True)
    e = np.exp(s)
    att = e / e.sum(-1, keepdims=True)
    o = _merge(att @ v)
    x1 = x + o @ P[pre + "Wo"] + P[pre + "bo"]
    h2, ln2 = _ln(x1, P[pre + "ln2_g"], P[pre + "ln2_b"])
    f_pre = h2 @ P[pre + "W1"] + P[pre + "b1"]
    f = np.maximum(f_pre, 0.0)
    x2 = x1 + f @ P[pre + "W2"] + P[pre + "b2"]
    cache = (h, ln1, q, k, v, att, o, h2, ln2, f_pre, f, scale)
    return x2, cache


def _layer_backward(P, pre, dx2, cache, mask, H, grads):
    h, ln1, q, k, v, att, o, h2, ln2, f_pre, f, scale = cache
    red = (0, 1)
    # feed-forward
    grads[pre + "W2"] += np.einsum("bti,btj->ij", f, dx2)
    grads[pre + "b2"] += dx2.sum(red)
    df = dx2 @ P[pre + "W2"].T
    df_pre = df * (f_pre > 0)
    grads[pre + "W1"] += np.einsum("bti,btj->ij", h2, df_pre)
    grads[pre + "b1"] += df_pre.sum(red)
    dh2 = df_pre @ P[pre + "W1"].T
    dx1_ln, dg, db = _ln_backward(dh2, P[pre + "ln2_g"], ln2)
    grads[pre + "ln2_g"] += dg
    grads[pre + "ln2_b"] += db
    dx1 = dx2 + dx1_ln
    # attention
    grads[pre + "Wo"] += np.einsum("bti,btj->ij", o, dx1)
    grads[pre + "bo"] += dx1.sum(red)
    do = _split(dx1 @ P[pre + "Wo"].T, H)
    datt = do @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ do
    ds = att * (datt - (datt * att).sum(-1, keepdims=True))
    ds = np.where(mask[:, None], ds, 0.0) * scale
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q
    dh = np.zeros_like(h)
    for name, dz in (("q", dq), ("k", dk), ("v", dv)):
        dz = _merge(dz)
        grads[pre + "W" + name] += np.einsum("bti,btj->ij", h, dz)
        grads[pre + "b" + name] += dz.sum(red)
        dh += dz @ P[pre + "W" + name].T
    dx_ln, dg, db = _ln_backward(dh, P[pre + "ln1_g"], ln1)
    grads[pre + "ln1_g"] += dg
    grads[pre + "ln1_b"] += db
    return dx1 + dx_ln


# ---------------------------------------------------------------------------
# forward / backward

def _as_list(seqs):
    if isinstance(seqs, TokenSequence):
        return [seqs], True
    return list(seqs), False


def _check_first_action(seqs):
    for s in seqs:
        if not s.tokens:
            raise ValueError("empty token sequence")
        if s.tokens[0].kind != ACTION:
            raise ValueError("the first token must be an action token")


def _forward(model: Model, seqs, mask_override=None):
    _check_first_action(seqs)
    a = _pack_batch(seqs)
    if mask_override is not None:
        m = np.asarray(mask_override, dtype=bool)
        n = m.shape[-1]
        a["mask"][:, :n, :n] = m
    P = model.params
    H = model.config.heads
    x, ecache = _embed(model, a)
    caches = []
    for l in range(model.config.layers):
        x, c = _layer_forward(P, f"l{l}.", x, a["mask"], H)
        caches.append(c)
    x0 = x[:, 0, :]
    z, lnf = _ln(x0, P["lnf_g"], P["lnf_b"])
    logits = z @ P["out_w"] + P["out_b"][0]
    return logits, (a, ecache, caches, x.shape, z, lnf)


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def forward(model: Model, seqs, mask=None, batch_size: int = 256):
    """Feasibility probability for one sequence (float) or many (array)."""
    seqs, single = _as_list(seqs)
    out = []
    for i in range(0, len(seqs), batch_size):
        logits, _ = _forward(model, seqs[i:i + batch_size], mask if single else None)
        out.append(_sigmoid(logits))
    p = np.concatenate(out) if out else np.zeros(0)
    return float(p[0]) if single else p


def logits_of(model: Model, seqs) -> np.ndarray:
    seqs, _ = _as_list(seqs)
    return _forward(model, seqs)[0]


def bce_from_logits(logits, y) -> np.ndarray:
    # log(1 + e^x) - y x, computed without overflow
    return np.logaddexp(0.0, logits) - y * logits


def loss_and_gradients(model: Model, seqs, labels, weights=None):
    """Mean binary cross-entropy and its gradient for every parameter."""
    seqs, _ = _as_list(seqs)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if len(y) != len(seqs):
        raise ValueError("one label per sequence")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("labels must be 0 or 1")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    logits, (a, ecache, caches, xshape, z, lnf) = _forward(model, seqs)
    per = bce_from_logits(logits, y)
    loss = float((w * per).sum() / w.sum())
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"loss is {loss}")
    P = model.params
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    dlogit = w * (_sigmoid(logits) - y) / w.sum()
    grads["out_w"] += z.T @ dlogit
    grads["out_b"] += dlogit.sum()
    dz = dlogit[:, None] * P["out_w"][None, :]
    dx0, dg, db = _ln_backward(dz, P["lnf_g"], lnf)
    grads["lnf_g"] += dg
    grads["lnf_b"] += db
    dx = np.zeros(xshape)
    dx[:, 0, :] = dx0
    for l in reversed(range(model.config.layers)):
        dx = _layer_backward(P, f"l{l}.", dx, caches[l], a["mask"], model.config.heads, grads)
    _embed_backward(model, a, ecache, dx, grads)
    for k in model.frozen:
        grads[k][...] = 0.0
    return loss, grads
