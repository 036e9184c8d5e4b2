"""Leave-one-out over item variants.

Training problems never contain the held-out model; test problems use it
for their goal item. The report pairs accuracy on seen-variant validation
problems with accuracy on unseen-variant test problems.
"""

from __future__ import annotations

import os
from dataclasses import replace

from .dataset import DatasetManifest, ProblemStore, build_dataset, load_pairs, read_jsonl
from .generate import FOOD_MODELS, ITEM_MODELS
from .training import TrainOptions, accuracy_on, train_from_dataset


class InsufficientInstancesError(ValueError):
    pass


def category_of(model: str) -> tuple:
    if model not in ITEM_MODELS:
        raise ValueError(f"unknown item model {model!r}")
    prefix = model.rstrip("0123456789")
    return tuple(m for m in ITEM_MODELS if m.rstrip("0123456789") == prefix)


def audit_exclusion(store: ProblemStore, names, model: str) -> int:
    """Number of listed problems whose world contains ``model``."""
    hits = 0
    for n in names:
        if any(it.model == model for it in store[n].world.items):
            hits += 1
    return hits


def leave_one_out(held_out: str, manifest: DatasetManifest, opts: TrainOptions | None = None,
                  n_jobs: int = 1, log=None) -> dict:
    siblings = category_of(held_out)
    if len(siblings) < 3:
        raise InsufficientInstancesError(f"{held_out}: category has {len(siblings)} instances, need >= 3")
    if held_out not in FOOD_MODELS:
        raise InsufficientInstancesError(f"{held_out} is not a food variant")
    m = replace(manifest, exclude_models=(held_out,), require_model=held_out)
    build_dataset(m, n_jobs, log)
    store = ProblemStore(os.path.join(m.out_dir, "problems"))
    train_rows = read_jsonl(os.path.join(m.out_dir, "train.jsonl"))
    val_rows = read_jsonl(os.path.join(m.out_dir, "val.jsonl"))
    test_rows = read_jsonl(os.path.join(m.out_dir, "test.jsonl"))
    train_names = sorted({r["problem"] for r in train_rows + val_rows})
    leaks = audit_exclusion(store, train_names, held_out)
    if leaks:
        raise RuntimeError(f"{leaks} training problems contain the held-out model {held_out}")
    opts = opts or TrainOptions()
    model_path = os.path.join(m.out_dir, f"loo-{held_out}.pigi")
    clf, report = train_from_dataset(m.out_dir, model_path, opts)
    tok = opts.tokenizer()
    vpairs, vy = load_pairs(val_rows, store)
    tpairs, ty = load_pairs(test_rows, store)
    return {
        "held_out": held_out,
        "seen_acc": accuracy_on(clf, tok, vpairs, vy),
        "unseen_acc": accuracy_on(clf, tok, tpairs, ty),
        "seen_records": len(val_rows),
        "unseen_records": len(test_rows),
        "audit_hits": leaks,
        "model": model_path,
    }
