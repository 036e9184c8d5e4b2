"""Training the predictor from dataset files, with the ablation toggles."""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..predictor.estimator import FeasibilityClassifier
from ..predictor.tokenize import PlanTokenizer
from .dataset import ProblemStore, load_pairs, read_jsonl


@dataclass
class TrainOptions:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    d: int = 32
    layers: int = 2
    heads: int = 2
    ff: int = 64
    seed: int = 0
    class_weight: str | None = None
    # ablation toggles
    object_features: bool = True
    values: str = "all"  # all | none | no-poses | no-angles
    name_mode: str = "learned"  # learned | onehot
    include_init: bool = True

    def tokenizer(self) -> PlanTokenizer:
        return PlanTokenizer(seed=self.seed, include_init=self.include_init, values=self.values,
                             object_features=self.object_features).fit()

    def classifier(self) -> FeasibilityClassifier:
        return FeasibilityClassifier(d=self.d, layers=self.layers, heads=self.heads, ff=self.ff,
                                     name_mode=self.name_mode, epochs=self.epochs, batch_size=self.batch_size,
                                     lr=self.lr, class_weight=self.class_weight, seed=self.seed)


def _rows(data_dir, split, tasks):
    rows = read_jsonl(os.path.join(data_dir, f"{split}.jsonl"))
    return [r for r in rows if tasks is None or r["task"] in tasks]


def train_from_dataset(data_dir: str, model_path: str, opts: TrainOptions | None = None, tasks=None,
                       log=None) -> tuple[FeasibilityClassifier, dict]:
    """Fit on ``train.jsonl`` (optionally filtered by task), report on ``val.jsonl``."""
    opts = opts or TrainOptions()
    store = ProblemStore(os.path.join(data_dir, "problems"))
    tr = _rows(data_dir, "train", tasks)
    va = _rows(data_dir, "val", tasks)
    if not tr:
        raise ValueError("no training records for the requested tasks")
    tok = opts.tokenizer()
    pairs, y = load_pairs(tr, store)
    if len(set(y.tolist())) < 2:
        raise ValueError("training set needs both labels")
    X = tok.transform(pairs)
    Xv, yv = None, None
    if va:
        vpairs, yv = load_pairs(va, store)
        Xv = tok.transform(vpairs)
    clf = opts.classifier().fit(X, y, Xv, yv, log=log)
    last = clf.history_.epochs[-1]
    report = {
        "train_records": len(tr),
        "val_records": len(va),
        "train_positive_rate": float(np.mean(y)),
        "train_acc": last.train_acc,
        "val_acc": last.val_acc,
        "val_majority_acc": float(max(np.mean(yv), 1 - np.mean(yv))) if va else None,
        "n_params": clf.n_params_,
    }
    extra = {"tokenizer": tok.get_params(), "options": asdict(opts), "report": report,
             "tasks": sorted(tasks) if tasks else None}
    os.makedirs(os.path.dirname(os.path.abspath(model_path)), exist_ok=True)
    clf.save(model_path, extra)
    hist_path = os.path.splitext(model_path)[0] + "_history.csv"
    with open(hist_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for e in clf.history_.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.train_acc), repr(e.val_loss), repr(e.val_acc)])
    return clf, report


def accuracy_on(clf: FeasibilityClassifier, tok: PlanTokenizer, pairs, y) -> float:
    if not len(pairs):
        return float("nan")
    return float(clf.score(tok.transform(pairs), y))
