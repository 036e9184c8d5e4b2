"""Planner ablations over held-out test problems.

``metrics.csv`` holds one deterministic row per (task, scorer, problem);
wall times go to ``timing.csv`` so that reruns with the same seed produce a
byte-identical metrics file.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from dataclasses import dataclass

import numpy as np

from ..planner import Constant1, LengthAscending, Learned, LearnedBinary, Oracle, batch_sorted_tamp
from ..refine import RefinementBudget, stable_seed
from .dataset import ProblemStore

SCORERS = ("baseline", "length", "pigi", "pigi-01", "oracle")
METRIC_FIELDS = ("task", "scorer", "problem", "solved", "reason", "batches", "skeletons", "attempts",
                 "false_positives", "samples", "solution_key")
SUMMARY_FIELDS = ("task", "scorer", "runs", "solved", "mean_false_positives", "mean_attempts", "mean_samples")
TIMING_FIELDS = ("task", "scorer", "problem", "wall_time")


class MissingModelError(FileNotFoundError):
    pass


@dataclass
class AblationConfig:
    k: int = 50
    timeout: float = 60.0
    seed: int = 0
    samples: int = 30
    restarts: int = 10
    wall_clock: float = 20.0
    pseudocode: bool = False

    @property
    def budget(self) -> RefinementBudget:
        return RefinementBudget(self.samples, self.restarts, self.wall_clock)


def make_scorer(name: str, model_path: str | None = None, feasible: dict | None = None):
    if name == "baseline":
        return Constant1()
    if name == "length":
        return LengthAscending()
    if name in ("pigi", "pigi-01"):
        if model_path is None or not os.path.exists(model_path):
            raise MissingModelError(f"scorer {name} needs a trained model (got {model_path!r})")
        from ..predictor.estimator import FeasibilityClassifier
        from ..predictor.tokenize import PlanTokenizer
        clf = FeasibilityClassifier.load(model_path)
        tok = PlanTokenizer(**clf.extra_.get("tokenizer", {}))
        return Learned(clf, tok) if name == "pigi" else LearnedBinary(clf, tok)
    if name == "oracle":
        if feasible is None:
            raise ValueError("oracle scorer needs the feasible-skeleton log")
        return Oracle(feasible)
    raise ValueError(f"unknown scorer {name!r}")


def run_ablation(tasks, scorers, problems: dict, cfg: AblationConfig, *, model_paths: dict | None = None,
                 feasible: dict | None = None, log=None) -> list:
    """Run every scorer on every problem; ``problems`` maps task -> list of Problems."""
    model_paths = model_paths or {}
    records = []
    for task in tasks:
        for sname in scorers:
            scorer = make_scorer(sname, model_paths.get(task, model_paths.get("*")), feasible)
            for p in problems[task]:
                rng = np.random.default_rng([cfg.seed, stable_seed(p.name, sname)])
                _, rec = batch_sorted_tamp(p, scorer, cfg.k, cfg.timeout, rng, budget=cfg.budget,
                                           pseudocode=cfg.pseudocode)
                row = {"task": task, **rec.metrics(), "wall_time": rec.wall_time}
                records.append(row)
                if log:
                    log(row)
    return records


def summarize(records) -> list[dict]:
    groups: dict = {}
    for r in records:
        groups.setdefault((r["task"], r["scorer"]), []).append(r)
    out = []
    for (task, scorer), rs in groups.items():
        out.append({
            "task": task,
            "scorer": scorer,
            "runs": len(rs),
            "solved": sum(bool(r["solved"]) for r in rs),
            "mean_false_positives": round(float(np.mean([r["false_positives"] for r in rs])), 6),
            "mean_attempts": round(float(np.mean([r["attempts"] for r in rs])), 6),
            "mean_samples": round(float(np.mean([r["samples"] for r in rs])), 6),
        })
    return out


def timing_summary(records) -> list[dict]:
    groups: dict = {}
    for r in records:
        groups.setdefault((r["task"], r["scorer"]), []).append(r["wall_time"])
    return [{"task": t, "scorer": s, "median_wall_time": statistics.median(ws), "mean_wall_time": float(np.mean(ws))}
            for (t, s), ws in groups.items()]


def _csv(path, fields, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_outputs(records, out_dir: str, svg: bool = True) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f) for k, f in (
        ("metrics", "metrics.csv"), ("summary", "summary.csv"), ("timing", "timing.csv"),
        ("timing_summary", "timing_summary.csv"), ("runs", "runs.jsonl"))}
    _csv(paths["metrics"], METRIC_FIELDS, records)
    summary = summarize(records)
    _csv(paths["summary"], SUMMARY_FIELDS, summary)
    _csv(paths["timing"], TIMING_FIELDS, records)
    _csv(paths["timing_summary"], ("task", "scorer", "median_wall_time", "mean_wall_time"), timing_summary(records))
    with open(paths["runs"], "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps({k: v for k, v in r.items() if k != "wall_time"}, sort_keys=True) + "\n")
    if svg:
        paths["svg"] = os.path.join(out_dir, "summary.svg")
        with open(paths["svg"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(summary_svg(summary))
    return paths


def summary_svg(summary, metric: str = "mean_false_positives") -> str:
    """Static bar chart of one summary column."""
    W, bar, gap = 520, 22, 8
    H = 40 + len(summary) * (bar + gap)
    top = max([r[metric] for r in summary] + [1e-9])
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
             f'<text x="10" y="20">{metric}</text>']
    for i, r in enumerate(summary):
        y = 30 + i * (bar + gap)
        w = 260 * r[metric] / top
        parts.append(f'<text x="10" y="{y + 15}">{r["task"]} / {r["scorer"]}</text>')
        parts.append(f'<rect x="230" y="{y}" width="{w:.2f}" height="{bar}" fill="#4a7ab5"/>')
        parts.append(f'<text x="{235 + w:.2f}" y="{y + 15}">{r[metric]:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def load_test_problems(store: ProblemStore, task: str, n: int | None = None) -> list:
    names = [x for x in store.names() if x.startswith(f"{task}-test")]
    return [store[x] for x in (names if n is None else names[:n])]
