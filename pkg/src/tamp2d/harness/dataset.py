"""Problem sets and labelled skeleton datasets.

Every problem is generated from its own rng stream ``[seed, task index,
problem index, attempt]`` and labelled with the refinement seed derived from
(problem name, skeleton key), so a problem's files do not depend on which
other problems are built or on worker scheduling.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import io as pio
from ..core import Problem
from ..refine import RefinementBudget, refinement_seed, sample_plan
from ..search import DEFAULT_DEPTH, SkeletonSearch
from .generate import TASKS, GenerationError, TaskSpec, generate_problem

TASK_ORDER = tuple(TASKS)
MAX_REGEN = 100  # stapler_in worlds are feasible ~10% of the time


class LabelingError(RuntimeError):
    pass


@dataclass
class DatasetManifest:
    seed: int = 0
    tasks: tuple = ("two_container_in",)
    n_train: int = 500  # training problems per task (split 9:1 into train/val)
    n_test: int = 30
    k: int = 50
    samples: int = 30
    restarts: int = 10
    wall_clock: float = 20.0
    split: float = 0.9
    depth: int = DEFAULT_DEPTH
    exclude_models: tuple = ()
    require_model: str | None = None  # test problems only
    out_dir: str = "out"
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tasks = tuple(self.tasks)
        self.exclude_models = tuple(self.exclude_models)
        if not (0.0 < self.split < 1.0):
            raise ValueError("split ratio must lie in (0, 1)")
        for t in self.tasks:
            if t not in TASKS:
                raise ValueError(f"unknown task {t!r}")
        if self.k < 1 or self.n_train < 0 or self.n_test < 0:
            raise ValueError("k must be >= 1 and problem counts >= 0")

    @property
    def budget(self) -> RefinementBudget:
        return RefinementBudget(self.samples, self.restarts, self.wall_clock)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> DatasetManifest:
        return cls(**json.loads(text))


def problem_name(task: str, split: str, index: int) -> str:
    return f"{task}-{split}{index:04d}"


def _spec_for(manifest: DatasetManifest, task: str, split: str) -> TaskSpec:
    spec = TASKS[task]
    if manifest.exclude_models:
        spec = replace(spec, exclude_models=tuple(manifest.exclude_models))
    if split == "test" and manifest.require_model:
        spec = replace(spec, require_model=manifest.require_model, exclude_models=())
    return spec


@dataclass
class LabeledProblem:
    problem: Problem
    split: str  # train | val | test
    task: str
    attempts: int
    records: list  # one dict per labelled skeleton


def _record(j: int, sk, res) -> dict:
    return {
        "index": j,
        "key": [list(t) for t in sk.key],
        "skeleton": pio.serialize_skeleton(sk),
        "label": int(res.bound),
        "samples": res.stats.samples,
        "failures": dict(sorted(res.stats.failures.items())),
    }


def label_skeletons(problem: Problem, skeletons, budget: RefinementBudget, stop_at_first: bool = False,
                    known: list | None = None) -> list:
    """One record per skeleton; ``known`` records (same order) are reused, not relabelled."""
    out = []
    known = known or []
    for j, sk in enumerate(skeletons):
        if j < len(known):
            rec = known[j]
            if rec["key"] != [list(t) for t in sk.key]:
                raise LabelingError(f"{problem.name}: cached record {j} is for another skeleton")
        else:
            rec = _record(j, sk, sample_plan(sk, problem, budget, refinement_seed(problem, sk)))
        out.append(rec)
        if stop_at_first and rec["label"]:
            break
    return out


def build_problem(manifest: DatasetManifest, task: str, split: str, index: int) -> LabeledProblem:
    """Generate a problem whose first ``k`` skeletons include a feasible one.

    Labels are computed up to the first feasible skeleton only; see
    ``complete_labels`` for the rest.
    """
    ti = TASK_ORDER.index(task)
    spec = _spec_for(manifest, task, split)
    name = problem_name(task, "test" if split == "test" else "train", index)
    stream = 1 if split == "test" else 0
    for attempt in range(MAX_REGEN):
        rng = np.random.default_rng([manifest.seed, ti, stream, index, attempt])
        try:
            problem = generate_problem(spec, rng, name=name, world_file=name + ".world")
        except GenerationError:
            continue
        sks = SkeletonSearch(problem, manifest.depth).batch(manifest.k)
        recs = label_skeletons(problem, sks, manifest.budget, stop_at_first=True)
        if any(r["label"] for r in recs):
            return LabeledProblem(problem, split, task, attempt + 1, recs)
    raise LabelingError(f"{name}: no feasible skeleton among the first {manifest.k} after {MAX_REGEN} problems")


def complete_labels(manifest: DatasetManifest, problem: Problem, known: list | None = None) -> tuple[list, list]:
    """(skeletons, records) for all of the first ``k`` skeletons."""
    sks = SkeletonSearch(problem, manifest.depth).batch(manifest.k)
    return sks, label_skeletons(problem, sks, manifest.budget, known=known)


def _job(args):
    return build_problem(*args)


def _complete_job(args):
    manifest, lp = args
    if lp.split == "test":
        return lp, None
    sks, recs = complete_labels(manifest, lp.problem, lp.records)
    return LabeledProblem(lp.problem, lp.split, lp.task, lp.attempts, recs), sks


def split_of(manifest: DatasetManifest, task: str, index: int) -> str:
    """9:1 train/val assignment by problem, fixed by the manifest seed."""
    n = manifest.n_train
    n_val = max(1, int(round(n * (1.0 - manifest.split)))) if n >= 2 else 0
    perm = np.random.default_rng([manifest.seed, TASK_ORDER.index(task), 7]).permutation(n)
    val = set(int(i) for i in perm[:n_val])
    return "val" if index in val else "train"


def plan_jobs(manifest: DatasetManifest, which=("train", "test")) -> list:
    jobs = []
    for task in manifest.tasks:
        if "train" in which:
            for i in range(manifest.n_train):
                jobs.append((manifest, task, split_of(manifest, task, i), i))
        if "test" in which:
            for i in range(manifest.n_test):
                jobs.append((manifest, task, "test", i))
    return jobs


def run_jobs(fn, jobs, n_jobs: int = 1, log=None) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        out = []
        for j in jobs:
            out.append(fn(j))
            if log:
                log(out[-1])
        return out
    import multiprocessing as mp
    with mp.get_context("fork").Pool(n_jobs) as pool:
        out = []
        for r in pool.imap(fn, jobs):
            out.append(r)
            if log:
                log(r)
        return out


def _jsonl(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _paths(out: str) -> dict:
    return {
        "problems": os.path.join(out, "problems"),
        "generated": os.path.join(out, "generated.jsonl"),
        "feasible": os.path.join(out, "feasible.json"),
        "manifest": os.path.join(out, "manifest.json"),
        "train": os.path.join(out, "train.jsonl"),
        "val": os.path.join(out, "val.jsonl"),
        "test": os.path.join(out, "test.jsonl"),
    }


def write_problem_files(problem: Problem, problems_dir: str, skeletons=None) -> str:
    os.makedirs(problems_dir, exist_ok=True)
    path = os.path.join(problems_dir, problem.name + ".prob")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(pio.serialize_problem(problem))
    with open(os.path.join(problems_dir, problem.world_file), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(pio.serialize_world(problem.world))
    if skeletons is not None:
        pio.write_skel_file(os.path.join(problems_dir, problem.name + ".skel"), skeletons)
    return path


def generate_problems(manifest: DatasetManifest, n_jobs: int = 1, log=None) -> list:
    """The ``gen`` stage: feasibility-filtered problems plus their label prefixes."""
    paths = _paths(manifest.out_dir)
    os.makedirs(paths["problems"], exist_ok=True)
    results = run_jobs(_job, plan_jobs(manifest), n_jobs, log)
    for lp in results:
        write_problem_files(lp.problem, paths["problems"])
    _jsonl(paths["generated"], [
        {"problem": lp.problem.name, "task": lp.task, "split": lp.split, "attempts": lp.attempts,
         "records": lp.records} for lp in results
    ])
    feasible = {lp.problem.name: [r["key"] for r in lp.records if r["label"]] for lp in results}
    with open(paths["feasible"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(feasible, fh, sort_keys=True, indent=0)
        fh.write("\n")
    manifest.paths = paths
    with open(paths["manifest"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest.to_json() + "\n")
    return results


def read_generated(out_dir: str) -> list:
    store = ProblemStore(os.path.join(out_dir, "problems"))
    out = []
    for row in read_jsonl(_paths(out_dir)["generated"]):
        out.append(LabeledProblem(store[row["problem"]], row["split"], row["task"], row["attempts"], row["records"]))
    return out


def label_dataset(manifest: DatasetManifest, generated: list, n_jobs: int = 1, log=None) -> dict:
    """The ``skeletons`` stage: all ``k`` labels for train/val problems, JSON-lines out."""
    paths = _paths(manifest.out_dir)
    done = run_jobs(_complete_job, [(manifest, lp) for lp in generated], n_jobs, log)
    rows = {"train": [], "val": [], "test": []}
    summary = {"problems": {}, "records": {}, "positives": {}, "regenerated": 0}
    for lp, sks in done:
        if sks is not None:
            write_problem_files(lp.problem, paths["problems"], sks)
        summary["regenerated"] += lp.attempts - 1
        summary["problems"][lp.split] = summary["problems"].get(lp.split, 0) + 1
        for r in lp.records:
            rows[lp.split].append({"problem": lp.problem.name, "task": lp.task, "split": lp.split, **r})
            summary["records"][lp.split] = summary["records"].get(lp.split, 0) + 1
            summary["positives"][lp.split] = summary["positives"].get(lp.split, 0) + r["label"]
    for split in ("train", "val", "test"):
        _jsonl(paths[split], rows[split])
    summary["class_balance"] = {
        s: summary["positives"].get(s, 0) / max(1, summary["records"].get(s, 0)) for s in ("train", "val", "test")
    }
    return summary


def build_dataset(manifest: DatasetManifest, n_jobs: int = 1, log=None) -> dict:
    """``gen`` then ``skeletons`` in one call."""
    generated = generate_problems(manifest, n_jobs, log)
    return label_dataset(manifest, generated, n_jobs)


# ---------------------------------------------------------------------------
# reading back

def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class ProblemStore:
    """Lazy loader for ``problems/<name>.prob`` files."""

    def __init__(self, problems_dir: str):
        self.dir = problems_dir
        self._cache: dict = {}

    def __getitem__(self, name: str) -> Problem:
        if name not in self._cache:
            self._cache[name] = pio.load_problem(os.path.join(self.dir, name + ".prob"))
        return self._cache[name]

    def names(self) -> list[str]:
        return sorted(f[:-5] for f in os.listdir(self.dir) if f.endswith(".prob"))


def load_pairs(rows, store: ProblemStore) -> tuple[list, np.ndarray]:
    """(problem, skeleton) pairs and labels for dataset rows."""
    pairs, labels = [], []
    for r in rows:
        p = store[r["problem"]]
        pairs.append((p, pio.parse_skeleton(r["skeleton"], p)))
        labels.append(r["label"])
    return pairs, np.asarray(labels, dtype=int)


def load_manifest(out_dir: str) -> DatasetManifest:
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as fh:
        return DatasetManifest.from_json(fh.read())
