import csv
import json
import os
from collections import defaultdict

import numpy as np
import pytest

from tamp2d import io as pio
from tamp2d.harness.ablation import (
    AblationConfig, MissingModelError, load_test_problems, make_scorer, run_ablation, summarize, write_outputs,
)
from tamp2d.harness.dataset import (
    DatasetManifest, ProblemStore, build_dataset, load_manifest, read_jsonl, split_of,
)
from tamp2d.harness.generate import TASKS, TaskSpec, generate_problem, sample_door_angle
from tamp2d.harness.loo import InsufficientInstancesError, audit_exclusion, category_of, leave_one_out
from tamp2d.harness.training import TrainOptions, train_from_dataset

SMALL = dict(seed=1, tasks=("one_container_pick", "two_container_in"), n_train=6, n_test=2, k=8)


def _build(out):
    m = DatasetManifest(out_dir=str(out), **SMALL)
    return m, build_dataset(m)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    m, summary = _build(out)
    return m, summary, str(out)


def _files(root):
    out = {}
    for d, _, fs in os.walk(root):
        for f in fs:
            p = os.path.join(d, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


# ---------------------------------------------------------------------------
# generation

def test_doors_closed_half_the_time():
    rng = np.random.default_rng(0)
    limit = 1.9
    a = np.array([sample_door_angle(rng, limit) for _ in range(10000)])
    closed = float(np.mean(a == 0.0))
    assert 0.48 <= closed <= 0.52
    opened = a[a > 0]
    assert opened.max() <= limit and opened.min() > 0
    # open angles are uniform on (0, limit]: compare quartiles
    assert np.allclose(np.quantile(opened, [0.25, 0.5, 0.75]) / limit, [0.25, 0.5, 0.75], atol=0.03)


def test_generated_doors_in_problems():
    rng = np.random.default_rng(5)
    angles = [c.angle for _ in range(300) for c in generate_problem(TASKS["two_container_pick"], rng).world.containers]
    assert 0.4 < np.mean(np.array(angles) == 0.0) < 0.6


def test_task_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec("x", 0)
    with pytest.raises(ValueError):
        TaskSpec("x", 1, goal="in-across")
    with pytest.raises(ValueError):
        DatasetManifest(split=1.0)
    with pytest.raises(ValueError):
        DatasetManifest(tasks=("nope",))


def test_stapler_task_goal_is_a_stapler():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = generate_problem(TASKS["stapler_in"], rng)
        item = next(iter(p.goal)).args[0].id
        assert p.world.item(item).model.startswith("stapler")


# ---------------------------------------------------------------------------
# datasets

def test_dataset_files_and_manifest(data):
    m, summary, out = data
    for f in ("train.jsonl", "val.jsonl", "test.jsonl", "generated.jsonl", "feasible.json", "manifest.json"):
        assert os.path.exists(os.path.join(out, f))
    back = load_manifest(out)
    assert back.seed == m.seed and back.tasks == m.tasks and back.k == m.k
    assert summary["problems"] == {"train": 10, "val": 2, "test": 4}


def test_split_is_by_problem(data):
    m, _, out = data
    where = defaultdict(set)
    for split in ("train", "val", "test"):
        for r in read_jsonl(os.path.join(out, f"{split}.jsonl")):
            where[r["problem"]].add(split)
            assert r["split"] == split
    assert all(len(s) == 1 for s in where.values())
    # 9:1 by problem: one val problem out of six per task
    for task in m.tasks:
        assert sum(split_of(m, task, i) == "val" for i in range(m.n_train)) == 1


def test_no_test_problem_in_training_files(data):
    _, _, out = data
    test_ids = {r["problem"] for r in read_jsonl(os.path.join(out, "test.jsonl"))}
    assert test_ids and all("-test" in t for t in test_ids)
    for split in ("train", "val"):
        with open(os.path.join(out, f"{split}.jsonl"), encoding="utf-8") as fh:
            text = fh.read()
        assert not any(t in text for t in test_ids)


def test_every_training_problem_has_a_positive(data):
    m, _, out = data
    by = defaultdict(list)
    for split in ("train", "val"):
        for r in read_jsonl(os.path.join(out, f"{split}.jsonl")):
            by[r["problem"]].append(r)
    for name, rows in by.items():
        assert any(r["label"] for r in rows), name
        assert [r["index"] for r in rows] == list(range(len(rows)))
        assert len(rows) <= m.k


def test_dataset_files_parse(data):
    _, _, out = data
    store = ProblemStore(os.path.join(out, "problems"))
    for name in store.names():
        p = store[name]
        assert p.world is not None
        skel = os.path.join(out, "problems", name + ".skel")
        if os.path.exists(skel):
            assert len(pio.read_skel_file(skel, p)) >= 1


def test_dataset_is_deterministic(data, tmp_path):
    _, _, out = data
    _build(tmp_path)
    a, b = _files(out), _files(tmp_path)
    a.pop("manifest.json"), b.pop("manifest.json")  # records its own out_dir
    assert a.keys() == b.keys() and a == b


# ---------------------------------------------------------------------------
# evaluation

def test_ablation_accounting(data, tmp_path):
    m, _, out = data
    store = ProblemStore(os.path.join(out, "problems"))
    with open(os.path.join(out, "feasible.json"), encoding="utf-8") as fh:
        feasible = json.load(fh)
    probs = {t: load_test_problems(store, t) for t in m.tasks}
    recs = run_ablation(m.tasks, ["baseline", "oracle"], probs, AblationConfig(k=8, timeout=60), feasible=feasible)
    paths = write_outputs(recs, str(tmp_path))
    runs = read_jsonl(paths["runs"])
    assert len(runs) == 2 * 4
    with open(paths["summary"], encoding="utf-8") as fh:
        summary = list(csv.DictReader(fh))
    for row in summary:
        rs = [r for r in runs if r["task"] == row["task"] and r["scorer"] == row["scorer"]]
        assert int(row["runs"]) == len(rs)
        assert int(row["solved"]) == sum(r["solved"] for r in rs)
        assert float(row["mean_false_positives"]) == pytest.approx(np.mean([r["false_positives"] for r in rs]))
        assert float(row["mean_attempts"]) == pytest.approx(np.mean([r["attempts"] for r in rs]))
    with open(paths["metrics"], encoding="utf-8") as fh:
        metrics = list(csv.DictReader(fh))
    for mrow, r in zip(metrics, runs):
        assert mrow["problem"] == r["problem"] and int(mrow["false_positives"]) == r["false_positives"]
    for r in runs:
        if r["scorer"] == "oracle":
            assert r["solved"] and r["false_positives"] == 0 and r["attempts"] == 1
    assert "wall_time" not in open(paths["metrics"], encoding="utf-8").readline()
    assert len(summarize(recs)) == len(summary) == 4


def test_missing_model_error():
    with pytest.raises(MissingModelError):
        make_scorer("pigi", None)
    with pytest.raises(MissingModelError):
        make_scorer("pigi-01", "/nonexistent/model.pigi")
    with pytest.raises(ValueError):
        make_scorer("oracle")
    with pytest.raises(ValueError):
        make_scorer("bogus")


def test_train_from_dataset_writes_model(data, tmp_path):
    _, _, out = data
    path = str(tmp_path / "m.pigi")
    opts = TrainOptions(epochs=2, d=8, layers=1, heads=1, ff=16)
    clf, report = train_from_dataset(out, path, opts)
    assert os.path.exists(path) and os.path.exists(str(tmp_path / "m_history.csv"))
    assert report["train_records"] > 0 and 0 <= report["val_acc"] <= 1
    scorer = make_scorer("pigi", path)
    assert scorer.tokenizer.get_params() == opts.tokenizer().get_params()


# ---------------------------------------------------------------------------
# leave-one-out

def test_category_and_insufficient_instances():
    assert category_of("food2") == ("food0", "food1", "food2", "food3")
    with pytest.raises(InsufficientInstancesError):
        leave_one_out("stapler0", DatasetManifest())
    with pytest.raises(ValueError):
        category_of("pizza")


def test_leave_one_out_excludes_instance(tmp_path):
    m = DatasetManifest(seed=2, tasks=("one_container_pick",), n_train=5, n_test=2, k=6, out_dir=str(tmp_path))
    rep = leave_one_out("food1", m, TrainOptions(epochs=2, d=8, layers=1, heads=1, ff=16))
    assert rep["audit_hits"] == 0
    assert 0 <= rep["seen_acc"] <= 1 and 0 <= rep["unseen_acc"] <= 1
    store = ProblemStore(os.path.join(str(tmp_path), "problems"))
    train_names = {r["problem"] for s in ("train", "val") for r in read_jsonl(tmp_path / f"{s}.jsonl")}
    assert audit_exclusion(store, sorted(train_names), "food1") == 0
    for name in store.names():
        if "-test" in name:
            p = store[name]
            assert p.world.item(next(iter(p.goal)).args[0].id).model == "food1"
