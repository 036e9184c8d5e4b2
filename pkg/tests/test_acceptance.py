"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``C<n> PASS|FAIL ...`` line. The two experiment
criteria (5 and 10) build real datasets and train full-size models; they take
several minutes each on one CPU.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from tamp2d.cli import main
from tamp2d.core import Category, Skeleton
from tamp2d.geometry import reach_exists_grid
from tamp2d.harness.ablation import AblationConfig, load_test_problems, run_ablation, summarize, write_outputs
from tamp2d.harness.dataset import DatasetManifest, ProblemStore, build_dataset, generate_problems
from tamp2d.harness.generate import TASKS, generate_problem
from tamp2d.harness.training import TrainOptions, train_from_dataset
from tamp2d.planner import batch_sorted_tamp, select_order
from tamp2d.predictor import ModelConfig, fuse_token, init_model, tokenize
from tamp2d.predictor.gradcheck import check_gradients, random_instance
from tamp2d.predictor.model import sinusoidal_pe
from tamp2d.predictor.tokenize import ACTION, GOAL
from tamp2d.refine import RefinementBudget, refinement_seed, sample_plan
from tamp2d.search import SkeletonSearch, batch_skeletons
from tamp2d.validate import validate_solution

from conftest import generated, toy_problems
from oracles import brute_force_plans


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nC{n} {'PASS' if ok else 'FAIL'} {detail}")


# ---------------------------------------------------------------------------

def test_c1_gradient_oracle(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        model, seqs, y = random_instance(seed, d=8, layers=1, heads=1)
        errs = check_gradients(model, seqs, y, h=1e-4)
        worst = max(worst, max(errs.values()))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 60
    report(capsys, 1, ok, f"max rel err {worst:.2e} over 20 models, {dt:.1f}s")
    assert ok


def test_c2_diverse_search_oracle(capsys):
    t0 = time.perf_counter()
    bad = []
    sizes = []
    for p in toy_problems():
        oracle = brute_force_plans(p, 6)
        sizes.append(len(oracle))
        keys = [s.key for s in batch_skeletons(p, 1000, depth=6)[0]]
        if len(keys) != len(set(keys)) or set(keys) != oracle or len(oracle) > 200:
            bad.append(p.name)
    dt = time.perf_counter() - t0
    ok = not bad and dt < 60 and len(sizes) == 10
    report(capsys, 2, ok, f"10 toys, plan sets {sizes}, mismatches {bad}, {dt:.1f}s")
    assert ok


def _direct_pick(problem, item):
    for sk in batch_skeletons(problem, 6)[0]:
        if sk.key == (("move",), ("pick", item)):
            return sk
    return None


def test_c3_refinement_soundness(capsys):
    calls = bound = invalid = 0
    tasks = list(TASKS)
    seed = 0
    while calls < 500:
        p = generated(tasks[seed % len(tasks)], 1000 + seed)
        for sk in batch_skeletons(p, 10)[0]:
            r = sample_plan(sk, p, RefinementBudget(), refinement_seed(p, sk))
            calls += 1
            if r.bound:
                bound += 1
                invalid += not validate_solution(r.solution, p)
        seed += 1
    # instances the grid oracle proves infeasible: a direct pick of an item behind a closed door
    certified = certified_bound = 0
    seed = 0
    while certified < 12 and seed < 200:
        p = generated("one_container_pick" if seed % 2 else "two_container_pick", 2000 + seed)
        seed += 1
        item = next(iter(p.goal)).args[0].id
        it = p.world.item(item)
        if all(c.angle > 0 for c in p.world.containers):
            continue
        if reach_exists_grid(p.world, it.pose[:2], it.radius, ignore=(item,)):
            continue
        sk = _direct_pick(p, item)
        if sk is None:
            continue
        certified += 1
        calls += 1
        certified_bound += sample_plan(sk, p, RefinementBudget(), refinement_seed(p, sk)).bound
    ok = calls >= 500 and invalid == 0 and bound > 0 and certified >= 10 and certified_bound == 0
    report(capsys, 3, ok, f"{calls} refinements, {bound} bound, {invalid} invalid; "
                          f"{certified} grid-certified infeasible, {certified_bound} bound")
    assert ok


@pytest.fixture(scope="module")
def c4_data(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c4"))
    m = DatasetManifest(seed=4, tasks=tuple(TASKS), n_train=0, n_test=30, k=50, out_dir=out)
    generate_problems(m)
    return m, out


def test_c4_oracle_exactness(capsys, c4_data):
    m, out = c4_data
    store = ProblemStore(os.path.join(out, "problems"))
    with open(os.path.join(out, "feasible.json"), encoding="utf-8") as fh:
        feasible = json.load(fh)
    probs = {t: load_test_problems(store, t) for t in m.tasks}
    recs = run_ablation(m.tasks, ["oracle"], probs, AblationConfig(k=50, timeout=120), feasible=feasible)
    per_task = {t: [r for r in recs if r["task"] == t] for t in m.tasks}
    counts = {t: len(rs) for t, rs in per_task.items()}
    wrong = [r["problem"] for r in recs if not (r["solved"] and r["attempts"] == 1)]
    ok = all(n == 30 for n in counts.values()) and not wrong
    report(capsys, 4, ok, f"oracle runs per task {counts}, problems with attempts != 1: {wrong}")
    assert ok


# ---------------------------------------------------------------------------
# the two experiments

def _experiment(out, train_task, test_task, n_train=60, k=30, epochs=60):
    """Build, train on ``train_task``, evaluate every scorer on 30 ``test_task`` problems."""
    t0 = time.perf_counter()
    m = DatasetManifest(seed=0, tasks=(train_task,), n_train=n_train, n_test=30 if test_task == train_task else 0,
                        k=k, out_dir=os.path.join(out, "train"))
    build_dataset(m)
    model = os.path.join(out, "model.pigi")
    _, rep = train_from_dataset(m.out_dir, model, TrainOptions(epochs=epochs))
    test_dir = m.out_dir
    if test_task != train_task:
        mt = DatasetManifest(seed=0, tasks=(test_task,), n_train=0, n_test=30, k=k, out_dir=os.path.join(out, "test"))
        generate_problems(mt)
        test_dir = mt.out_dir
    store = ProblemStore(os.path.join(test_dir, "problems"))
    with open(os.path.join(test_dir, "feasible.json"), encoding="utf-8") as fh:
        feasible = json.load(fh)
    probs = {test_task: load_test_problems(store, test_task)}
    recs = run_ablation([test_task], ["baseline", "pigi", "pigi-01", "oracle"], probs, AblationConfig(k=k),
                        model_paths={"*": model}, feasible=feasible)
    write_outputs(recs, os.path.join(out, "eval"))
    summary = {r["scorer"]: r for r in summarize(recs)}
    return rep, summary, time.perf_counter() - t0


def test_c5_false_positive_reduction(capsys, tmp_path):
    rep, s, dt = _experiment(str(tmp_path), "two_container_in", "two_container_in")
    gate = rep["val_acc"] >= 0.8
    base, pigi = s["baseline"]["mean_false_positives"], s["pigi"]["mean_false_positives"]
    ok = gate and s["pigi"]["runs"] >= 30 and pigi <= 0.5 * base and dt < 1800
    report(capsys, 5, ok, f"val acc {rep['val_acc']:.3f} (majority {rep['val_majority_acc']:.3f}); "
                          f"mean FP baseline {base:.2f}, pigi {pigi:.2f}, pigi-01 "
                          f"{s['pigi-01']['mean_false_positives']:.2f}, oracle {s['oracle']['mean_false_positives']:.2f}; "
                          f"{s['pigi']['runs']} problems, {dt / 60:.1f} min")
    assert ok


def test_c10_zero_shot_staplers(capsys, tmp_path):
    rep, s, dt = _experiment(str(tmp_path), "one_container_table_in", "stapler_in")
    base, pigi = s["baseline"]["mean_false_positives"], s["pigi"]["mean_false_positives"]
    ok = pigi <= base and s["pigi"]["runs"] == 30
    report(capsys, 10, ok, f"trained on food items (val acc {rep['val_acc']:.3f}); stapler_in mean FP baseline "
                           f"{base:.2f}, pigi {pigi:.2f}, pigi-01 {s['pigi-01']['mean_false_positives']:.2f}; "
                           f"solved {s['baseline']['solved']}/{s['pigi']['solved']} of 30, {dt / 60:.1f} min")
    assert ok


# ---------------------------------------------------------------------------

class _Fixed:
    name = "fixed"
    hard = False

    def __init__(self, scores):
        self.scores_ = scores
        self.calls = 0

    def scores(self, problem, skeletons, rng):
        self.calls += 1
        if self.calls == 1:
            return list(self.scores_[:len(skeletons)])
        return [0.0] * len(skeletons)


def test_c6_threshold_semantics(capsys):
    t0 = time.perf_counter()
    fake = [Skeleton(tuple(range(n))) for n in (2, 4, 4, 6, 2)]
    below = select_order(list(zip([0.1, 0.3, 0.49, 0.0, 0.2], fake)))
    mixed = select_order(list(zip([0.3, 0.9, 0.5, 0.1, 0.7], fake)))
    unit_ok = len(below) == 5 and mixed == [1, 4, 2]
    # through the planner on a real batch
    p = generated("one_container_pick", 3)
    sks = SkeletonSearch(p).batch(4)
    scores = [0.2, 0.6, 0.3, 0.8]
    _, rec = batch_sorted_tamp(p, _Fixed(scores), k=4, timeout=30)
    want = [" ".join("(" + " ".join(t) + ")" for t in sks[i].key) for i in (3, 1)]
    n = min(2, rec.attempts)
    run_ok = rec.attempts >= 1 and rec.attempted[:n] == want[:n]
    # all below threshold: still refines
    _, rec2 = batch_sorted_tamp(p, _Fixed([0.1, 0.2, 0.3, 0.4]), k=4, timeout=30)
    dt = time.perf_counter() - t0
    ok = unit_ok and run_ok and rec2.attempts >= 1 and dt < 1.0
    report(capsys, 6, ok, f"all-below order {below}, mixed order {mixed}, planner attempted "
                          f"{rec.attempts}/{rec2.attempts}, {dt:.2f}s")
    assert ok


def _embed_ref(token, P):
    out = []
    for e in token.elements:
        if e.kind == "name":
            out.append(P["name_emb"][e.index])
        elif e.kind == "object":
            out.append(np.maximum(np.asarray(e.feature) @ P["obj_W"] + P["obj_b"], 0) + P["ident_emb"][e.index])
        else:
            out.append(np.maximum(np.asarray(e.feature) @ P["val_W"] + P["val_b"], 0))
    pe = (sinusoidal_pe(token.position, P["obj_b"].shape[0]) if token.kind == ACTION
          else P["pe_goal"] if token.kind == GOAL else P["pe_init"])
    return np.mean(out, axis=0) + pe


def test_c7_tokenizer_contract(capsys):
    rng = np.random.default_rng(7)
    model = init_model(ModelConfig(d=16, layers=1, heads=2, ff=32), 0)
    tasks = list(TASKS)
    too_long = dropped = 0
    fuse_err = 0.0
    truncated = []
    for i in range(1000):
        p = generate_problem(TASKS[tasks[i % 5]], rng, name=f"c7-{i}")
        sks = SkeletonSearch(p).batch(3)
        sk = sks[int(rng.integers(len(sks)))]
        s = tokenize(p, sk, rng)
        too_long += len(s) > 32
        dropped += s.n_actions != len(sk) or s.n_goal != len(p.goal)
        dropped += s.n_init != min(len(p.init), 32 - len(sk) - len(p.goal))
        for t in s.tokens:
            fuse_err = max(fuse_err, float(np.abs(fuse_token(t, model) - _embed_ref(t, model.params)).max()))
        if s.n_init < s.n_init_total and len(truncated) < 3:
            truncated.append((p, sk))
    # keep frequencies: each init literal survives with probability room / total
    worst_z = 0.0
    for p, sk in truncated:
        counts = {}
        n = 2000
        for seed in range(n):
            s = tokenize(p, sk, seed)
            for t in s.tokens[s.n_actions + s.n_goal:]:
                counts[t.text] = counts.get(t.text, 0) + 1
        q = s.n_init / s.n_init_total
        sd = math.sqrt(q * (1 - q) / n)
        freq = np.array([counts.get(repr(l), 0) for l in p.init]) / n
        worst_z = max(worst_z, float(np.abs(freq - q).max() / sd))
    ok = too_long == 0 and dropped == 0 and fuse_err < 1e-12 and len(truncated) == 3 and worst_z < 5
    report(capsys, 7, ok, f"1000 problems: {too_long} over 32, {dropped} dropped action/goal tokens, "
                          f"fuse max err {fuse_err:.1e}, truncation max |z| {worst_z:.2f} on 3 problems")
    assert ok


def test_c8_door_statistics(capsys):
    rng = np.random.default_rng(8)
    angles = []
    while len(angles) < 10000:
        p = generate_problem(TASKS["two_container_pick"], rng)
        angles.extend(c.angle for c in p.world.containers)
    a = np.array(angles[:10000])
    frac = float(np.mean(a == 0.0))
    ok = 0.48 <= frac <= 0.52
    report(capsys, 8, ok, f"closed fraction {frac:.4f} over 10000 generated doors")
    assert ok


def _snapshot(root):
    out = {}
    for d, _, fs in os.walk(root):
        for f in fs:
            rel = os.path.relpath(os.path.join(d, f), root)
            if f.startswith("timing"):
                continue  # wall times are not part of the deterministic output
            with open(os.path.join(d, f), "rb") as fh:
                data = fh.read()
            if f == "manifest.json":
                data = data.replace(root.encode(), b"<out>")
            out[rel] = data
    return out


def test_c9_determinism(capsys, tmp_path):
    snaps = []
    for run in ("a", "b"):
        out = str(tmp_path / run)
        codes = [
            main(["gen", "--seed", "9", "--out-dir", out, "--tasks", "one_container_pick,two_container_in",
                  "--n-train", "8", "--n-test", "3", "--k", "10"]),
            main(["skeletons", "--out-dir", out]),
            main(["train", "--seed", "9", "--out-dir", out, "--epochs", "5", "--d", "16", "--layers", "1"]),
            main(["eval", "--seed", "9", "--out-dir", out, "--tasks", "one_container_pick,two_container_in",
                  "--k", "10", "--scorers", "baseline,length,pigi,pigi-01,oracle"]),
        ]
        assert codes == [0, 0, 0, 0]
        snaps.append(_snapshot(out))
    a, b = snaps
    diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = not diff and "eval/metrics.csv" in a and "train.jsonl" in a
    report(capsys, 9, ok, f"{len(a)} files compared across two runs, differing: {diff}")
    assert ok
