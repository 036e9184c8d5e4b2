"""Batch-sorted planning loop with pluggable skeleton scorers.

Each outer iteration draws up to ``k`` fresh skeletons, scores them, drops
those below the threshold (unless every score is below it), sorts the rest by
descending score (ties: shorter first, then discovery order) and refines them
in that order. The first bound skeleton ends the run.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Problem, Skeleton
from .refine import RefinementBudget, refinement_seed, sample_plan
from .search import DEFAULT_DEPTH, SkeletonSearch
from .validate import validate_solution

THRESHOLD = 0.5


def key_text(key) -> str:
    return " ".join("(" + " ".join(t) + ")" for t in key)


# ---------------------------------------------------------------------------
# scorers

class Scorer:
    name = "scorer"
    # hard scorers never refine a skeleton scored below the threshold
    hard = False

    def scores(self, problem: Problem, skeletons: list, rng) -> list[float]:
        raise NotImplementedError


class Constant1(Scorer):
    """Baseline: every skeleton scores 1, so refinement order is by length."""

    name = "baseline"

    def scores(self, problem, skeletons, rng):
        return [1.0] * len(skeletons)


class LengthAscending(Scorer):
    name = "length"

    def scores(self, problem, skeletons, rng):
        return [1.0 / (1.0 + len(s)) for s in skeletons]


class Learned(Scorer):
    """Predicted feasibility from a trained FeasibilityClassifier."""

    name = "pigi"

    def __init__(self, classifier, tokenizer=None):
        from .predictor.tokenize import PlanTokenizer
        self.classifier = classifier
        self.tokenizer = tokenizer if tokenizer is not None else PlanTokenizer()

    def probabilities(self, problem, skeletons, rng) -> np.ndarray:
        tok = self.tokenizer
        seed = int(rng.integers(2**31)) if isinstance(rng, np.random.Generator) else int(rng)
        tok = type(tok)(**{**tok.get_params(), "seed": seed}).fit()
        X = tok.transform([(problem, s) for s in skeletons])
        return self.classifier.predict_proba(X)[:, 1]

    def scores(self, problem, skeletons, rng):
        return [float(p) for p in self.probabilities(problem, skeletons, rng)]


class LearnedBinary(Learned):
    """Learned probabilities rounded to 0/1 at ``threshold``."""

    name = "pigi-01"

    def __init__(self, classifier, tokenizer=None, threshold: float = THRESHOLD):
        super().__init__(classifier, tokenizer)
        self.threshold = threshold

    def scores(self, problem, skeletons, rng):
        return [1.0 if p >= self.threshold else 0.0 for p in self.probabilities(problem, skeletons, rng)]


class Oracle(Scorer):
    """Scores 1 exactly for skeletons logged as feasible for this problem."""

    name = "oracle"
    hard = True

    def __init__(self, feasible: dict):
        # problem name -> set of skeleton keys (tuples) known to bind
        self.feasible = {k: {tuple(map(tuple, key)) for key in v} for k, v in feasible.items()}

    def scores(self, problem, skeletons, rng):
        if problem.name not in self.feasible or not self.feasible[problem.name]:
            raise KeyError(f"oracle has no feasible skeleton logged for {problem.name}")
        known = self.feasible[problem.name]
        return [1.0 if s.key in known else 0.0 for s in skeletons]


def score_batch(scorer: Scorer, problem: Problem, skeletons: list, rng=0) -> list[tuple[float, Skeleton]]:
    if not skeletons:
        raise ValueError("empty batch")
    scores = scorer.scores(problem, skeletons, rng)
    return list(zip(scores, skeletons))


def select_order(scored: list, *, threshold: float = THRESHOLD, pseudocode: bool = False,
                 hard: bool = False) -> list[int]:
    """Indices of the batch to refine, in order.

    Default rule: keep scores >= threshold, or the whole batch if every score
    is below it. ``pseudocode`` keeps every strictly positive score instead.
    Hard scorers get no all-below exception.
    """
    scores = [s for s, _ in scored]
    if pseudocode:
        keep = [i for i, s in enumerate(scores) if s > 0]
    else:
        keep = [i for i, s in enumerate(scores) if s >= threshold]
        if not keep and not hard:
            keep = list(range(len(scores)))
    return sorted(keep, key=lambda i: (-scores[i], len(scored[i][1]), i))


# ---------------------------------------------------------------------------
# the loop

@dataclass
class PlannerRunRecord:
    problem: str
    scorer: str
    solved: bool = False
    reason: str = ""  # solved | timeout | no-skeleton
    wall_time: float = 0.0
    batches: int = 0
    skeletons: int = 0
    attempts: int = 0
    false_positives: int = 0
    samples: int = 0
    solution_key: str = ""
    scores: list = field(default_factory=list)  # [key text, score] per generated skeleton
    attempted: list = field(default_factory=list)  # key texts in refinement order

    def metrics(self) -> dict:
        """The deterministic part (everything except wall time)."""
        d = asdict(self)
        d.pop("wall_time")
        return d

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def batch_sorted_tamp(problem: Problem, scorer: Scorer, k: int = 50, timeout: float = 60.0, rng=0, *,
                      budget: RefinementBudget | None = None, depth: int = DEFAULT_DEPTH,
                      threshold: float = THRESHOLD, pseudocode: bool = False, validate: bool = True):
    """Run the planner; returns (solution or None, PlannerRunRecord)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    budget = budget or RefinementBudget()
    rec = PlannerRunRecord(problem.name, scorer.name)
    t0 = time.perf_counter()
    search = SkeletonSearch(problem, depth)

    def done(reason, solution=None):
        rec.reason = reason
        rec.solved = solution is not None
        rec.wall_time = time.perf_counter() - t0
        return solution, rec

    while True:
        if time.perf_counter() - t0 > timeout:
            return done("timeout")
        batch = search.batch(k)
        if not batch:
            return done("no-skeleton")
        rec.batches += 1
        rec.skeletons += len(batch)
        scored = score_batch(scorer, problem, batch, rng)
        rec.scores.extend([key_text(s.key), round(float(p), 12)] for p, s in scored)
        for i in select_order(scored, threshold=threshold, pseudocode=pseudocode, hard=scorer.hard):
            if time.perf_counter() - t0 > timeout:
                return done("timeout")
            sk = scored[i][1]
            rec.attempts += 1
            rec.attempted.append(key_text(sk.key))
            res = sample_plan(sk, problem, budget, refinement_seed(problem, sk))
            rec.samples += res.stats.samples
            if res.bound:
                if validate:
                    report = validate_solution(res.solution, problem)
                    if not report:
                        raise RuntimeError(f"refinement returned an invalid solution: {report}")
                rec.solution_key = key_text(sk.key)
                return done("solved", res.solution)
            rec.false_positives += 1
