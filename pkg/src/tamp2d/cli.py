"""Command-line entry point: ``tamp2d <command> [options]``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 a run in which
most planner calls timed out.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .sexpr import ParseError

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME, EXIT_TIMEOUT = 0, 1, 2, 3
log = logging.getLogger("tamp2d")


class InputError(Exception):
    pass


def read_config(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Values stay strings."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _csv_list(s):
    return tuple(x.strip() for x in str(s).split(",") if x.strip())


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


# ---------------------------------------------------------------------------
# commands

def _manifest(args):
    from .harness.dataset import DatasetManifest
    return DatasetManifest(seed=args.seed, tasks=args.tasks, n_train=args.n_train, n_test=args.n_test, k=args.k,
                           samples=args.samples, restarts=args.restarts, wall_clock=args.wall_clock,
                           out_dir=args.out_dir)


def cmd_gen(args) -> int:
    from .harness.dataset import generate_problems
    m = _manifest(args)
    res = generate_problems(m, args.jobs, lambda lp: log.info("generated %s (%s, %d tries)",
                                                                 lp.problem.name, lp.split, lp.attempts))
    print(f"wrote {len(res)} problems to {os.path.join(m.out_dir, 'problems')}")
    return EXIT_OK


def cmd_skeletons(args) -> int:
    from .harness.dataset import label_dataset, load_manifest, read_generated
    try:
        m = load_manifest(args.out_dir)
    except FileNotFoundError:
        raise InputError(f"{args.out_dir} has no manifest.json; run gen first") from None
    gen = read_generated(args.out_dir)
    summary = label_dataset(m, gen, args.jobs, lambda r: log.info("labelled %s", r[0].problem.name))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _train_options(args):
    from .harness.training import TrainOptions
    return TrainOptions(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, d=args.d, layers=args.layers,
                        heads=args.heads, ff=args.ff, seed=args.seed, class_weight=args.class_weight,
                        object_features=not args.no_object_features, values=args.values,
                        name_mode=args.name_embedding, include_init=not args.no_init)


def cmd_train(args) -> int:
    from .harness.training import train_from_dataset
    if not os.path.exists(os.path.join(args.out_dir, "train.jsonl")):
        raise InputError(f"{args.out_dir} has no train.jsonl; run skeletons first")
    path = args.model or os.path.join(args.out_dir, "model.pigi")
    tasks = set(args.tasks) if args.tasks else None
    _, report = train_from_dataset(args.out_dir, path, _train_options(args), tasks,
                                   log=lambda e: log.info("epoch %d loss %.4f acc %.3f val %s", e.epoch,
                                                          e.train_loss, e.train_acc, e.val_acc))
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness.ablation import AblationConfig, load_test_problems, run_ablation, write_outputs
    from .harness.dataset import ProblemStore
    pdir = os.path.join(args.out_dir, "problems")
    if not os.path.isdir(pdir):
        raise InputError(f"{args.out_dir} has no problems/; run gen first")
    store = ProblemStore(pdir)
    tasks = args.tasks
    problems = {t: load_test_problems(store, t, args.n) for t in tasks}
    if not any(problems.values()):
        raise InputError("no test problems found; run gen first")
    feasible = None
    fpath = os.path.join(args.out_dir, "feasible.json")
    if os.path.exists(fpath):
        with open(fpath, encoding="utf-8") as fh:
            feasible = json.load(fh)
    model = args.model or os.path.join(args.out_dir, "model.pigi")
    cfg = AblationConfig(k=args.k, timeout=args.timeout, seed=args.seed, samples=args.samples,
                         restarts=args.restarts, wall_clock=args.wall_clock, pseudocode=args.pseudocode)
    recs = run_ablation(tasks, args.scorers, problems, cfg, model_paths={"*": model}, feasible=feasible,
                        log=lambda r: log.info("%s %s solved=%s fp=%d", r["scorer"], r["problem"], r["solved"],
                                               r["false_positives"]))
    paths = write_outputs(recs, os.path.join(args.out_dir, args.eval_dir))
    with open(paths["summary"], encoding="utf-8") as fh:
        print(fh.read(), end="")
    timeouts = sum(r["reason"] == "timeout" for r in recs)
    return EXIT_TIMEOUT if recs and timeouts * 2 > len(recs) else EXIT_OK


def cmd_loo(args) -> int:
    from .harness.loo import leave_one_out
    m = _manifest(args)
    report = leave_one_out(args.held_out, m, _train_options(args), args.jobs)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_validate(args) -> int:
    from . import io as pio
    from .validate import validate_solution
    try:
        problem = pio.load_problem(args.problem)
        with open(args.solution, "rb") as fh:
            sol = pio.parse_solution(fh.read(), problem, args.solution)
    except OSError as exc:
        raise InputError(str(exc)) from None
    report = validate_solution(sol, problem)
    print(report)
    return EXIT_OK if report else EXIT_INPUT


def cmd_plan(args) -> int:
    from . import io as pio
    from .harness.ablation import make_scorer
    from .planner import batch_sorted_tamp
    from .refine import RefinementBudget
    try:
        problem = pio.load_problem(args.problem)
    except OSError as exc:
        raise InputError(str(exc)) from None
    scorer = make_scorer(args.scorer, args.model)
    sol, rec = batch_sorted_tamp(problem, scorer, args.k, args.timeout, args.seed,
                                 budget=RefinementBudget(args.samples, args.restarts, args.wall_clock))
    print(rec.to_json())
    if sol is None:
        return EXIT_TIMEOUT if rec.reason == "timeout" else EXIT_RUNTIME
    out = args.output or os.path.splitext(args.problem)[0] + ".sol"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(pio.serialize_solution(problem, sol))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_dataset_args(p):
    p.add_argument("--tasks", type=_csv_list, default=("two_container_in",), help="comma-separated task names")
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-test", type=int, default=30)
    p.add_argument("--k", type=int, default=50, help="skeletons per problem")


def _add_budget_args(p):
    p.add_argument("--samples", type=int, default=30, help="draws per variable per attempt")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--wall-clock", type=float, default=20.0, help="seconds per refinement")


def _add_train_args(p):
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--ff", type=int, default=64)
    p.add_argument("--class-weight", choices=("balanced",), default=None)
    p.add_argument("--no-object-features", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--values", choices=("all", "none", "no-poses", "no-angles"), default="all")
    p.add_argument("--name-embedding", choices=("learned", "onehot"), default="learned")
    p.add_argument("--no-init", type=_bool, nargs="?", const=True, default=False)


def build_parser() -> argparse.ArgumentParser:
    def globals_(suppress: bool):
        # flags may come before or after the command; the subcommand copy must
        # not overwrite a value given earlier with its default
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=d(0))
        g.add_argument("--out-dir", default=d("out"))
        g.add_argument("--config", default=d(None), help="key = value file; command-line flags win")
        g.add_argument("--jobs", type=int, default=d(1))
        g.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return g

    common = globals_(True)
    ap = argparse.ArgumentParser(prog="tamp2d", description=__doc__.splitlines()[0], parents=[globals_(False)])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate feasibility-filtered problems")
    _add_dataset_args(p)
    _add_budget_args(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("skeletons", parents=[common], help="enumerate and label skeletons for generated problems")
    p.set_defaults(func=cmd_skeletons)

    p = sub.add_parser("train", parents=[common], help="train the feasibility predictor")
    p.add_argument("--tasks", type=_csv_list, default=None, help="train on these tasks only")
    p.add_argument("--model", help="output model path (default OUT_DIR/model.pigi)")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="planner ablations on test problems")
    p.add_argument("--tasks", type=_csv_list, default=("two_container_in",))
    p.add_argument("--scorers", type=_csv_list, default=("baseline", "pigi", "pigi-01", "oracle"))
    p.add_argument("--model")
    p.add_argument("--n", type=int, default=None, help="first N test problems per task")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--pseudocode", type=_bool, nargs="?", const=True, default=False,
                   help="keep every positive score instead of applying the 0.5 threshold")
    p.add_argument("--eval-dir", default="eval")
    _add_budget_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loo", parents=[common], help="leave one item variant out")
    p.add_argument("--held-out", required=True)
    _add_dataset_args(p)
    _add_budget_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("validate", parents=[common], help="re-check a solution file")
    p.add_argument("problem")
    p.add_argument("solution")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", parents=[common], help="solve one problem file")
    p.add_argument("problem")
    p.add_argument("--scorer", default="baseline")
    p.add_argument("--model")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("-o", "--output")
    _add_budget_args(p)
    p.set_defaults(func=cmd_plan)
    return ap


def _apply_config(ap, argv):
    """Re-parse with config values as defaults so explicit flags still win."""
    args = ap.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    sub = ap._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    top = {a.dest for a in ap._actions}
    for k, v in cfg.items():
        if k not in known or k in ("config", "help", "func"):
            raise InputError(f"{args.config}: unknown key {k!r} for {args.command}")
        act = known[k]
        if act.nargs == 0:  # store_true flags
            try:
                v = _bool(v)
            except argparse.ArgumentTypeError as exc:
                raise InputError(f"{args.config}: bad value for {k}: {exc}") from None
        elif act.type is not None:
            try:
                v = act.type(v)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InputError(f"{args.config}: bad value for {k}: {exc}") from None
        if act.choices is not None and v not in act.choices:
            raise InputError(f"{args.config}: {k} must be one of {sorted(act.choices)}")
        (ap if k in top else sub).set_defaults(**{k: v})
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INPUT if exc.code else EXIT_OK
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from .harness.ablation import MissingModelError
    from .harness.generate import GenerationError
    from .predictor.serialize import ModelFileError
    try:
        return args.func(args)
    except (InputError, ParseError, MissingModelError, ModelFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GenerationError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
