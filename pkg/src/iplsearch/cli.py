"""Command line entry point.

Exit codes: 0 success, 1 negative verdict (not proven, rejected proof),
2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import augment as aug
from . import generator as gen
from . import pipeline as pl
from .calculus import Verdict, check_proof, decide, parse_proof, serialize_proof
from .search import SearchConfig, State, ValuePolicy, greedy_dfs, naive_greedy_policy, run_episode
from .syntax import ParseError, goal_sequent, parse_formula, parse_sequent
from .valuemodel import ModelFileError, TrainConfig, load_params, save_params, train

log = logging.getLogger("iplsearch")


class UsageError(Exception):
    pass


def _goal(text: str):
    """A goal given inline or as the path of a file holding one formula or sequent."""
    path = Path(text)
    if "|-" not in text and path.is_file():
        lines = [l.strip() for l in path.read_text().splitlines()]
        lines = [l for l in lines if l and not l.startswith("#")]
        if len(lines) != 1:
            raise UsageError(f"goal file {text} must hold exactly one formula or sequent")
        text = lines[0]
    try:
        return parse_sequent(text) if "|-" in text else goal_sequent(parse_formula(text))
    except ParseError as e:
        raise UsageError(f"cannot parse goal {text!r}: {e}") from e


def _search_cfg(args, backtracking: bool) -> SearchConfig:
    return SearchConfig(gamma=args.gamma, step_limit=args.step_limit,
                        time_limit=getattr(args, "time_limit", None), backtracking=backtracking)


def _model(path: str):
    try:
        return load_params(path)
    except (OSError, ModelFileError) as e:
        raise UsageError(f"--model {path}: {e}") from e


def _pair(text: str, flag: str) -> tuple[int, int]:
    try:
        parts = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag} expects LO,HI integers, got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise UsageError(f"{flag} expects LO,HI, got {text!r}")
    return parts[0], parts[1]


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    cfg = gen.PRESETS[args.preset]
    n_range = _pair(args.n_range, "--n-range") if args.n_range else cfg.n_range
    m_range = _pair(args.m_range, "--m-range") if args.m_range else cfg.m_range
    try:
        cfg = gen.GeneratorConfig(n_range, m_range, args.alpha, args.budget, args.max_attempts)
    except ValueError as e:
        raise UsageError(str(e)) from e
    lib, stats = gen.build_library(args.count, cfg, np.random.default_rng(args.seed))
    gen.write_library(args.out, lib, gen.library_header(cfg, args.seed, args.count))
    log.info("library: %s", stats)
    return 0


def _labeler(args):
    cfg = _search_cfg(args, False)
    if args.policy == "pi0":
        return aug.naive_labeler(cfg)
    return aug.value_labeler(_model(args.policy), cfg)


def cmd_augment(args) -> int:
    lib = gen.read_library(args.library)
    cfg = aug.AugmentConfig(args.n_ge2, args.n_eq1, _search_cfg(args, False))
    if args.no_augmentation:
        data = aug.rollout_dataset(lib, _labeler(args))
    else:
        data = aug.build_dataset(lib, _labeler(args), cfg)
    aug.write_dataset(args.out, data)
    log.info("dataset: %d examples from %d theorems", len(data), len({e.origin for e in data}))
    return 0


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                       hidden=args.hidden, steps=args.steps, seed=args.seed)


def cmd_train(args) -> int:
    data = aug.read_dataset(args.data)
    tr, va, te = aug.split_dataset(data, args.seed)
    res = train(args.kind, tr, va, te, _train_cfg(args),
                log=lambda row: log.info("epoch %(epoch)d train %(train_mse).5f val %(val_mse).5f "
                                         "test %(test_mse).5f", row))
    save_params(res.params, args.out)
    if args.metrics:
        with open(args.metrics, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mse", "val_mse", "test_mse"])
            for row in res.history:
                w.writerow([row["epoch"]] + [f"{row[k]:.17g}" for k in ("train_mse", "val_mse", "test_mse")])
    print(f"test_mse {res.test_mse:.17g} constant_test_mse {res.constant_test_mse:.17g}")
    return 0


def cmd_api(args) -> int:
    lib = gen.read_library(args.library)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = pl.ApiConfig(args.iterations, args.kind, aug.AugmentConfig(args.n_ge2, args.n_eq1),
                       _train_cfg(args), _search_cfg(args, False), not args.no_augmentation,
                       args.seed)
    cfg.augment.search = cfg.search
    res = pl.api_iterate(lib, cfg)
    for i, params in enumerate(res.models, 1):
        save_params(params, out / f"model_{i}.npz")
    pl.write_api_log(out / "api_log.csv", res.rows)
    for r in res.rows:
        print(f"iteration {r.iteration} solve_rate {r.solve_rate:.4f}")
    return 0


def cmd_prove(args) -> int:
    goal = _goal(args.goal)
    if args.model == "pi0":
        model = pl.pi0_model()
    else:
        model = _model(args.model)
        if args.format and getattr(model, "fmt", args.format) != args.format:
            raise UsageError(f"--format {args.format}: model file uses {model.kind}")
    t0 = time.perf_counter()
    if args.no_backtracking:
        policy = naive_greedy_policy if args.model == "pi0" else ValuePolicy(model)
        ep = run_episode(State((goal,)), policy, _search_cfg(args, False))
        proved, proof, steps = ep.proved, ep.proof, ep.steps
    else:
        res = greedy_dfs(goal, model, _search_cfg(args, True))
        proved, proof, steps = res.proved, res.proof, res.steps
    elapsed = time.perf_counter() - t0
    if not proved:
        print(f"not proven steps {steps} seconds {elapsed:.3f}")
        return 1
    if not check_proof(proof, goal):
        log.error("internal error: emitted proof fails the checker")
        return 1
    print(f"proven steps {steps} seconds {elapsed:.3f}")
    _emit_proof(args, proof)
    return 0


def _emit_proof(args, proof) -> None:
    text = serialize_proof(proof)
    if args.proof_out:
        Path(args.proof_out).write_text(text)
        print(f"certificate {args.proof_out}")
    else:
        sys.stdout.write(text)


def cmd_decide(args) -> int:
    goal = _goal(args.goal)
    d = decide(goal, args.budget)
    print(d.verdict.value)
    if d.verdict is Verdict.PROVABLE:
        _emit_proof(args, d.proof)
        return 0
    return 1


def cmd_check(args) -> int:
    goal = _goal(args.goal)
    try:
        tree = parse_proof(Path(args.proof).read_text())
    except OSError as e:
        raise UsageError(f"cannot read {args.proof}: {e}") from e
    except ValueError as e:
        print(f"rejected at path (): malformed certificate: {e}")
        return 1
    res = check_proof(tree, goal)
    if res:
        print("ok")
        return 0
    path = ".".join(str(k) for k in res.path)
    print(f"rejected at path ({path}): {res.reason}")
    return 1


def cmd_bench(args) -> int:
    exam = gen.read_library(args.exam)
    provers = []
    for item in args.provers.split(","):
        name, _, path = item.partition("=")
        if name == "pi0" and not path:
            provers.append(("pi0", pl.pi0_model()))
        elif path:
            provers.append((name, _model(path)))
        elif args.model:
            provers.append((name, _model(args.model)))
        else:
            raise UsageError(f"--provers: {name!r} needs NAME=MODEL or --model")
    try:
        limits = [float(x) for x in args.time_limits.split(",")]
    except ValueError:
        raise UsageError(f"--time-limits expects numbers, got {args.time_limits!r}") from None
    if args.mode == "steps":
        limits = [int(x) for x in limits]
    res = pl.benchmark(provers, exam, limits, args.mode)
    for p in pl.write_bench(args.out, res):
        log.info("wrote %s", p)
    for p, lim, rate in res.aggregate():
        print(f"{p}\t{lim}\t{rate:.4f}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--gamma", type=float, default=argparse.SUPPRESS, help="discount (default 0.95)")
    common.add_argument("--log-level", default=argparse.SUPPRESS, help="logging level (default INFO)")

    p = argparse.ArgumentParser(prog="iplsearch", parents=[common],
                                description="Value-guided proof search for intuitionistic propositional logic")
    sub = p.add_subparsers(dest="command", required=True)

    def search_flags(sp):
        sp.add_argument("--step-limit", type=int, default=10_000)

    def train_flags(sp):
        sp.add_argument("--kind", choices=["bow", "gnn-vm", "gnn-tm"], default="gnn-tm")
        sp.add_argument("--epochs", type=int, default=10)
        sp.add_argument("--lr", type=float, default=1e-3)
        sp.add_argument("--batch-size", type=int, default=32)
        sp.add_argument("--hidden", type=int, default=16)
        sp.add_argument("--steps", type=int, default=6, help="propagation steps T")

    s = sub.add_parser("gen", parents=[common], help="generate a theorem library")
    s.add_argument("--count", type=int, default=50)
    s.add_argument("--preset", choices=sorted(gen.PRESETS), default="desk-train")
    s.add_argument("--n-range", help="LO,HI desired length")
    s.add_argument("--m-range", help="LO,HI number of variables")
    s.add_argument("--alpha", type=float, default=3.0)
    s.add_argument("--budget", type=int, default=200_000, help="decision procedure budget")
    s.add_argument("--max-attempts", type=int, default=100_000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("augment", parents=[common], help="build a labelled dataset")
    s.add_argument("--library", required=True)
    s.add_argument("--policy", default="pi0", help="pi0 or a model file")
    s.add_argument("--n-ge2", type=int, default=1000)
    s.add_argument("--n-eq1", type=int, default=100)
    s.add_argument("--no-augmentation", action="store_true")
    search_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", parents=[common], help="fit a value model")
    s.add_argument("--data", required=True)
    train_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--metrics", help="per-epoch CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("api", parents=[common], help="approximate policy iteration")
    s.add_argument("--library", required=True)
    s.add_argument("--iterations", type=int, default=2)
    s.add_argument("--n-ge2", type=int, default=1000)
    s.add_argument("--n-eq1", type=int, default=100)
    s.add_argument("--no-augmentation", action="store_true")
    train_flags(s)
    search_flags(s)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_api)

    s = sub.add_parser("prove", parents=[common], help="search for a proof")
    s.add_argument("goal", help="formula, sequent, or a file holding one")
    s.add_argument("--model", default="pi0", help="pi0 or a model file")
    s.add_argument("--format", choices=["vm", "tm"], help="graph format the model must use")
    s.add_argument("--no-backtracking", action="store_true")
    s.add_argument("--time-limit", type=float)
    search_flags(s)
    s.add_argument("--proof-out")
    s.set_defaults(func=cmd_prove)

    s = sub.add_parser("decide", parents=[common], help="decide provability")
    s.add_argument("goal", help="formula, sequent, or a file holding one")
    s.add_argument("--budget", type=int, default=10**6)
    s.add_argument("--proof-out")
    s.set_defaults(func=cmd_decide)

    s = sub.add_parser("check", parents=[common], help="check a proof certificate")
    s.add_argument("proof")
    s.add_argument("--goal", required=True)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("bench", parents=[common], help="benchmark provers on an exam library")
    s.add_argument("--exam", required=True)
    s.add_argument("--provers", default="pi0,trained", help="comma list: pi0, NAME=MODEL, or NAME with --model")
    s.add_argument("--model")
    s.add_argument("--time-limits", default="1000,3000,10000",
                   help="comma list of limits (expanded states in steps mode)")
    s.add_argument("--mode", choices=["steps", "seconds"], default="steps")
    s.add_argument("--out", required=True, help="prefix for the CSV files")
    s.set_defaults(func=cmd_bench)
    return p


def _configure_logging(level: int) -> None:
    log.setLevel(level)
    if not any(getattr(h, "_iplsearch", False) for h in log.handlers):
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
        h._iplsearch = True
        log.addHandler(h)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse reports usage errors with status 2
        return int(e.code or 0)
    for name, default in (("seed", 0), ("gamma", 0.95), ("log_level", "INFO")):
        if not hasattr(args, name):
            setattr(args, name, default)
    level = getattr(logging, str(args.log_level).upper(), None)
    try:
        if not isinstance(level, int):
            raise UsageError(f"--log-level: unknown level {args.log_level!r}")
        if not 0.0 < args.gamma < 1.0:
            raise UsageError("--gamma must lie in (0, 1)")
        _configure_logging(level)
        return args.func(args)
    except UsageError as e:
        print(f"{parser.prog} {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
