"""Approximate policy iteration and the benchmark harness."""
from __future__ import annotations

import csv
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .augment import AugmentConfig, Labeler, build_dataset, naive_labeler, rollout_dataset, split_dataset, value_labeler
from .calculus import check_proof
from .search import LengthModel, SearchConfig, greedy_dfs
from .syntax import Sequent
from .valuemodel import TrainConfig, train

log = logging.getLogger("iplsearch")


class SoundnessError(RuntimeError):
    """A search reported a proof that the checker rejects."""


def _certify(goal: Sequent, proof) -> None:
    res = check_proof(proof, goal) if proof is not None else None
    if not res:
        raise SoundnessError(f"proof of {goal.text} rejected: {res}")


# ---------------------------------------------------------------------------
# approximate policy iteration


@dataclass
class ApiConfig:
    iterations: int = 2
    kind: str = "gnn-tm"
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))
    search: SearchConfig = field(default_factory=SearchConfig)
    augmentation: bool = True
    split_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


@dataclass
class ApiRow:
    iteration: int
    dataset_size: int
    train_mse: Optional[float]
    val_mse: Optional[float]
    test_mse: Optional[float]
    solve_rate: float


@dataclass
class ApiResult:
    rows: list
    models: list  # models[i] defines policy pi_{i+1}
    solved: list  # per iteration, indices of library theorems proven

    @property
    def solve_rates(self) -> list[float]:
        return [r.solve_rate for r in self.rows]


def solve_set(library: Sequence[Sequent], labeler: Labeler, certify: bool = True) -> list[int]:
    """Indices of theorems the labeler's policy proves without backtracking."""
    out = []
    for i, p in enumerate(library):
        if labeler(p) > 0.0:
            if certify:
                ep = labeler.episode(p)
                if not ep.proved:
                    raise SoundnessError(f"rollout memo disagrees with episode on {p.text}")
                _certify(p, ep.proof)
            out.append(i)
    return out


def api_iterate(library: Sequence[Sequent], cfg: ApiConfig = ApiConfig(),
                certify: bool = True) -> ApiResult:
    """Alternate value regression and greedy improvement, starting from pi_0.

    Row 0 reports pi_0; row i >= 1 reports the model trained on the data of
    pi_{i-1} and the solve rate of the greedy policy pi_i it induces.
    """
    if not library:
        raise ValueError("empty library")
    labeler = naive_labeler(cfg.search)
    solved = solve_set(library, labeler, certify)
    rows = [ApiRow(0, 0, None, None, None, len(solved) / len(library))]
    solved_sets = [solved]
    models = []
    log.info("api iteration 0: solve rate %.3f", rows[0].solve_rate)
    for it in range(1, cfg.iterations + 1):
        if cfg.augmentation:
            data = build_dataset(library, labeler, cfg.augment)
        else:
            data = rollout_dataset(library, labeler)
        tr, va, te = split_dataset(data, cfg.split_seed + it)
        if not tr:
            # tiny datasets may put every origin outside the training split
            tr, va, te = list(data), [], []
        tc = TrainConfig(**{**cfg.train.__dict__, "seed": cfg.train.seed + it})
        res = train(cfg.kind, tr, va, te, tc)
        best = res.history[res.best_epoch - 1]
        labeler = value_labeler(res.params, cfg.search)
        solved = solve_set(library, labeler, certify)
        rows.append(ApiRow(it, len(data), best["train_mse"], best["val_mse"], best["test_mse"],
                           len(solved) / len(library)))
        solved_sets.append(solved)
        models.append(res.params)
        log.info("api iteration %d: %d examples, test mse %.4f, solve rate %.3f",
                 it, len(data), res.test_mse, rows[-1].solve_rate)
    return ApiResult(rows, models, solved_sets)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_api_log(path, rows: Sequence[ApiRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "dataset_size", "train_mse", "val_mse", "test_mse", "solve_rate"])
        for r in rows:
            w.writerow([r.iteration, r.dataset_size, _fmt(r.train_mse), _fmt(r.val_mse),
                        _fmt(r.test_mse), _fmt(r.solve_rate)])


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class BenchRecord:
    problem_id: int
    prover: str
    time_limit: float
    solved: bool
    steps: int
    millis: float


@dataclass
class BenchResult:
    records: list
    mode: str  # "steps" or "seconds"

    def aggregate(self) -> list[tuple]:
        """(prover, limit, solve rate) in first-seen prover order."""
        groups: dict = {}
        for r in self.records:
            groups.setdefault((r.prover, r.time_limit), []).append(r.solved)
        return [(p, lim, sum(v) / len(v)) for (p, lim), v in groups.items()]

    def cactus(self) -> list[tuple]:
        """(prover, rank, steps) of solved problems at each prover's largest limit."""
        out = []
        for prover in dict.fromkeys(r.prover for r in self.records):
            rs = [r for r in self.records if r.prover == prover]
            top = max(r.time_limit for r in rs)
            steps = sorted(r.steps for r in rs if r.time_limit == top and r.solved)
            out.extend((prover, k + 1, s) for k, s in enumerate(steps))
        return out

    def paired_steps(self, a: str, b: str) -> list[tuple]:
        """(problem, steps of a, steps of b) where both solve, at the largest limit."""
        top = max(r.time_limit for r in self.records)
        ra = {r.problem_id: r for r in self.records if r.prover == a and r.time_limit == top and r.solved}
        rb = {r.problem_id: r for r in self.records if r.prover == b and r.time_limit == top and r.solved}
        return [(k, ra[k].steps, rb[k].steps) for k in sorted(ra.keys() & rb.keys())]


def median_step_ratio(pairs: Sequence[tuple]) -> float:
    """Median of steps(a) / steps(b) over problems both provers solve."""
    if not pairs:
        return float("nan")
    return statistics.median(sa / sb for _, sa, sb in pairs)


def benchmark(provers: Sequence[tuple], exam: Sequence[Sequent], limits: Sequence[float],
              mode: str = "steps", certify: bool = True) -> BenchResult:
    """Run greedy DFS for every prover on every problem under each limit.

    ``provers`` holds (name, value model) pairs.  In step mode the search is
    deterministic, so one run at the largest limit decides every smaller
    one: a problem counts as solved under limit L iff it was proven within
    L expanded states.  Time mode reruns per limit.
    """
    if mode not in ("steps", "seconds"):
        raise ValueError(f"unknown limit mode {mode!r}")
    limits = list(limits)
    records = []
    for name, model in provers:
        for pid, goal in enumerate(exam):
            if mode == "steps":
                res = greedy_dfs(goal, model, SearchConfig(step_limit=int(max(limits)), backtracking=True))
                if res.proved and certify:
                    _certify(goal, res.proof)
                for lim in limits:
                    ok = res.proved and res.steps <= lim
                    records.append(BenchRecord(pid, name, lim, ok, res.steps, res.elapsed * 1000.0))
            else:
                for lim in limits:
                    res = greedy_dfs(goal, model, SearchConfig(step_limit=10**9, time_limit=float(lim),
                                                               backtracking=True))
                    if res.proved and certify:
                        _certify(goal, res.proof)
                    records.append(BenchRecord(pid, name, lim, res.proved, res.steps, res.elapsed * 1000.0))
        log.info("bench %s done", name)
    return BenchResult(records, mode)


def write_bench(prefix, result: BenchResult) -> list[Path]:
    """Per-problem, aggregate and cactus CSVs next to ``prefix``."""
    prefix = Path(prefix)
    paths = [prefix.with_name(prefix.name + s) for s in ("_problems.csv", "_aggregate.csv", "_cactus.csv")]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["problem_id", "prover", "time_limit", "solved", "steps", "millis"])
        for r in result.records:
            w.writerow([r.problem_id, r.prover, _fmt(r.time_limit), int(r.solved), r.steps,
                        "" if result.mode == "steps" else f"{r.millis:.3f}"])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prover", "time_limit", "solve_rate"])
        for p, lim, rate in result.aggregate():
            w.writerow([p, _fmt(lim), _fmt(rate)])
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prover", "rank", "steps"])
        for row in result.cactus():
            w.writerow(row)
    return paths


def pi0_model() -> LengthModel:
    """Value model whose greedy choices are those of the naive baseline."""
    return LengthModel()
