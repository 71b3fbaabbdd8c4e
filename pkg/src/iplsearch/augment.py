"""Training data by breadth-first expansion of solvable theorems.

For each library theorem the current policy proves, sequents reachable from
it (every premise of every applicable rule) are enumerated breadth first and
labelled with the return of a fresh policy rollout.  One-step-provable
sequents are capped separately from the rest so trivial data cannot crowd
out everything else.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .calculus import enumerate_actions, is_one_step_provable, premises
from .search import (SearchConfig, State, ValuePolicy, local_return, naive_greedy_policy,
                     naive_local_choice, run_episode)
from .syntax import Sequent, parse_sequent


class Example(NamedTuple):
    sequent: Sequent
    ret: float
    origin: int
    one_step: bool
    depth: int


@dataclass
class AugmentConfig:
    n_ge2: int = 1000
    n_eq1: int = 100
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        if self.n_ge2 < 0 or self.n_eq1 < 0:
            raise ValueError("caps must be non-negative")


class Labeler:
    """Rollout returns for a policy whose rule choice per sequent is local.

    ``choice(p)`` gives the rule the policy applies to ``p`` whatever else
    is open, so rollouts decompose into per-sequent step counts that are
    memoised across calls.  The result equals ``run_episode`` on ``{p}``.
    """

    def __init__(self, choice: Callable[[Sequent], object], cfg: SearchConfig, policy=None):
        self.choice = choice
        self.cfg = cfg
        self.policy = policy
        self.memo: dict = {}

    def __call__(self, p: Sequent) -> float:
        return local_return(p, self.choice, self.cfg, self.memo)

    def episode(self, p: Sequent):
        """The full rollout from ``{p}``, for certificates."""
        if self.policy is None:
            raise ValueError("labeler built without a policy")
        return run_episode(State((p,)), self.policy, self.cfg)


def naive_labeler(cfg: SearchConfig = SearchConfig()) -> Labeler:
    return Labeler(naive_local_choice, cfg, naive_greedy_policy)


def value_labeler(model, cfg: SearchConfig = SearchConfig()) -> Labeler:
    pol = ValuePolicy(model)
    return Labeler(pol.local_choice, cfg, pol)


def next_sequents(p: Sequent) -> list[Sequent]:
    """Every premise of every rule instance applicable to ``p``."""
    out = []
    for r in enumerate_actions(p):
        out.extend(premises(p, r))
    return out


def augment_from_theorem(p: Sequent, label: Callable[[Sequent], float], cfg: AugmentConfig,
                         origin: int = 0) -> list[Example]:
    """Breadth-first examples around ``p``; empty when the policy fails on ``p``."""
    if label(p) <= 0.0:
        return []
    queue = deque([(p, 0)])
    visited: set[Sequent] = set()
    out: list[Example] = []
    n_ge2 = n_eq1 = 0
    while queue and n_ge2 < cfg.n_ge2:
        q, depth = queue.popleft()
        if q in visited:
            continue
        visited.add(q)
        ret = label(q)
        if is_one_step_provable(q):
            if n_eq1 < cfg.n_eq1:
                out.append(Example(q, ret, origin, True, depth))
                n_eq1 += 1
        else:
            out.append(Example(q, ret, origin, False, depth))
            n_ge2 += 1
        for x in next_sequents(q):
            queue.append((x, depth + 1))
    return out


def build_dataset(library: Sequence[Sequent], label: Callable[[Sequent], float],
                  cfg: AugmentConfig = AugmentConfig(), log=None) -> list[Example]:
    out: list[Example] = []
    for i, p in enumerate(library):
        ex = augment_from_theorem(p, label, cfg, origin=i)
        if log:
            log(i, len(ex))
        out.extend(ex)
    return out


def rollout_dataset(library: Sequence[Sequent], label: Callable[[Sequent], float]) -> list[Example]:
    """No augmentation: the library theorems the policy solves, with their returns."""
    out = []
    for i, p in enumerate(library):
        r = label(p)
        if r > 0.0:
            out.append(Example(p, r, i, is_one_step_provable(p), 0))
    return out


def split_dataset(data: Sequence[Example], seed: int, ratio=(4, 1, 1)):
    """Partition by origin: each theorem's examples land in exactly one split."""
    origins = sorted({e.origin for e in data})
    rng = np.random.default_rng(seed)
    perm = [origins[i] for i in rng.permutation(len(origins))]
    total = sum(ratio)
    n = len(perm)
    cut1 = round(n * ratio[0] / total)
    cut2 = cut1 + round(n * ratio[1] / total)
    where = {}
    for k, o in enumerate(perm):
        where[o] = 0 if k < cut1 else (1 if k < cut2 else 2)
    parts = ([], [], [])
    for e in data:
        parts[where[e.origin]].append(e)
    return parts


# ---------------------------------------------------------------------------
# dataset files


def write_dataset(path, data: Sequence[Example]) -> None:
    lines = ["# sequent\treturn\torigin\tone_step\tdepth"]
    for e in data:
        lines.append(f"{e.sequent.text}\t{e.ret:.17g}\t{e.origin}\t{int(e.one_step)}\t{e.depth}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> list[Example]:
    out = []
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ValueError(f"{path}:{no}: expected 5 tab-separated fields")
        s, r, o, one, d = parts
        out.append(Example(parse_sequent(s), float(r), int(o), one == "1", int(d)))
    return out
