"""Random formulas and theorem libraries.

A formula of "desired length" n is grown top-down: for n <= 2 a uniformly
chosen variable, otherwise a connective drawn from q = (and, or, imp, neg)
with the remaining length split uniformly between the two children.  The
result has between n/2 and n symbols when a negation counts as one symbol;
since negation is stored as ``A -> false`` the stored length can be larger.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .calculus import Verdict, decide
from .syntax import BOTTOM, And, Formula, Imp, Neg, Or, Sequent, Var, goal_sequent, parse_formula, parse_sequent, print_formula

OPS = ("and", "or", "imp", "neg")
_BINARY = {0: And, 1: Or, 2: Imp}


def random_formula(n: int, m: int, q: Sequence[float], rng: np.random.Generator) -> Formula:
    """Sample a formula of desired length ``n`` over ``P1..Pm``.

    Draws happen in the order of the natural recursive procedure (operator,
    split point, left subtree, right subtree); the recursion is unrolled so
    long negation chains cannot overflow the stack.
    """
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    q = np.asarray(q, dtype=np.float64)
    # tasks: ("gen", n) pushes a result; ("neg",) / ("bin", op) combine results
    tasks = [("gen", n)]
    out: list[Formula] = []
    while tasks:
        t = tasks.pop()
        if t[0] == "gen":
            k = t[1]
            if k <= 2:
                out.append(Var(int(rng.integers(1, m + 1))))
                continue
            op = int(rng.choice(4, p=q))
            if op == 3:
                tasks.append(("neg",))
                tasks.append(("gen", k - 1))
            else:
                x = int(rng.integers(1, k - 1))
                # the left subtree is fully drawn before the right one starts
                tasks.append(("bin", op))
                tasks.append(("gen", k - 1 - x))
                tasks.append(("gen", x))
        elif t[0] == "neg":
            out.append(Neg(out.pop()))
        else:
            right = out.pop()
            left = out.pop()
            out.append(_BINARY[t[1]](left, right))
    return out[0]


def surface_length(f: Formula) -> int:
    """Length with each ``A -> false`` counted as the single symbol of a negation."""
    stack, n = [f], 0
    while stack:
        g = stack.pop()
        if isinstance(g, Imp) and g.right is BOTTOM:
            n += 1
            stack.append(g.left)
        elif isinstance(g, (And, Or, Imp)):
            n += 1
            stack.append(g.left)
            stack.append(g.right)
        else:
            n += 1
    return n


def sample_op_probs(alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Dirichlet(alpha) draw over the four connectives."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    g = rng.gamma(alpha, 1.0, size=4)
    return g / g.sum()


@dataclass
class GeneratorConfig:
    n_range: tuple = (10, 30)
    m_range: tuple = (2, 5)
    alpha: float = 3.0
    decide_budget: int = 200_000
    max_attempts: int = 100_000
    dedup: bool = True

    def __post_init__(self):
        self.n_range = tuple(self.n_range)
        self.m_range = tuple(self.m_range)
        lo, hi = self.n_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad n_range {self.n_range}")
        lo, hi = self.m_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad m_range {self.m_range}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


PRESETS = {
    "desk-train": GeneratorConfig((10, 30), (2, 5)),
    "desk-exam": GeneratorConfig((40, 60), (2, 5)),
    "full-train": GeneratorConfig((50, 400), (2, 20)),
    "full-exam": GeneratorConfig((500, 500), (2, 20)),
}


@dataclass
class LibraryStats:
    attempts: int = 0
    accepted: int = 0
    unprovable: int = 0
    over_budget: int = 0
    duplicates: int = 0
    seconds: float = 0.0


class LibraryError(RuntimeError):
    pass


def build_library(count: int, cfg: GeneratorConfig, rng: np.random.Generator) -> tuple[list[Sequent], LibraryStats]:
    """Sample formulas until ``count`` of them are provable theorems."""
    t0 = time.perf_counter()
    stats = LibraryStats()
    out: list[Sequent] = []
    seen: set[Formula] = set()
    while len(out) < count:
        if stats.attempts >= cfg.max_attempts:
            raise LibraryError(f"only {len(out)} of {count} theorems after {stats.attempts} attempts")
        stats.attempts += 1
        n = int(rng.integers(cfg.n_range[0], cfg.n_range[1] + 1))
        m = int(rng.integers(cfg.m_range[0], cfg.m_range[1] + 1))
        q = sample_op_probs(cfg.alpha, rng)
        f = random_formula(n, m, q, rng)
        if cfg.dedup and f in seen:
            stats.duplicates += 1
            continue
        seen.add(f)
        d = decide(goal_sequent(f), cfg.decide_budget)
        if d.verdict is Verdict.PROVABLE:
            out.append(goal_sequent(f))
        elif d.verdict is Verdict.UNPROVABLE:
            stats.unprovable += 1
        else:
            stats.over_budget += 1
    stats.accepted = len(out)
    stats.seconds = time.perf_counter() - t0
    return out, stats


# ---------------------------------------------------------------------------
# library files


def write_library(path, theorems: Sequence[Sequent], header: Optional[dict] = None) -> None:
    lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
    for s in theorems:
        lines.append(print_formula(s.consequent) if not s.antecedents else s.text)
    Path(path).write_text("\n".join(lines) + "\n")


def read_library(path) -> list[Sequent]:
    out = []
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(parse_sequent(line) if "|-" in line else goal_sequent(parse_formula(line)))
        except ValueError as e:
            raise ValueError(f"{path}:{no}: {e}") from e
    return out


def library_header(cfg: GeneratorConfig, seed: int, count: int) -> dict:
    h = {"count": count, "seed": seed}
    h.update(asdict(cfg))
    return h
