"""Proof search as a Markov decision process.

A state is the multiset of sequents still to be proven; an action picks one
open sequent and one LJT rule instance for it.  Reaching the empty state
earns reward 1, so an episode proved in ``n`` actions returns ``gamma**n``.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Protocol, Sequence

import numpy as np

from .calculus import ProofTree, RuleError, RuleInstance, enumerate_actions, premises
from .syntax import Sequent

DEFAULT_GAMMA = 0.95


def _skey(p: Sequent) -> str:
    return p.text


class State:
    """Multiset of open sequents, kept sorted by sequent text."""

    __slots__ = ("open", "_hash")

    def __init__(self, sequents: Iterable[Sequent] = ()):
        self.open = tuple(sorted(sequents, key=_skey))
        self._hash = hash(self.open)

    @classmethod
    def _presorted(cls, seqs: tuple) -> "State":
        st = object.__new__(cls)
        st.open = seqs
        st._hash = hash(seqs)
        return st

    def __len__(self) -> int:
        return len(self.open)

    def __bool__(self) -> bool:
        return bool(self.open)

    def __eq__(self, other) -> bool:
        return isinstance(other, State) and self._hash == other._hash and self.open == other.open

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return "State([" + "; ".join(p.text for p in self.open) + "])"

    @property
    def total_length(self) -> int:
        return sum(p.length for p in self.open)

    def replace(self, i: int, new: Sequence[Sequent]) -> "State":
        rest = self.open[:i] + self.open[i + 1:]
        if not new:
            return State._presorted(rest)
        return State._presorted(tuple(sorted(rest + tuple(new), key=_skey)))


EMPTY = State()


class Action(NamedTuple):
    sequent_index: int
    rule: RuleInstance

    def __str__(self) -> str:
        return f"{self.rule}#{self.sequent_index}"


def actions(s: State) -> list[Action]:
    """All actions at ``s`` in canonical order."""
    return [Action(i, r) for i, p in enumerate(s.open) for r in enumerate_actions(p)]


def transition(s: State, a: Action) -> State:
    if not 0 <= a.sequent_index < len(s.open):
        raise RuleError(f"no open sequent at index {a.sequent_index}")
    p = s.open[a.sequent_index]
    if a.rule not in enumerate_actions(p):
        raise RuleError(f"{a.rule} is not applicable to {p}")
    return s.replace(a.sequent_index, premises(p, a.rule))


def reward(s: State) -> float:
    return 0.0 if s.open else 1.0


@dataclass
class SearchConfig:
    gamma: float = DEFAULT_GAMMA
    step_limit: int = 10_000
    time_limit: Optional[float] = None
    backtracking: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.step_limit < 1:
            raise ValueError("step_limit must be positive")


# ---------------------------------------------------------------------------
# value models


class ValueModel(Protocol):
    def evaluate_batch(self, sequents: Sequence[Sequent]) -> np.ndarray: ...


class LengthModel:
    """``base ** length(p)``: the value model whose greedy policy is the naive one.

    Maximising a product of these values minimises the total length of the
    next state, so value-guided search with this model reproduces the
    length-minimising baseline.
    """

    kind = "length"

    def __init__(self, base: float = DEFAULT_GAMMA):
        self.base = base

    def evaluate_batch(self, sequents: Sequence[Sequent]) -> np.ndarray:
        return np.array([self.base ** p.length for p in sequents], dtype=np.float64)

    def evaluate(self, p: Sequent) -> float:
        return float(self.base ** p.length)


class ValueCache:
    """Per-call memo of clamped model outputs; misses are evaluated in one batch."""

    def __init__(self, model: ValueModel):
        self.model = model
        self.values: dict[Sequent, float] = {}
        self.evaluations = 0
        self.batches = 0

    def fill(self, sequents: Iterable[Sequent]) -> None:
        missing = []
        seen = set()
        for p in sequents:
            if p not in self.values and p not in seen:
                seen.add(p)
                missing.append(p)
        if missing:
            out = np.clip(np.asarray(self.model.evaluate_batch(missing), dtype=np.float64), 0.0, 1.0)
            self.evaluations += len(missing)
            self.batches += 1
            for p, v in zip(missing, out):
                self.values[p] = float(v)

    def __getitem__(self, p: Sequent) -> float:
        return self.values[p]


def state_value(s: State, model: ValueModel, cache: Optional[ValueCache] = None) -> float:
    """Product of per-sequent values; 1 for the empty state."""
    if cache is None:
        cache = ValueCache(model)
    cache.fill(s.open)
    v = 1.0
    for p in s.open:
        v *= cache[p]
    return v


# ---------------------------------------------------------------------------
# policies


Policy = Callable[[State], Optional[Action]]


def naive_greedy_policy(s: State) -> Optional[Action]:
    """Action minimising the total length of the next state."""
    best = None
    best_len = None
    for i, p in enumerate(s.open):
        for r in enumerate_actions(p):
            delta = sum(q.length for q in premises(p, r)) - p.length
            if best_len is None or delta < best_len:
                best, best_len = Action(i, r), delta
    return best


def naive_local_choice(p: Sequent) -> Optional[RuleInstance]:
    """The rule the naive policy eventually applies to ``p`` inside any state.

    The length delta of an action depends only on its own sequent, so the
    choice for ``p`` never depends on what else is open.
    """
    best = None
    best_len = None
    for r in enumerate_actions(p):
        delta = sum(q.length for q in premises(p, r)) - p.length
        if best_len is None or delta < best_len:
            best, best_len = r, delta
    return best


naive_greedy_policy.local_choice = naive_local_choice


class ValuePolicy:
    """Greedy policy on a value model: argmax of the successor state's value.

    The successor value of acting on open sequent ``i`` with rule ``r`` is
    ``prod(v_j, j != i) * prod(v(q) for q in premises(i, r))``.  Since the
    first factor does not depend on ``r``, the argmax is taken in two stages:
    the best rule for each sequent on its own (first rule wins ties), then
    the sequent whose best rule gives the largest state value.  Every pick
    is a maximiser of the full product, and the rule chosen for a sequent
    never depends on the rest of the state, which ``local_choice`` exposes.

    One instance is meant for one model; its cache is private.
    """

    def __init__(self, model: ValueModel, cache: Optional[ValueCache] = None):
        self.model = model
        self.cache = cache if cache is not None else ValueCache(model)
        self._choice: dict[Sequent, tuple] = {}

    def _best(self, p: Sequent) -> tuple:
        hit = self._choice.get(p)
        if hit is not None:
            return hit
        best, best_v = None, -1.0
        for r in enumerate_actions(p):
            v = 1.0
            for q in premises(p, r):
                v *= self.cache[q]
            if v > best_v:
                best, best_v = r, v
        self._choice[p] = (best, best_v)
        return best, best_v

    def _prefetch(self, seqs: Sequence[Sequent]) -> None:
        need = [p for p in seqs if p not in self._choice]
        if need:
            self.cache.fill([q for p in need for r in enumerate_actions(p) for q in premises(p, r)]
                            + list(seqs))
        else:
            self.cache.fill(seqs)

    def local_choice(self, p: Sequent) -> Optional[RuleInstance]:
        self._prefetch([p])
        return self._best(p)[0]

    def __call__(self, s: State) -> Optional[Action]:
        self._prefetch(s.open)
        vals = [self.cache[p] for p in s.open]
        best = None
        best_v = -1.0
        for i, p in enumerate(s.open):
            r, loc = self._best(p)
            if r is None:
                continue
            rest = 1.0
            for j, x in enumerate(vals):
                if j != i:
                    rest *= x
            v = rest * loc
            if v > best_v:
                best, best_v = Action(i, r), v
        return best


def value_policy(s: State, model: ValueModel, cache: Optional[ValueCache] = None) -> Optional[Action]:
    return ValuePolicy(model, cache)(s)


# ---------------------------------------------------------------------------
# episodes


class Outcome(enum.Enum):
    PROVED = "proved"
    STUCK = "stuck"
    BUDGET_EXCEEDED = "budget-exceeded"


@dataclass
class Episode:
    states: list
    actions: list
    outcome: Outcome
    ret: float
    proof: Optional[ProofTree] = None

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def proved(self) -> bool:
        return self.outcome is Outcome.PROVED


class _Node:
    __slots__ = ("sequent", "rule", "children")

    def __init__(self, sequent):
        self.sequent = sequent
        self.rule = None
        self.children = ()


class _ProofBuilder:
    """Mirrors a state's open list with proof-tree nodes while replaying actions."""

    def __init__(self, state: State):
        self.roots = [_Node(p) for p in state.open]
        self.open = list(self.roots)

    def apply(self, a: Action, prems: Sequence[Sequent]) -> None:
        node = self.open.pop(a.sequent_index)
        node.rule = a.rule
        node.children = tuple(_Node(q) for q in prems)
        self.open.extend(node.children)
        self.open.sort(key=lambda n: n.sequent.text)

    def trees(self) -> list[ProofTree]:
        def build(n: _Node) -> ProofTree:
            return ProofTree(n.sequent, n.rule, tuple(build(c) for c in n.children))
        return [build(n) for n in self.roots]


def proof_from_trace(start: State, trace: Sequence[Action]) -> list[ProofTree]:
    """Replay a successful action sequence into one proof tree per start sequent."""
    b = _ProofBuilder(start)
    st = start
    for a in trace:
        p = st.open[a.sequent_index]
        prems = premises(p, a.rule)
        b.apply(a, prems)
        st = st.replace(a.sequent_index, prems)
    if st.open:
        raise ValueError("trace does not close every sequent")
    return b.trees()


def run_episode(start: State, policy: Policy, cfg: SearchConfig = SearchConfig()) -> Episode:
    """Roll ``policy`` out from ``start`` without backtracking."""
    st = start
    states = [st]
    acts = []
    builder = _ProofBuilder(start)
    deadline = None if cfg.time_limit is None else time.perf_counter() + cfg.time_limit
    while st.open:
        if len(acts) >= cfg.step_limit or (deadline is not None and time.perf_counter() > deadline):
            return Episode(states, acts, Outcome.BUDGET_EXCEEDED, 0.0)
        a = policy(st)
        if a is None:
            return Episode(states, acts, Outcome.STUCK, 0.0)
        p = st.open[a.sequent_index]
        prems = premises(p, a.rule)
        builder.apply(a, prems)
        st = st.replace(a.sequent_index, prems)
        acts.append(a)
        states.append(st)
    trees = builder.trees()
    proof = trees[0] if len(trees) == 1 else None
    return Episode(states, acts, Outcome.PROVED, cfg.gamma ** len(acts), proof)


def local_return(p: Sequent, choice: Callable[[Sequent], Optional[RuleInstance]],
                 cfg: SearchConfig, memo: dict) -> float:
    """Episode return from ``{p}`` for a policy whose per-sequent choice is local.

    Steps add up over independent sequents, so ``memo`` maps a sequent to
    the number of actions that close it (``None`` when the policy gets
    stuck) and is safe to share across rollouts.
    """
    n = _local_steps(p, choice, memo, cfg.step_limit)
    if n is None or n > cfg.step_limit:
        return 0.0
    return cfg.gamma ** n


def _local_steps(p, choice, memo, cap):
    # iterative post-order so deep proofs do not hit the recursion limit
    if p in memo:
        return memo[p]
    stack = [(p, None)]
    while stack:
        q, prems = stack[-1]
        if q in memo:
            stack.pop()
            continue
        if prems is None:
            r = choice(q)
            if r is None:
                memo[q] = None
                stack.pop()
                continue
            prems = premises(q, r)
            stack[-1] = (q, prems)
            pending = [x for x in prems if x not in memo]
            if pending:
                stack.extend((x, None) for x in pending)
                continue
        total = 1
        for x in prems:
            k = memo[x]
            if k is None:
                total = None
                break
            total += k
        if total is not None and total > cap:
            total = cap + 1
        memo[q] = total
        stack.pop()
    return memo[p]


# ---------------------------------------------------------------------------
# greedy depth-first search with backtracking


@dataclass
class DfsResult:
    proved: bool
    steps: int
    proof: Optional[ProofTree] = None
    exhausted: bool = False
    elapsed: float = 0.0
    evaluations: int = 0


def greedy_dfs(goal: Sequent, model: ValueModel, cfg: SearchConfig = SearchConfig(backtracking=True)) -> DfsResult:
    """Backtracking DFS over states guided by ``model``.

    At each state only the lowest-valued open sequent is expanded; its
    actions are tried in descending order of successor-state value.  States
    already shown to fail are not re-expanded.  ``steps`` counts expanded
    states.
    """
    t0 = time.perf_counter()
    deadline = None if cfg.time_limit is None else t0 + cfg.time_limit
    cache = ValueCache(model)
    failed: set[State] = set()
    steps = 0

    def expand(st: State) -> list:
        cache.fill(st.open)
        vals = [cache[p] for p in st.open]
        i = min(range(len(vals)), key=lambda k: (vals[k], k))
        p = st.open[i]
        succ = []
        for r in enumerate_actions(p):
            prems = premises(p, r)
            succ.append((Action(i, r), prems))
        cache.fill(q for _, ps in succ for q in ps)
        rest = 1.0
        for j, v in enumerate(vals):
            if j != i:
                rest *= v
        scored = []
        for k, (a, ps) in enumerate(succ):
            v = rest
            for q in ps:
                v *= cache[q]
            scored.append((-v, k, a, ps))
        scored.sort(key=lambda x: (x[0], x[1]))
        return [(a, st.replace(a.sequent_index, ps)) for _, _, a, ps in scored]

    def done(proved, proof=None, exhausted=False):
        return DfsResult(proved, steps, proof, exhausted, time.perf_counter() - t0, cache.evaluations)

    root = State((goal,))
    steps = 1
    frames = [[root, expand(root), 0]]
    while frames:
        if deadline is not None and time.perf_counter() > deadline:
            return done(False)
        frame = frames[-1]
        st, succ, k = frame
        if k >= len(succ):
            failed.add(st)
            frames.pop()
            continue
        frame[2] = k + 1
        a, nxt = succ[k]
        if not nxt.open:
            trace = [f[1][f[2] - 1][0] for f in frames]
            proof = proof_from_trace(root, trace)[0]
            return done(True, proof)
        if nxt in failed:
            continue
        if steps >= cfg.step_limit:
            return done(False)
        steps += 1
        frames.append([nxt, expand(nxt), 0])
    return done(False, exhausted=True)
