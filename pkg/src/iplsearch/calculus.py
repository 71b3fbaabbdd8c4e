"""LJT: the contraction-free sequent calculus for IPL.

Rules, conclusion on the right of ``<=``:

    Init         A, G |- A                      (any formula A)
    BotLeft      false, G |- C
    AndLeft      A, B, G |- C               <=  A & B, G |- C
    AndRight     G |- A ; G |- B            <=  G |- A & B
    OrLeft       A, G |- C ; B, G |- C      <=  A | B, G |- C
    OrRight1/2   G |- A  (resp. B)          <=  G |- A | B
    ImpRight     A, G |- B                  <=  G |- A -> B
    ImpLeftAtom  B, P, G |- C               <=  P -> B, P, G |- C   (P atom or false)
    ImpLeftAnd   C -> (D -> B), G |- E      <=  C & D -> B, G |- E
    ImpLeftOr    C -> B, D -> B, G |- E     <=  (C | D) -> B, G |- E
    ImpLeftImp   D -> B, G |- C -> D ; B, G |- E   <=  (C -> D) -> B, G |- E

Every premise is strictly smaller than its conclusion in the multiset
extension of ``weight`` (see :func:`weight_multiset`), so backward search
terminates.  Principal positions are 1-based indexes into the canonical
antecedent tuple; when a formula occurs several times only its first
occurrence yields an action.
"""
from __future__ import annotations

import enum
import re
import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .syntax import (
    BOTTOM, And, Formula, Imp, Or, ParseError, Sequent, Var, insert_sorted,
    parse_sequent,
)


class Rule(enum.Enum):
    Init = 0
    BotLeft = 1
    AndLeft = 2
    AndRight = 3
    OrLeft = 4
    OrRight1 = 5
    OrRight2 = 6
    ImpRight = 7
    ImpLeftAtom = 8
    ImpLeftAnd = 9
    ImpLeftOr = 10
    ImpLeftImp = 11

    @property
    def is_axiom(self) -> bool:
        return self in (Rule.Init, Rule.BotLeft)

    @property
    def is_left(self) -> bool:
        return self not in (Rule.AndRight, Rule.OrRight1, Rule.OrRight2, Rule.ImpRight)


PREMISE_COUNT = {
    Rule.Init: 0, Rule.BotLeft: 0,
    Rule.AndLeft: 1, Rule.AndRight: 2, Rule.OrLeft: 2,
    Rule.OrRight1: 1, Rule.OrRight2: 1, Rule.ImpRight: 1,
    Rule.ImpLeftAtom: 1, Rule.ImpLeftAnd: 1, Rule.ImpLeftOr: 1, Rule.ImpLeftImp: 2,
}

# Rules whose premises are provable whenever the conclusion is.
INVERTIBLE = frozenset({
    Rule.AndLeft, Rule.AndRight, Rule.OrLeft, Rule.ImpRight,
    Rule.ImpLeftAtom, Rule.ImpLeftAnd, Rule.ImpLeftOr,
})


class RuleInstance(NamedTuple):
    rule: Rule
    principal: Optional[int] = None

    def __str__(self) -> str:
        if self.principal is None:
            return self.rule.name
        return f"{self.rule.name}@{self.principal}"


class RuleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# action enumeration and rule application


def enumerate_actions(s: Sequent) -> list[RuleInstance]:
    """All LJT rule instances whose conclusion is ``s``, in canonical order."""
    ants = s.antecedents
    goal = s.consequent
    init = bot = None
    and_l, or_l, atom_l, and_imp, or_imp, imp_imp = [], [], [], [], [], []
    present = None
    prev = None
    for i, a in enumerate(ants, 1):
        if a is prev:
            continue
        prev = a
        if a is goal and init is None:
            init = i
        if a is BOTTOM:
            bot = i
        elif isinstance(a, And):
            and_l.append(i)
        elif isinstance(a, Or):
            or_l.append(i)
        elif isinstance(a, Imp):
            ante = a.left
            if ante.is_atomic:
                if present is None:
                    present = set(ants)
                if ante in present:
                    atom_l.append(i)
            elif isinstance(ante, And):
                and_imp.append(i)
            elif isinstance(ante, Or):
                or_imp.append(i)
            else:
                imp_imp.append(i)
    out = []
    if init is not None:
        out.append(RuleInstance(Rule.Init, init))
    if bot is not None:
        out.append(RuleInstance(Rule.BotLeft, bot))
    out.extend(RuleInstance(Rule.AndLeft, i) for i in and_l)
    if isinstance(goal, And):
        out.append(RuleInstance(Rule.AndRight))
    out.extend(RuleInstance(Rule.OrLeft, i) for i in or_l)
    if isinstance(goal, Or):
        out.append(RuleInstance(Rule.OrRight1))
        out.append(RuleInstance(Rule.OrRight2))
    if isinstance(goal, Imp):
        out.append(RuleInstance(Rule.ImpRight))
    out.extend(RuleInstance(Rule.ImpLeftAtom, i) for i in atom_l)
    out.extend(RuleInstance(Rule.ImpLeftAnd, i) for i in and_imp)
    out.extend(RuleInstance(Rule.ImpLeftOr, i) for i in or_imp)
    out.extend(RuleInstance(Rule.ImpLeftImp, i) for i in imp_imp)
    return out


def _without(ants: tuple, i: int) -> tuple:
    return ants[:i - 1] + ants[i:]


def premises(s: Sequent, r: RuleInstance) -> list[Sequent]:
    """Premises of ``r`` applied to ``s``; no applicability check."""
    rule = r.rule
    ants = s.antecedents
    goal = s.consequent
    mk = Sequent._presorted
    if rule is Rule.Init or rule is Rule.BotLeft:
        return []
    if rule is Rule.AndRight:
        return [mk(ants, goal.left), mk(ants, goal.right)]
    if rule is Rule.OrRight1:
        return [mk(ants, goal.left)]
    if rule is Rule.OrRight2:
        return [mk(ants, goal.right)]
    if rule is Rule.ImpRight:
        return [mk(insert_sorted(ants, (goal.left,)), goal.right)]
    a = ants[r.principal - 1]
    rest = _without(ants, r.principal)
    if rule is Rule.AndLeft:
        return [mk(insert_sorted(rest, (a.left, a.right)), goal)]
    if rule is Rule.OrLeft:
        return [mk(insert_sorted(rest, (a.left,)), goal),
                mk(insert_sorted(rest, (a.right,)), goal)]
    if rule is Rule.ImpLeftAtom:
        return [mk(insert_sorted(rest, (a.right,)), goal)]
    b = a.right
    if rule is Rule.ImpLeftAnd:
        c, d = a.left.left, a.left.right
        return [mk(insert_sorted(rest, (Imp(c, Imp(d, b)),)), goal)]
    if rule is Rule.ImpLeftOr:
        c, d = a.left.left, a.left.right
        return [mk(insert_sorted(rest, (Imp(c, b), Imp(d, b))), goal)]
    if rule is Rule.ImpLeftImp:
        c, d = a.left.left, a.left.right
        return [mk(insert_sorted(rest, (Imp(d, b),)), a.left),
                mk(insert_sorted(rest, (b,)), goal)]
    raise RuleError(f"unknown rule {rule!r}")


def apply_rule(s: Sequent, r: RuleInstance) -> list[Sequent]:
    """Premises of ``r`` at ``s``, top-to-bottom left-to-right.

    Raises :class:`RuleError` if ``r`` is not one of ``enumerate_actions(s)``.
    """
    if r not in enumerate_actions(s):
        raise RuleError(f"{r} is not applicable to {s}")
    return premises(s, r)


def is_one_step_provable(s: Sequent) -> bool:
    return BOTTOM in s.antecedents or s.consequent in s.antecedents


# ---------------------------------------------------------------------------
# termination measure


def weight_multiset(s: Sequent) -> Counter:
    """Per-formula weights (atoms 1, ``&`` adds 2, ``|``/``->`` add 1)."""
    c = Counter(a.weight for a in s.antecedents)
    c[s.consequent.weight] += 1
    return c


def multiset_less(m: Counter, n: Counter) -> bool:
    """Dershowitz-Manna order: ``m < n``."""
    if m == n:
        return False
    extra_n = [x for x in n if n[x] > m.get(x, 0)]
    for x in m:
        if m[x] > n.get(x, 0) and not any(y > x for y in extra_n):
            return False
    return True


# ---------------------------------------------------------------------------
# proof trees


@dataclass(frozen=True)
class ProofTree:
    sequent: Sequent
    rule: RuleInstance
    children: tuple = ()

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def __str__(self) -> str:
        return serialize_proof(self)


class CheckResult(NamedTuple):
    ok: bool
    path: tuple = ()
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_proof(t: ProofTree, goal: Sequent) -> CheckResult:
    """Re-derive every node of ``t`` with :func:`apply_rule`.

    The path in a failure report lists child indexes from the root.
    """
    if t.sequent != goal:
        return CheckResult(False, (), f"root sequent {t.sequent} differs from goal {goal}")
    stack = [(t, ())]
    while stack:
        node, path = stack.pop()
        if not isinstance(node, ProofTree):
            return CheckResult(False, path, "node is not a proof tree")
        try:
            expected = apply_rule(node.sequent, node.rule)
        except RuleError as e:
            return CheckResult(False, path, str(e))
        if len(node.children) != len(expected):
            return CheckResult(False, path, f"{node.rule} needs {len(expected)} premises, "
                                            f"found {len(node.children)}")
        for k, (child, want) in enumerate(zip(node.children, expected)):
            if child.sequent != want:
                return CheckResult(False, path + (k,),
                                   f"premise {k} should be {want}, found {child.sequent}")
            stack.append((child, path + (k,)))
    return CheckResult(True)


def serialize_proof(t: ProofTree) -> str:
    """Nested text form ``(Rule principal? "sequent" children...)``."""
    lines: list[str] = []

    def emit(node: ProofTree, depth: int) -> None:
        head = node.rule.rule.name
        if node.rule.principal is not None:
            head += f" {node.rule.principal}"
        pad = "  " * depth
        if not node.children:
            lines.append(f'{pad}({head} "{node.sequent.text}")')
            return
        lines.append(f'{pad}({head} "{node.sequent.text}"')
        for c in node.children:
            emit(c, depth + 1)
        lines[-1] += ")"

    emit(t, 0)
    return "\n".join(lines) + "\n"


_PROOF_TOKEN = re.compile(r'\s*(?:(\()|(\))|"([^"]*)"|([A-Za-z0-9]+))')


def parse_proof(text: str) -> ProofTree:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _PROOF_TOKEN.match(text, pos)
        if m is None:
            raise ParseError("malformed proof text", pos)
        tokens.append((m.lastindex, m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()
    i = 0

    def node() -> ProofTree:
        nonlocal i
        if i >= len(tokens) or tokens[i][0] != 1:
            raise ParseError("expected '('", tokens[i][2] if i < len(tokens) else len(text))
        i += 1
        if i >= len(tokens) or tokens[i][0] != 4 or tokens[i][1] not in Rule.__members__:
            raise ParseError("expected rule name", tokens[i][2] if i < len(tokens) else len(text))
        rule = Rule[tokens[i][1]]
        i += 1
        principal = None
        if i < len(tokens) and tokens[i][0] == 4:
            if not tokens[i][1].isdigit():
                raise ParseError("expected principal position", tokens[i][2])
            principal = int(tokens[i][1])
            i += 1
        if i >= len(tokens) or tokens[i][0] != 3:
            raise ParseError("expected quoted sequent", tokens[i][2] if i < len(tokens) else len(text))
        seq = parse_sequent(tokens[i][1])
        i += 1
        children = []
        while i < len(tokens) and tokens[i][0] == 1:
            children.append(node())
        if i >= len(tokens) or tokens[i][0] != 2:
            raise ParseError("expected ')'", tokens[i][2] if i < len(tokens) else len(text))
        i += 1
        return ProofTree(seq, RuleInstance(rule, principal), tuple(children))

    t = node()
    if i != len(tokens):
        raise ParseError("trailing tokens after proof", tokens[i][2])
    return t


# ---------------------------------------------------------------------------
# decision procedure


class Verdict(enum.Enum):
    PROVABLE = "provable"
    UNPROVABLE = "unprovable"
    BUDGET_EXCEEDED = "budget-exceeded"


@dataclass
class Decision:
    verdict: Verdict
    proof: Optional[ProofTree] = None
    visited: int = 0

    @property
    def provable(self) -> bool:
        return self.verdict is Verdict.PROVABLE


class _OutOfBudget(Exception):
    pass


def decide(s: Sequent, budget: int = 10**6) -> Decision:
    """Exhaustive backward LJT search with memoisation.

    When an invertible rule applies only its first instance is tried, which
    keeps the search complete.  ``budget`` caps the number of distinct
    sequents examined.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    memo: dict[Sequent, Optional[ProofTree]] = {}
    visited = 0

    def prove(p: Sequent) -> Optional[ProofTree]:
        nonlocal visited
        if p in memo:
            return memo[p]
        visited += 1
        if visited > budget:
            raise _OutOfBudget
        actions = enumerate_actions(p)
        result = None
        if actions and actions[0].rule.is_axiom:
            result = ProofTree(p, actions[0])
        else:
            inv = next((a for a in actions if a.rule in INVERTIBLE), None)
            for a in ([inv] if inv is not None else actions):
                subs = []
                for q in premises(p, a):
                    t = prove(q)
                    if t is None:
                        break
                    subs.append(t)
                else:
                    result = ProofTree(p, a, tuple(subs))
                    break
        memo[p] = result
        return result

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20000))
    try:
        proof = prove(s)
    except _OutOfBudget:
        return Decision(Verdict.BUDGET_EXCEEDED, None, visited - 1)
    finally:
        sys.setrecursionlimit(limit)
    if proof is None:
        return Decision(Verdict.UNPROVABLE, None, visited)
    return Decision(Verdict.PROVABLE, proof, visited)
