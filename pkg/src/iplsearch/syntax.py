"""Formulas and sequents of intuitionistic propositional logic.

Formulas are hash-consed: structurally equal formulas are the same Python
object, so equality is identity and hashing is O(1).  Negation has no
constructor of its own; ``~A`` is read as ``A -> false``.

Text grammar (loosest binding first)::

    imp   := or ("->" imp)?          right associative
    or    := and ("|" and)*          left associative
    and   := unary ("&" unary)*      left associative
    unary := "~" unary | "P<n>" | "false" | "(" imp ")"

Sequents are written ``A1, A2 |- G`` (``|- G`` with no antecedents).
"""
from __future__ import annotations

import re
import threading
import weakref
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Formula", "Var", "Bottom", "And", "Or", "Imp", "BOTTOM", "Neg",
    "Sequent", "ParseError",
    "parse_formula", "parse_sequent", "print_formula",
    "formula_length", "sequent_length", "rename_variables", "rename_sequent",
    "variables",
]

_table: "weakref.WeakValueDictionary[tuple, Formula]" = weakref.WeakValueDictionary()
_lock = threading.Lock()

# precedence levels used by the printer
_PREC_IMP, _PREC_OR, _PREC_AND, _PREC_ATOM = 1, 2, 3, 4


class Formula:
    """Base class of the interned formula nodes."""

    __slots__ = ("length", "weight", "_hash", "_text", "__weakref__")
    tag = -1
    prec = _PREC_ATOM

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return print_formula(self)

    @property
    def is_atomic(self) -> bool:
        return False


def _init(f: Formula, length: int, weight: int, hsh: int) -> None:
    f.length = length
    f.weight = weight
    f._hash = hsh
    f._text = None


def _intern(cls, key, build):
    f = _table.get(key)
    if f is not None:
        return f
    with _lock:
        f = _table.get(key)
        if f is None:
            f = object.__new__(cls)
            build(f)
            _table[key] = f
    return f


class Var(Formula):
    __slots__ = ("index",)
    tag = 0

    def __new__(cls, index: int) -> "Var":
        if not isinstance(index, int) or isinstance(index, bool) or index < 1:
            raise ValueError(f"variable index must be a positive integer, got {index!r}")

        def build(f):
            f.index = index
            _init(f, 1, 1, hash((0, index)))

        return _intern(cls, (0, index), build)

    def __reduce__(self):
        return (Var, (self.index,))

    def __repr__(self) -> str:
        return f"Var({self.index})"

    @property
    def is_atomic(self) -> bool:
        return True


class Bottom(Formula):
    __slots__ = ()
    tag = 1

    def __new__(cls) -> "Bottom":
        def build(f):
            _init(f, 1, 1, hash((1,)))

        return _intern(cls, (1,), build)

    def __reduce__(self):
        return (Bottom, ())

    def __repr__(self) -> str:
        return "Bottom()"

    @property
    def is_atomic(self) -> bool:
        return True


class _Binary(Formula):
    __slots__ = ("left", "right")
    symbol = "?"
    extra_weight = 1

    def __new__(cls, left: Formula, right: Formula):
        if not isinstance(left, Formula) or not isinstance(right, Formula):
            raise TypeError(f"{cls.__name__} expects two formulas")
        key = (cls.tag, left, right)

        def build(f):
            f.left = left
            f.right = right
            _init(f, left.length + right.length + 1,
                  left.weight + right.weight + cls.extra_weight,
                  hash((cls.tag, left._hash, right._hash)))

        return _intern(cls, key, build)

    def __reduce__(self):
        return (type(self), (self.left, self.right))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class And(_Binary):
    __slots__ = ()
    tag = 2
    symbol = "&"
    prec = _PREC_AND
    extra_weight = 2


class Or(_Binary):
    __slots__ = ()
    tag = 3
    symbol = "|"
    prec = _PREC_OR


class Imp(_Binary):
    __slots__ = ()
    tag = 4
    symbol = "->"
    prec = _PREC_IMP


BOTTOM = Bottom()


def Neg(f: Formula) -> Imp:
    return Imp(f, BOTTOM)


# ---------------------------------------------------------------------------
# printing


def print_formula(f: Formula) -> str:
    """Render ``f`` with the fewest parentheses the grammar allows."""
    text = f._text
    if text is not None:
        return text
    if isinstance(f, Var):
        text = f"P{f.index}"
    elif f is BOTTOM:
        text = "false"
    else:
        left, right = f.left, f.right
        lt, rt = print_formula(left), print_formula(right)
        if isinstance(f, Imp):
            if left.prec <= _PREC_IMP:
                lt = f"({lt})"
        else:
            if left.prec < f.prec:
                lt = f"({lt})"
            if right.prec <= f.prec:
                rt = f"({rt})"
        text = f"{lt} {f.symbol} {rt}"
    f._text = text
    return text


# ---------------------------------------------------------------------------
# parsing


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


_TOKEN = re.compile(r"\s*(?:(P\d+)|(false)|(->)|(\|-)|([~&|(),]))")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            # point at the first offending non-space character
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        tok = m.group(m.lastindex)
        tokens.append((tok, m.start(m.lastindex)))
        pos = m.end()
    tokens.append(("", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> str:
        return self.tokens[self.i][0]

    def pos(self) -> int:
        return self.tokens[self.i][1]

    def take(self, tok: str) -> None:
        if self.peek() != tok:
            got = self.peek() or "end of input"
            raise ParseError(f"expected {tok!r}, got {got!r}", self.pos())
        self.i += 1

    def imp(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.i += 1
            return Imp(left, self.imp())
        return left

    def disj(self) -> Formula:
        f = self.conj()
        while self.peek() == "|":
            self.i += 1
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.peek() == "&":
            self.i += 1
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        tok, pos = self.tokens[self.i]
        if tok == "~":
            self.i += 1
            return Neg(self.unary())
        if tok == "(":
            self.i += 1
            f = self.imp()
            self.take(")")
            return f
        if tok == "false":
            self.i += 1
            return BOTTOM
        if tok.startswith("P"):
            index = int(tok[1:])
            if index == 0:
                raise ParseError("variable index must be at least 1", pos)
            self.i += 1
            return Var(index)
        raise ParseError(f"unexpected {tok or 'end of input'!r}", pos)

    def end(self) -> None:
        if self.peek() != "":
            raise ParseError(f"unexpected {self.peek()!r}", self.pos())


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.imp()
    p.end()
    return f


def parse_sequent(text: str) -> "Sequent":
    p = _Parser(text)
    ants = []
    if p.peek() != "|-":
        ants.append(p.imp())
        while p.peek() == ",":
            p.i += 1
            ants.append(p.imp())
    p.take("|-")
    goal = p.imp()
    p.end()
    return Sequent(ants, goal)


# ---------------------------------------------------------------------------
# measures and renaming


def formula_length(f: Formula) -> int:
    return f.length


def variables(f: Formula) -> set[int]:
    out: set[int] = set()
    stack = [f]
    seen = set()
    while stack:
        g = stack.pop()
        if g in seen:
            continue
        seen.add(g)
        if isinstance(g, Var):
            out.add(g.index)
        elif isinstance(g, _Binary):
            stack.append(g.left)
            stack.append(g.right)
    return out


def rename_variables(f: Formula, mapping: Mapping[int, int]) -> Formula:
    """Replace every ``Var(i)`` by ``Var(mapping[i])``.

    Indices absent from ``mapping`` are left alone.  Raises ``ValueError``
    if two distinct occurring indices land on the same target.
    """
    _check_injective(variables(f), mapping)
    return _rename(f, mapping, {})


def _check_injective(occurring: Iterable[int], mapping: Mapping[int, int]) -> None:
    seen: dict[int, int] = {}
    for i in sorted(occurring):
        j = mapping.get(i, i)
        if j in seen:
            raise ValueError(f"renaming is not injective: P{seen[j]} and P{i} both map to P{j}")
        seen[j] = i


def _rename(f: Formula, mapping: Mapping[int, int], memo: dict) -> Formula:
    out = memo.get(f)
    if out is not None:
        return out
    if isinstance(f, Var):
        out = Var(mapping.get(f.index, f.index))
    elif f is BOTTOM:
        out = f
    else:
        out = type(f)(_rename(f.left, mapping, memo), _rename(f.right, mapping, memo))
    memo[f] = out
    return out


# ---------------------------------------------------------------------------
# sequents


def _ant_key(f: Formula):
    return (f.length, print_formula(f))


class Sequent:
    """``antecedents |- consequent`` with antecedents in canonical order.

    Canonical order sorts by (length, text) and keeps duplicates, so two
    sequents built from permuted antecedent lists compare and print equal.
    """

    __slots__ = ("antecedents", "consequent", "_hash", "_text", "length")

    def __init__(self, antecedents: Iterable[Formula], consequent: Formula):
        ants = tuple(sorted(antecedents, key=_ant_key))
        self.antecedents = ants
        self.consequent = consequent
        self._hash = hash((tuple(a._hash for a in ants), consequent._hash))
        self._text = None
        self.length = sum(a.length for a in ants) + consequent.length

    @classmethod
    def _presorted(cls, ants: tuple, consequent: Formula) -> "Sequent":
        s = object.__new__(cls)
        s.antecedents = ants
        s.consequent = consequent
        s._hash = hash((tuple(a._hash for a in ants), consequent._hash))
        s._text = None
        s.length = sum(a.length for a in ants) + consequent.length
        return s

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Sequent):
            return NotImplemented
        return (self._hash == other._hash and self.consequent is other.consequent
                and self.antecedents == other.antecedents)

    def __hash__(self) -> int:
        return self._hash

    def __reduce__(self):
        return (Sequent, (self.antecedents, self.consequent))

    @property
    def text(self) -> str:
        t = self._text
        if t is None:
            goal = print_formula(self.consequent)
            if self.antecedents:
                t = ", ".join(print_formula(a) for a in self.antecedents) + " |- " + goal
            else:
                t = "|- " + goal
            self._text = t
        return t

    def __str__(self) -> str:
        return self.text

    def __repr__(self) -> str:
        return f"Sequent({self.text!r})"

    def variables(self) -> set[int]:
        out = variables(self.consequent)
        for a in self.antecedents:
            out |= variables(a)
        return out


def sequent_length(s: Sequent) -> int:
    return s.length


def rename_sequent(s: Sequent, mapping: Mapping[int, int]) -> Sequent:
    _check_injective(s.variables(), mapping)
    memo: dict = {}
    return Sequent([_rename(a, mapping, memo) for a in s.antecedents],
                   _rename(s.consequent, mapping, memo))


def goal_sequent(f: Formula) -> Sequent:
    """The sequent ``|- f``."""
    return Sequent._presorted((), f)


def insert_sorted(ants: Sequence[Formula], extra: Iterable[Formula]) -> tuple:
    """Merge ``extra`` into an already canonical antecedent tuple."""
    out = list(ants)
    for f in extra:
        key = _ant_key(f)
        lo, hi = 0, len(out)
        while lo < hi:
            mid = (lo + hi) // 2
            if _ant_key(out[mid]) <= key:
                lo = mid + 1
            else:
                hi = mid
        out.insert(lo, f)
    return tuple(out)
