"""Sequent-to-graph encodings for the GNN value model.

Both formats hang the syntax trees of a sequent under a ``Root`` vertex:
one ``Left`` edge per antecedent and one ``Right`` edge to the consequent.
Variable names are erased to the common label ``Var``.

* VM (variable merging): occurrences of the same variable share a vertex;
  every connective occurrence (``false`` included) gets its own vertex.
* TM (term merging): every structurally identical subterm shares a vertex.

Vertex numbering is post-order of first occurrence with ``Root`` last.  The
antecedent order used for the traversal is chosen from the erased graph
structure only (colour refinement, then the smallest encoding among tied
orders), so renaming variables injectively yields the identical graph.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .syntax import BOTTOM, And, Formula, Imp, Or, Sequent, Var


class Label(enum.IntEnum):
    Root = 0
    Imp = 1
    And = 2
    Or = 3
    Bottom = 4
    Var = 5


class Edge(enum.IntEnum):
    Left = 0
    Right = 1


NUM_LABELS = len(Label)

_CONN = {And: Label.And, Or: Label.Or, Imp: Label.Imp}

# orderings tried when colour refinement leaves antecedents tied
MAX_TIE_ORDERS = 720


@dataclass(frozen=True)
class LabeledGraph:
    labels: tuple
    edges: tuple  # (src, dst, Edge)
    root: int

    @property
    def num_vertices(self) -> int:
        return len(self.labels)

    def dump(self) -> str:
        out = [f"v{i} {Label(l).name}" for i, l in enumerate(self.labels)]
        out += [f"e {s} {d} {'L' if e == Edge.Left else 'R'}" for s, d, e in self.edges]
        return "\n".join(out) + "\n"

    def arrays(self) -> "GraphArrays":
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 3)
        return GraphArrays(np.array(self.labels, dtype=np.int64), e[:, 0].copy(),
                           e[:, 1].copy(), e[:, 2].copy())


@dataclass(frozen=True)
class GraphArrays:
    labels: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.labels)


def parse_dump(text: str) -> LabeledGraph:
    labels, edges = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "e":
            edges.append((int(parts[1]), int(parts[2]), Edge.Left if parts[3] == "L" else Edge.Right))
        else:
            if int(parts[0][1:]) != len(labels):
                raise ValueError(f"vertex ids out of order at {line!r}")
            labels.append(Label[parts[1]])
    root = labels.index(Label.Root)
    return LabeledGraph(tuple(labels), tuple(edges), root)


# ---------------------------------------------------------------------------
# construction


def _build(order: Sequence[Formula], goal: Formula, merge_terms: bool):
    labels: list[int] = []
    edges: list[tuple] = []
    vars_: dict[int, int] = {}
    terms: dict[Formula, int] = {}

    def visit(f: Formula) -> int:
        if merge_terms and f in terms:
            return terms[f]
        if isinstance(f, Var):
            v = vars_.get(f.index)
            if v is None:
                v = vars_[f.index] = len(labels)
                labels.append(Label.Var)
        elif f is BOTTOM:
            v = len(labels)
            labels.append(Label.Bottom)
        else:
            a = visit(f.left)
            b = visit(f.right)
            v = len(labels)
            labels.append(_CONN[type(f)])
            edges.append((v, a, Edge.Left))
            edges.append((v, b, Edge.Right))
        if merge_terms:
            terms[f] = v
        return v

    kids = [visit(a) for a in order]
    g = visit(goal)
    root = len(labels)
    labels.append(Label.Root)
    for k in kids:
        edges.append((root, k, Edge.Left))
    edges.append((root, g, Edge.Right))
    return tuple(labels), tuple(edges), root, kids


def _refine(labels, edges, root, kids, distinct: int) -> list:
    """Colour refinement; returns the colour of each root child slot.

    Stops once the children carry ``distinct`` colours or colours are stable;
    both tests are name-independent, so the result is too.
    """
    n = len(labels)
    out_adj = [[] for _ in range(n)]
    in_adj = [[] for _ in range(n)]
    for s, d, e in edges:
        out_adj[s].append((int(e), d))
        in_adj[d].append((int(e), s))
    colour = list(labels)
    n_col = len(set(colour))
    for _ in range(n):
        if len({colour[k] for k in kids}) == distinct:
            break
        sig = [(colour[v],
                tuple(sorted((e, colour[w]) for e, w in out_adj[v])),
                tuple(sorted((e, colour[w]) for e, w in in_adj[v])))
               for v in range(n)]
        table = {s: i for i, s in enumerate(sorted(set(sig)))}
        new = [table[s] for s in sig]
        if len(table) == n_col:
            colour = new
            break
        colour, n_col = new, len(table)
    return [colour[k] for k in kids]


def canonical_antecedent_order(s: Sequent, merge_terms: bool = False) -> list[Formula]:
    """Antecedents of ``s`` in an order that ignores variable names."""
    ants = list(s.antecedents)
    if len(ants) < 2:
        return ants
    labels, edges, root, kids = _build(ants, s.consequent, merge_terms)
    cols = _refine(labels, edges, root, kids, len({id(a) for a in ants}))
    order = sorted(range(len(ants)), key=lambda i: (cols[i], i))
    groups = [list(g) for _, g in itertools.groupby(order, key=lambda i: cols[i])]
    # a group of syntactically equal formulas needs no branching
    tied = [g for g in groups if len({id(ants[i]) for i in g}) > 1]
    if not tied:
        return [ants[i] for i in order]
    n_orders = 1
    for g in tied:
        for k in range(2, len(g) + 1):
            n_orders *= k
    if n_orders > MAX_TIE_ORDERS:
        return [ants[i] for i in order]
    best = None
    best_key = None
    for perms in itertools.product(*(itertools.permutations(g) for g in tied)):
        pick = dict(zip(map(tuple, tied), perms))
        cand = []
        for g in groups:
            cand.extend(pick.get(tuple(g), g))
        seq = [ants[i] for i in cand]
        lab, edg, _, _ = _build(seq, s.consequent, merge_terms)
        key = (lab, edg)
        if best_key is None or key < best_key:
            best, best_key = seq, key
    return best


def _encode(s: Sequent, merge_terms: bool) -> LabeledGraph:
    order = canonical_antecedent_order(s, merge_terms)
    labels, edges, root, _ = _build(order, s.consequent, merge_terms)
    return LabeledGraph(labels, edges, root)


def to_vm_graph(s: Sequent) -> LabeledGraph:
    return _encode(s, merge_terms=False)


def to_tm_graph(s: Sequent) -> LabeledGraph:
    return _encode(s, merge_terms=True)


def encode(s: Sequent, fmt: str) -> LabeledGraph:
    if fmt == "vm":
        return to_vm_graph(s)
    if fmt == "tm":
        return to_tm_graph(s)
    raise ValueError(f"unknown graph format {fmt!r}")


def check_graph(g: LabeledGraph) -> None:
    """Assert the structural invariants of an encoded sequent."""
    n = g.num_vertices
    outs = [[] for _ in range(n)]
    for s, d, e in g.edges:
        assert 0 <= s < n and 0 <= d < n
        outs[s].append(e)
    for v, lab in enumerate(g.labels):
        if lab in (Label.Var, Label.Bottom):
            assert not outs[v], f"leaf {v} has out-edges"
        elif lab == Label.Root:
            assert outs[v].count(Edge.Right) == 1
        else:
            assert sorted(outs[v]) == [Edge.Left, Edge.Right], f"vertex {v} arity"
    # post-order numbering makes every edge point to a smaller id: acyclic
    assert all(d < s for s, d, _ in g.edges)
    seen = {g.root}
    stack = [g.root]
    adj = [[] for _ in range(n)]
    for s, d, _ in g.edges:
        adj[s].append(d)
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    assert len(seen) == n, "unreachable vertex"
