"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
import math

from iplsearch.syntax import BOTTOM, And, Imp, Or, Var


def lj_provable(f) -> bool:
    """Provability of ``|- f`` in a set-based LJ with loop checking.

    Contexts are sets and only grow (every left rule keeps its principal
    formula), so a branch revisiting a sequent already on the path can be
    cut.  Left rules whose premises would add nothing are skipped.  Only
    successes are memoised: a failure may depend on the path it was found on.
    """
    proven: set = set()

    def prove(gamma: frozenset, goal, path: frozenset) -> bool:
        key = (gamma, goal)
        if key in proven or goal in gamma or BOTTOM in gamma:
            return True
        if key in path:
            return False
        path = path | {key}
        ok = search(gamma, goal, path)
        if ok:
            proven.add(key)
        return ok

    def search(gamma, goal, path) -> bool:
        if isinstance(goal, And):
            return prove(gamma, goal.left, path) and prove(gamma, goal.right, path)
        if isinstance(goal, Imp):
            return prove(gamma | {goal.left}, goal.right, path)
        for a in gamma:
            if isinstance(a, And) and not (a.left in gamma and a.right in gamma):
                return prove(gamma | {a.left, a.right}, goal, path)
        for a in gamma:
            if isinstance(a, Or) and a.left not in gamma and a.right not in gamma:
                return prove(gamma | {a.left}, goal, path) and prove(gamma | {a.right}, goal, path)
        if isinstance(goal, Or):
            if prove(gamma, goal.left, path) or prove(gamma, goal.right, path):
                return True
        for a in gamma:
            if isinstance(a, Imp) and a.right not in gamma:
                if prove(gamma, a.left, path) and prove(gamma | {a.right}, goal, path):
                    return True
        return False

    return prove(frozenset(), f, frozenset())


def formulas_by_length(nvars: int, max_len: int) -> dict:
    """All formulas over P1..Pn built from &, |, -> and negation (A -> false).

    Negation adds two to the stored length, so with two variables only odd
    lengths occur.  Returned as {length: list}.
    """
    by = {n: [] for n in range(1, max_len + 1)}
    by[1] = [Var(i) for i in range(1, nvars + 1)]
    for n in range(2, max_len + 1):
        out = by[n]
        if n - 2 >= 1:
            out.extend(Imp(a, BOTTOM) for a in by[n - 2])
        for k in range(1, n - 1):
            for a in by[k]:
                for b in by[n - 1 - k]:
                    out.append(And(a, b))
                    out.append(Or(a, b))
                    out.append(Imp(a, b))
    return by


def iter_formulas_of_length(by: dict, n: int):
    """Formulas of exact length ``n`` using the smaller levels of ``by``."""
    if n in by:
        yield from by[n]
        return
    if n - 2 >= 1:
        for a in iter_formulas_of_length(by, n - 2):
            yield Imp(a, BOTTOM)
    for k in range(1, n - 1):
        for a in by[k]:
            for b in by[n - 1 - k]:
                yield And(a, b)
                yield Or(a, b)
                yield Imp(a, b)


def gnn_step_reference(emb, W_msg, b_msg, Wg, Ug, Uc, labels, edges, H):
    """One propagation step written with explicit per-vertex loops."""
    n = len(labels)
    h = [list(emb[l]) for l in labels]

    def matvec(vec, M):
        return [sum(vec[i] * M[i][j] for i in range(len(vec))) for j in range(len(M[0]))]

    msgs = [[0.0] * H for _ in range(n)]
    for s, d, e in edges:
        m_out = matvec(h[d], W_msg[e])
        m_in = matvec(h[s], W_msg[2 + e])
        for j in range(H):
            msgs[s][j] += m_out[j] + b_msg[e][j]
            msgs[d][j] += m_in[j] + b_msg[2 + e][j]

    def sig(x):
        return 1.0 / (1.0 + math.exp(-x))

    out = []
    for v in range(n):
        g = matvec(msgs[v], Wg)
        u = matvec(h[v], Ug)
        z = [sig(g[j] + u[j]) for j in range(H)]
        r = [sig(g[H + j] + u[H + j]) for j in range(H)]
        rh = [r[j] * h[v][j] for j in range(H)]
        c0 = matvec(rh, Uc)
        c = [math.tanh(g[2 * H + j] + c0[j]) for j in range(H)]
        out.append([(1 - z[j]) * h[v][j] + z[j] * c[j] for j in range(H)])
    return out


def bfs_reference(p, label, one_step, children, n_ge2, n_eq1):
    """Literal transcription of the augmentation loop on plain callables."""
    if label(p) <= 0.0:
        return [], []
    queue = [p]
    visited = []
    d_ge2, d_eq1 = [], []
    while queue and len(d_ge2) < n_ge2:
        q = queue.pop(0)
        if q in visited:
            continue
        visited.append(q)
        r = label(q)
        if one_step(q):
            if len(d_eq1) < n_eq1:
                d_eq1.append((q, r))
        else:
            d_ge2.append((q, r))
        queue.extend(children(q))
    return d_ge2, d_eq1


def all_permutations(xs):
    return list(itertools.permutations(xs))
