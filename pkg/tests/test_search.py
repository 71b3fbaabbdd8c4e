import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings

from iplsearch.calculus import Rule, RuleError, RuleInstance, check_proof, decide, enumerate_actions
from iplsearch.search import (
    Action, LengthModel, Outcome, SearchConfig, State, ValueCache, ValuePolicy, greedy_dfs,
    local_return, naive_greedy_policy, naive_local_choice, reward, run_episode, state_value,
    transition, value_policy,
)
from iplsearch.syntax import goal_sequent, parse_formula, parse_sequent

from strategies import formulas


class TableModel:
    """Values from a dict keyed by sequent text; everything else gets ``default``."""

    def __init__(self, table=None, default=0.5):
        self.table = table or {}
        self.default = default
        self.seen = []

    def evaluate_batch(self, seqs):
        self.seen.extend(seqs)
        return np.array([self.table.get(p.text, self.default) for p in seqs])


class CrcModel:
    """Arbitrary but reproducible values in [0, 1)."""

    def evaluate_batch(self, seqs):
        return np.array([zlib.crc32(p.text.encode()) / 2**32 for p in seqs])


def st(*texts):
    return State(parse_sequent(t) for t in texts)


def test_transition_examples():
    s = st("|- P1 -> P1")
    s1 = transition(s, Action(0, RuleInstance(Rule.ImpRight)))
    assert s1 == st("P1 |- P1")
    assert not transition(s1, Action(0, RuleInstance(Rule.Init, 1)))
    assert transition(st("|- P1 & P2"), Action(0, RuleInstance(Rule.AndRight))) == st("|- P1", "|- P2")
    with pytest.raises(RuleError):
        transition(s, Action(0, RuleInstance(Rule.AndRight)))
    with pytest.raises(RuleError):
        transition(s, Action(3, RuleInstance(Rule.ImpRight)))


def test_reward():
    assert reward(State()) == 1.0
    assert reward(st("|- P1")) == 0.0
    assert reward(st("P1 |- P1")) == 0.0


def test_state_is_a_multiset():
    assert st("|- P1", "|- P2") == st("|- P2", "|- P1")
    assert len(st("|- P1", "|- P1")) == 2


def test_episode_examples():
    e = run_episode(st("|- P1 -> P1"), naive_greedy_policy)
    assert e.outcome is Outcome.PROVED and e.steps == 2 and e.ret == pytest.approx(0.9025)
    assert check_proof(e.proof, parse_sequent("|- P1 -> P1"))
    e = run_episode(st("|- P1 & P2 -> P2 & P1"), naive_greedy_policy)
    assert e.steps == 5 and e.ret == pytest.approx(0.95 ** 5)
    assert round(e.ret, 4) == 0.7738
    e = run_episode(st("P1 |- P2"), naive_greedy_policy)
    assert e.outcome is Outcome.STUCK and e.ret == 0.0
    assert len(e.states) == len(e.actions) + 1


def test_episode_trace_is_consistent():
    e = run_episode(st("|- (P1 | P2 -> P3) -> (P1 -> P3) & (P2 -> P3)"), naive_greedy_policy)
    assert e.proved
    for a, b, act in zip(e.states, e.states[1:], e.actions):
        assert transition(a, act) == b


def test_step_limit():
    e = run_episode(st("|- P1 & P2 -> P2 & P1"), naive_greedy_policy, SearchConfig(step_limit=3))
    assert e.outcome is Outcome.BUDGET_EXCEEDED and e.ret == 0.0


def test_state_value():
    m = TableModel({"|- P1": 0.5, "|- P2": 0.4})
    assert state_value(State(), m) == 1.0
    assert state_value(st("|- P1"), m) == 0.5
    assert state_value(st("|- P1", "|- P2"), m) == pytest.approx(0.2)


def test_naive_policy_examples():
    a = naive_greedy_policy(st("|- P1 | P2 & P3"))
    assert a.rule.rule is Rule.OrRight1
    assert naive_greedy_policy(st("P1 |- P1")).rule.rule is Rule.Init
    assert naive_greedy_policy(st("P1 |- P2")) is None


def test_value_policy_examples():
    m = TableModel({"|- P1": 0.9, "|- P2": 0.1})
    assert value_policy(st("|- P1 | P2"), m).rule.rule is Rule.OrRight1
    m2 = TableModel({"|- P1": 0.1, "|- P2": 0.9})
    assert value_policy(st("|- P1 | P2"), m2).rule.rule is Rule.OrRight2
    scaled = TableModel({"|- P1": 0.45, "|- P2": 0.05})
    assert value_policy(st("|- P1 | P2"), scaled) == value_policy(st("|- P1 | P2"), m)
    for default in (0.0, 0.3, 1.0, 7.0):
        assert value_policy(st("P1 |- P1"), TableModel(default=default)).rule.rule is Rule.Init


def test_value_policy_matches_brute_force_argmax():
    s = st("P1 & P2 |- P2 & P1", "|- P3 | P1", "P1 | P2 |- P2 | P1")
    m = TableModel(default=0.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        m.table = {}
        succ = [(a, transition(s, a)) for a in _all_actions(s)]
        for _, t in succ:
            for p in t.open:
                m.table.setdefault(p.text, float(rng.uniform()))
        for p in s.open:
            m.table.setdefault(p.text, float(rng.uniform()))
        best = max(state_value(t, m) for _, t in succ)
        chosen = value_policy(s, m)
        assert state_value(transition(s, chosen), m) == pytest.approx(best)


def _all_actions(s):
    return [Action(i, r) for i, p in enumerate(s.open) for r in enumerate_actions(p)]


def test_value_cache_evaluates_each_sequent_once():
    m = TableModel(default=0.7)
    pol = ValuePolicy(m)
    run_episode(st("|- (P1 | P2 -> P3) -> (P1 -> P3) & (P2 -> P3)"), pol)
    texts = [p.text for p in m.seen]
    assert len(texts) == len(set(texts))
    cache = ValueCache(m)
    cache.fill([parse_sequent("|- P1")] * 3)
    assert cache.evaluations == 1


def test_cache_clamps_outputs():
    cache = ValueCache(TableModel({"|- P1": 3.0, "|- P2": -1.0}))
    cache.fill([parse_sequent("|- P1"), parse_sequent("|- P2")])
    assert cache[parse_sequent("|- P1")] == 1.0 and cache[parse_sequent("|- P2")] == 0.0


def test_greedy_dfs_examples():
    r = greedy_dfs(parse_sequent("|- P1 -> P1"), TableModel())
    assert r.proved and r.steps <= 3 and check_proof(r.proof, parse_sequent("|- P1 -> P1"))
    peirce = goal_sequent(parse_formula("((P1 -> P2) -> P1) -> P1"))
    r = greedy_dfs(peirce, TableModel(), SearchConfig(step_limit=10**6, backtracking=True))
    assert not r.proved and r.exhausted


def test_greedy_dfs_step_limit():
    g = goal_sequent(parse_formula("((P1 -> P2) -> P1) -> P1"))
    r = greedy_dfs(g, LengthModel(), SearchConfig(step_limit=2, backtracking=True))
    assert not r.proved and not r.exhausted and r.steps == 2


def test_greedy_dfs_is_deterministic():
    g = goal_sequent(parse_formula("(P1 -> P2) -> ~P2 -> ~P1"))
    a = greedy_dfs(g, LengthModel())
    b = greedy_dfs(g, LengthModel())
    assert a.steps == b.steps and a.proof == b.proof


@settings(max_examples=200, deadline=None)
@given(formulas(max_var=2, max_leaves=5))
def test_greedy_dfs_decides(f):
    g = goal_sequent(f)
    r = greedy_dfs(g, LengthModel(), SearchConfig(step_limit=10**7, backtracking=True))
    assert r.proved == decide(g).provable
    if r.proved:
        assert check_proof(r.proof, g)
    else:
        assert r.exhausted


@settings(max_examples=100, deadline=None)
@given(formulas(max_var=3, max_leaves=6), formulas(max_var=3, max_leaves=6))
def test_return_factorises(a, b):
    pa, pb = goal_sequent(a), goal_sequent(b)
    ea = run_episode(State((pa,)), naive_greedy_policy)
    eb = run_episode(State((pb,)), naive_greedy_policy)
    both = run_episode(State((pa, pb)), naive_greedy_policy)
    assert both.ret == pytest.approx(ea.ret * eb.ret, rel=1e-12)
    if ea.proved and eb.proved:
        assert both.steps == ea.steps + eb.steps


@settings(max_examples=150, deadline=None)
@given(formulas(max_var=3, max_leaves=7))
def test_local_return_matches_episode(f):
    p = goal_sequent(f)
    cfg = SearchConfig()
    assert local_return(p, naive_local_choice, cfg, {}) == run_episode(State((p,)), naive_greedy_policy, cfg).ret
    pol = ValuePolicy(CrcModel())
    assert local_return(p, pol.local_choice, cfg, {}) == run_episode(State((p,)), pol, cfg).ret


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SearchConfig(step_limit=0)
    assert math.isclose(SearchConfig().gamma, 0.95)
