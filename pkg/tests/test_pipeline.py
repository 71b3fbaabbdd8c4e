import csv

import numpy as np
import pytest

from iplsearch.augment import AugmentConfig, naive_labeler
from iplsearch.calculus import check_proof
from iplsearch.pipeline import (
    ApiConfig, BenchRecord, BenchResult, benchmark, api_iterate, median_step_ratio, pi0_model,
    solve_set, write_api_log, write_bench,
)
from iplsearch.search import SearchConfig, greedy_dfs
from iplsearch.syntax import goal_sequent, parse_formula
from iplsearch.valuemodel import TrainConfig, init_gnn

LIB = [goal_sequent(parse_formula(t)) for t in [
    "P1 & P2 -> P2 & P1", "(P1 -> P2) -> ~P2 -> ~P1", "P1 | P2 -> P2 | P1",
    "(P1 | P2 -> P3) -> (P1 -> P3) & (P2 -> P3)", "P1 -> P2 -> P1", "~~~P1 -> ~P1",
    "(P1 -> P2 -> P3) -> P1 & P2 -> P3", "P1 & (P2 | P3) -> P1 & P2 | P1 & P3",
]]


def small_api(**kw):
    return ApiConfig(iterations=2, kind="gnn-tm", augment=AugmentConfig(30, 5),
                     train=TrainConfig(epochs=2, hidden=4, steps=2), **kw)


def test_trivial_exam_is_fully_solved():
    exam = [goal_sequent(parse_formula("P1 -> P1"))] * 4
    provers = [("pi0", pi0_model()), ("gnn", init_gnn(4, 2, "tm", 0))]
    for mode, limits in (("seconds", [1, 3, 10]), ("steps", [10, 100, 1000])):
        res = benchmark(provers, exam, limits, mode=mode)
        assert all(rate == 1.0 for _, _, rate in res.aggregate())
        assert len(res.records) == 4 * 2 * 3


def test_step_mode_matches_rerunning_each_limit():
    model = init_gnn(4, 2, "vm", 1)
    limits = [1, 4, 20, 200]
    res = benchmark([("m", model)], LIB, limits)
    for r in res.records:
        direct = greedy_dfs(LIB[r.problem_id], model, SearchConfig(step_limit=r.time_limit, backtracking=True))
        assert r.solved == direct.proved


def test_bench_csvs(tmp_path):
    res = benchmark([("pi0", pi0_model()), ("other", init_gnn(4, 1, "tm", 2))], LIB, [5, 50])
    paths = write_bench(tmp_path / "b", res)
    with open(paths[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(LIB) * 2 * 2
    assert all(r["millis"] == "" for r in rows)
    with open(paths[1]) as fh:
        agg = list(csv.DictReader(fh))
    assert [(r["prover"], r["time_limit"]) for r in agg] == [("pi0", "5"), ("pi0", "50"), ("other", "5"), ("other", "50")]
    for r in agg:
        solved = [x for x in rows if x["prover"] == r["prover"] and x["time_limit"] == r["time_limit"]]
        assert float(r["solve_rate"]) == sum(int(x["solved"]) for x in solved) / len(solved)
    with open(paths[2]) as fh:
        cactus = list(csv.DictReader(fh))
    for prover in ("pi0", "other"):
        steps = [int(r["steps"]) for r in cactus if r["prover"] == prover]
        assert steps == sorted(steps)


def test_time_mode_runs():
    res = benchmark([("pi0", pi0_model())], LIB[:2], [5.0], mode="seconds")
    assert [r.solved for r in res.records] == [True, True]
    with pytest.raises(ValueError):
        benchmark([("pi0", pi0_model())], LIB, [1], mode="minutes")


def test_paired_steps_and_median():
    recs = [BenchRecord(0, "a", 10, True, 4, 0), BenchRecord(0, "b", 10, True, 8, 0),
            BenchRecord(1, "a", 10, True, 6, 0), BenchRecord(1, "b", 10, False, 10, 0),
            BenchRecord(2, "a", 10, True, 3, 0), BenchRecord(2, "b", 10, True, 1, 0)]
    pairs = BenchResult(recs, "steps").paired_steps("a", "b")
    assert pairs == [(0, 4, 8), (2, 3, 1)]
    assert median_step_ratio(pairs) == pytest.approx((0.5 + 3.0) / 2)
    assert np.isnan(median_step_ratio([]))


def test_solve_set_certifies():
    label = naive_labeler()
    solved = solve_set(LIB, label)
    assert solved == [i for i, p in enumerate(LIB) if label(p) > 0]
    for i in solved:
        assert check_proof(label.episode(LIB[i]).proof, LIB[i])


def test_api_rows_models_and_determinism(tmp_path):
    a = api_iterate(LIB, small_api())
    b = api_iterate(LIB, small_api())
    assert [r.iteration for r in a.rows] == [0, 1, 2]
    assert len(a.models) == 2 and a.rows == b.rows
    for ma, mb in zip(a.models, b.models):
        assert all(np.array_equal(ma.p[k], mb.p[k]) for k in ma.p)
    assert a.rows[0].solve_rate == len(solve_set(LIB, naive_labeler())) / len(LIB)
    for rate, solved in zip(a.solve_rates, a.solved):
        assert rate == len(solved) / len(LIB)
    write_api_log(tmp_path / "a.csv", a.rows)
    write_api_log(tmp_path / "b.csv", b.rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_api_without_augmentation():
    res = api_iterate(LIB, small_api(augmentation=False))
    assert res.rows[1].dataset_size == len(solve_set(LIB, naive_labeler()))


def test_api_config_validation():
    with pytest.raises(ValueError):
        ApiConfig(iterations=0)
    with pytest.raises(ValueError):
        api_iterate([], ApiConfig())
