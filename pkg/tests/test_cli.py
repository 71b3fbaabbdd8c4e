import csv

from iplsearch.calculus import parse_proof
from iplsearch.cli import main
from iplsearch.valuemodel import init_gnn, save_params


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_decide_provable_emits_certificate(capsys):
    code, out, _ = run(capsys, "decide", "P1 -> P1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "provable"
    assert parse_proof("\n".join(lines[1:]) + "\n") is not None


def test_decide_negative(capsys):
    code, out, _ = run(capsys, "decide", "P1 | ~P1")
    assert code == 1 and out.strip() == "unprovable"


def test_check_accepts_and_rejects(tmp_path, capsys):
    cert = tmp_path / "proof.txt"
    assert run(capsys, "decide", "P1 & P2 -> P2 & P1", "--proof-out", str(cert))[0] == 0
    code, out, _ = run(capsys, "check", str(cert), "--goal", "P1 & P2 -> P2 & P1")
    assert code == 0 and out.strip() == "ok"
    # point the second Init leaf at the wrong antecedent
    text = cert.read_text()
    assert '(Init 1 "P1, P2 |- P1")' in text
    cert.write_text(text.replace('(Init 1 "P1, P2 |- P1")', '(Init 2 "P1, P2 |- P1")'))
    code, out, _ = run(capsys, "check", str(cert), "--goal", "P1 & P2 -> P2 & P1")
    assert code == 1 and out.startswith("rejected at path (0.0.1)")


def test_prove_with_pi0_and_goal_file(tmp_path, capsys):
    goal = tmp_path / "goal.txt"
    goal.write_text("# a goal\n(P1 -> P2) -> ~P2 -> ~P1\n")
    code, out, _ = run(capsys, "prove", str(goal), "--proof-out", str(tmp_path / "c.txt"))
    assert code == 0 and out.startswith("proven steps ")
    assert f"certificate {tmp_path / 'c.txt'}" in out
    code, out, _ = run(capsys, "prove", "((P1 -> P2) -> P1) -> P1", "--step-limit", "50")
    assert code == 1 and out.startswith("not proven")


def test_prove_with_model_and_format(tmp_path, capsys):
    save_params(init_gnn(4, 2, "tm", 0), tmp_path / "m.npz")
    code, out, _ = run(capsys, "prove", "P1 & P2 -> P2 & P1", "--model", str(tmp_path / "m.npz"), "--format", "tm")
    assert code == 0
    code, _, err = run(capsys, "prove", "P1 -> P1", "--model", str(tmp_path / "m.npz"), "--format", "vm")
    assert code == 2 and "--format" in err


def test_usage_errors_name_the_flag(tmp_path, capsys):
    code, _, err = run(capsys, "prove", "P1 -> P1", "--step-limit", "many")
    assert code == 2 and "--step-limit" in err
    code, _, err = run(capsys, "decide", "P1 &&")
    assert code == 2 and "cannot parse" in err
    code, _, err = run(capsys, "prove", "P1 -> P1", "--model", str(tmp_path / "missing.npz"))
    assert code == 2 and "--model" in err
    code, _, err = run(capsys, "--gamma", "1.5", "decide", "P1 -> P1")
    assert code == 2 and "--gamma" in err
    code, _, err = run(capsys, "gen", "--out", str(tmp_path / "x"), "--n-range", "a,b")
    assert code == 2 and "--n-range" in err
    assert run(capsys)[0] == 2


def test_gen_augment_train_bench_chain(tmp_path, capsys):
    lib = tmp_path / "lib.txt"
    assert run(capsys, "gen", "--count", "6", "--seed", "1", "--out", str(lib))[0] == 0
    assert lib.read_text().startswith("# count: 6")
    data = tmp_path / "d.tsv"
    assert run(capsys, "augment", "--library", str(lib), "--n-ge2", "30", "--n-eq1", "5", "--out", str(data))[0] == 0
    model = tmp_path / "m.npz"
    code, out, _ = run(capsys, "train", "--data", str(data), "--kind", "gnn-tm", "--epochs", "2", "--hidden", "4",
                       "--steps", "2", "--out", str(model), "--metrics", str(tmp_path / "metrics.csv"))
    assert code == 0 and out.startswith("test_mse ")
    assert len((tmp_path / "metrics.csv").read_text().splitlines()) == 3
    prefix = tmp_path / "bench"
    code, out, _ = run(capsys, "bench", "--exam", str(lib), "--provers", "pi0,trained", "--model", str(model),
                       "--time-limits", "1,3,10", "--out", str(prefix))
    assert code == 0
    with open(str(prefix) + "_aggregate.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert [r["prover"] for r in rows].count("pi0") == 3 and [r["prover"] for r in rows].count("trained") == 3
    with open(str(prefix) + "_problems.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 6 * 2 * 3


def test_bench_needs_a_model_for_trained(tmp_path, capsys):
    lib = tmp_path / "lib.txt"
    lib.write_text("P1 -> P1\n")
    code, _, err = run(capsys, "bench", "--exam", str(lib), "--provers", "pi0,trained", "--out", str(tmp_path / "b"))
    assert code == 2 and "--provers" in err


def test_api_command(tmp_path, capsys):
    lib = tmp_path / "lib.txt"
    lib.write_text("P1 & P2 -> P2 & P1\n(P1 -> P2) -> ~P2 -> ~P1\nP1 | P2 -> P2 | P1\n"
                   "(P1 | P2 -> P3) -> (P1 -> P3) & (P2 -> P3)\nP1 -> P2 -> P1\n~~~P1 -> ~P1\n")
    code, out, _ = run(capsys, "api", "--library", str(lib), "--iterations", "1", "--epochs", "1",
                       "--hidden", "4", "--steps", "1", "--n-ge2", "20", "--n-eq1", "5",
                       "--out-dir", str(tmp_path / "api"))
    assert code == 0 and "iteration 1 solve_rate" in out
    assert (tmp_path / "api" / "model_1.npz").exists()
    rows = (tmp_path / "api" / "api_log.csv").read_text().splitlines()
    assert rows[0] == "iteration,dataset_size,train_mse,val_mse,test_mse,solve_rate" and len(rows) == 3
