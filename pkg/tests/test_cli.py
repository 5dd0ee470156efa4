import csv

import numpy as np
import pytest

from pclvm import cli
from pclvm.data import read_splits, read_vectors
from pclvm.serialize import read_params


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_ini(path, text):
    path.write_text(text)
    return str(path)


MIX_INI = """
[experiment]
family = mixture
mode = pc
k = 2
lambda = 1, 4
seeds = 0, 1
rates = 0.1

[data]
generator = toy1d
seed = 21

[adam]
steps = 60
snapshot_every = 20
"""

LDA_INI = """
[experiment]
family = lda
mode = pc
k = 3
lambda = 0
seeds = 0
rates = 0.05

[data]
path = {path}

[adam]
steps = 12
n_batches = 2
snapshot_every = 4

[eg]
T = 10
"""


# --- generate ---------------------------------------------------------------

def test_generate_toy(tmp_path, capsys):
    assert cli.main(["generate", "toy1d", "--out", str(tmp_path)]) == 0
    d = read_vectors(tmp_path / "toy1d.txt")
    assert d.N == 350
    assert "350 rows" in capsys.readouterr().out


def test_generate_semisup(tmp_path):
    assert cli.main(["generate", "semisup5d", "--labeled-frac", "0.03", "--out", str(tmp_path)]) == 0
    d = read_vectors(tmp_path / "semisup5d.txt")
    assert d.N == 5000 and d.labeled_mask.sum() == 150


def test_generate_vowels(tmp_path):
    assert cli.main(["generate", "vowels", "--out", str(tmp_path)]) == 0
    splits = read_splits(tmp_path / "vowels.txt.splits")
    assert {k: len(v) for k, v in splits.items()} == {"train": 10000, "valid": 500, "test": 500}
    truth = read_params(tmp_path / "vowels_truth_phi.txt")
    assert truth.phi.shape == (30, 676)
    assert (tmp_path / "vowels_truth_topics.txt").read_text().split()[:2] == ["A", "B"]


# --- train ------------------------------------------------------------------

def test_train_mixture_outputs(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "resolved_config.ini").exists()
    for lam in ("1", "4"):
        snaps = rows(out / ("lambda_%s" % lam) / "snapshots.csv")
        assert list(snaps[0])[:6] == cli.SNAPSHOT_COLUMNS
        assert len(snaps) == 2 * 3
        assert sum(int(r["selected"]) for r in snaps) == 1
        assert read_params(out / ("lambda_%s" % lam) / "params.txt").K == 2
    assert [r["setting"] for r in rows(out / "summary.csv")] == ["lambda_1", "lambda_4"]


def test_train_flags_override_config(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--out", str(out), "--lambda", "16",
                     "--k", "3", "--seed", "5"]) == 0
    assert [p.name for p in out.iterdir() if p.is_dir()] == ["lambda_16"]
    assert read_params(out / "lambda_16" / "params.txt").K == 3
    assert {r["seed"] for r in rows(out / "lambda_16" / "snapshots.csv")} == {"5"}


def test_train_mlrep_mode(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--mode", "mlrep", "--lambda", "4",
                     "--out", str(out)]) == 0
    assert (out / "r_4" / "params.txt").exists()


def test_train_is_bit_identical_on_rerun(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["train", "--config", cfg, "--out", str(b), "--threads", "2"]) == 0
    for name in ("lambda_1/params.txt", "lambda_4/snapshots.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_resolved_config_reproduces_run(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", "--config", cfg, "--out", str(a), "--lambda", "4"]) == 0
    assert cli.main(["train", "--config", str(a / "resolved_config.ini"), "--out", str(b)]) == 0
    assert (a / "lambda_4/snapshots.csv").read_bytes() == (b / "lambda_4/snapshots.csv").read_bytes()


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert cli.main(["generate", "vowels", "--n-train", "60", "--out", str(d)]) == 0
    return d / "vowels.txt"


def test_lda_pc_lambda_zero_matches_unsupervised(tmp_path, small_corpus):
    cfg = write_ini(tmp_path / "l.ini", LDA_INI.format(path=small_corpus))
    pc, un = tmp_path / "pc", tmp_path / "un"
    assert cli.main(["train", "--config", cfg, "--out", str(pc)]) == 0
    assert cli.main(["train", "--config", cfg, "--mode", "unsup", "--out", str(un)]) == 0
    assert (pc / "lambda_0/snapshots.csv").read_bytes() == \
        (un / "lambda_0/snapshots.csv").read_bytes()


def test_lda_train_then_eval(tmp_path, small_corpus):
    cfg = write_ini(tmp_path / "l.ini", LDA_INI.format(path=small_corpus))
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--lambda", "10", "--out", str(out)]) == 0
    snaps = rows(out / "lambda_10/snapshots.csv")
    assert all(0 <= float(r["valid_auc"]) <= 1 for r in snaps)
    ev = tmp_path / "ev"
    assert cli.main(["eval", "--model", str(out / "lambda_10/params.txt"), "--data",
                     str(small_corpus), "--split", "test", "--eg-T", "10", "--out", str(ev)]) == 0
    (row,) = rows(ev / "metrics.csv")
    assert int(row["n_items"]) == 500
    assert "negative log-lik" in (ev / "metrics.txt").read_text()


def test_eval_mixture_matches_report(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    out = tmp_path / "run"
    cli.main(["train", "--config", cfg, "--lambda", "4", "--out", str(out)])
    cli.main(["generate", "toy1d", "--seed", "21", "--out", str(tmp_path)])
    assert cli.main(["eval", "--model", str(out / "lambda_4/params.txt"), "--data",
                     str(tmp_path / "toy1d.txt"), "--out", str(tmp_path / "ev")]) == 0
    (row,) = rows(tmp_path / "ev/metrics.csv")
    (summary,) = rows(out / "summary.csv")
    assert float(row["auc_0"]) == pytest.approx(float(summary["valid_auc"]), rel=1e-8)


def test_eval_dimension_mismatch_is_usage_error(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", MIX_INI)
    out = tmp_path / "run"
    cli.main(["train", "--config", cfg, "--lambda", "4", "--out", str(out)])
    cli.main(["generate", "semisup5d", "--out", str(tmp_path)])
    assert cli.main(["eval", "--model", str(out / "lambda_4/params.txt"),
                     "--data", str(tmp_path / "semisup5d.txt")]) == 1


# --- gradcheck --------------------------------------------------------------

@pytest.mark.parametrize("family", ["mixture", "lda"])
def test_gradcheck_passes(family, capsys, tmp_path):
    assert cli.main(["gradcheck", family, "--n", "3", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert len(rows(tmp_path / "gradcheck.csv")) == 3


def test_gradcheck_catches_corrupted_gradient():
    _, g, _, _ = cli.gradcheck_problem("lda", 0)

    def corrupted(x):
        out = np.array(g(x))
        out[0] *= 1.01
        return out

    clean = cli.run_gradcheck("lda", [0])
    bad = cli.run_gradcheck("lda", [0], grad_fn=corrupted)
    assert clean[0]["max_error"] <= cli.GRAD_RTOL
    assert bad[0]["max_error"] > cli.GRAD_RTOL


# --- reproduce and exit codes -----------------------------------------------

def test_reproduce_counterexample(tmp_path, capsys):
    assert cli.main(["reproduce", "counterexample", "--out", str(tmp_path)]) == 0
    assert "replicated" in capsys.readouterr().out
    checks = rows(tmp_path / "checks.csv")
    assert checks and all(r["passed"] == "1" for r in checks)
    sums = [round(float(r["value"]), 2) for r in checks if "sum log" in r["check"]]
    assert sums == [-3.51, -2.66]


@pytest.mark.parametrize("argv", [
    [],
    ["train"],
    ["frobnicate"],
    ["train", "--config", "/nonexistent.ini"],
    ["train", "--config", "x.ini", "--lambda", "a,b"],
    ["gradcheck", "mixture", "--threads", "0"],
])
def test_usage_errors_exit_1(argv):
    assert cli.main(argv) == 1


def test_bad_config_exits_1(tmp_path):
    cfg = write_ini(tmp_path / "bad.ini", MIX_INI.replace("mode = pc", "mode = bp"))
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_unreadable_data_exits_2(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("D=1\n0 | 1 | x\n")
    cfg = write_ini(tmp_path / "m.ini", MIX_INI.replace("generator = toy1d", "path = %s" % bad))
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_threshold_violation_exits_3(monkeypatch, tmp_path):
    from pclvm import experiments as ex
    res = ex.ExperimentResult("fake", checks=[ex.Check("always fails", 1.0, "<=", 0.0)])
    monkeypatch.setitem(ex.PRESETS, "toy1d", lambda **kw: res)
    assert cli.main(["reproduce", "toy1d"]) == 3


def test_help_exits_0():
    assert cli.main(["--help"]) == 0
