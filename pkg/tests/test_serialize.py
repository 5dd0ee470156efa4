import configparser
import csv

import numpy as np
import pytest

from pclvm import serialize as se
from pclvm.mixture import MixtureParams
from pclvm.topic import TopicModelParams


def test_mixture_params_round_trip_exactly(tmp_path, rng):
    p = MixtureParams(pi=rng.dirichlet(np.ones(3)), mu=rng.normal(size=(3, 2)),
                      sigma=rng.uniform(0.1, 2, size=(3, 2)), rho=rng.uniform(0.1, 0.9, 3))
    se.write_params(p, tmp_path / "m.txt")
    q = se.read_params(tmp_path / "m.txt")
    for a, b in ((p.pi, q.pi), (p.mu, q.mu), (p.sigma, q.sigma), (p.rho, q.rho)):
        np.testing.assert_array_equal(a, b)


def test_topic_params_round_trip_exactly(tmp_path, rng):
    p = TopicModelParams(phi=rng.dirichlet(np.ones(7), size=4), eta=rng.normal(size=(4, 2)),
                         alpha=0.5, tau=1.1)
    se.write_params(p, tmp_path / "t.txt")
    q = se.read_params(tmp_path / "t.txt")
    np.testing.assert_array_equal(p.phi, q.phi)
    np.testing.assert_array_equal(p.eta, q.eta)
    assert (q.alpha, q.tau) == (0.5, 1.1)


def test_write_params_rejects_other_objects(tmp_path):
    with pytest.raises(TypeError):
        se.write_params({"pi": 1}, tmp_path / "x.txt")


@pytest.mark.parametrize("text, match", [
    ("family = mixture\narray pi 2\n0.5 0.5\n", "missing its 'end'"),
    ("family = mixture\narray pi 3\n0.5 0.5\nend\n", "has 2 values"),
    ("family = mixture\narray pi 2\n0.5 x\nend\n", ":3: bad number"),
    ("family = mixture\nwhat is this\n", ":2: expected"),
    ("family = gmm\n", "unknown model family"),
    ("family = mixture\narray pi 2\n0.5 0.5\nend\n", "missing field"),
])
def test_read_params_errors(tmp_path, text, match):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        se.read_params(path)


def test_write_csv_formats_floats(tmp_path):
    se.write_csv([{"a": 1, "b": 0.1 + 0.2}, {"a": 2, "c": "x"}], tmp_path / "t.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["a", "b", "c"]
    assert rows[0]["b"] == "0.3" and rows[1]["b"] == "" and rows[1]["c"] == "x"


def test_write_csv_respects_column_order(tmp_path):
    se.write_csv([{"x": 1, "y": 2, "z": 3}], tmp_path / "t.csv", columns=["z", "x"])
    assert (tmp_path / "t.csv").read_text().splitlines() == ["z,x", "3,1"]


INI = """
[experiment]
family = lda
mode = bp
k = 4
lambda = 10, 100
seeds = 0 1
rates = 0.1

[data]
generator = vowels
seed = 3
n_train = 500

[adam]
steps = 20
n_batches = 2

[eg]
T = 30
nu = 0.002
"""


def test_config_from_ini(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(INI)
    cfg = se.ExperimentConfig.from_ini(path)
    assert (cfg.family, cfg.mode, cfg.k) == ("lda", "bp", 4)
    assert cfg.lambdas == (10.0, 100.0) and cfg.seeds == (0, 1) and cfg.rates == (0.1,)
    assert (cfg.generator, cfg.data_seed, cfg.n_train) == ("vowels", 3, 500)
    assert (cfg.adam.steps, cfg.adam.n_batches) == (20, 2)
    assert (cfg.eg.T, cfg.eg.nu) == (30, 0.002)


def test_config_overrides_and_resolved_round_trip(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(INI)
    cfg = se.ExperimentConfig.from_ini(path, k=6, lambdas=(1.0,), threads=None)
    assert cfg.k == 6 and cfg.lambdas == (1.0,) and cfg.threads == 1
    (tmp_path / "r.ini").write_text(cfg.to_ini())
    again = se.ExperimentConfig.from_ini(tmp_path / "r.ini")
    # the resolved file spells out the effective snapshot interval
    assert again.to_ini() == cfg.to_ini()
    assert again.adam.snapshot_interval == cfg.adam.snapshot_interval
    assert (again.eg, again.lambdas, again.seeds) == (cfg.eg, cfg.lambdas, cfg.seeds)


@pytest.mark.parametrize("kw", [
    dict(family="hmm", generator="toy1d"),
    dict(family="mixture", mode="bp", generator="toy1d"),
    dict(family="lda", mode="mlrep", generator="vowels"),
    dict(lambdas=(), generator="toy1d"),
    dict(lambdas=(-1.0,), generator="toy1d"),
    dict(reps=(0.5,), generator="toy1d"),
    dict(),
    dict(generator="toy1d", data_path="x.txt"),
    dict(k=0, generator="toy1d"),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        se.ExperimentConfig(**kw)


def test_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        se.ExperimentConfig.from_ini(tmp_path / "nope.ini")


def test_resolved_config_is_valid_ini():
    cfg = se.ExperimentConfig(generator="toy1d", lambdas=(1.0, 4.0))
    cp = configparser.ConfigParser()
    cp.read_string(cfg.to_ini())
    assert cp["experiment"]["lambda"] == "1.0, 4.0"
