"""Text formats for parameters, experiment configs and CSV tables.

Parameter files are flat ``key = value`` lines plus array blocks::

    family = mixture
    array mu 2 1
    -0.25
    1.75
    end

Array rows are the last axis; values use ``repr`` so round trips are exact.
"""
from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .mixture import MixtureParams
from .optimize import AdamConfig
from .topic import EGConfig, TopicModelParams


def _fmt(v) -> str:
    return repr(float(v))


def write_params(params, path):
    lines = []
    if isinstance(params, MixtureParams):
        lines += ["family = mixture", "K = %d" % params.K, "D = %d" % params.D]
        arrays = [("pi", params.pi), ("mu", params.mu), ("sigma", params.sigma),
                  ("rho", params.rho)]
    elif isinstance(params, TopicModelParams):
        lines += ["family = lda", "K = %d" % params.K, "V = %d" % params.V,
                  "C = %d" % params.C, "alpha = %s" % _fmt(params.alpha),
                  "tau = %s" % _fmt(params.tau)]
        arrays = [("phi", params.phi), ("eta", params.eta)]
    else:
        raise TypeError("cannot serialize %r" % type(params).__name__)
    for name, arr in arrays:
        arr = np.asarray(arr, dtype=float)
        lines.append("array %s %s" % (name, " ".join(str(n) for n in arr.shape)))
        rows = arr.reshape(-1, arr.shape[-1]) if arr.ndim else arr.reshape(1, 1)
        lines.extend(" ".join(_fmt(v) for v in row) for row in rows)
        lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def read_params(path):
    path = Path(path)
    keys, arrays = {}, {}
    with path.open() as fh:
        it = enumerate(fh, start=1)
        for lineno, line in it:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("array "):
                head = line.split()
                if len(head) < 3:
                    raise ValueError("%s:%d: array header needs a name and shape" % (path, lineno))
                name, shape = head[1], tuple(int(s) for s in head[2:])
                vals = []
                for lineno, row in it:
                    row = row.strip()
                    if row == "end":
                        break
                    try:
                        vals.extend(float(v) for v in row.split())
                    except ValueError:
                        raise ValueError("%s:%d: bad number in array %s" % (path, lineno, name))
                else:
                    raise ValueError("%s: array %s is missing its 'end' line" % (path, name))
                if len(vals) != int(np.prod(shape)):
                    raise ValueError("%s: array %s has %d values, shape %s needs %d"
                                     % (path, name, len(vals), shape, int(np.prod(shape))))
                arrays[name] = np.array(vals).reshape(shape)
            elif "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                keys[k] = v
            else:
                raise ValueError("%s:%d: expected 'key = value' or an array block" % (path, lineno))
    family = keys.get("family")
    try:
        if family == "mixture":
            return MixtureParams(pi=arrays["pi"], mu=arrays["mu"], sigma=arrays["sigma"],
                                 rho=arrays["rho"])
        if family == "lda":
            return TopicModelParams(phi=arrays["phi"], eta=arrays["eta"],
                                    alpha=float(keys["alpha"]), tau=float(keys["tau"]))
    except KeyError as err:
        raise ValueError("%s: missing field %s" % (path, err))
    raise ValueError("%s: unknown model family %r" % (path, family))


def write_csv(rows, path, columns=None):
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("%.10g" % v if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})


def _floats(text: str) -> tuple:
    return tuple(float(s) for s in str(text).replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(s) for s in str(text).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    """Everything needed to rerun a training job."""
    family: str = "mixture"              # mixture | lda
    mode: str = "pc"                     # pc | mlrep | unsup | bp
    k: int = 2
    lambdas: tuple = (1.0,)
    reps: tuple = (1.0,)                 # replication weights r for mlrep
    seeds: tuple = (0, 1, 2, 3, 4)
    rates: tuple = (0.1, 0.01, 0.001)
    threads: int = 1
    # data: a file path, or a generator name plus its seed
    data_path: str = ""
    generator: str = ""
    data_seed: int = 0
    labeled_frac: float = 1.0
    balanced: bool = False
    n_train: int = 10000
    train_split: str = "train"
    valid_split: str = "valid"
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(steps=500))
    eg: EGConfig = field(default_factory=EGConfig)
    alpha: float = 1.001
    tau: float = 1.001
    w_eta: float = 1e-4
    em_max_iter: int = 1000
    out: Optional[str] = None

    def __post_init__(self):
        if self.family not in ("mixture", "lda"):
            raise ValueError("family must be 'mixture' or 'lda'")
        allowed = ("pc", "mlrep") if self.family == "mixture" else ("pc", "unsup", "bp")
        if self.mode not in allowed:
            raise ValueError("mode %r is not available for family %r (choose from %s)"
                             % (self.mode, self.family, ", ".join(allowed)))
        if not self.lambdas or not self.reps:
            raise ValueError("weight grid is empty")
        if any(x < 0 for x in self.lambdas):
            raise ValueError("lambda must be nonnegative")
        if any(x < 1 for x in self.reps):
            raise ValueError("replication weight r must be >= 1")
        if bool(self.data_path) == bool(self.generator):
            raise ValueError("give exactly one of data.path and data.generator")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @classmethod
    def from_ini(cls, path, **overrides) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise FileNotFoundError(path)
        return cls.from_parser(cp, **overrides)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser, **overrides) -> "ExperimentConfig":
        kw = {}
        if cp.has_section("experiment"):
            s = cp["experiment"]
            for key, conv in (("family", str), ("mode", str), ("k", int),
                              ("threads", int), ("em_max_iter", int)):
                if key in s:
                    kw[key] = conv(s[key])
            if "lambda" in s:
                kw["lambdas"] = _floats(s["lambda"])
            if "r" in s:
                kw["reps"] = _floats(s["r"])
            if "seeds" in s:
                kw["seeds"] = _ints(s["seeds"])
            if "rates" in s:
                kw["rates"] = _floats(s["rates"])
        if cp.has_section("data"):
            s = cp["data"]
            for key, name, conv in (("path", "data_path", str), ("generator", "generator", str),
                                    ("seed", "data_seed", int),
                                    ("labeled_frac", "labeled_frac", float),
                                    ("n_train", "n_train", int),
                                    ("train_split", "train_split", str),
                                    ("valid_split", "valid_split", str)):
                if key in s:
                    kw[name] = conv(s[key])
            if "balanced" in s:
                kw["balanced"] = s.getboolean("balanced")
        if cp.has_section("model"):
            s = cp["model"]
            for key in ("alpha", "tau", "w_eta"):
                if key in s:
                    kw[key] = float(s[key])
        adam = {}
        if cp.has_section("adam"):
            s = cp["adam"]
            for key, conv in (("steps", int), ("n_batches", int), ("snapshot_every", int),
                              ("beta1", float), ("beta2", float), ("eps", float)):
                if key in s:
                    adam[key] = conv(s[key])
        eg = {}
        if cp.has_section("eg"):
            s = cp["eg"]
            if "T" in s:
                eg["T"] = int(s["T"])
            if "nu" in s:
                eg["nu"] = float(s["nu"])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        kw["adam"] = AdamConfig(**{"steps": 500, **adam})
        kw["eg"] = EGConfig(**eg)
        return cls(**kw)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["experiment"] = dict(
            family=self.family, mode=self.mode, k=str(self.k),
            **{"lambda": ", ".join(repr(float(x)) for x in self.lambdas)},
            r=", ".join(repr(float(x)) for x in self.reps), seeds=", ".join(str(s) for s in self.seeds),
            rates=", ".join(repr(float(x)) for x in self.rates), threads=str(self.threads),
            em_max_iter=str(self.em_max_iter))
        data = dict(seed=str(self.data_seed), labeled_frac=repr(float(self.labeled_frac)),
                    balanced=str(self.balanced).lower(), n_train=str(self.n_train), train_split=self.train_split,
                    valid_split=self.valid_split)
        if self.data_path:
            data["path"] = self.data_path
        else:
            data["generator"] = self.generator
        cp["data"] = data
        cp["model"] = dict(alpha=repr(self.alpha), tau=repr(self.tau), w_eta=repr(self.w_eta))
        a = self.adam
        cp["adam"] = dict(steps=str(a.steps), n_batches=str(a.n_batches),
                          snapshot_every=str(a.snapshot_interval), beta1=repr(a.beta1),
                          beta2=repr(a.beta2), eps=repr(a.eps))
        cp["eg"] = dict(T=str(self.eg.T), nu=repr(self.eg.nu))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

