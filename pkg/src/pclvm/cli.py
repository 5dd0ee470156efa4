"""Command line runner: generate, train, eval, gradcheck, reproduce.

Exit codes: 0 success, 1 usage error, 2 run failure, 3 threshold violation.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import experiments, mixture, topic
from .evaluation import build_metrics_report
from .optimize import (AdamConfig, TrainingFailed, finite_diff_gradient, multi_restart_search)
from .serialize import ExperimentConfig, read_params, write_csv, write_params

log = logging.getLogger("pclvm")

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_THRESHOLD = 0, 1, 2, 3
GRAD_RTOL = 1e-4
SNAPSHOT_COLUMNS = ["snapshot", "step", "train_objective", "valid_auc", "valid_error",
                    "valid_negloglik_per_token"]


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        vals = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got %r" % text)
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    if args.dataset == "toy1d":
        d = data_mod.gen_toy_1d(data_mod.Toy1DSpec(seed=seed))
        path = out / "toy1d.txt"
        data_mod.write_vectors(d, path)
        print("wrote %s: %d rows, %d labeled" % (path, d.N, d.labeled_mask.sum()))
    elif args.dataset == "semisup5d":
        spec = data_mod.SemiSup5DSpec(labeled_frac=args.labeled_frac, seed=seed,
                                      balanced=args.balanced)
        d = data_mod.gen_semisup_5d(spec)
        path = out / "semisup5d.txt"
        data_mod.write_vectors(d, path)
        print("wrote %s: %d rows, %d labeled (%d positive)"
              % (path, d.N, d.labeled_mask.sum(), d.y[d.labeled_mask].sum()))
    else:
        spec = data_mod.VowelsSpec(seed=seed, n_train=args.n_train)
        corpus, phi, names, _ = data_mod.gen_vowels_corpus(spec)
        path = out / "vowels.txt"
        data_mod.write_corpus(corpus, path)
        truth = topic.TopicModelParams(phi=phi, eta=np.zeros((len(names), 1)))
        write_params(truth, out / "vowels_truth_phi.txt")
        (out / "vowels_truth_topics.txt").write_text("\n".join(names) + "\n")
        sizes = {k: len(v) for k, v in corpus.splits.items()}
        print("wrote %s: %d docs, V=%d, splits %s, truth topics in vowels_truth_phi.txt"
              % (path, len(corpus), corpus.V, sizes))
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_data(cfg: ExperimentConfig):
    """Returns (train, valid) for the configured family."""
    if cfg.family == "mixture":
        if cfg.data_path:
            d = data_mod.read_vectors(cfg.data_path)
        elif cfg.generator == "toy1d":
            d = data_mod.gen_toy_1d(data_mod.Toy1DSpec(seed=cfg.data_seed))
        elif cfg.generator == "semisup5d":
            d = data_mod.gen_semisup_5d(data_mod.SemiSup5DSpec(
                labeled_frac=cfg.labeled_frac, seed=cfg.data_seed, balanced=cfg.balanced))
        else:
            raise UsageError("unknown vector generator %r" % cfg.generator)
        # mixtures are scored on the data they were fit to
        return d, d
    if cfg.data_path:
        corpus = data_mod.read_corpus(cfg.data_path)
    elif cfg.generator == "vowels":
        corpus = data_mod.gen_vowels_corpus(data_mod.VowelsSpec(seed=cfg.data_seed,
                                                                n_train=cfg.n_train))[0]
    else:
        raise UsageError("unknown corpus generator %r" % cfg.generator)
    if cfg.train_split not in corpus.splits:
        return corpus, corpus
    train = corpus.split(cfg.train_split)
    valid = corpus.split(cfg.valid_split) if cfg.valid_split in corpus.splits else train
    return train, valid


def _mixture_score(valid):
    def score(p):
        rep = build_metrics_report(p, valid)
        return dict(valid_auc=rep.macro_auc if rep.macro_auc is not None else float("nan"),
                    valid_error=rep.macro_error,
                    valid_negloglik_per_token=rep.negloglik)
    return score


def _train_one(cfg: ExperimentConfig, lam: float, train, valid):
    """Restart search for one weight (lambda, or r in mlrep mode)."""
    if cfg.family == "mixture":
        score = _mixture_score(valid)
        if cfg.mode == "mlrep":
            mcfg = mixture.MixPCConfig(r=lam)
            return multi_restart_search(
                lambda s, _: mixture.mix_em_fit(train, cfg.k, mcfg, seed=s,
                                                max_iter=cfg.em_max_iter),
                cfg.seeds, [1.0], score=score, threads=cfg.threads)
        mcfg = mixture.MixPCConfig(lam=lam)

        def trainer(seed, rate):
            a = cfg.adam
            acfg = AdamConfig(rate=rate, beta1=a.beta1, beta2=a.beta2, eps=a.eps, steps=a.steps,
                              n_batches=1, snapshot_every=a.snapshot_every)
            return mixture.mix_pc_fit(train, cfg.k, mcfg, acfg, seed=seed)
        return multi_restart_search(trainer, cfg.seeds, cfg.rates, score=score,
                                    threads=cfg.threads)
    return experiments.lda_restarts(
        train, valid, cfg.k, cfg.mode, 0.0 if cfg.mode == "unsup" else lam, list(cfg.seeds),
        list(cfg.rates), cfg.adam, cfg.eg, threads=cfg.threads, alpha=cfg.alpha, tau=cfg.tau,
        reg=topic.TopicRegConfig(w_eta=cfg.w_eta))


def _snapshot_rows(report):
    rows = []
    for i, run in enumerate(report.runs):
        for j, snap in enumerate(run.snapshots):
            row = dict(snapshot=j, step=snap.step, train_objective=snap.train_objective,
                       run=i, seed=run.seed, rate=run.rate,
                       selected=int(i == report.best_run and j == report.best_snapshot))
            for key in SNAPSHOT_COLUMNS[3:]:
                v = snap.metrics.get(key)
                row[key] = "NA" if v is None or not np.isfinite(v) else v
            rows.append(row)
    return rows


def resolve_config(args) -> ExperimentConfig:
    overrides = dict(mode=args.mode, k=args.k, threads=args.threads, out=args.out)
    if args.lam:
        # the weight grid means r when training the replication baseline
        overrides["reps" if args.mode == "mlrep" else "lambdas"] = args.lam
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.config:
        if not Path(args.config).exists():
            raise UsageError("config file %s not found" % args.config)
        try:
            return ExperimentConfig.from_ini(args.config, **overrides)
        except (ValueError, configparser.Error) as err:
            raise UsageError("bad config %s: %s" % (args.config, err))
    raise UsageError("train needs --config")


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.ini").write_text(cfg.to_ini())
    train, valid = _load_data(cfg)
    weights = cfg.reps if cfg.mode == "mlrep" else cfg.lambdas
    summary = []
    for lam in weights:
        tag = ("r_%g" % lam) if cfg.mode == "mlrep" else ("lambda_%g" % lam)
        t0 = time.perf_counter()
        try:
            report = _train_one(cfg, lam, train, valid)
        except TrainingFailed as err:
            print("training failed for %s: %s" % (tag, err), file=sys.stderr)
            return EXIT_FAILED
        sub = out / tag
        sub.mkdir(exist_ok=True)
        write_params(report.best.params, sub / "params.txt")
        write_csv(_snapshot_rows(report), sub / "snapshots.csv",
                  SNAPSHOT_COLUMNS + ["run", "seed", "rate", "selected"])
        write_csv(report.rows(), sub / "report.csv")
        best = report.best
        row = dict(setting=tag, mode=cfg.mode, weight=lam,
                   seed=report.runs[report.best_run].seed,
                   rate=report.runs[report.best_run].rate, step=best.step,
                   train_objective=best.train_objective,
                   failed_runs=sum(r.failed for r in report.runs),
                   seconds=time.perf_counter() - t0)
        row.update(best.metrics)
        summary.append(row)
        print("%s: selected seed %d rate %g step %d objective %.6g %s"
              % (tag, row["seed"], row["rate"], best.step, best.train_objective,
                 " ".join("%s=%.4f" % kv for kv in best.metrics.items())))
    write_csv(summary, out / "summary.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _load_eval_data(path, model, split):
    if isinstance(model, mixture.MixtureParams):
        d = data_mod.read_vectors(path)
        if d.D != model.D:
            raise UsageError("model has D=%d but data has D=%d" % (model.D, d.D))
        return d
    corpus = data_mod.read_corpus(path)
    if corpus.V != model.V or corpus.C != model.C:
        raise UsageError("model has V=%d C=%d but corpus has V=%d C=%d"
                         % (model.V, model.C, corpus.V, corpus.C))
    if split:
        if split not in corpus.splits:
            raise UsageError("corpus has no split %r (has %s)" % (split, sorted(corpus.splits)))
        corpus = corpus.split(split)
    return corpus


def cmd_eval(args) -> int:
    model = read_params(args.model)
    d = _load_eval_data(args.data, model, args.split)
    eg = topic.EGConfig(T=args.eg_T, nu=args.eg_nu)
    report = build_metrics_report(model, d, eg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_csv([report.as_row()], out / "metrics.csv")
    (out / "metrics.txt").write_text(report.text() + "\n")
    print(report.text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def gradcheck_problem(family: str, seed: int, k: int = 3):
    """Random small problem: returns (objective, analytic_grad, x0, blocks)."""
    rng = np.random.default_rng(seed)
    if family == "mixture":
        N, D = 12, 2
        X = rng.normal(size=(N, D))
        d = mixture.LabeledVectorDataset(X, (rng.random(N) < 0.5).astype(float),
                                         rng.random(N) < 0.7)
        cfg = mixture.MixPCConfig(lam=float(rng.uniform(0.5, 10)))
        x0 = mixture.mix_init_params(d, k, rng).pack() + 0.3 * rng.normal(size=k * (2 * D + 2) - 1)

        def f(v):
            return mixture.mix_pc_value_and_grad(v, d, cfg, k)[0]

        def g(v):
            return mixture.mix_pc_value_and_grad(v, d, cfg, k)[1]
        blocks = {"pi": slice(0, k - 1), "mu": slice(k - 1, k - 1 + k * D),
                  "sigma": slice(k - 1 + k * D, k - 1 + 2 * k * D),
                  "rho": slice(k - 1 + 2 * k * D, None)}
        return f, g, x0, blocks
    V, C, Dn = 8, 2, 5
    docs = []
    for i in range(Dn):
        x = rng.multinomial(int(rng.integers(5, 30)), np.full(V, 1.0 / V))
        y = (rng.random(C) < 0.5).astype(float) if i % 3 else None
        docs.append(data_mod.BagOfWordsDocument.from_dense(x, y, doc_id=str(i)))
    corpus = data_mod.Corpus(V=V, C=C, docs=docs)
    eg = topic.EGConfig(T=20, nu=0.05)
    mode = topic.MODES[seed % len(topic.MODES)]
    lam = float(rng.uniform(0.5, 5))
    p0 = topic.lda_init_params(k, V, C, rng)

    def f(v):
        p = topic.TopicModelParams.unpack(v, k, V, C)
        return topic.lda_pc_objective(corpus, p, lam, eg, mode=mode)

    def g(v):
        return topic.lda_objective_gradient(corpus, v, k, V, C, lam, eg, mode=mode)[1]
    nphi = k * (V - 1)
    return f, g, p0.pack(), {"phi": slice(0, nphi), "eta": slice(nphi, None)}


def block_errors(analytic, numeric, blocks) -> dict:
    """Per-block ||a - n||_inf scaled by the whole numeric gradient's ||n||_inf.

    A common scale keeps blocks with tiny true gradients (the eta block when
    labels are ignored) from turning finite-difference round-off into a
    large relative error.
    """
    scale = max(float(np.max(np.abs(numeric))), 1e-8)
    return {name: float(np.max(np.abs(analytic[sl] - numeric[sl]))) / scale
            for name, sl in blocks.items() if analytic[sl].size}


def run_gradcheck(family, seeds, k=3, grad_fn=None):
    """Returns rows of per-block errors; ``grad_fn`` overrides the analytic gradient."""
    rows = []
    for seed in seeds:
        f, g, x0, blocks = gradcheck_problem(family, seed, k)
        analytic = (grad_fn or g)(x0)
        numeric = finite_diff_gradient(f, x0, h=1e-5)
        errs = block_errors(np.asarray(analytic), numeric, blocks)
        rows.append(dict(family=family, seed=seed, max_error=max(errs.values()),
                         **{"err_" + k_: v for k_, v in errs.items()}))
    return rows


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    seeds = range(seed, seed + args.n)
    rows = run_gradcheck(args.family, seeds, k=args.k or 3)
    worst = max(r["max_error"] for r in rows)
    for r in rows:
        print("  ".join("%s=%s" % (key, ("%.3e" % v) if isinstance(v, float) else v)
                        for key, v in r.items()))
    ok = worst <= GRAD_RTOL
    print("%s: worst relative error %.3e (tolerance %g)" % ("PASS" if ok else "FAIL", worst, GRAD_RTOL))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_csv(rows, Path(args.out) / "gradcheck.csv")
    return EXIT_OK if ok else EXIT_THRESHOLD


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

def cmd_reproduce(args) -> int:
    kw = {}
    if args.threads:
        kw["threads"] = args.threads
    if args.experiment in ("toy1d", "semisup5d") and args.lam:
        kw["lambdas"] = args.lam
    if args.experiment == "vowels":
        if args.lam:
            kw["lambdas"] = args.lam
        if args.k:
            kw["K"] = args.k
        if args.steps:
            kw["steps"] = args.steps
        kw["progress"] = print
    if args.experiment == "toy1d" and args.steps:
        kw["steps"] = args.steps
    if args.seed is not None and args.experiment != "counterexample":
        kw["data_seed"] = args.seed
    if args.experiment == "counterexample":
        kw = {}
    res = experiments.PRESETS[args.experiment](**kw)
    print(res.text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in res.tables.items():
            write_csv(rows, out / ("%s.csv" % name))
        write_csv([dict(check=c.name, value=c.value, op=c.op, threshold=c.threshold,
                        passed=int(c.passed)) for c in res.checks], out / "checks.csv")
        (out / "report.txt").write_text(res.text() + "\n")
    failed = [c for c in res.checks if not c.passed]
    if failed:
        print("\n%d of %d checks failed:" % (len(failed), len(res.checks)))
        for c in failed:
            print("  " + c.line())
        return EXIT_THRESHOLD
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="parallel restarts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pclvm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    g.add_argument("dataset", choices=["toy1d", "semisup5d", "vowels"])
    g.add_argument("--labeled-frac", type=float, default=1.0, help="semisup5d labeled fraction")
    g.add_argument("--balanced", action="store_true",
                   help="semisup5d: draw half of the labeled items from the positives")
    g.add_argument("--n-train", type=int, default=10000, help="vowels training documents")

    t = sub.add_parser("train", parents=[common], help="train with restarts from a config")
    t.add_argument("--config", required=True)
    t.add_argument("--lambda", dest="lam", type=_float_list, help="weights, comma-separated")
    t.add_argument("--k", type=int)
    t.add_argument("--mode", choices=["pc", "bp", "unsup", "mlrep"])

    e = sub.add_parser("eval", parents=[common], help="score a parameter file on data")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default=None)
    e.add_argument("--eg-T", type=int, default=100)
    e.add_argument("--eg-nu", type=float, default=0.005)

    c = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite differences")
    c.add_argument("family", choices=["mixture", "lda"])
    c.add_argument("--k", type=int)
    c.add_argument("--n", type=int, default=5, help="number of random problems")

    r = sub.add_parser("reproduce", parents=[common], help="run a frozen experiment preset")
    r.add_argument("experiment", choices=sorted(experiments.PRESETS))
    r.add_argument("--lambda", dest="lam", type=_float_list)
    r.add_argument("--k", type=int)
    r.add_argument("--steps", type=int, help="override the Adam step budget")
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_USAGE
    except (TrainingFailed, FloatingPointError) as err:
        print("run failed: %s" % err, file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, OSError) as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
