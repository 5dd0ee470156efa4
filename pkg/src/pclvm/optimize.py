"""Adam, parameter packing, finite-difference gradients and multi-restart search."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class TrainingFailed(RuntimeError):
    """Raised when a run hits a non-finite objective or gradient."""


@dataclass
class AdamConfig:
    rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    steps: int = 1000
    n_batches: int = 1
    snapshot_every: Optional[int] = None  # default: 5% of the step budget

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.steps < 1 or self.n_batches < 1:
            raise ValueError("steps and n_batches must be >= 1")

    @property
    def snapshot_interval(self) -> int:
        if self.snapshot_every:
            return int(self.snapshot_every)
        return max(1, int(round(0.05 * self.steps)))


@dataclass(frozen=True)
class AdamState:
    t: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(0, np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params, grad, cfg: AdamConfig):
    """One bias-corrected Adam update.  Pure: inputs are not modified."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.shape or grad.shape != state.m.shape:
        raise ValueError("adam_step: length mismatch between state, params and grad")
    if not np.all(np.isfinite(grad)):
        raise TrainingFailed("adam_step: non-finite gradient")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    new_params = params - cfg.rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return AdamState(t, m, v), new_params


def pack_params(params) -> np.ndarray:
    """Flatten a model parameter object into unconstrained coordinates."""
    return params.pack()


def unpack_params(vec, like):
    """Inverse of :func:`pack_params`; ``like`` supplies the shapes."""
    return type(like).unpack(vec, *like.shape_key())


def finite_diff_gradient(objective: Callable[[np.ndarray], float], x, h: float = 1e-5):
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp = objective(x)
        x.flat[i] = orig - h
        fm = objective(x)
        x.flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("finite_diff_gradient: non-finite objective at coordinate %d" % i)
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def adam_minimize(value_and_grad, x0, cfg: AdamConfig, n_items: Optional[int] = None,
                  rng=None, on_snapshot=None):
    """Minimize with Adam, optionally over minibatches.

    ``value_and_grad(x, batch)`` gets an index array (or None when there is a
    single batch).  ``on_snapshot(step, x)`` fires every
    ``cfg.snapshot_interval`` steps and after the final step.
    """
    x = np.array(x0, dtype=float)
    state = AdamState.zeros(x.size)
    rng = np.random.default_rng(rng)
    batches = [None]
    every = cfg.snapshot_interval
    step = 0
    while step < cfg.steps:
        if cfg.n_batches > 1:
            perm = rng.permutation(n_items)
            batches = np.array_split(perm, cfg.n_batches)
        for batch in batches:
            value, grad = value_and_grad(x, batch)
            if not np.isfinite(value):
                raise TrainingFailed("non-finite objective at step %d" % step)
            state, x = adam_step(state, x, grad, cfg)
            step += 1
            if on_snapshot is not None and (step % every == 0 or step == cfg.steps):
                on_snapshot(step, x.copy())
            if step >= cfg.steps:
                break
    return x


@dataclass
class Snapshot:
    step: int
    params: Any
    train_objective: float
    metrics: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    seed: int
    rate: float
    snapshots: list = field(default_factory=list)
    failed: bool = False
    message: str = ""
    selected: Optional[int] = None

    @property
    def final_objective(self) -> float:
        return self.snapshots[-1].train_objective if self.snapshots else float("nan")


@dataclass
class RestartReport:
    runs: list
    best_run: int
    best_snapshot: int
    policy: str

    @property
    def best(self) -> Snapshot:
        return self.runs[self.best_run].snapshots[self.best_snapshot]

    def rows(self):
        """One flat record per snapshot, for CSV output."""
        out = []
        for i, run in enumerate(self.runs):
            if run.failed:
                out.append(dict(run=i, seed=run.seed, rate=run.rate, snapshot="", step="",
                                train_objective="", failed=1, selected=0))
                continue
            for j, snap in enumerate(run.snapshots):
                row = dict(run=i, seed=run.seed, rate=run.rate, snapshot=j, step=snap.step,
                           train_objective=snap.train_objective, failed=0,
                           selected=int(i == self.best_run and j == self.best_snapshot))
                row.update(snap.metrics)
                out.append(row)
        return out


def multi_restart_search(trainer: Callable[[int, float], list], seeds: Sequence[int],
                         rates: Sequence[float], score: Optional[Callable[[Any], dict]] = None,
                         select: str = "train_objective", maximize: bool = False,
                         threads: int = 1) -> RestartReport:
    """Run ``trainer(seed, rate) -> [Snapshot, ...]`` for every (seed, rate).

    ``score(params) -> dict`` annotates each snapshot with validation metrics.
    ``select`` names the snapshot field used for selection: ``train_objective``
    or a metric key written by ``score``.  Ties go to the earliest run.
    """
    if not seeds or not rates:
        raise ValueError("need at least one seed and one rate")
    jobs = [(int(s), float(r)) for r in rates for s in seeds]

    def run(job):
        seed, rate = job
        rec = RunRecord(seed=seed, rate=rate)
        try:
            rec.snapshots = list(trainer(seed, rate))
            if not rec.snapshots:
                raise TrainingFailed("trainer returned no snapshots")
            if score is not None:
                for snap in rec.snapshots:
                    snap.metrics.update(score(snap.params))
        except (TrainingFailed, FloatingPointError, np.linalg.LinAlgError) as err:
            rec.failed = True
            rec.message = str(err)
            rec.snapshots = []
            log.warning("restart seed=%d rate=%g failed: %s", seed, rate, err)
        return rec

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, jobs))
    else:
        runs = [run(j) for j in jobs]

    def key(snap):
        val = snap.train_objective if select == "train_objective" else snap.metrics[select]
        if val is None or not np.isfinite(val):
            return np.inf
        return -val if maximize else val

    best = None
    for i, rec in enumerate(runs):
        if rec.failed:
            continue
        keys = [key(s) for s in rec.snapshots]
        rec.selected = int(np.argmin(keys))
        cand = (keys[rec.selected], i)
        if best is None or cand[0] < best[0]:
            best = cand
    if best is None:
        raise TrainingFailed("all %d restarts failed" % len(runs))
    i = best[1]
    return RestartReport(runs=runs, best_run=i, best_snapshot=runs[i].selected,
                         policy=("max " if maximize else "min ") + select)
