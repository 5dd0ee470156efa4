"""Supervised Gaussian mixtures with one binary target per cluster.

Cluster k emits x from a diagonal Gaussian (mu_k, sigma_k) and y from
Bernoulli(rho_k).  Both p(x) and p(y | x) are exact sums over clusters, so
the prediction-constrained objective

    sum_d -log p(x_d) - lam * sum_{d labeled} log p(y_d | x_d) + R

is evaluated and differentiated in closed form.  The label-replication
baseline is fit by EM.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import distributions as dist
from .distributions import SIGMA_FLOOR, log_sum_exp
from .optimize import AdamConfig, Snapshot, TrainingFailed, adam_minimize

log = logging.getLogger(__name__)


@dataclass
class MixtureParams:
    pi: np.ndarray      # (K,)
    mu: np.ndarray      # (K, D)
    sigma: np.ndarray   # (K, D), >= SIGMA_FLOOR
    rho: np.ndarray     # (K,), in (0, 1)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        self.rho = np.asarray(self.rho, dtype=float)
        K = self.pi.shape[0]
        if K < 1:
            raise ValueError("need at least one cluster")
        if self.mu.shape != self.sigma.shape or self.mu.shape[0] != K or self.rho.shape != (K,):
            raise ValueError("inconsistent mixture parameter shapes")
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1.0) > 1e-9:
            raise ValueError("pi must lie on the simplex")
        if np.any(self.sigma < SIGMA_FLOOR):
            raise ValueError("sigma below floor %g" % SIGMA_FLOOR)
        if np.any((self.rho <= 0) | (self.rho >= 1)):
            raise ValueError("rho must lie in (0, 1)")

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def D(self) -> int:
        return self.mu.shape[1]

    def shape_key(self):
        return (self.K, self.D)

    # Packed layout: [pi logits (K-1) | mu (K*D) | log(sigma - floor) (K*D) | logit rho (K)]
    def pack(self) -> np.ndarray:
        pi = np.clip(self.pi, dist.PROB_CLIP, None)
        pi = pi / pi.sum()
        sig = np.maximum(self.sigma, SIGMA_FLOOR * (1 + 1e-9))
        return np.concatenate([
            dist.reals_from_simplex(pi),
            self.mu.ravel(),
            np.atleast_1d(dist.real_from_positive(sig, SIGMA_FLOOR)).ravel(),
            np.atleast_1d(dist.real_from_unit(self.rho)),
        ])

    @classmethod
    def unpack(cls, vec, K: int, D: int) -> "MixtureParams":
        vec = np.asarray(vec, dtype=float)
        n = (K - 1) + 2 * K * D + K
        if vec.shape != (n,):
            raise ValueError("packed vector has length %d, expected %d" % (vec.size, n))
        i = K - 1
        pi = dist.simplex_from_reals(vec[:i])
        mu = vec[i:i + K * D].reshape(K, D)
        i += K * D
        sigma = dist.positive_from_real(vec[i:i + K * D].reshape(K, D), SIGMA_FLOOR)
        i += K * D
        rho = np.clip(dist.unit_from_real(vec[i:]), dist.PROB_CLIP, 1 - dist.PROB_CLIP)
        return cls(pi=pi, mu=mu, sigma=sigma, rho=rho)


@dataclass
class LabeledVectorDataset:
    X: np.ndarray
    y: np.ndarray
    labeled_mask: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool)
        y = np.asarray(self.y, dtype=float)
        if self.X.shape[0] < 1:
            raise ValueError("empty dataset")
        if y.shape != (self.X.shape[0],) or self.labeled_mask.shape != y.shape:
            raise ValueError("X, y and labeled_mask disagree on N")
        lab = y[self.labeled_mask]
        if np.any(~np.isin(lab, (0.0, 1.0))):
            raise ValueError("labels must be 0/1 wherever labeled_mask is set")
        # unlabeled slots hold 0 so arithmetic stays finite; the mask gates use
        self.y = np.where(self.labeled_mask, y, 0.0)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    @classmethod
    def fully_labeled(cls, X, y):
        y = np.asarray(y, dtype=float)
        return cls(X, y, np.ones(y.shape, dtype=bool))


@dataclass
class MixPCConfig:
    lam: float = 1.0
    r: float = 1.0
    pi_conc: float = 1.01
    rho_a: float = 1.01
    rho_b: float = 1.01

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.r < 1:
            raise ValueError("replication weight r must be >= 1")


# ---------------------------------------------------------------------------
# marginal likelihoods
# ---------------------------------------------------------------------------

def _check_x(X, params):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.D:
        raise ValueError("data dimension %d does not match model dimension %d"
                         % (X.shape[1], params.D))
    return X, single


def _joint_x_terms(X, params):
    """log pi_k + log f(x_d | k), shape (N, K)."""
    loglik = dist.gaussian_diag_logpdf(X[:, None, :], params.mu[None], params.sigma[None])
    return np.log(params.pi)[None, :] + loglik


def _label_terms(y, params):
    """log g(y_d | rho_k), shape (N, K)."""
    y = np.asarray(y, dtype=float)[:, None]
    return y * np.log(params.rho)[None, :] + (1 - y) * np.log1p(-params.rho)[None, :]


def mix_log_px(x, params: MixtureParams):
    X, single = _check_x(x, params)
    out = log_sum_exp(_joint_x_terms(X, params), axis=1)
    return float(out[0]) if single else out


def mix_log_py_given_x(y, x, params: MixtureParams):
    X, single = _check_x(x, params)
    y = np.broadcast_to(np.asarray(y, dtype=float), (X.shape[0],))
    a = _joint_x_terms(X, params)
    out = log_sum_exp(a + _label_terms(y, params), axis=1) - log_sum_exp(a, axis=1)
    out = np.minimum(out, 0.0)
    return float(out[0]) if single else out


def mix_predict_label_proba(x, params: MixtureParams):
    X, single = _check_x(x, params)
    a = _joint_x_terms(X, params)
    resp = np.exp(a - log_sum_exp(a, axis=1)[:, None])
    p = np.clip(resp @ params.rho, dist.PROB_CLIP, 1 - dist.PROB_CLIP)
    return float(p[0]) if single else p


def mix_regularizer(params: MixtureParams, cfg: MixPCConfig) -> float:
    r_pi = -dist.dirichlet_logpdf(params.pi, np.full(params.K, cfg.pi_conc))
    r_rho = -np.sum(dist.beta_logpdf(params.rho, cfg.rho_a, cfg.rho_b))
    return float(r_pi + r_rho)


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------

def mix_pc_objective(data: LabeledVectorDataset, params: MixtureParams, cfg: MixPCConfig) -> float:
    a = _joint_x_terms(data.X, params)
    lpx = log_sum_exp(a, axis=1)
    m = data.labeled_mask
    val = -np.sum(lpx)
    if cfg.lam != 0 and np.any(m):
        lpxy = log_sum_exp(a[m] + _label_terms(data.y[m], params), axis=1)
        val -= cfg.lam * np.sum(lpxy - lpx[m])
    return float(val + mix_regularizer(params, cfg))


def mix_pc_value_and_grad(vec, data: LabeledVectorDataset, cfg: MixPCConfig, K: int):
    """Objective and exact gradient with respect to the packed coordinates."""
    D = data.D
    p = MixtureParams.unpack(vec, K, D)
    X, m = data.X, data.labeled_mask
    a = _joint_x_terms(X, p)
    lpx = log_sum_exp(a, axis=1)
    resp_x = np.exp(a - lpx[:, None])
    lg = _label_terms(data.y, p)
    b = a + lg
    lpxy = log_sum_exp(b, axis=1)
    resp_xy = np.exp(b - lpxy[:, None])
    mf = m.astype(float)[:, None]
    lam = cfg.lam

    value = -np.sum(lpx) - lam * np.sum((lpxy - lpx)[m]) + mix_regularizer(p, cfg)

    # d value / d a_dk and d value / d log g_dk
    W = -resp_x - lam * mf * (resp_xy - resp_x)
    Q = -lam * mf * resp_xy

    c = W.sum(axis=0) - (cfg.pi_conc - 1.0)
    g_pi = (c - p.pi * c.sum())[:-1]

    diff = X[:, None, :] - p.mu[None]                     # (N, K, D)
    var = p.sigma ** 2
    g_mu = np.einsum("nk,nkd->kd", W, diff) / var
    dL_dsig = -1.0 / p.sigma[None] + diff ** 2 / (p.sigma[None] * var[None])
    g_sig = np.einsum("nk,nkd->kd", W, dL_dsig) * (p.sigma - SIGMA_FLOOR)

    y = data.y[:, None]
    g_rho = np.sum(Q * (y - p.rho[None]), axis=0)
    g_rho += -(cfg.rho_a - 1.0) * (1 - p.rho) + (cfg.rho_b - 1.0) * p.rho

    grad = np.concatenate([g_pi, g_mu.ravel(), g_sig.ravel(), g_rho])
    return float(value), grad


def mix_mlrep_objective(data: LabeledVectorDataset, params: MixtureParams, cfg: MixPCConfig) -> float:
    """Joint NLL with each label's likelihood raised to the power r, plus R."""
    if cfg.r < 1:
        raise ValueError("replication weight r must be >= 1")
    a = _joint_x_terms(data.X, params)
    lg = _label_terms(data.y, params) * data.labeled_mask[:, None]
    val = -np.sum(log_sum_exp(a + cfg.r * lg, axis=1))
    return float(val + mix_regularizer(params, cfg))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def mix_init_params(data: LabeledVectorDataset, K: int, rng) -> MixtureParams:
    """Means uniform over the data box, global std for every sigma, uniform pi."""
    rng = np.random.default_rng(rng)
    lo, hi = data.X.min(axis=0), data.X.max(axis=0)
    mu = rng.uniform(lo, hi, size=(K, data.D))
    std = np.maximum(data.X.std(axis=0), 10 * SIGMA_FLOOR)
    sigma = np.tile(std, (K, 1))
    rho = rng.uniform(0.3, 0.7, size=K)
    return MixtureParams(pi=np.full(K, 1.0 / K), mu=mu, sigma=sigma, rho=rho)


def mix_em_mlrep_train(data: LabeledVectorDataset, K: int, cfg: MixPCConfig, seed=0,
                       max_iter: int = 1000, tol: float = 1e-8, trace=None,
                       init: MixtureParams = None) -> MixtureParams:
    """EM for the label-replicated joint MAP objective.

    Unlabeled points carry no label factor.  ``trace``, if a list, receives the
    objective after every iteration (the first entry is the initial value).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    params = init if init is not None else mix_init_params(data, K, rng)
    X, m = data.X, data.labeled_mask.astype(float)
    y = data.y
    N = data.N
    global_std = np.maximum(X.std(axis=0), 10 * SIGMA_FLOOR)

    obj = mix_mlrep_objective(data, params, cfg)
    if trace is not None:
        trace.append(obj)
    for it in range(max_iter):
        a = _joint_x_terms(X, params) + cfg.r * _label_terms(y, params) * m[:, None]
        gamma = np.exp(a - log_sum_exp(a, axis=1)[:, None])

        Nk = gamma.sum(axis=0)
        pi = (Nk + cfg.pi_conc - 1.0) / (N + K * (cfg.pi_conc - 1.0))
        mu = np.empty((K, data.D))
        sigma = np.empty((K, data.D))
        rho = np.empty(K)
        for k in range(K):
            if Nk[k] < 1e-12:
                j = rng.integers(N)
                mu[k] = X[j]
                sigma[k] = global_std
                rho[k] = 0.5
                continue
            w = gamma[:, k]
            mu[k] = w @ X / Nk[k]
            var = w @ (X - mu[k]) ** 2 / Nk[k]
            sigma[k] = np.maximum(np.sqrt(var), SIGMA_FLOOR)
            wl = cfg.r * w * m
            rho[k] = (wl @ y + cfg.rho_a - 1.0) / (wl.sum() + cfg.rho_a + cfg.rho_b - 2.0)
        rho = np.clip(rho, dist.PROB_CLIP, 1 - dist.PROB_CLIP)
        params = MixtureParams(pi=pi / pi.sum(), mu=mu, sigma=sigma, rho=rho)

        new_obj = mix_mlrep_objective(data, params, cfg)
        if trace is not None:
            trace.append(new_obj)
        if not np.isfinite(new_obj):
            raise TrainingFailed("EM objective became non-finite at iteration %d" % it)
        done = abs(obj - new_obj) < tol
        obj = new_obj
        if done:
            break
    return params


def mix_pc_fit(data: LabeledVectorDataset, K: int, cfg: MixPCConfig, adam_cfg: AdamConfig,
               seed=0, init: MixtureParams = None):
    """Adam on the packed PC objective; returns the list of snapshots."""
    rng = np.random.default_rng(seed)
    params0 = init if init is not None else mix_init_params(data, K, rng)
    snaps = []

    def vg(vec, batch):
        return mix_pc_value_and_grad(vec, data, cfg, K)

    def on_snapshot(step, vec):
        p = MixtureParams.unpack(vec, K, data.D)
        obj = mix_pc_objective(data, p, cfg)
        if not np.isfinite(obj):
            raise TrainingFailed("non-finite PC objective at step %d" % step)
        snaps.append(Snapshot(step=step, params=p, train_objective=obj))

    adam_minimize(vg, params0.pack(), adam_cfg, rng=rng, on_snapshot=on_snapshot)
    return snaps


def mix_pc_train(data: LabeledVectorDataset, K: int, cfg: MixPCConfig, adam_cfg: AdamConfig,
                 seed=0) -> MixtureParams:
    """Single PC training run; returns the final parameters."""
    return mix_pc_fit(data, K, cfg, adam_cfg, seed)[-1].params


def mix_em_fit(data, K, cfg, seed=0, max_iter=1000):
    """EM run wrapped as a one-snapshot list for the restart driver."""
    p = mix_em_mlrep_train(data, K, cfg, seed=seed, max_iter=max_iter)
    return [Snapshot(step=0, params=p, train_objective=mix_mlrep_objective(data, p, cfg))]
