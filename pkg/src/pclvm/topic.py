"""Prediction-constrained supervised LDA.

Each document is embedded on the topic simplex by T exponentiated-gradient
(EG) steps on log Mult(x | pi^T phi) + log Dir(pi | alpha).  The embedding is
a fixed, differentiable function of phi, so the training objective

    J = -sum_d [log Dir(pi_d | alpha) + log p(x_d | pi_d, phi)]
        - lam * sum_{d labeled} sum_c log Bern(y_dc | sigmoid(eta_c . pi_d))
        + R(phi, eta)

is differentiated exactly by running the EG recursion backwards.

Modes: ``pc`` (everything), ``unsup`` (no label term), ``bp`` (no per-document
data terms; the fully discriminative special case).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, log_expit

from . import distributions as dist
from .optimize import AdamConfig, Snapshot, TrainingFailed, adam_minimize

log = logging.getLogger(__name__)

PHI_FLOOR = 1e-12
# each EG iterate is mixed with this much uniform mass so no entry underflows
EG_FLOOR = 1e-12
MODES = ("pc", "unsup", "bp")


@dataclass
class EGConfig:
    T: int = 100
    nu: float = 0.005

    def __post_init__(self):
        if self.T < 1 or self.nu <= 0:
            raise ValueError("EG needs T >= 1 and a positive step size")


@dataclass
class TopicRegConfig:
    w_eta: float = 1e-4


@dataclass
class TopicModelParams:
    phi: np.ndarray          # (K, V), rows on the simplex
    eta: np.ndarray          # (K, C)
    alpha: float = 1.001
    tau: float = 1.001

    def __post_init__(self):
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        self.eta = np.asarray(self.eta, dtype=float)
        if self.eta.ndim == 1:
            self.eta = self.eta[:, None]
        if self.eta.shape[0] != self.phi.shape[0]:
            raise ValueError("eta must have one row per topic")
        if np.any(self.phi < 0) or np.any(np.abs(self.phi.sum(axis=1) - 1) > 1e-9):
            raise ValueError("every topic row must lie on the simplex")
        if self.alpha <= 0 or self.tau <= 0:
            raise ValueError("alpha and tau must be positive")
        if not np.all(np.isfinite(self.eta)):
            raise ValueError("eta must be finite")

    @property
    def K(self) -> int:
        return self.phi.shape[0]

    @property
    def V(self) -> int:
        return self.phi.shape[1]

    @property
    def C(self) -> int:
        return self.eta.shape[1]

    def shape_key(self):
        return (self.K, self.V, self.C, self.alpha, self.tau)

    # Packed layout: [phi row logits, last pinned (K*(V-1)) | eta (K*C)]
    def pack(self) -> np.ndarray:
        phi = np.maximum(self.phi, PHI_FLOOR)
        phi = phi / phi.sum(axis=1, keepdims=True)
        return np.concatenate([dist.reals_from_simplex(phi).ravel(), self.eta.ravel()])

    @classmethod
    def unpack(cls, vec, K, V, C, alpha=1.001, tau=1.001) -> "TopicModelParams":
        vec = np.asarray(vec, dtype=float)
        n = K * (V - 1) + K * C
        if vec.shape != (n,):
            raise ValueError("packed vector has length %d, expected %d" % (vec.size, n))
        phi = dist.simplex_from_reals(vec[:K * (V - 1)].reshape(K, V - 1))
        eta = vec[K * (V - 1):].reshape(K, C)
        return cls(phi=phi, eta=eta, alpha=alpha, tau=tau)


def effective_alpha(alpha: float) -> float:
    """The "add one" trick: alpha < 1 is handled as alpha + 1."""
    return alpha + 1.0 if alpha < 1.0 else alpha


def _as_count_matrix(docs, V):
    """Accepts a Corpus, a list of documents, a single document or a dense array."""
    if hasattr(docs, "count_matrix"):
        return docs.count_matrix()
    if hasattr(docs, "dense"):
        return docs.dense(V)[None, :]
    if isinstance(docs, (list, tuple)) and docs and hasattr(docs[0], "dense"):
        return np.stack([d.dense(V) for d in docs])
    X = np.asarray(docs, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def _is_single(x):
    if hasattr(x, "dense"):
        return True
    if hasattr(x, "docs") or isinstance(x, (list, tuple)):
        return False
    return np.asarray(x).ndim == 1


def _eg_forward(X, phi, alpha, eg: EGConfig, keep=False):
    """Run the EG recursion on a (B, V) count matrix.  Returns pi (and history)."""
    B, K = X.shape[0], phi.shape[0]
    c = effective_alpha(alpha) - 1.0
    pi = np.full((B, K), 1.0 / K, dtype=phi.dtype)
    hist = [pi] if keep else None
    phiT = phi.T
    S = np.empty(X.shape, dtype=phi.dtype)
    for _ in range(eg.T):
        np.matmul(pi, phi, out=S)
        np.maximum(S, PHI_FLOOR, out=S)
        np.divide(X, S, out=S)
        grad = S @ phiT
        if c != 0.0:
            grad += c / pi
        a = np.log(pi) + eg.nu * grad
        a -= a.max(axis=1, keepdims=True)
        e = np.exp(a)
        pi = (e / e.sum(axis=1, keepdims=True) + EG_FLOOR) / (1.0 + K * EG_FLOOR)
        if keep:
            hist.append(pi)
    if not np.all(np.isfinite(pi)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(pi), axis=1))[0])
        raise FloatingPointError("non-finite EG iterate for document %d" % bad)
    return (pi, hist) if keep else pi


def lda_map_embedding(x, phi, alpha=1.001, eg: EGConfig = EGConfig()):
    """MAP document-topic proportions after ``eg.T`` EG steps from uniform.

    ``x`` may be a single document / count vector (returns a K-vector) or a
    corpus / count matrix (returns (D, K)).
    """
    phi = np.asarray(phi, dtype=float)
    X = _as_count_matrix(x, phi.shape[1])
    pi = _eg_forward(X, phi, alpha, eg)
    return pi[0] if _is_single(x) else pi


def lda_log_px_given_pi(x, pi, phi, clip=False):
    """sum_v x_v log(sum_k pi_k phi_kv), without the multinomial coefficient."""
    x = np.asarray(x, dtype=float)
    probs = np.asarray(pi, dtype=float) @ np.asarray(phi, dtype=float)
    if clip:
        probs = np.maximum(probs, PHI_FLOOR)
    nz = x > 0
    if np.any(np.broadcast_to(probs, x.shape)[nz] <= 0):
        log.warning("zero probability at an observed term; log-likelihood is -inf")
    with np.errstate(divide="ignore"):
        terms = np.where(nz, x * np.log(np.where(nz, probs, 1.0)), 0.0)
    return terms.sum(axis=-1) if terms.ndim > 1 else float(terms.sum())


def _log_dir_sym(pi, a):
    K = pi.shape[-1]
    return gammaln(K * a) - K * gammaln(a) + (a - 1.0) * np.sum(np.log(pi), axis=-1)


def _doc_terms(X, Y, M, phi, eta, alpha, lam, eg, mode, keep):
    """Forward pass over a batch; returns per-doc objective pieces and caches."""
    pi, hist = _eg_forward(X, phi, alpha, eg, keep=True) if keep else (_eg_forward(X, phi, alpha, eg), None)
    use_data = mode != "bp"
    use_label = mode != "unsup" and lam != 0
    val = 0.0
    if use_data:
        a = effective_alpha(alpha)
        S = np.maximum(pi @ phi, PHI_FLOOR)
        val -= np.sum(_log_dir_sym(pi, a)) + np.sum(X * np.log(S))
    if use_label:
        z = pi @ eta
        bce = -(Y * log_expit(z) + (1 - Y) * log_expit(-z))
        val += lam * np.sum(bce[M])
    return val, pi, hist


def _regularizer(phi, eta, tau, reg: TopicRegConfig):
    K, V = phi.shape
    logphi = np.log(np.maximum(phi, PHI_FLOOR))
    r = -K * (gammaln(V * tau) - V * gammaln(tau)) - (tau - 1.0) * np.sum(logphi)
    return float(r + 0.5 * reg.w_eta * np.sum(eta ** 2))


def _batch_value_and_grads(X, Y, M, phi, eta, alpha, tau, lam, eg, mode, reg, scale=1.0,
                           doc_index=None):
    """Objective on a batch (doc terms scaled by ``scale``) plus gradients wrt phi, eta."""
    val, pi, hist = _doc_terms(X, Y, M, phi, eta, alpha, lam, eg, mode, keep=True)
    c = effective_alpha(alpha) - 1.0
    use_data = mode != "bp"
    use_label = mode != "unsup" and lam != 0

    dphi = np.zeros_like(phi)
    deta = np.zeros_like(eta)
    dpi = np.zeros_like(pi)
    if use_data:
        S = np.maximum(pi @ phi, PHI_FLOOR)
        R = X / S
        dpi -= c / pi + R @ phi.T
        dphi -= pi.T @ R
    if use_label:
        z = pi @ eta
        err = (expit(z) - Y) * M[:, None]
        dpi += lam * err @ eta.T
        deta += lam * pi.T @ err

    # reverse through the EG steps
    nu = eg.nu
    K = phi.shape[0]
    mix = 1.0 + K * EG_FLOOR
    phiT = phi.T
    S = np.empty(X.shape, dtype=phi.dtype)
    R = np.empty_like(S)
    tmp = np.empty_like(S)
    for t in range(eg.T, 0, -1):
        p_old = hist[t - 1]
        p_soft = hist[t] * mix - EG_FLOOR
        dsoft = dpi / mix
        dA = p_soft * (dsoft - np.sum(p_soft * dsoft, axis=1, keepdims=True))
        dG = nu * dA
        np.matmul(p_old, phi, out=S)
        clipped = S < PHI_FLOOR if S.min() < PHI_FLOOR else None
        np.maximum(S, PHI_FLOOR, out=S)
        np.divide(X, S, out=R)
        dphi += dG.T @ R
        # tmp <- d value / dS = -(dG phi) * X / S^2
        np.matmul(dG, phi, out=tmp)
        tmp *= R
        tmp /= S
        np.negative(tmp, out=tmp)
        if clipped is not None:
            tmp[clipped] = 0.0
        dphi += p_old.T @ tmp
        dpi = dA / p_old + tmp @ phiT
        if c != 0.0:
            dpi -= c * dG / (p_old * p_old)

    if not np.all(np.isfinite(dphi)) or not np.all(np.isfinite(deta)):
        bad = np.flatnonzero(~np.all(np.isfinite(dpi), axis=1))
        if bad.size:
            i = int(bad[0]) if doc_index is None else int(doc_index[bad[0]])
            where = " (document %d)" % i
        else:
            where = ""
        raise TrainingFailed("non-finite gradient%s" % where)

    val *= scale
    dphi *= scale
    deta *= scale
    val += _regularizer(phi, eta, tau, reg)
    dphi -= (tau - 1.0) / np.maximum(phi, PHI_FLOOR)
    deta += reg.w_eta * eta
    return float(val), dphi, deta


def _packed_grad(phi, dphi, deta):
    dU = phi * (dphi - np.sum(phi * dphi, axis=1, keepdims=True))
    return np.concatenate([dU[:, :-1].ravel(), deta.ravel()])


def _corpus_labels(docs, C):
    Y = np.zeros((len(docs), C))
    M = np.array([d.y is not None for d in docs])
    for i, d in enumerate(docs):
        if d.y is not None:
            Y[i] = d.y
    return Y, M


def _corpus_arrays(docs, V, C):
    X = _as_count_matrix(docs, V)
    if hasattr(docs, "label_matrix"):
        Y, M = docs.label_matrix()
    elif hasattr(docs, "dense") or (isinstance(docs, (list, tuple)) and docs
                                    and hasattr(docs[0], "dense")):
        Y, M = _corpus_labels([docs] if hasattr(docs, "dense") else docs, C)
    else:
        Y, M = np.zeros((X.shape[0], C)), np.zeros(X.shape[0], dtype=bool)
    return X, Y, M


def lda_pc_objective(docs, params: TopicModelParams, lam: float = 1.0, eg: EGConfig = EGConfig(),
                     reg: TopicRegConfig = TopicRegConfig(), mode: str = "pc") -> float:
    if mode not in MODES:
        raise ValueError("mode must be one of %s" % (MODES,))
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X, Y, M = _corpus_arrays(docs, params.V, params.C)
    val, _, _ = _doc_terms(X, Y, M, params.phi, params.eta, params.alpha, lam, eg, mode, keep=False)
    return float(val + _regularizer(params.phi, params.eta, params.tau, reg))


def lda_objective_gradient(docs, vec, K, V, C, lam=1.0, eg: EGConfig = EGConfig(),
                           reg: TopicRegConfig = TopicRegConfig(), mode="pc",
                           alpha=1.001, tau=1.001):
    """(objective, gradient) with respect to the packed coordinates of (phi, eta)."""
    if mode not in MODES:
        raise ValueError("mode must be one of %s" % (MODES,))
    p = TopicModelParams.unpack(vec, K, V, C, alpha, tau)
    X, Y, M = _corpus_arrays(docs, V, C)
    val, dphi, deta = _batch_value_and_grads(X, Y, M, p.phi, p.eta, alpha, tau, lam, eg, mode, reg)
    return val, _packed_grad(p.phi, dphi, deta)


def lda_predict_label_proba(x, params: TopicModelParams, eg: EGConfig = EGConfig()):
    pi = lda_map_embedding(x, params.phi, params.alpha, eg)
    return expit(pi @ params.eta)


def lda_heldout_per_token_score(docs, params: TopicModelParams, eg: EGConfig = EGConfig()) -> float:
    """Per-token negative log-likelihood under the MAP plug-in embedding (lower is better).

    The multinomial coefficient is left out, so scores compare models on the
    same documents but are not absolute log-perplexities.
    """
    X = _as_count_matrix(docs, params.V)
    if X.shape[0] == 0:
        raise ValueError("no documents to score")
    pi = _eg_forward(X, params.phi, params.alpha, eg)
    S = np.maximum(pi @ params.phi, PHI_FLOOR)
    return float(-np.sum(X * np.log(S)) / X.sum())


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def lda_init_params(K, V, C, rng, alpha=1.001, tau=1.001, noise=0.5, eta_scale=0.1):
    """Low-variance random topics around uniform, small random regression weights."""
    rng = np.random.default_rng(rng)
    phi = dist.softmax(noise * rng.standard_normal((K, V)), axis=1)
    eta = eta_scale * rng.standard_normal((K, C))
    return TopicModelParams(phi=phi, eta=eta, alpha=alpha, tau=tau)


def lda_fit(corpus, K, mode="pc", lam=1.0, adam_cfg: AdamConfig = AdamConfig(),
            eg: EGConfig = EGConfig(), seed=0, reg: TopicRegConfig = TopicRegConfig(),
            alpha=1.001, tau=1.001, init: TopicModelParams = None, score=None,
            dtype=np.float64):
    """Minibatch Adam on the chosen mode's objective; returns snapshots.

    Each minibatch's document terms are scaled by D / |batch|.  ``score``, if
    given, is called on every snapshot's params and stored as its metrics.
    ``dtype=np.float32`` runs the per-batch forward/backward in single
    precision (about 2x faster); Adam state stays in float64.
    """
    if mode not in MODES:
        raise ValueError("mode must be one of %s" % (MODES,))
    X, Y, M = _corpus_arrays(corpus, corpus.V, corpus.C)
    Xw, Yw = X.astype(dtype), Y.astype(dtype)
    if mode in ("pc", "bp") and lam > 0 and not M.any():
        raise ValueError("mode %r needs at least one labeled document" % mode)
    D, V, C = X.shape[0], corpus.V, corpus.C
    rng = np.random.default_rng(seed)
    p0 = init if init is not None else lda_init_params(K, V, C, rng, alpha, tau)
    snaps = []

    def vg(vec, batch):
        p = TopicModelParams.unpack(vec, K, V, C, alpha, tau)
        if batch is None:
            xb, yb, mb, scale = Xw, Yw, M, 1.0
        else:
            xb, yb, mb, scale = Xw[batch], Yw[batch], M[batch], D / len(batch)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                val, dphi, deta = _batch_value_and_grads(xb, yb, mb, p.phi.astype(dtype),
                                                         p.eta.astype(dtype), alpha, tau, lam,
                                                         eg, mode, reg, scale, batch)
        except TrainingFailed as err:
            if dtype == np.float64:
                raise
            # near-empty topics make the reverse pass stiff; redo the batch in double
            log.warning("single precision gave up (%s); retrying batch in float64", err)
            idx = slice(None) if batch is None else batch
            val, dphi, deta = _batch_value_and_grads(X[idx], Y[idx], M[idx], p.phi, p.eta,
                                                     alpha, tau, lam, eg, mode, reg, scale,
                                                     batch)
        return val, _packed_grad(p.phi, dphi.astype(np.float64), deta.astype(np.float64))

    def on_snapshot(step, vec):
        p = TopicModelParams.unpack(vec, K, V, C, alpha, tau)
        val, _, _ = _doc_terms(X, Y, M, p.phi, p.eta, alpha, lam, eg, mode, keep=False)
        obj = float(val + _regularizer(p.phi, p.eta, tau, reg))
        if not np.isfinite(obj):
            raise TrainingFailed("non-finite objective at step %d" % step)
        snap = Snapshot(step=step, params=p, train_objective=obj)
        if score is not None:
            snap.metrics.update(score(p))
        log.info("lda %s lam=%g step %d objective %.4f %s", mode, lam, step, obj, snap.metrics)
        snaps.append(snap)

    adam_minimize(vg, p0.pack(), adam_cfg, n_items=D, rng=rng, on_snapshot=on_snapshot)
    return snaps


def lda_train(corpus, K, mode="pc", lam=1.0, adam_cfg: AdamConfig = AdamConfig(),
              eg: EGConfig = EGConfig(), seed=0, **kw) -> TopicModelParams:
    """Single training run; returns the final parameters."""
    return lda_fit(corpus, K, mode, lam, adam_cfg, eg, seed, **kw)[-1].params


def two_stage_logistic(train_pi, train_y, valid_pi, valid_y, grid=(0.01, 0.1, 1.0, 10.0, 100.0)):
    """Logistic regression on fixed embeddings, L2 strength picked on validation log-loss.

    Returns a callable mapping embeddings (n, K) to label probabilities (n, C).
    """
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import log_loss

    train_y = np.atleast_2d(np.asarray(train_y).T).T
    valid_y = np.atleast_2d(np.asarray(valid_y).T).T
    models = []
    for c in range(train_y.shape[1]):
        best = None
        for C_reg in grid:
            clf = LogisticRegression(C=C_reg, max_iter=2000).fit(train_pi, train_y[:, c])
            loss = log_loss(valid_y[:, c], clf.predict_proba(valid_pi)[:, 1], labels=[0, 1])
            if best is None or loss < best[0]:
                best = (loss, clf)
        models.append(best[1])

    def predict(pi):
        return np.column_stack([m.predict_proba(pi)[:, 1] for m in models])
    return predict
