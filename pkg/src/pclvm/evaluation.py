"""Label-prediction and density metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from . import mixture, topic

NLL_NOTE = ("heldout NLL uses the MAP plug-in embedding and omits the multinomial "
            "coefficient; compare only across models scored on the same documents")


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks: P(s+ > s-) + P(s+ == s-) / 2."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def error_rate(scores, labels, threshold: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size == 0:
        raise ValueError("error_rate of an empty set")
    return float(np.mean((scores >= threshold) != labels.astype(bool)))


@dataclass
class MetricsReport:
    auc: list                      # per label; None where only one class is present
    error: list                    # per label
    log_py_given_x: float          # mean over labeled items
    negloglik: Optional[float]     # per token (topics) or per item (mixtures)
    n_items: int
    n_labeled: int
    notes: list = field(default_factory=list)

    def __post_init__(self):
        for a in self.auc:
            if a is not None and not 0 <= a <= 1:
                raise ValueError("AUC outside [0, 1]")
        for e in self.error:
            if not 0 <= e <= 1:
                raise ValueError("error rate outside [0, 1]")

    @property
    def macro_auc(self) -> Optional[float]:
        vals = [a for a in self.auc if a is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def macro_error(self) -> float:
        return float(np.mean(self.error)) if self.error else float("nan")

    def as_row(self) -> dict:
        row = dict(n_items=self.n_items, n_labeled=self.n_labeled,
                   macro_auc="NA" if self.macro_auc is None else self.macro_auc,
                   macro_error=self.macro_error, log_py_given_x=self.log_py_given_x,
                   negloglik="NA" if self.negloglik is None else self.negloglik)
        for c, (a, e) in enumerate(zip(self.auc, self.error)):
            row["auc_%d" % c] = "NA" if a is None else a
            row["error_%d" % c] = e
        return row

    def text(self) -> str:
        lines = ["items scored:       %d (%d labeled)" % (self.n_items, self.n_labeled)]
        for c, (a, e) in enumerate(zip(self.auc, self.error)):
            lines.append("label %d: AUC %s  error %.4f"
                         % (c, "n/a (one class)" if a is None else "%.4f" % a, e))
        if self.macro_auc is not None:
            lines.append("macro AUC:          %.4f" % self.macro_auc)
        lines.append("mean log p(y|x):    %.4f" % self.log_py_given_x)
        if self.negloglik is not None:
            lines.append("negative log-lik:   %.4f" % self.negloglik)
        lines.extend("note: " + n for n in self.notes)
        return "\n".join(lines)


def _label_metrics(proba, Y):
    aucs, errs = [], []
    for c in range(Y.shape[1]):
        try:
            aucs.append(roc_auc(proba[:, c], Y[:, c]))
        except ValueError:
            aucs.append(None)
        errs.append(error_rate(proba[:, c], Y[:, c]))
    return aucs, errs


def build_metrics_report(model, data, eg: topic.EGConfig = topic.EGConfig()) -> MetricsReport:
    """Score a mixture on a LabeledVectorDataset or a topic model on a Corpus."""
    if isinstance(model, mixture.MixtureParams):
        m = data.labeled_mask
        if not m.any():
            raise ValueError("dataset has no labeled items to score")
        proba = mixture.mix_predict_label_proba(data.X[m], model)[:, None]
        Y = data.y[m][:, None]
        aucs, errs = _label_metrics(proba, Y)
        lpy = float(np.mean(mixture.mix_log_py_given_x(data.y[m], data.X[m], model)))
        nll = float(-np.mean(mixture.mix_log_px(data.X, model)))
        return MetricsReport(aucs, errs, lpy, nll, data.N, int(m.sum()),
                             ["negloglik is -log p(x) per item"])
    if isinstance(model, topic.TopicModelParams):
        Y, m = data.label_matrix()
        pi = topic.lda_map_embedding(data, model.phi, model.alpha, eg)
        proba = 1.0 / (1.0 + np.exp(-(pi @ model.eta)))
        aucs, errs = _label_metrics(proba[m], Y[m]) if m.any() else ([], [])
        p = np.clip(proba[m], 1e-12, 1 - 1e-12)
        lpy = float(np.mean(np.sum(Y[m] * np.log(p) + (1 - Y[m]) * np.log1p(-p), axis=1))) \
            if m.any() else float("nan")
        nll = topic.lda_heldout_per_token_score(data, model, eg)
        return MetricsReport(aucs, errs, lpy, nll, len(data), int(m.sum()), [NLL_NOTE])
    raise TypeError("unsupported model type %r" % type(model).__name__)
