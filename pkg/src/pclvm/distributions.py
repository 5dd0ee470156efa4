"""Log-densities and transforms between constrained and unconstrained spaces.

Everything here is a pure numpy function.  Transforms come in inverse pairs:

* simplex <-> reals: softmax with the last logit pinned to zero
* positive (above a floor) <-> reals: ``floor + exp(u)``
* unit interval <-> reals: logistic / logit
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, expit

SIGMA_FLOOR = 0.001
PROB_CLIP = 1e-12


def log_sum_exp(v, axis=None):
    """Shift-by-max ``log(sum(exp(v)))``; returns -inf when every entry is -inf."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    m = np.max(v, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=float)
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def simplex_from_reals(u):
    """Map K-1 reals (or rows of them) onto the K-simplex."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("simplex_from_reals needs finite input")
    pad = np.zeros(u.shape[:-1] + (1,))
    return softmax(np.concatenate([u, pad], axis=-1), axis=-1)


def reals_from_simplex(p, min_entry=PROB_CLIP):
    """Inverse of :func:`simplex_from_reals`: ``u_k = log p_k - log p_K``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < min_entry):
        raise ValueError(
            "reals_from_simplex needs interior points (entries >= %g); "
            "clip the simplex vector first" % min_entry)
    logp = np.log(p)
    return logp[..., :-1] - logp[..., -1:]


def positive_from_real(u, floor=SIGMA_FLOOR):
    return floor + np.exp(u)


def real_from_positive(x, floor=SIGMA_FLOOR):
    x = np.asarray(x, dtype=float)
    if np.any(x <= floor):
        raise ValueError("real_from_positive: value must exceed the floor %g" % floor)
    out = np.log(x - floor)
    return float(out) if out.ndim == 0 else out


def unit_from_real(u):
    return expit(u)


def real_from_unit(p, clip=PROB_CLIP):
    p = np.clip(np.asarray(p, dtype=float), clip, 1.0 - clip)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# log densities
# ---------------------------------------------------------------------------

def gaussian_diag_logpdf(x, mu, sigma):
    """Diagonal Gaussian log-density; broadcasts, sums over the last axis."""
    x, mu, sigma = (np.asarray(a, dtype=float) for a in (x, mu, sigma))
    z = (x - mu) / sigma
    return np.sum(-0.5 * z * z - np.log(sigma) - 0.5 * np.log(2 * np.pi), axis=-1)


def bernoulli_logpmf(y, rho):
    rho = np.asarray(rho, dtype=float)
    if np.any((rho <= 0) | (rho >= 1)):
        raise ValueError("bernoulli probability must lie in the open interval (0, 1)")
    y = np.asarray(y, dtype=float)
    return y * np.log(rho) + (1.0 - y) * np.log1p(-rho)


def multinomial_counts_logpmf(x, probs):
    """Multinomial log-pmf WITHOUT the ``log(N!/prod x_v!)`` coefficient."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("count vector has a negative entry")
    probs = np.asarray(probs, dtype=float)
    nz = x > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(x[nz] * np.log(probs[nz])))


def dirichlet_logpdf(p, conc):
    p = np.asarray(p, dtype=float)
    conc = np.broadcast_to(np.asarray(conc, dtype=float), p.shape)
    if np.any(conc <= 0):
        raise ValueError("Dirichlet concentration must be positive")
    log_norm = gammaln(np.sum(conc, axis=-1)) - np.sum(gammaln(conc), axis=-1)
    return log_norm + np.sum((conc - 1.0) * np.log(p), axis=-1)


def beta_logpdf(p, a, b):
    p = np.asarray(p, dtype=float)
    if a <= 0 or b <= 0:
        raise ValueError("Beta parameters must be positive")
    log_norm = gammaln(a + b) - gammaln(a) - gammaln(b)
    return log_norm + (a - 1.0) * np.log(p) + (b - 1.0) * np.log1p(-p)


@dataclass
class DensityParams:
    """Tagged parameter bundle for :func:`log_density`.

    ``family`` is one of gaussian_diag, bernoulli, multinomial_counts,
    dirichlet, beta.
    """
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.family == "gaussian_diag":
            if np.any(np.asarray(p["sigma"]) < SIGMA_FLOOR):
                raise ValueError("sigma below floor %g" % SIGMA_FLOOR)
        elif self.family == "bernoulli":
            if not 0.0 < p["rho"] < 1.0:
                raise ValueError("rho must lie in (0, 1)")
        elif self.family == "multinomial_counts":
            probs = np.asarray(p["probs"])
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError("event probabilities must lie on the simplex")
        elif self.family == "dirichlet":
            if np.any(np.asarray(p["conc"]) <= 0):
                raise ValueError("concentrations must be positive")
        elif self.family == "beta":
            if p["a"] <= 0 or p["b"] <= 0:
                raise ValueError("concentrations must be positive")
        else:
            raise ValueError("unknown family %r" % self.family)


def log_density(dp: DensityParams, value):
    p = dp.params
    if dp.family == "gaussian_diag":
        return float(gaussian_diag_logpdf(value, p["mu"], p["sigma"]))
    if dp.family == "bernoulli":
        return float(bernoulli_logpmf(value, p["rho"]))
    if dp.family == "multinomial_counts":
        return multinomial_counts_logpmf(value, p["probs"])
    if dp.family == "dirichlet":
        return float(dirichlet_logpdf(value, p["conc"]))
    if dp.family == "beta":
        return float(beta_logpdf(value, p["a"], p["b"]))
    raise ValueError("unknown family %r" % dp.family)
