"""Multivariate-normal fingerprint model: fitting, density scoring, averaging.

The fingerprint of a genuine satellite population is a fitted mean vector
and covariance; similarity of an observed feature vector is its MVN density

    f(x) = exp(-0.5 (x-mu)^T Sigma^-1 (x-mu)) / sqrt((2 pi)^k |Sigma|).

At k=6 with tight covariances these densities underflow binary64 (training
thresholds land around 1e-190), so all internal scoring runs in log space;
linear densities are materialized only at the reporting edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class MvnModel:
    """Fitted multivariate normal with precomputed scoring quantities."""

    mu: np.ndarray
    sigma: np.ndarray
    k: int
    sigma_inv: np.ndarray = field(repr=False)
    log_norm_const: float = 0.0  # -0.5 * (k ln 2pi + ln|Sigma|)


def fit(samples, regularization_eps: float = 1e-9) -> MvnModel:
    """Fit an MvnModel to an n-by-k matrix of feature rows.

    mu is the column mean, sigma the unbiased (n-1) sample covariance plus a
    ridge of eps * (trace/k) * I. When the empirical covariance is exactly
    zero (all rows equal) the ridge scale falls back to 1 so the model stays
    positive definite.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"samples must be 2-D (n, k), got shape {x.shape}")
    n, k = x.shape
    if n <= k:
        raise ValueError(f"need at least k+1={k + 1} samples to fit, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")

    mu = x.mean(axis=0)
    centered = x - mu
    sigma = centered.T @ centered / (n - 1)
    scale = np.trace(sigma) / k
    if scale <= 0.0:
        scale = 1.0
    sigma = sigma + regularization_eps * scale * np.eye(k)

    # Cholesky also certifies positive definiteness post-regularization.
    chol = np.linalg.cholesky(sigma)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    sigma_inv = np.linalg.inv(sigma)
    log_norm_const = -0.5 * (k * np.log(2.0 * np.pi) + logdet)
    return MvnModel(mu=mu, sigma=sigma, k=k, sigma_inv=sigma_inv,
                    log_norm_const=float(log_norm_const))


def _check_vectors(x, model: MvnModel) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.k:
        raise ValueError(f"expected {model.k}-dimensional vectors, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def log_density(x, model: MvnModel):
    """Log of the MVN density at x (a k-vector or an (n, k) matrix)."""
    arr = _check_vectors(x, model)
    d = arr - model.mu
    maha = np.einsum("ni,ij,nj->n", d, model.sigma_inv, d)
    out = model.log_norm_const - 0.5 * maha
    return float(out[0]) if np.ndim(x) == 1 else out


def density(x, model: MvnModel):
    """MVN density at x; underflows to 0.0 below ~1e-308 (use log_density)."""
    return np.exp(log_density(x, model))


def max_density(model: MvnModel) -> float:
    """Largest achievable density, attained at x = mu."""
    return float(np.exp(model.log_norm_const))


def avg_score(xs, model: MvnModel, average_features: bool = False) -> float:
    """Average MVN score of several sample points.

    Default is the arithmetic mean of the per-point densities (computed via
    logsumexp, then exponentiated). With average_features=True the points
    are averaged first and a single density of the mean vector is returned;
    kept as an experimental toggle, off by default.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        raise ValueError("avg_score requires at least one sample point")
    if average_features:
        return density(xs.mean(axis=0), model)
    return float(np.exp(log_avg_score(xs, model)))


def log_avg_score(xs, model: MvnModel) -> float:
    """Log of the mean density over sample points (log-sum-exp mean)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        raise ValueError("log_avg_score requires at least one sample point")
    return float(logsumexp(log_density(xs, model)) - np.log(xs.shape[0]))


def log_mean_of_scores(log_scores) -> float:
    """Log-sum-exp mean of already-computed log densities.

    Used when averaging n sample points whose individual log scores are
    known; returns -inf if every score is -inf (all-zero densities).
    """
    log_scores = np.asarray(log_scores, dtype=np.float64)
    if log_scores.size == 0:
        raise ValueError("need at least one score")
    if np.all(np.isneginf(log_scores)):
        return float("-inf")
    return float(logsumexp(log_scores) - np.log(log_scores.size))
