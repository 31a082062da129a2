"""Out-of-sample scores: joint negative log-likelihood and the Monte Carlo energy score."""

from __future__ import annotations

import numpy as np

from .boosting import BoostFit
from .errors import DomainError
from .model import Dataset


def neg_log_lik(fit: BoostFit, data: Dataset, m=None):
    """Negative joint log-likelihood of ``data`` under the fit at iteration ``m``."""
    fit.model.check_response(data.y)
    return fit.model.risk(data.y, fit.eta(data.X, m))


def sample_predictive(fit: BoostFit, X_new, s=100, seed=None, m=None):
    """``s`` draws from the fitted joint distribution at each row of ``X_new``; shape (n, s, 2)."""
    if s < 2:
        raise DomainError("need at least 2 predictive draws")
    X_new = np.asarray(X_new, dtype=float)
    eta = fit.eta(X_new, m)
    n = X_new.shape[0]
    model = fit.model
    rng = np.random.default_rng(seed)
    # observation-major layout: draw i of observation t sits at t * s + i
    rep = np.repeat(eta, s, axis=1)
    uv = model.cop.sample(rep[4], n * s, rng)
    y1 = model.m1._ppf(uv[:, 0], rep[0], rep[1])
    y2 = model.m2._ppf(uv[:, 1], rep[2], rep[3])
    return np.stack([y1, y2], axis=-1).reshape(n, s, 2)


def energy_score_obs(draws, y):
    """Per-observation energy score for draws (n, s, d) and observations (n, d)."""
    draws = np.asarray(draws, dtype=float)
    y = np.asarray(y, dtype=float)
    if draws.ndim == 2:
        draws = draws[None]
        y = y[None]
    n, s, _ = draws.shape
    if s < 2:
        raise DomainError("need at least 2 predictive draws")
    term1 = np.linalg.norm(draws - y[:, None, :], axis=-1).sum(axis=1) / s
    diff = draws[:, :, None, :] - draws[:, None, :, :]
    term2 = np.sqrt(np.einsum("tijd,tijd->tij", diff, diff)).sum(axis=(1, 2)) / (2.0 * s * s)
    return term1 - term2


def energy_score(draws, y, chunk=200):
    """Energy score averaged over observations (biased pairwise estimator)."""
    draws = np.asarray(draws, dtype=float)
    y = np.asarray(y, dtype=float)
    if draws.ndim == 2:
        return float(energy_score_obs(draws, y)[0])
    vals = [energy_score_obs(draws[i:i + chunk], y[i:i + chunk]) for i in range(0, len(y), chunk)]
    return float(np.mean(np.concatenate(vals)))


def score_record(fit: BoostFit, test: Dataset, s=100, seed=None, m=None):
    """``{negloglik, energy_score, m_used, n_test, s}`` for a fit on test data."""
    m_used = fit.mstop if m is None else m
    draws = sample_predictive(fit, test.X, s, seed, m)
    return {
        "negloglik": neg_log_lik(fit, test, m),
        "energy_score": energy_score(draws, test.y),
        "m_used": m_used,
        "n_test": test.n,
        "s": s,
    }


__all__ = ["energy_score", "energy_score_obs", "neg_log_lik", "sample_predictive", "score_record"]
