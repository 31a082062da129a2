"""Two-parameter marginal families used for each outcome of the bivariate model.

Every family is parameterised by ``(mu, sigma)`` with fixed links:

============  =====================================  ===========  ===========
family        parameterisation                       mu link      sigma link
============  =====================================  ===========  ===========
gaussian      N(mu, sigma^2)                         identity     log
lognormal     log Y ~ N(mu, sigma^2)                 identity     log
loglogistic   F(y) = 1 / (1 + (y / mu)^(-sigma))     log          log
gamma         E[Y] = mu, Var[Y] = sigma^2 mu^2       log          log
============  =====================================  ===========  ===========

All array functions broadcast over numpy inputs. Scores are returned on the
predictor (link) scale, i.e. as derivatives with respect to ``eta_mu`` and
``eta_sigma``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import DomainError

_LOG_2PI = np.log(2.0 * np.pi)

#: F values are clamped into this interval before they enter a copula.
CDF_CLAMP = 1e-12


def _as_array(x):
    return np.asarray(x, dtype=float)


class Marginal:
    """Base class. Subclasses implement the ``_``-prefixed, unchecked kernels."""

    name: str = ""
    positive_support: bool = False
    positive_mu: bool = False

    # -- links ---------------------------------------------------------------
    def params(self, eta_mu, eta_sigma):
        """Map predictors to natural parameters ``(mu, sigma)``."""
        raise NotImplementedError

    def link(self, mu, sigma):
        """Map natural parameters to predictors ``(eta_mu, eta_sigma)``."""
        raise NotImplementedError

    # -- validation ----------------------------------------------------------
    def check_support(self, y):
        y = _as_array(y)
        if not np.all(np.isfinite(y)):
            raise DomainError(f"{self.name}: non-finite response value")
        if self.positive_support and np.any(y <= 0):
            raise DomainError(f"{self.name}: response must be > 0")
        return y

    def check_params(self, mu, sigma):
        mu, sigma = _as_array(mu), _as_array(sigma)
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise DomainError(f"{self.name}: sigma must be > 0")
        if np.any(~np.isfinite(mu)):
            raise DomainError(f"{self.name}: mu must be finite")
        if self.positive_mu and np.any(mu <= 0):
            raise DomainError(f"{self.name}: mu must be > 0")
        return mu, sigma

    # -- public, validated API -------------------------------------------------
    def logpdf(self, y, mu, sigma):
        y = self.check_support(y)
        mu, sigma = self.check_params(mu, sigma)
        return self._logpdf(y, *self.link(mu, sigma))

    def pdf(self, y, mu, sigma):
        return np.exp(self.logpdf(y, mu, sigma))

    def cdf(self, y, mu, sigma):
        y = self.check_support(y)
        mu, sigma = self.check_params(mu, sigma)
        return self._cdf(y, *self.link(mu, sigma))

    def ppf(self, u, mu, sigma):
        u = _as_array(u)
        if np.any(~((u > 0) & (u < 1))):
            raise DomainError("quantile level must lie in (0, 1)")
        mu, sigma = self.check_params(mu, sigma)
        return self._ppf(u, *self.link(mu, sigma))

    def score(self, y, eta_mu, eta_sigma):
        """d log f / d eta for both predictors."""
        y = self.check_support(y)
        return self._score(y, _as_array(eta_mu), _as_array(eta_sigma))

    def cdf_score(self, y, eta_mu, eta_sigma):
        """d F / d eta for both predictors."""
        y = self.check_support(y)
        return self._cdf_score(y, _as_array(eta_mu), _as_array(eta_sigma))

    def start(self, y):
        """Moment-based starting predictors for a constant-parameter fit."""
        raise NotImplementedError

    def __repr__(self):
        return f"<Marginal {self.name}>"


class Gaussian(Marginal):
    name = "gaussian"

    def params(self, eta_mu, eta_sigma):
        return eta_mu, np.exp(eta_sigma)

    def link(self, mu, sigma):
        return mu, np.log(sigma)

    def _z(self, y, eta_mu, eta_sigma):
        return (y - eta_mu) * np.exp(-eta_sigma)

    def _logpdf(self, y, eta_mu, eta_sigma):
        z = self._z(y, eta_mu, eta_sigma)
        return -0.5 * _LOG_2PI - eta_sigma - 0.5 * z * z

    def _cdf(self, y, eta_mu, eta_sigma):
        return special.ndtr(self._z(y, eta_mu, eta_sigma))

    def _ppf(self, u, eta_mu, eta_sigma):
        return eta_mu + np.exp(eta_sigma) * special.ndtri(u)

    def _score(self, y, eta_mu, eta_sigma):
        z = self._z(y, eta_mu, eta_sigma)
        return z * np.exp(-eta_sigma), z * z - 1.0

    def _cdf_score(self, y, eta_mu, eta_sigma):
        z = self._z(y, eta_mu, eta_sigma)
        phi = np.exp(-0.5 * z * z - 0.5 * _LOG_2PI)
        return -phi * np.exp(-eta_sigma), -phi * z

    def start(self, y):
        return float(np.mean(y)), float(np.log(np.std(y) + 1e-12))


class LogNormal(Gaussian):
    name = "lognormal"
    positive_support = True

    def _logpdf(self, y, eta_mu, eta_sigma):
        ly = np.log(y)
        return super()._logpdf(ly, eta_mu, eta_sigma) - ly

    def _cdf(self, y, eta_mu, eta_sigma):
        return super()._cdf(np.log(y), eta_mu, eta_sigma)

    def _ppf(self, u, eta_mu, eta_sigma):
        return np.exp(super()._ppf(u, eta_mu, eta_sigma))

    def _score(self, y, eta_mu, eta_sigma):
        return super()._score(np.log(y), eta_mu, eta_sigma)

    def _cdf_score(self, y, eta_mu, eta_sigma):
        return super()._cdf_score(np.log(y), eta_mu, eta_sigma)

    def start(self, y):
        return super().start(np.log(y))


class LogLogistic(Marginal):
    """Log-logistic with scale ``mu`` (the median) and shape ``sigma``."""

    name = "loglogistic"
    positive_support = True
    positive_mu = True

    def params(self, eta_mu, eta_sigma):
        return np.exp(eta_mu), np.exp(eta_sigma)

    def link(self, mu, sigma):
        return np.log(mu), np.log(sigma)

    @staticmethod
    def _t(y, eta_mu, eta_sigma):
        return np.exp(eta_sigma) * (np.log(y) - eta_mu)

    def _logpdf(self, y, eta_mu, eta_sigma):
        t = self._t(y, eta_mu, eta_sigma)
        return eta_sigma - np.log(y) + t - 2.0 * np.logaddexp(0.0, t)

    def _cdf(self, y, eta_mu, eta_sigma):
        return special.expit(self._t(y, eta_mu, eta_sigma))

    def _ppf(self, u, eta_mu, eta_sigma):
        return np.exp(eta_mu + special.logit(u) * np.exp(-eta_sigma))

    def _score(self, y, eta_mu, eta_sigma):
        t = self._t(y, eta_mu, eta_sigma)
        # d log f / dt = 1 - 2F, written via tanh to stay accurate in the tails
        dt = -np.tanh(0.5 * t)
        return -np.exp(eta_sigma) * dt, 1.0 + t * dt

    def _cdf_score(self, y, eta_mu, eta_sigma):
        t = self._t(y, eta_mu, eta_sigma)
        dens = special.expit(t) * special.expit(-t)
        return -np.exp(eta_sigma) * dens, t * dens

    def start(self, y):
        ly = np.log(y)
        shape = np.pi / (np.sqrt(3.0) * (np.std(ly) + 1e-12))
        return float(np.median(ly)), float(np.log(shape))


def _dgammainc_da(a, x, tol=1e-17, max_terms=200_000):
    """Derivative of the regularised lower incomplete gamma ``P(a, x)`` in ``a``.

    Uses term-wise differentiation of the series
    ``P(a, x) = sum_k exp((a + k) log x - x - lgamma(a + k + 1))``.
    """
    a, x = np.broadcast_arrays(_as_array(a), _as_array(x))
    a = a.astype(float).ravel()
    x = x.astype(float).ravel()
    out = np.zeros_like(x)
    pos = x > 0
    if not np.any(pos):
        return out.reshape(np.shape(a))
    aa, xx = a[pos], x[pos]
    lx = np.log(xx)
    n_terms = int(min(max_terms, np.ceil(np.max(np.maximum(xx - aa, 0.0) + 15.0 * np.sqrt(xx + aa) + 60.0))))
    acc = np.zeros_like(xx)
    psi = special.digamma(aa + 1.0)
    k = 0
    while k < n_terms:
        log_t = (aa + k) * lx - xx - special.gammaln(aa + k + 1.0)
        t = np.exp(log_t)
        acc += t * (lx - psi)
        psi = psi + 1.0 / (aa + k + 1.0)
        k += 1
        # past the peak of the series and every term negligible
        if k > 5 and np.all((aa + k > xx) & (t <= tol * np.maximum(np.abs(acc), 1e-300))):
            break
    out[pos] = acc
    return out.reshape(np.shape(a))


class Gamma(Marginal):
    """Gamma in mean parameterisation: shape ``1 / sigma^2``, scale ``mu sigma^2``."""

    name = "gamma"
    positive_support = True
    positive_mu = True

    def params(self, eta_mu, eta_sigma):
        return np.exp(eta_mu), np.exp(eta_sigma)

    def link(self, mu, sigma):
        return np.log(mu), np.log(sigma)

    def _logpdf(self, y, eta_mu, eta_sigma):
        a = np.exp(-2.0 * eta_sigma)
        mu = np.exp(eta_mu)
        return (a - 1.0) * np.log(y) - a * y / mu + a * np.log(a) - a * eta_mu - special.gammaln(a)

    def _cdf(self, y, eta_mu, eta_sigma):
        a = np.exp(-2.0 * eta_sigma)
        return special.gammainc(a, a * y * np.exp(-eta_mu))

    def _ppf(self, u, eta_mu, eta_sigma):
        a = np.exp(-2.0 * eta_sigma)
        return special.gammaincinv(a, u) * np.exp(eta_mu) / a

    def _score(self, y, eta_mu, eta_sigma):
        a = np.exp(-2.0 * eta_sigma)
        r = y * np.exp(-eta_mu)
        d_mu = a * (r - 1.0)
        d_a = np.log(r) - r + np.log(a) + 1.0 - special.digamma(a)
        return d_mu, -2.0 * a * d_a

    def _cdf_score(self, y, eta_mu, eta_sigma):
        a = np.exp(-2.0 * eta_sigma)
        r = y * np.exp(-eta_mu)
        x = a * r
        # standard gamma density at x
        g = np.exp((a - 1.0) * np.log(x) - x - special.gammaln(a))
        d_mu = -x * g
        d_a = _dgammainc_da(a, x) + g * r
        return d_mu, -2.0 * a * d_a

    def start(self, y):
        m = np.mean(y)
        return float(np.log(m)), float(np.log(np.std(y) / m + 1e-12))


FAMILIES = {cls.name: cls() for cls in (Gaussian, LogNormal, LogLogistic, Gamma)}


def get_marginal(family) -> Marginal:
    """Look up a family by its config name (or pass an instance through)."""
    if isinstance(family, Marginal):
        return family
    try:
        return FAMILIES[str(family).lower()]
    except KeyError:
        raise DomainError(f"unknown marginal family {family!r}; expected one of {sorted(FAMILIES)}") from None


def marginal_pdf(family, y, mu, sigma):
    return get_marginal(family).pdf(y, mu, sigma)


def marginal_cdf(family, y, mu, sigma):
    return get_marginal(family).cdf(y, mu, sigma)


def marginal_quantile(family, u, mu, sigma):
    return get_marginal(family).ppf(u, mu, sigma)


def marginal_score(family, y, eta_mu, eta_sigma):
    return get_marginal(family).score(y, eta_mu, eta_sigma)


def marginal_cdf_score(family, y, eta_mu, eta_sigma):
    return get_marginal(family).cdf_score(y, eta_mu, eta_sigma)
