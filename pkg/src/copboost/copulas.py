"""Gaussian, Clayton and Gumbel copulas on the predictor scale.

Dependence links keep every predictor unconstrained::

    gaussian  rho   = eta / sqrt(1 + eta^2)
    clayton   theta = exp(eta)
    gumbel    theta = 1 + exp(eta)

``cdf`` and ``kendall_tau`` take the natural dependence parameter; the
log-density, scores and sampler take the predictor ``eta``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import DomainError

#: (u, v) are clamped into [CLAMP, 1 - CLAMP] before evaluation.
CLAMP = 1e-12
LOGDENS_BOUND = 1e10


def _clamp(u):
    return np.clip(np.asarray(u, dtype=float), CLAMP, 1.0 - CLAMP)


def _check_unit(u, v):
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if np.any(~((u > 0) & (u < 1))) or np.any(~((v > 0) & (v < 1))):
        raise DomainError("copula arguments must lie in the open unit square")
    return u, v


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _log_expm1(x):
    """log(exp(x) - 1) for x > 0 without overflow."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 30.0, x, np.log(np.expm1(np.minimum(x, 30.0))))


def bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF via Owen's T function.

    Accurate to roughly machine precision, which the finite-difference
    density checks depend on.
    """
    h, k, rho = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (h, k, rho)))
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = (k - rho * h) / (h * s)
        ak = (h - rho * k) / (k * s)
    th = np.where(h == 0, 0.25 * np.sign(k - rho * h), special.owens_t(h, np.nan_to_num(ah)))
    tk = np.where(k == 0, 0.25 * np.sign(h - rho * k), special.owens_t(k, np.nan_to_num(ak)))
    hk = h * k
    beta = np.where((hk < 0) | ((hk == 0) & (h + k < 0)), 0.5, 0.0)
    out = 0.5 * (special.ndtr(h) + special.ndtr(k)) - th - tk - beta
    both_zero = (h == 0) & (k == 0)
    out = np.where(both_zero, 0.25 + np.arcsin(rho) / (2.0 * np.pi), out)
    return np.clip(out, 0.0, 1.0)


class Copula:
    name: str = ""
    #: predictor value giving (or approaching) independence
    independence_eta: float = 0.0

    def theta(self, eta):
        raise NotImplementedError

    def eta(self, theta):
        raise NotImplementedError

    def dtheta_deta(self, eta):
        raise NotImplementedError

    def check_theta(self, theta):
        raise NotImplementedError

    def cdf(self, u, v, theta):
        u, v = _check_unit(u, v)
        theta = self.check_theta(theta)
        return self._cdf(u, v, theta)

    def logdensity(self, u, v, eta):
        u, v = _check_unit(u, v)
        return self._logdensity(_clamp(u), _clamp(v), np.asarray(eta, dtype=float))

    def score(self, u, v, eta):
        """(d log c / du, d log c / dv, d log c / d eta)."""
        u, v = _check_unit(u, v)
        return self._score(_clamp(u), _clamp(v), np.asarray(eta, dtype=float))

    def _logdensity(self, u, v, eta):
        return np.clip(self._raw_logdensity(u, v, eta), -LOGDENS_BOUND, LOGDENS_BOUND)

    def sample(self, eta, n, seed=None):
        """Draw ``n`` pairs; ``eta`` may be a scalar or a length-``n`` vector."""
        if n < 1:
            raise DomainError("n must be >= 1")
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (n,))
        u, v = self._sample(eta, n, _rng(seed))
        return np.column_stack([_clamp(u), _clamp(v)])

    def kendall_tau(self, theta):
        raise NotImplementedError

    def __repr__(self):
        return f"<Copula {self.name}>"


class GaussianCopula(Copula):
    name = "gaussian"

    def theta(self, eta):
        eta = np.asarray(eta, dtype=float)
        return eta / np.sqrt(1.0 + eta * eta)

    def eta(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta / np.sqrt(1.0 - theta * theta)

    def dtheta_deta(self, eta):
        return (1.0 + np.asarray(eta, dtype=float) ** 2) ** -1.5

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(~((theta > -1) & (theta < 1))):
            raise DomainError("gaussian copula: rho must lie in (-1, 1)")
        return theta

    def _cdf(self, u, v, rho):
        return bvn_cdf(special.ndtri(u), special.ndtri(v), rho)

    def _raw_logdensity(self, u, v, eta):
        rho = self.theta(eta)
        a, b = special.ndtri(u), special.ndtri(v)
        d = 1.0 - rho * rho
        return -0.5 * np.log(d) - (rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * d)

    def _score(self, u, v, eta):
        rho = self.theta(eta)
        a, b = special.ndtri(u), special.ndtri(v)
        d = 1.0 - rho * rho
        phi_a = np.exp(-0.5 * a * a) / np.sqrt(2.0 * np.pi)
        phi_b = np.exp(-0.5 * b * b) / np.sqrt(2.0 * np.pi)
        du = (rho * b - rho * rho * a) / (d * phi_a)
        dv = (rho * a - rho * rho * b) / (d * phi_b)
        drho = rho / d + (a * b * (1.0 + rho * rho) - rho * (a * a + b * b)) / (d * d)
        return du, dv, drho * self.dtheta_deta(eta)

    def _sample(self, eta, n, rng):
        rho = self.theta(eta)
        z = rng.standard_normal((n, 2))
        z2 = rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1]
        return special.ndtr(z[:, 0]), special.ndtr(z2)

    def kendall_tau(self, theta):
        return 2.0 / np.pi * np.arcsin(self.check_theta(theta))


class ClaytonCopula(Copula):
    name = "clayton"
    independence_eta = -np.inf

    def theta(self, eta):
        return np.exp(np.asarray(eta, dtype=float))

    def eta(self, theta):
        return np.log(np.asarray(theta, dtype=float))

    def dtheta_deta(self, eta):
        return self.theta(eta)

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(~(theta > 0)) or np.any(~np.isfinite(theta)):
            raise DomainError("clayton copula: theta must be > 0")
        return theta

    @staticmethod
    def _log_a(lu, lv, theta):
        # log(u^-theta + v^-theta - 1)
        return _log_expm1(np.logaddexp(-theta * lu, -theta * lv))

    def _cdf(self, u, v, theta):
        return np.exp(-self._log_a(np.log(u), np.log(v), theta) / theta)

    def _raw_logdensity(self, u, v, eta):
        theta = self.theta(eta)
        lu, lv = np.log(u), np.log(v)
        la = self._log_a(lu, lv, theta)
        return np.log1p(theta) - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * la

    def _score(self, u, v, eta):
        theta = self.theta(eta)
        lu, lv = np.log(u), np.log(v)
        la = self._log_a(lu, lv, theta)
        ru = np.exp(-theta * lu - la)  # u^-theta / A
        rv = np.exp(-theta * lv - la)
        du = -(1.0 + theta) / u + (2.0 * theta + 1.0) * ru / u
        dv = -(1.0 + theta) / v + (2.0 * theta + 1.0) * rv / v
        dlogA = -(ru * lu + rv * lv)
        dtheta = 1.0 / (1.0 + theta) - lu - lv + la / theta**2 - (2.0 + 1.0 / theta) * dlogA
        return du, dv, dtheta * theta

    def _sample(self, eta, n, rng):
        theta = self.theta(eta)
        e = rng.standard_exponential((n, 2))
        indep = theta <= 0
        th = np.where(indep, 1.0, theta)
        frailty = rng.standard_gamma(1.0 / th)
        # log1p keeps u, v accurate when theta is tiny
        u = np.exp(-np.log1p(e[:, 0] / frailty) / th)
        v = np.exp(-np.log1p(e[:, 1] / frailty) / th)
        u = np.where(indep, np.exp(-e[:, 0]), u)
        v = np.where(indep, np.exp(-e[:, 1]), v)
        return u, v

    def kendall_tau(self, theta):
        theta = self.check_theta(theta)
        return theta / (theta + 2.0)


class GumbelCopula(Copula):
    name = "gumbel"
    independence_eta = -np.inf

    def theta(self, eta):
        return 1.0 + np.exp(np.asarray(eta, dtype=float))

    def eta(self, theta):
        return np.log(np.asarray(theta, dtype=float) - 1.0)

    def dtheta_deta(self, eta):
        return np.exp(np.asarray(eta, dtype=float))

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(~(theta >= 1)) or np.any(~np.isfinite(theta)):
            raise DomainError("gumbel copula: theta must be >= 1")
        return theta

    def _cdf(self, u, v, theta):
        lx, ly = np.log(-np.log(u)), np.log(-np.log(v))
        return np.exp(-np.exp(np.logaddexp(theta * lx, theta * ly) / theta))

    @staticmethod
    def _parts(u, v, theta):
        x, y = -np.log(u), -np.log(v)
        lx, ly = np.log(x), np.log(y)
        lw = np.logaddexp(theta * lx, theta * ly)
        s = np.exp(lw / theta)
        r = np.exp(theta * lx - lw)  # x^theta / w
        return x, y, lx, ly, lw, s, r

    def _raw_logdensity(self, u, v, eta):
        theta = self.theta(eta)
        x, y, lx, ly, lw, s, r = self._parts(u, v, theta)
        return (-s - np.log(u) - np.log(v) + (theta - 1.0) * (lx + ly)
                + (1.0 / theta - 2.0) * lw + np.log(s + theta - 1.0))

    def _score(self, u, v, eta):
        theta = self.theta(eta)
        x, y, lx, ly, lw, s, r = self._parts(u, v, theta)
        q = 1.0 - r
        sp = s + theta - 1.0

        def d_dx(share, z):
            return (-s * share + (theta - 1.0) + (1.0 - 2.0 * theta) * share + s * share / sp) / z

        du = (-1.0 - d_dx(r, x)) / u
        dv = (-1.0 - d_dx(q, y)) / v
        dlw = r * lx + q * ly
        ds = s * (-lw / theta**2 + dlw / theta)
        dtheta = -ds + lx + ly - lw / theta**2 + (1.0 / theta - 2.0) * dlw + (ds + 1.0) / sp
        return du, dv, dtheta * (theta - 1.0)

    def _sample(self, eta, n, rng):
        theta = self.theta(eta)
        alpha = 1.0 / theta
        w = rng.uniform(0.0, np.pi, n)
        e0 = rng.standard_exponential(n)
        e = rng.standard_exponential((n, 2))
        # Kanter's representation of a positive alpha-stable variable with
        # Laplace transform exp(-t^alpha)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            stable = (np.sin(alpha * w) / np.sin(w) ** (1.0 / alpha)
                      * (np.sin((1.0 - alpha) * w) / e0) ** ((1.0 - alpha) / alpha))
        stable = np.where(alpha >= 1.0, 1.0, stable)
        u = np.exp(-((e[:, 0] / stable) ** alpha))
        v = np.exp(-((e[:, 1] / stable) ** alpha))
        return u, v

    def kendall_tau(self, theta):
        return 1.0 - 1.0 / self.check_theta(theta)


COPULAS = {cls.name: cls() for cls in (GaussianCopula, ClaytonCopula, GumbelCopula)}


def get_copula(family) -> Copula:
    if isinstance(family, Copula):
        return family
    try:
        return COPULAS[str(family).lower()]
    except KeyError:
        raise DomainError(f"unknown copula {family!r}; expected one of {sorted(COPULAS)}") from None


def copula_cdf(family, u, v, theta):
    return get_copula(family).cdf(u, v, theta)


def copula_logdensity(family, u, v, eta):
    return get_copula(family).logdensity(u, v, eta)


def copula_score(family, u, v, eta):
    return get_copula(family).score(u, v, eta)


def copula_sample(family, eta, n, seed=None):
    return get_copula(family).sample(eta, n, seed)


def kendall_tau(family, theta):
    return get_copula(family).kendall_tau(theta)
