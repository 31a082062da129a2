"""Joint likelihood of the bivariate copula model and its predictor-scale gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselearners import LearnerSpec, intercept, linear, pspline
from .copulas import Copula, get_copula
from .errors import DomainError, SchemaError
from .marginals import CDF_CLAMP, Marginal, get_marginal

PARAMS = ("mu1", "sigma1", "mu2", "sigma2", "rho")
K = len(PARAMS)


@dataclass
class Dataset:
    """Bivariate response ``y`` (n x 2) with covariates ``X`` (n x p)."""

    y: np.ndarray
    X: np.ndarray
    names: list = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.y.ndim != 2 or self.y.shape[1] != 2:
            raise SchemaError("response must have shape (n, 2)")
        if self.X.shape[0] != self.y.shape[0]:
            raise SchemaError("response and covariates differ in length")
        if self.names is None:
            self.names = [f"x{j + 1}" for j in range(self.X.shape[1])]
        if len(self.names) != self.X.shape[1]:
            raise SchemaError("one name per covariate column required")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, rows):
        return Dataset(self.y[rows], self.X[rows], list(self.names))


@dataclass
class ModelSpec:
    """Full model description.

    ``menus`` holds one list of :class:`LearnerSpec` per distribution
    parameter, in the order of :data:`PARAMS`.
    """

    marginal1: str = "gaussian"
    marginal2: str = "gaussian"
    copula: str = "gaussian"
    menus: list = field(default_factory=lambda: [[intercept()] for _ in PARAMS])
    nu: float = 0.1
    mstop: int = 100
    stabilization: str = "none"

    def __post_init__(self):
        get_marginal(self.marginal1)
        get_marginal(self.marginal2)
        get_copula(self.copula)
        if not self.nu > 0:
            raise SchemaError("step length nu must be > 0")
        if self.mstop < 0:
            raise SchemaError("mstop must be >= 0")
        if self.stabilization not in ("none", "mad"):
            raise SchemaError("stabilization must be 'none' or 'mad'")
        if len(self.menus) != K:
            raise SchemaError(f"need one learner menu per parameter ({K})")
        self.menus = [list(m) for m in self.menus]
        for menu in self.menus:
            if not any(s.is_intercept for s in menu):
                menu.insert(0, intercept())

    @classmethod
    def with_all_covariates(cls, p, kind="pspline", **kwargs):
        """Every covariate as a candidate for every parameter, plus intercepts."""
        make = {"pspline": pspline, "linear": linear}[kind]
        menus = [[intercept()] + [make(j) for j in range(p)] for _ in PARAMS]
        return cls(menus=menus, **kwargs)

    def replace(self, **changes):
        d = dict(marginal1=self.marginal1, marginal2=self.marginal2, copula=self.copula,
                 menus=[list(m) for m in self.menus], nu=self.nu, mstop=self.mstop,
                 stabilization=self.stabilization)
        d.update(changes)
        return ModelSpec(**d)

    def model(self):
        return CopulaModel(self.marginal1, self.marginal2, self.copula)

    def to_dict(self):
        return {
            "marginal1": self.marginal1, "marginal2": self.marginal2, "copula": self.copula,
            "nu": self.nu, "mstop": self.mstop, "stabilization": self.stabilization,
            "menus": {name: [s.to_dict() for s in menu] for name, menu in zip(PARAMS, self.menus)},
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        menus = d.pop("menus")
        return cls(menus=[[LearnerSpec.from_dict(s) for s in menus[name]] for name in PARAMS], **d)


@dataclass
class Terms:
    """Per-observation pieces of the log-likelihood, cached between candidate updates."""

    lf1: np.ndarray
    F1: np.ndarray
    lf2: np.ndarray
    F2: np.ndarray
    lc: np.ndarray

    def loglik(self):
        return self.lc + self.lf1 + self.lf2

    def copy(self):
        return Terms(self.lf1, self.F1, self.lf2, self.F2, self.lc)


class CopulaModel:
    """Likelihood ``c(F1(y1), F2(y2)) f1(y1) f2(y2)`` on the five predictors."""

    def __init__(self, marginal1, marginal2, copula):
        self.m1: Marginal = get_marginal(marginal1)
        self.m2: Marginal = get_marginal(marginal2)
        self.cop: Copula = get_copula(copula)

    def check_response(self, y):
        self.m1.check_support(y[:, 0])
        self.m2.check_support(y[:, 1])

    @staticmethod
    def _clampF(F):
        return np.clip(F, CDF_CLAMP, 1.0 - CDF_CLAMP)

    def margin_terms(self, which, y, eta_mu, eta_sigma):
        m = self.m1 if which == 0 else self.m2
        yd = y[:, which]
        return m._logpdf(yd, eta_mu, eta_sigma), self._clampF(m._cdf(yd, eta_mu, eta_sigma))

    def terms(self, y, eta):
        lf1, F1 = self.margin_terms(0, y, eta[0], eta[1])
        lf2, F2 = self.margin_terms(1, y, eta[2], eta[3])
        lc = self.cop._logdensity(F1, F2, eta[4])
        return Terms(lf1, F1, lf2, F2, lc)

    def update_terms(self, terms, y, eta, k):
        """Terms after predictor ``k`` changed; unaffected pieces are reused."""
        t = terms.copy()
        if k in (0, 1):
            t.lf1, t.F1 = self.margin_terms(0, y, eta[0], eta[1])
        elif k in (2, 3):
            t.lf2, t.F2 = self.margin_terms(1, y, eta[2], eta[3])
        t.lc = self.cop._logdensity(t.F1, t.F2, eta[4])
        return t

    @staticmethod
    def risk_from_terms(terms):
        r = -float(np.sum(terms.loglik()))
        return r if np.isfinite(r) else np.inf

    def loglik_obs(self, y, eta):
        return self.terms(y, np.asarray(eta, dtype=float)).loglik()

    def risk(self, y, eta):
        """Negative joint log-likelihood; ``inf`` if any term is non-finite."""
        eta = np.asarray(eta, dtype=float)
        if not np.all(np.isfinite(eta)):
            return np.inf
        with np.errstate(all="ignore"):
            return self.risk_from_terms(self.terms(y, eta))

    def gradients(self, y, eta, stabilization="none"):
        """Negative risk gradient per observation for each predictor, shape (5, n).

        Returns ``(grad, n_nonfinite)``; non-finite entries are zeroed and counted.
        """
        eta = np.asarray(eta, dtype=float)
        y1, y2 = y[:, 0], y[:, 1]
        with np.errstate(all="ignore"):
            s1 = self.m1._score(y1, eta[0], eta[1])
            s2 = self.m2._score(y2, eta[2], eta[3])
            F1raw = self.m1._cdf(y1, eta[0], eta[1])
            F2raw = self.m2._cdf(y2, eta[2], eta[3])
            F1, F2 = self._clampF(F1raw), self._clampF(F2raw)
            dF1 = self.m1._cdf_score(y1, eta[0], eta[1])
            dF2 = self.m2._cdf_score(y2, eta[2], eta[3])
            du, dv, deta = self.cop._score(F1, F2, eta[4])
            # clamped F values are locally constant
            in1 = (F1raw > CDF_CLAMP) & (F1raw < 1.0 - CDF_CLAMP)
            in2 = (F2raw > CDF_CLAMP) & (F2raw < 1.0 - CDF_CLAMP)
            g = np.empty((K, len(y1)))
            g[0] = s1[0] + np.where(in1, du * dF1[0], 0.0)
            g[1] = s1[1] + np.where(in1, du * dF1[1], 0.0)
            g[2] = s2[0] + np.where(in2, dv * dF2[0], 0.0)
            g[3] = s2[1] + np.where(in2, dv * dF2[1], 0.0)
            g[4] = deta
        bad = ~np.isfinite(g)
        n_bad = int(bad.sum())
        if n_bad:
            g[bad] = 0.0
        if stabilization == "mad":
            g = mad_stabilize(g)
        return g, n_bad

    # -- constant-predictor fit ----------------------------------------------
    def start_values(self, y):
        e = np.zeros(K)
        e[0], e[1] = self.m1.start(y[:, 0])
        e[2], e[3] = self.m2.start(y[:, 1])
        e[4] = 0.0
        return e

    def offsets(self, y, max_sweeps=50, tol=1e-8):
        """Constant predictors maximising the joint likelihood.

        Cyclic one-dimensional Newton steps with step halving, started from
        moment-based marginal values and ``eta_rho = 0``. Falls back to the
        start values if the search fails to improve on them.
        """
        n = y.shape[0]
        if n < K:
            raise DomainError(f"need at least {K} observations to compute offsets")
        start = self.start_values(y)
        e = start.copy()

        def risk_at(vec):
            return self.risk(y, np.repeat(vec[:, None], n, axis=1))

        def grad_k(vec, k):
            g, _ = self.gradients(y, np.repeat(vec[:, None], n, axis=1))
            return float(np.sum(g[k]))

        r = risk_at(e)
        start_risk = r
        converged = False
        for _ in range(max_sweeps):
            r_sweep = r
            for k in range(K):
                g = grad_k(e, k)
                h = 1e-4
                ep, em = e.copy(), e.copy()
                ep[k] += h
                em[k] -= h
                curv = -(grad_k(ep, k) - grad_k(em, k)) / (2 * h)
                step = g / curv if (np.isfinite(curv) and curv > 0) else np.sign(g) * 0.1
                step = float(np.clip(step, -2.0, 2.0))
                for _ in range(30):
                    trial = e.copy()
                    trial[k] += step
                    rt = risk_at(trial)
                    if rt <= r:
                        e, r = trial, rt
                        break
                    step *= 0.5
            if abs(r_sweep - r) < tol * max(1.0, abs(r)):
                converged = True
                break
        if not np.isfinite(r) or r > start_risk or (not converged and not r < start_risk):
            return start
        return e


def mad_stabilize(g, floor=1e-10):
    """Scale each row by its median absolute deviation (bounded below by ``floor``)."""
    med = np.median(g, axis=1, keepdims=True)
    mad = np.median(np.abs(g - med), axis=1, keepdims=True)
    return g / np.maximum(mad, floor)


def empirical_risk(model: CopulaModel, y, eta):
    return model.risk(np.asarray(y, dtype=float), eta)


def negative_gradients(model: CopulaModel, y, eta, stabilization="none"):
    return model.gradients(np.asarray(y, dtype=float), eta, stabilization)[0]
