"""Regression base-learners fitted to negative gradient vectors.

Three kinds are supported: a per-parameter intercept, a mean-centred linear
effect of one covariate, and a cubic P-spline (B-spline basis with a
difference penalty) whose smoothing parameter is fixed from a target number
of degrees of freedom at setup time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.interpolate import BSpline

from .errors import DomainError, SchemaError


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative description of one candidate base-learner.

    ``column`` is the covariate index (``None`` for the intercept).
    """

    kind: str = "intercept"
    column: int | None = None
    knots: int = 20
    degree: int = 3
    penalty_order: int = 2
    df: float = 4.0

    def __post_init__(self):
        if self.kind not in ("intercept", "linear", "pspline"):
            raise SchemaError(f"unknown base-learner kind {self.kind!r}")
        if self.kind == "intercept" and self.column is not None:
            raise SchemaError("intercept learner takes no covariate")
        if self.kind != "intercept" and self.column is None:
            raise SchemaError(f"{self.kind} learner needs a covariate column")

    @property
    def is_intercept(self):
        return self.kind == "intercept"

    def label(self, names=None):
        if self.is_intercept:
            return "(Intercept)"
        name = names[self.column] if names is not None else f"x{self.column + 1}"
        return name if self.kind == "linear" else f"bbs({name})"

    def to_dict(self):
        d = {"kind": self.kind}
        if self.column is not None:
            d["column"] = self.column
        if self.kind == "pspline":
            d.update(knots=self.knots, degree=self.degree, penalty_order=self.penalty_order, df=self.df)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def intercept():
    return LearnerSpec("intercept")


def linear(column):
    return LearnerSpec("linear", column)


def pspline(column, knots=20, degree=3, penalty_order=2, df=4.0):
    return LearnerSpec("pspline", column, knots, degree, penalty_order, df)


def pspline_knots(x, inner_knots=20, degree=3):
    """Equidistant knot vector on ``[min(x), max(x)]`` extended by ``degree`` knots each side."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DomainError("cannot place spline knots on a constant covariate")
    step = (hi - lo) / (inner_knots + 1)
    return lo + step * np.arange(-degree, inner_knots + 2 + degree)


def bspline_basis(x, knots, degree=3):
    """B-spline design matrix; outside the boundary knots the boundary polynomials are extended."""
    x = np.asarray(x, dtype=float)
    return BSpline.design_matrix(x, knots, degree, extrapolate=True).toarray()


def difference_penalty(n_basis, order=2):
    d = np.diff(np.eye(n_basis), n=order, axis=0)
    return d.T @ d


def hat_trace(btb, penalty, lam):
    """trace(B (B'B + lam K)^-1 B') computed directly."""
    return float(np.trace(linalg.solve(btb + lam * penalty, btb, assume_a="pos")))


def penalty_lambda_for_df(btb, penalty, df, log10_bounds=(-12.0, 12.0), tol=1e-6, max_iter=200):
    """Smoothing parameter giving ``df`` effective degrees of freedom.

    Bisection in ``log10(lambda)`` on the Demmler-Reinsch form
    ``df(lambda) = sum_i 1 / (1 + lambda * s_i)``. When ``B'B`` is singular
    (fewer distinct covariate values than basis functions) the hat-matrix
    trace is evaluated directly instead.
    """
    q = btb.shape[0]
    null_dim = q - int(np.linalg.matrix_rank(penalty))
    try:
        # eigenvalues of the penalty relative to B'B
        s = np.clip(linalg.eigh(penalty, btb, eigvals_only=True), 0.0, None)
        max_df = q

        def trace(log_lam):
            return float(np.sum(1.0 / (1.0 + 10.0**log_lam * s)))
    except linalg.LinAlgError:
        s = None
        max_df = int(np.linalg.matrix_rank(btb))

        def trace(log_lam):
            return hat_trace(btb, penalty, 10.0**log_lam)

    if df > max_df + 1e-12 or df <= null_dim or (s is None and df >= max_df):
        raise DomainError(f"df={df} infeasible: must lie in ({null_dim}, {max_df}]")
    if df >= q - 1e-12:
        return 0.0

    lo, hi = log10_bounds
    if trace(hi) > df:
        raise DomainError(f"df={df} not reachable with lambda <= 1e{hi:g}")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        t = trace(mid)
        if abs(t - df) < tol * 1e-3:
            break
        if t > df:
            lo = mid
        else:
            hi = mid
    return 10.0**mid


@dataclass
class BaseLearner:
    """A base-learner bound to its training covariate column.

    Holds the training design matrix and the pre-factored penalised
    normal equations, so repeated fits against new gradients are cheap.
    """

    spec: LearnerSpec
    center: float = 0.0
    knots: np.ndarray | None = None
    lam: float = 0.0
    design: np.ndarray = field(default=None, repr=False)
    # (B'B + lam K)^-1
    _inv: np.ndarray = field(default=None, repr=False)
    _btb: np.ndarray = field(default=None, repr=False)

    @property
    def n_coef(self):
        return self.design.shape[1]

    def basis(self, x):
        """Design matrix for new covariate values (``x`` is the learner's column)."""
        if self.spec.kind == "intercept":
            return np.ones((len(x), 1))
        x = np.asarray(x, dtype=float)
        if self.spec.kind == "linear":
            return (x - self.center)[:, None]
        return bspline_basis(x, self.knots, self.spec.degree)

    def fit(self, g):
        """Penalised least-squares coefficients for gradient ``g`` and its residual sum of squares."""
        beta = self._inv @ (self.design.T @ g)
        resid = g - self.design @ beta
        return FittedBaseLearner(beta, float(resid @ resid))

    def predict(self, beta, x=None):
        b = self.design if x is None else self.basis(x)
        return b @ beta

    def state(self):
        d = {"spec": self.spec.to_dict(), "center": self.center, "lam": self.lam}
        if self.knots is not None:
            d["knots"] = [float(k) for k in self.knots]
        return d


@dataclass
class FittedBaseLearner:
    coefficients: np.ndarray
    rss: float


def design_matrix(spec: LearnerSpec, x):
    """Training design matrix of ``spec`` on covariate column ``x``."""
    return make_learner(spec, x).design


def _bind(spec, design, center=0.0, knots=None, lam=0.0, penalty=None):
    btb = design.T @ design
    a = btb if penalty is None else btb + lam * penalty
    if np.linalg.cond(a) > 1e12:
        # e.g. an unpenalised spline with empty knot intervals
        warnings.warn(f"singular normal equations for {spec.label()}; using the pseudo-inverse", stacklevel=3)
        inv = np.linalg.pinv(a)
    else:
        inv = linalg.inv(a) if a.shape[0] > 1 else 1.0 / a
    return BaseLearner(spec, center=center, knots=knots, lam=lam, design=design, _inv=inv, _btb=btb)


def make_learner(spec: LearnerSpec, x, lam=None) -> BaseLearner:
    """Bind ``spec`` to training column ``x`` (ignored for the intercept).

    For P-splines the smoothing parameter is solved from ``spec.df`` unless
    ``lam`` is given.
    """
    if spec.kind == "intercept":
        return _bind(spec, np.ones((len(x), 1)))
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise SchemaError("base-learner covariate must be a 1-d column with n >= 2")
    if not np.ptp(x) > 0:
        raise DomainError(f"covariate column {spec.column} is constant")
    if spec.kind == "linear":
        center = float(np.mean(x))
        return _bind(spec, (x - center)[:, None], center=center)
    knots = pspline_knots(x, spec.knots, spec.degree)
    design = bspline_basis(x, knots, spec.degree)
    penalty = difference_penalty(design.shape[1], spec.penalty_order)
    if lam is None:
        lam = penalty_lambda_for_df(design.T @ design, penalty, spec.df)
    return _bind(spec, design, knots=knots, lam=lam, penalty=penalty)


def restore_learner(state, x):
    """Rebuild a learner from :meth:`BaseLearner.state` without re-solving for lambda."""
    spec = LearnerSpec.from_dict(state["spec"])
    if spec.kind == "intercept":
        return make_learner(spec, x)
    x = np.asarray(x, dtype=float)
    if spec.kind == "linear":
        return _bind(spec, (x - state["center"])[:, None], center=state["center"])
    knots = np.asarray(state["knots"], dtype=float)
    design = bspline_basis(x, knots, spec.degree)
    penalty = difference_penalty(design.shape[1], spec.penalty_order)
    return _bind(spec, design, knots=knots, lam=state["lam"], penalty=penalty)


def learner_from_state(state) -> BaseLearner:
    """A prediction-only learner from :meth:`BaseLearner.state` (no training design)."""
    spec = LearnerSpec.from_dict(state["spec"])
    knots = None if state.get("knots") is None else np.asarray(state["knots"], dtype=float)
    return BaseLearner(spec, center=float(state.get("center", 0.0)), knots=knots, lam=float(state.get("lam", 0.0)))


def fit_to_gradient(spec: LearnerSpec, x, g, lam=None) -> FittedBaseLearner:
    return make_learner(spec, x, lam).fit(np.asarray(g, dtype=float))


def predict_bl(learner: BaseLearner, fitted: FittedBaseLearner, x_new):
    return learner.predict(fitted.coefficients, x_new)


class LearnerBank:
    """All candidate learners of one distribution parameter, stacked for batch fitting.

    ``best(g)`` returns the index of the learner with the smallest residual
    sum of squares against ``g`` (first index on ties) and its coefficients.
    """

    def __init__(self, learners):
        if not learners:
            raise SchemaError("a parameter needs at least one candidate learner")
        self.learners = list(learners)
        sizes = [lr.n_coef for lr in self.learners]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        # B-spline designs are banded, so sparse storage is much cheaper
        self.design_t = sparse.csr_matrix(np.vstack([lr.design.T for lr in self.learners]))
        self.btb = sparse.block_diag([lr._btb for lr in self.learners], format="csr")
        # (B'B + lam K)^-1 per learner, block-diagonal
        self.inv = sparse.block_diag([lr._inv for lr in self.learners], format="csr")
        self._starts = self.offsets[:-1]

    def __len__(self):
        return len(self.learners)

    def rss_all(self, g):
        """RSS of every learner against ``g`` (n,) or each column of ``g`` (n, c)."""
        g = np.asarray(g, dtype=float)
        b = self.design_t @ g
        beta = self.inv @ b
        c = self.btb @ beta
        gg = np.einsum("i...,i...->...", g, g)
        cross = np.add.reduceat(b * beta, self._starts, axis=0)
        quad = np.add.reduceat(beta * c, self._starts, axis=0)
        return gg - 2.0 * cross + quad, beta

    def best(self, g):
        rss, beta = self.rss_all(g)
        j = int(np.argmin(rss))
        coef = beta[self.offsets[j]:self.offsets[j + 1]].copy()
        return j, coef, float(rss[j])

    def best_many(self, G):
        """:meth:`best` for each column of ``G`` (n, c) in one pass."""
        rss, beta = self.rss_all(G)
        out = []
        for c in range(G.shape[1]):
            j = int(np.argmin(rss[:, c]))
            out.append((j, beta[self.offsets[j]:self.offsets[j + 1], c].copy(), float(rss[j, c])))
        return out


def build_learners(specs, X, warn=True, cache=None):
    """Bind a menu of specs to the columns of ``X``; constant columns are dropped with a warning.

    Returns ``(learners, kept_specs)``. Learners sharing a spec share one
    object; pass the same ``cache`` dict to share them across menus.
    """
    cache = {} if cache is None else cache
    learners, kept = [], []
    n = X.shape[0]
    for spec in specs:
        if spec not in cache:
            if spec.is_intercept:
                cache[spec] = make_learner(spec, np.zeros(n))
            else:
                col = X[:, spec.column]
                if not np.ptp(col) > 0:
                    if warn:
                        warnings.warn(f"covariate column {spec.column} is constant; dropped from the menu",
                                      stacklevel=2)
                    cache[spec] = None
                else:
                    cache[spec] = make_learner(spec, col)
        if cache[spec] is not None:
            learners.append(cache[spec])
            kept.append(spec)
    return learners, kept
