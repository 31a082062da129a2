"""Non-cyclic component-wise gradient boosting over the five distribution parameters.

Each iteration fits every candidate learner of every parameter to that
parameter's negative gradient, keeps the best learner per parameter by
residual sum of squares, and commits the single update (step length ``nu``)
that lowers the joint empirical risk the most.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .baselearners import BaseLearner, LearnerBank, build_learners
from .errors import NumericalError, SchemaError
from .model import K, PARAMS, CopulaModel, Dataset, ModelSpec

log = logging.getLogger(__name__)


@dataclass
class Step:
    """One committed update: iteration ``m`` added ``nu * B_j beta`` to predictor ``k``."""

    m: int
    k: int
    j: int
    coef: np.ndarray
    risk: float


@dataclass
class BoostFit:
    spec: ModelSpec
    menus: list
    learners: list
    offsets: np.ndarray
    steps: list = field(default_factory=list)
    risk: np.ndarray = None
    candidate_risks: np.ndarray = None
    eta_train: np.ndarray = None
    n_nonfinite: int = 0
    aborted: str | None = None
    names: list = None

    @property
    def mstop(self):
        """Number of performed iterations."""
        return len(self.steps)

    @property
    def model(self) -> CopulaModel:
        return self.spec.model()

    @property
    def r0(self):
        return float(self.risk[0])

    @property
    def selection_log(self):
        return [(s.m, s.k, s.j, s.risk) for s in self.steps]

    def truncate(self, m):
        """The fit after its first ``m`` iterations."""
        if not 0 <= m <= self.mstop:
            raise ValueError(f"m={m} outside [0, {self.mstop}]")
        same = m == self.mstop
        eta_train = self.eta_train if same else self._replay_train(m)
        return BoostFit(
            spec=self.spec.replace(mstop=m), menus=self.menus, learners=self.learners,
            offsets=self.offsets, steps=self.steps[:m], risk=self.risk[:m + 1].copy(),
            candidate_risks=None if self.candidate_risks is None else self.candidate_risks[:m].copy(),
            eta_train=eta_train, n_nonfinite=self.n_nonfinite,
            aborted=self.aborted if same else None, names=self.names,
        )

    def _replay_train(self, m):
        # training predictors through iteration m, from the stored designs; None for restored fits
        if self.eta_train is None:
            return None
        n = self.eta_train.shape[1]
        eta = np.repeat(np.asarray(self.offsets, dtype=float)[:, None], n, axis=1)
        for s in self.steps[:m]:
            design = self.learners[s.k][s.j].design
            if design is None:
                return None
            eta[s.k] = eta[s.k] + self.spec.nu * (design @ s.coef)
        return eta

    def selected(self, m=None, include_intercept=False):
        """Set of ``(k, j)`` learner keys committed at least once through iteration ``m``."""
        m = self.mstop if m is None else m
        out = {(s.k, s.j) for s in self.steps[:m]}
        if not include_intercept:
            out = {(k, j) for k, j in out if not self.menus[k][j].is_intercept}
        return out

    def selected_columns(self, m=None):
        """Per-parameter sets of covariate columns with a selected learner."""
        cols = [set() for _ in PARAMS]
        for k, j in self.selected(m):
            cols[k].add(self.menus[k][j].column)
        return cols

    def coefficients(self, m=None):
        """Accumulated ``nu``-scaled coefficients per ``(k, j)`` through iteration ``m``."""
        m = self.mstop if m is None else m
        out = {}
        for s in self.steps[:m]:
            key = (s.k, s.j)
            out[key] = out.get(key, 0.0) + self.spec.nu * s.coef
        return out

    def iter_eta(self, X, m=None):
        """Yield predictors (5, n) for iterations 0..m by replaying the update log.

        The yielded array is updated in place between iterations.
        """
        X = np.asarray(X, dtype=float)
        m = self.mstop if m is None else m
        n = X.shape[0]
        eta = np.repeat(np.asarray(self.offsets, dtype=float)[:, None], n, axis=1)
        cache = {}
        yield eta
        for s in self.steps[:m]:
            key = (s.k, s.j)
            if key not in cache:
                lr = self.learners[s.k][s.j]
                col = X[:, lr.spec.column] if lr.spec.column is not None else np.zeros(n)
                cache[key] = lr.basis(col)
            eta[s.k] = eta[s.k] + self.spec.nu * (cache[key] @ s.coef)
            yield eta

    def eta(self, X, m=None):
        if X.shape[1] < self.n_covariates():
            raise SchemaError(f"expected at least {self.n_covariates()} covariate columns, got {X.shape[1]}")
        out = None
        for out in self.iter_eta(X, m):
            pass
        return out.copy()

    def n_covariates(self):
        cols = [s.column for menu in self.menus for s in menu if s.column is not None]
        return max(cols) + 1 if cols else 0

    def predict_params(self, X, m=None):
        return params_from_eta(self.spec, self.eta(X, m))

    def risk_path(self, data: Dataset, m=None):
        """Empirical risk on ``data`` after each iteration 0..m."""
        model = self.model
        return np.array([model.risk(data.y, eta) for eta in self.iter_eta(data.X, m)])


def params_from_eta(spec: ModelSpec, eta):
    model = spec.model()
    mu1, sigma1 = model.m1.params(eta[0], eta[1])
    mu2, sigma2 = model.m2.params(eta[2], eta[3])
    dep = model.cop.theta(eta[4])
    return {"mu1": np.asarray(mu1, dtype=float), "sigma1": sigma1,
            "mu2": np.asarray(mu2, dtype=float), "sigma2": sigma2, "rho": dep}


def setup_learners(spec: ModelSpec, data: Dataset):
    """Bind every parameter's menu to the data; returns ``(menus, learners, banks)``."""
    menus, learners, banks = [], [], []
    bank_cache = {}
    # identical specs across parameters share one learner object
    shared = {}
    for menu in spec.menus:
        lrs, kept = build_learners(menu, data.X, cache=shared)
        key = tuple(kept)
        if key not in bank_cache:
            bank_cache[key] = LearnerBank(lrs)
        menus.append(kept)
        learners.append(lrs)
        banks.append(bank_cache[key])
    return menus, learners, banks


class Booster:
    """Mutable boosting state; :meth:`step` performs one iteration."""

    def __init__(self, data: Dataset, spec: ModelSpec, offsets=None, prepared=None):
        self.data = data
        self.spec = spec
        self.model = spec.model()
        self.model.check_response(data.y)
        if prepared is None:
            prepared = setup_learners(spec, data)
        self.menus, self.learners, self.banks = prepared
        if offsets is None:
            offsets = self.model.offsets(data.y)
        self.offsets = np.asarray(offsets, dtype=float)
        self.eta = np.repeat(self.offsets[:, None], data.n, axis=1)
        with np.errstate(all="ignore"):
            self.terms = self.model.terms(data.y, self.eta)
        self.current_risk = self.model.risk_from_terms(self.terms)
        self.risks = [self.current_risk]
        self.steps = []
        self.candidate_risks = []
        self.n_nonfinite = 0
        self.aborted = None

    def step(self):
        """One boosting iteration. Returns the committed :class:`Step` or ``None`` on abort."""
        y, nu = self.data.y, self.spec.nu
        grad, bad = self.model.gradients(y, self.eta, self.spec.stabilization)
        self.n_nonfinite += bad
        cands = []
        risks = np.full(K, np.inf)
        for k, (j, coef, _) in enumerate(self._best(grad)):
            update = nu * (self.learners[k][j].design @ coef)
            new_row = self.eta[k] + update
            if not np.all(np.isfinite(new_row)):
                cands.append(None)
                continue
            eta_try = self.eta.copy()
            eta_try[k] = new_row
            with np.errstate(all="ignore"):
                terms = self.model.update_terms(self.terms, y, eta_try, k)
            risks[k] = self.model.risk_from_terms(terms)
            cands.append((j, coef, new_row, terms))
        if not np.any(np.isfinite(risks)):
            self.aborted = f"iteration {len(self.steps) + 1}: every candidate update has non-finite risk"
            log.warning(self.aborted)
            return None
        k = int(np.argmin(risks))
        j, coef, new_row, terms = cands[k]
        self.eta[k] = new_row
        self.terms = terms
        self.current_risk = float(risks[k])
        st = Step(len(self.steps) + 1, k, j, coef, self.current_risk)
        self.steps.append(st)
        self.risks.append(self.current_risk)
        self.candidate_risks.append(risks)
        return st

    def _best(self, grad):
        # parameters sharing a bank are fitted in one batched product
        out = [None] * K
        groups = {}
        for k, bank in enumerate(self.banks):
            groups.setdefault(id(bank), []).append(k)
        for ks in groups.values():
            res = self.banks[ks[0]].best_many(grad[ks].T)
            for k, r in zip(ks, res):
                out[k] = r
        return out

    def run(self, m, stop=None):
        """Up to ``m`` iterations; ``stop(booster, step)`` returning True ends early."""
        for _ in range(m):
            st = self.step()
            if st is None:
                break
            if stop is not None and stop(self, st):
                break
        return self

    def result(self) -> BoostFit:
        return BoostFit(
            spec=self.spec.replace(mstop=len(self.steps)), menus=self.menus, learners=self.learners,
            offsets=self.offsets.copy(), steps=list(self.steps), risk=np.array(self.risks),
            candidate_risks=np.array(self.candidate_risks).reshape(-1, K), eta_train=self.eta.copy(),
            n_nonfinite=self.n_nonfinite, aborted=self.aborted, names=list(self.data.names),
        )


def compute_offsets(data: Dataset, spec: ModelSpec):
    return spec.model().offsets(data.y)


def fit_boost(data: Dataset, spec: ModelSpec, stop=None, offsets=None) -> BoostFit:
    """Run ``spec.mstop`` boosting iterations (fewer on abort or when ``stop`` fires)."""
    return Booster(data, spec, offsets=offsets).run(spec.mstop, stop).result()


def boost_step(booster: Booster):
    return booster.step()


def select_mstop(fit: BoostFit, validation: Dataset | None = None, data: Dataset | None = None,
                 folds: int | None = None, seed=None):
    """Early-stopping iteration minimising out-of-sample risk.

    Pass ``validation`` to evaluate the fit's risk path on held-out data, or
    ``data`` and ``folds`` for k-fold cross-validation (each fold refitted).
    Returns ``(m_star, path)``; the first minimiser wins ties.
    """
    if validation is not None:
        if validation.n == 0:
            raise SchemaError("empty validation set")
        path = fit.risk_path(validation)
    elif data is not None and folds is not None:
        path = cv_risk(data, fit.spec.replace(mstop=fit.mstop), folds, seed)
    else:
        raise SchemaError("need validation data or (data, folds)")
    return argmin_first(path), path


def argmin_first(path):
    path = np.asarray(path, dtype=float)
    path = np.where(np.isfinite(path), path, np.inf)
    return int(np.argmin(path))


def fold_ids(n, folds, seed=None):
    if folds < 2:
        raise SchemaError("k-fold cross-validation needs k >= 2")
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def cv_risk(data: Dataset, spec: ModelSpec, folds, seed=None):
    """Mean held-out risk per observation over ``folds`` refits, for iterations 0..mstop."""
    ids = fold_ids(data.n, folds, seed)
    total = np.zeros(spec.mstop + 1)
    for f in range(folds):
        train = data.subset(ids != f)
        test = data.subset(ids == f)
        fit = fit_boost(train, spec)
        path = fit.risk_path(test)
        # an aborted fold keeps its last value
        if len(path) < spec.mstop + 1:
            path = np.concatenate([path, np.full(spec.mstop + 1 - len(path), path[-1])])
        total += path / test.n
    return total / folds


def fit_tuned(data: Dataset, spec: ModelSpec, validation: Dataset | None = None,
              folds: int | None = None, seed=None):
    """Fit to ``spec.mstop`` and truncate at the tuned stopping iteration.

    Returns ``(tuned_fit, full_fit, m_star)``.
    """
    full = fit_boost(data, spec)
    if validation is None and folds is None:
        return full, full, full.mstop
    m_star, _ = select_mstop(full, validation=validation, data=data, folds=folds, seed=seed)
    m_star = min(m_star, full.mstop)
    return full.truncate(m_star), full, m_star


def predict_params(fit: BoostFit, X, m=None):
    return fit.predict_params(X, m)


__all__ = [
    "Booster", "BoostFit", "Step", "BaseLearner", "boost_step", "compute_offsets", "cv_risk",
    "fit_boost", "fit_tuned", "params_from_eta", "predict_params", "select_mstop", "setup_learners",
]
