"""Variable selection on top of the boosting engine: probing, stability selection and deselection.

Learners are identified by ``(k, LearnerSpec)`` pairs throughout, so results
stay comparable across refits whose menus (and hence learner indices) differ.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace as dc_replace
from fractions import Fraction

import numpy as np

from .boosting import Booster, BoostFit, fit_boost, fit_tuned, setup_learners
from .errors import ConfigError, DomainError
from .model import PARAMS, Dataset, ModelSpec

log = logging.getLogger(__name__)


@dataclass
class SelectionReport:
    """Outcome of a selection procedure.

    ``selected`` holds one set of non-intercept :class:`LearnerSpec` per
    parameter. ``frequencies`` (stability selection) and ``attributions``
    (deselection) are keyed by ``(k, spec)``.
    """

    method: str
    menus: list
    selected: list
    mstop: int
    frequencies: dict | None = None
    attributions: dict | None = None
    info: dict = field(default_factory=dict)
    names: list | None = None

    def selected_columns(self):
        return [{s.column for s in sel} for sel in self.selected]

    def n_selected(self):
        return sum(len(s) for s in self.selected)

    def to_rows(self):
        """One row per candidate (parameter, learner): frequency, risk attribution, kept flag."""
        rows = []
        for k, menu in enumerate(self.menus):
            for s in menu:
                if s.is_intercept:
                    continue
                key = (k, s)
                row = {"parameter": PARAMS[k], "learner": s.label(self.names)}
                if self.frequencies is not None:
                    row["frequency"] = self.frequencies.get(key, 0.0)
                if self.attributions is not None:
                    row["risk_reduction"] = self.attributions.get(key, 0.0)
                row["kept"] = s in self.selected[k]
                rows.append(row)
        return rows

    def write_csv(self, path):
        rows = self.to_rows()
        cols = ["parameter", "learner"]
        if self.frequencies is not None:
            cols.append("frequency")
        if self.attributions is not None:
            cols.append("risk_reduction")
        cols.append("kept")
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(rows)


def report_from_fit(fit: BoostFit, method="classic", **info):
    sel = [set() for _ in PARAMS]
    for k, j in fit.selected():
        sel[k].add(fit.menus[k][j])
    return SelectionReport(method, [list(m) for m in fit.menus], sel, fit.mstop, info=info, names=fit.names)


def restrict_spec(spec: ModelSpec, keep):
    """``spec`` with each parameter's menu reduced to intercepts plus the learners in ``keep[k]``."""
    menus = [[s for s in menu if s.is_intercept or s in keep[k]] for k, menu in enumerate(spec.menus)]
    return spec.replace(menus=menus)


# -- probing ------------------------------------------------------------------

def make_probes(X, rng):
    """One independently row-permuted copy of every column of ``X``."""
    n, p = X.shape
    probes = np.empty_like(X)
    for j in range(p):
        probes[:, j] = X[rng.permutation(n), j]
    return probes


def probing_fit(data: Dataset, spec: ModelSpec, seed=None):
    """Boost with shadow covariates and stop just before the first probe is committed.

    Returns ``(fit, m)`` where ``fit`` is the probe-free model of the
    previous iteration and ``m`` its number of iterations.
    """
    p = data.p
    if any(s.column is not None and s.column >= p for menu in spec.menus for s in menu):
        raise ConfigError("spec refers to covariate columns beyond the data")
    rng = np.random.default_rng(seed)
    X_aug = np.hstack([data.X, make_probes(data.X, rng)])
    names = list(data.names) + [f"probe_{nm}" for nm in data.names]
    aug = Dataset(data.y, X_aug, names)
    menus = [list(menu) + [dc_replace(s, column=s.column + p) for s in menu if not s.is_intercept]
             for menu in spec.menus]
    aug_spec = spec.replace(menus=menus)

    def is_probe(st):
        s = booster.menus[st.k][st.j]
        return s.column is not None and s.column >= p

    booster = Booster(aug, aug_spec)
    hit = False
    for _ in range(spec.mstop):
        st = booster.step()
        if st is None:
            break
        if is_probe(st):
            hit = True
            break
    full = booster.result()
    m = full.mstop - 1 if hit else full.mstop
    return _strip_probes(full, m, data, spec, p), m


def _strip_probes(full: BoostFit, m, data, spec, p):
    # original learners precede their probes in every bound menu, so indices carry over
    menus, learners = [], []
    for menu, lrs in zip(full.menus, full.learners):
        keep = [i for i, s in enumerate(menu) if s.column is None or s.column < p]
        assert keep == list(range(len(keep)))
        menus.append([menu[i] for i in keep])
        learners.append([lrs[i] for i in keep])
    t = full.truncate(m)
    fit = BoostFit(
        spec=spec.replace(mstop=m), menus=menus, learners=learners, offsets=t.offsets,
        steps=t.steps, risk=t.risk, candidate_risks=t.candidate_risks, eta_train=None,
        n_nonfinite=full.n_nonfinite, aborted=t.aborted, names=list(data.names),
    )
    fit.eta_train = fit.eta(data.X)
    return fit


# -- stability selection --------------------------------------------------------

def _as_fraction(x):
    return Fraction(x) if isinstance(x, int) else Fraction(str(x))


def pfer_solve(q, p, pi_thr=None, pfer=None):
    """Solve the bound ``PFER <= q^2 / ((2 pi_thr - 1) p)`` for the missing quantity.

    Exactly one of ``pi_thr`` and ``pfer`` must be given; the other is returned.
    Arithmetic is exact on the decimal values of the inputs.
    """
    if (pi_thr is None) == (pfer is None):
        raise ConfigError("give exactly one of pi_thr and pfer")
    if not (isinstance(q, (int, np.integer)) and isinstance(p, (int, np.integer))) or q < 1 or p < 1:
        raise DomainError("q and p must be positive integers")
    if q > p:
        raise DomainError(f"q={q} exceeds the number of candidates p={p}")
    q, p = Fraction(int(q)), Fraction(int(p))
    if pfer is not None:
        if not pfer > 0:
            raise DomainError("pfer must be > 0")
        pi = (q * q / (_as_fraction(pfer) * p) + 1) / 2
        if not (Fraction(1, 2) < pi <= 1):
            raise DomainError(f"pfer={pfer} needs pi_thr={float(pi):.4g}, outside (0.5, 1]")
        return float(pi)
    pi = _as_fraction(pi_thr)
    if not (Fraction(1, 2) < pi <= 1):
        raise DomainError("pi_thr must lie in (0.5, 1]")
    return float(q * q / ((2 * pi - 1) * p))


def n_candidates(spec: ModelSpec):
    """Number of non-intercept candidate learners summed over the parameters."""
    return sum(1 for menu in spec.menus for s in menu if not s.is_intercept)


def boost_until_q(data: Dataset, spec: ModelSpec, q):
    """Boost until ``q`` distinct non-intercept learners (across parameters) are committed.

    Returns ``(selected set of (k, spec), reached)``.
    """
    booster = Booster(data, spec)
    chosen = set()
    for _ in range(spec.mstop):
        st = booster.step()
        if st is None:
            break
        s = booster.menus[st.k][st.j]
        if not s.is_intercept:
            chosen.add((st.k, s))
            if len(chosen) >= q:
                return chosen, True
    return chosen, False


def _subsample_job(args):
    data, spec, q, seq = args
    rng = np.random.default_rng(seq)
    rows = np.sort(rng.choice(data.n, data.n // 2, replace=False))
    return boost_until_q(data.subset(rows), spec, q)


def selection_frequencies(chosen_sets, menus):
    """Fraction of subsample selections containing each non-intercept ``(k, spec)``."""
    counts = {}
    for chosen in chosen_sets:
        for key in chosen:
            counts[key] = counts.get(key, 0) + 1
    B = len(chosen_sets)
    return {(k, s): counts.get((k, s), 0) / B for k, menu in enumerate(menus) for s in menu if not s.is_intercept}


def stable_set(freqs, pi_thr):
    """Per-parameter sets of learners with frequency at least ``pi_thr``."""
    keep = [set() for _ in PARAMS]
    for (k, s), f in freqs.items():
        if f >= pi_thr:
            keep[k].add(s)
    return keep


def stability_select(data: Dataset, spec: ModelSpec, q, pi_thr=None, pfer=None, B=100, seed=None,
                     validation: Dataset | None = None, folds: int | None = None, threads=1):
    """Stability selection over ``B`` half-size subsamples, then a refit on the stable set.

    Returns ``(final_fit, report)``. The final model's stopping iteration is
    tuned on ``validation`` or by ``folds``-fold cross-validation when given,
    otherwise ``spec.mstop`` is used.
    """
    if B < 2:
        raise ConfigError("stability selection needs B >= 2")
    p = n_candidates(spec)
    if pi_thr is not None and pfer is not None:
        raise ConfigError("give exactly one of pi_thr and pfer, not both")
    if pfer is not None:
        pi_thr_used = pfer_solve(q, p, pfer=pfer)
        bound = float(pfer)
    else:
        bound = pfer_solve(q, p, pi_thr=pi_thr)
        pi_thr_used = float(pi_thr)
    seqs = np.random.SeedSequence(seed).spawn(B)
    jobs = [(data, spec, q, s) for s in seqs]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_subsample_job, jobs))
    else:
        results = [_subsample_job(j) for j in jobs]
    short = sum(1 for _, reached in results if not reached)
    if short:
        warnings.warn(f"{short} of {B} subsample fits stopped before selecting q={q} learners", stacklevel=2)
    freqs = selection_frequencies([chosen for chosen, _ in results], spec.menus)
    keep = stable_set(freqs, pi_thr_used)
    final_spec = restrict_spec(spec, keep)
    fit, _, m_star = fit_tuned(data, final_spec, validation=validation, folds=folds, seed=seed)
    report = SelectionReport(
        "stabsel", [list(m) for m in spec.menus], keep, fit.mstop, frequencies=freqs,
        info={"q": q, "B": B, "pi_thr": pi_thr_used, "pfer": bound, "p": p, "short_fits": short},
        names=list(data.names),
    )
    return fit, report


# -- deselection ------------------------------------------------------------------

def risk_attribution(fit: BoostFit, m=None):
    """Training-risk reduction ``R_j`` credited to each committed learner, keyed by ``(k, spec)``.

    Intercepts are included so the values sum to ``r[0] - r[m]``.
    """
    m = fit.mstop if m is None else m
    parts = {}
    for st in fit.steps[:m]:
        key = (st.k, fit.menus[st.k][st.j])
        parts.setdefault(key, []).append(fit.risk[st.m - 1] - fit.risk[st.m])
    return {key: math.fsum(v) for key, v in parts.items()}


def deselection_keep(attr, total, tau, menus):
    """Per-parameter sets of non-intercept learners whose ``R_j`` reaches ``tau * total``."""
    thr = tau * total
    keep = [set() for _ in PARAMS]
    for k, menu in enumerate(menus):
        for s in menu:
            if not s.is_intercept and not attr.get((k, s), 0.0) < thr:
                keep[k].add(s)
    return keep


def deselect_refit(fit: BoostFit, data: Dataset, tau):
    """Drop learners with small risk attribution and re-boost for the same number of iterations.

    ``fit`` must be the tuned model on ``data`` (the training set). Returns
    ``(refit, report)``.
    """
    if not 0.0 <= tau < 1.0:
        raise DomainError("tau must lie in [0, 1)")
    attr = risk_attribution(fit)
    total = float(fit.risk[0] - fit.risk[fit.mstop])
    keep = deselection_keep(attr, total, tau, fit.menus)
    new_spec = restrict_spec(fit.spec, keep).replace(mstop=fit.mstop)
    refit = fit_boost(data, new_spec, offsets=fit.offsets)
    report = SelectionReport(
        "deselect", [list(m) for m in fit.menus], keep, refit.mstop, attributions=attr,
        info={"tau": tau, "threshold": tau * total, "r0": fit.r0, "r_mstop": float(fit.risk[fit.mstop]),
              "total_reduction": total},
        names=fit.names,
    )
    return refit, report


__all__ = [
    "SelectionReport", "boost_until_q", "deselect_refit", "deselection_keep", "make_probes",
    "n_candidates", "pfer_solve", "probing_fit", "report_from_fit", "restrict_spec", "risk_attribution",
    "selection_frequencies", "stability_select", "stable_set",
]
