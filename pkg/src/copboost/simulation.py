"""Simulation designs (toy example, Scenarios A, B, C) and the study harness.

All scenario formulas define the five predictors on the link scale; the
responses are generated by drawing ``(u, v)`` from the scenario copula at
the observation's dependence predictor and mapping through the marginal
quantile functions.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .copulas import get_copula
from .errors import ConfigError
from .marginals import get_marginal
from .model import PARAMS, Dataset, ModelSpec

log = logging.getLogger(__name__)

PI = np.pi


def _eta_toy(x):
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return np.vstack([
        -x1 + 0.5 * x3,
        -0.7 - 0.7 * x3,
        -0.5 - 0.7 * x1 - 0.3 * x2,
        2.0 + 0.5 * x2,
        1.0 + x4,
    ])


def _eta_a(x):
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return np.vstack([
        -0.75 * x1 + 0.5 * np.cos(PI * x3),
        -0.7 + 0.5 * np.sin(PI * x3),
        0.5 - 0.7 * x1 - 0.02 * np.exp(2.0 * (x2 + 1.0)),
        2.0 + 0.5 * x2,
        -0.8 + 1.5 * np.log(4.5 - 1.7 * np.sin(PI * x4)),
    ])


def _eta_b(x):
    eta = _eta_a(x)
    eta[1] = -0.7
    return eta


# Scenario C coefficients for x1..x50 (ten per parameter)
_C_COEF = {
    "mu1": [0.5, 1, -0.5, -1, 1, 0.5, -0.5, 1, 0.5, 1],
    "sigma1": [0.5, 0.25, 0.25, 0.25, 0.5, 0.25, -0.25, 0.5, -0.25, 0.5],
    "mu2": [-1, 0.5, 0.5, -1, -0.5, -0.5, -1, -0.5, 0.5, -1],
    "sigma2": [-0.25, 0.25, 0.25, 0.25, -0.5, -0.25, 0.25, 0.25, -0.5, -0.5],
    "rho": [-0.5, -1, 0.5, 0.5, -0.5, -1, 0.5, 0.5, 1, -1],
}
# column blocks (0-based) feeding each parameter
_C_BLOCKS = {"mu1": range(0, 10), "sigma1": range(10, 20), "mu2": range(20, 30),
             "sigma2": range(30, 40), "rho": range(40, 50)}


def _eta_c(x):
    return np.vstack([x[:, list(_C_BLOCKS[k])] @ np.asarray(_C_COEF[k], dtype=float) for k in PARAMS])


@dataclass(frozen=True)
class Design:
    eta: callable
    truth: tuple
    marginals: tuple
    learner: str
    n_informative: int
    default_p: int


_TRUTH_A = ({0, 2}, {2}, {0, 1}, {1}, {3})
_TRUTH_B = ({0, 2}, set(), {0, 1}, {1}, {3})
_TRUTH_TOY = ({0, 2}, {2}, {0, 1}, {1}, {3})
_TRUTH_C = tuple(set(_C_BLOCKS[k]) for k in PARAMS)

DESIGNS = {
    "toy": Design(_eta_toy, _TRUTH_TOY, ("lognormal", "loglogistic"), "linear", 4, 20),
    "A": Design(_eta_a, _TRUTH_A, ("lognormal", "loglogistic"), "pspline", 4, 20),
    "B": Design(_eta_b, _TRUTH_B, ("lognormal", "loglogistic"), "pspline", 4, 20),
    "C": Design(_eta_c, _TRUTH_C, ("gaussian", "gaussian"), "linear", 50, 200),
}


@dataclass
class ScenarioSpec:
    scenario: str = "A"
    copula: str = "gaussian"
    n_train: int = 1000
    n_val: int = 1500
    n_test: int = 1000
    p: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in DESIGNS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {sorted(DESIGNS)}")
        get_copula(self.copula)
        d = DESIGNS[self.scenario]
        if self.p is None:
            self.p = d.default_p
        if self.p < d.n_informative:
            raise ConfigError(f"scenario {self.scenario} needs p >= {d.n_informative}")
        if min(self.n_train, self.n_val, self.n_test) < 0 or self.n_train < 10:
            raise ConfigError("sample sizes must be non-negative and n_train >= 10")

    @property
    def design(self) -> Design:
        return DESIGNS[self.scenario]


@dataclass
class TruthTable:
    informative: tuple  # per parameter, set of 0-based covariate columns

    def as_names(self):
        return {k: sorted(f"x{c + 1}" for c in cols) for k, cols in zip(PARAMS, self.informative)}


def scenario_eta(scenario, X):
    """Link-scale predictors (5, n) of a scenario at covariates ``X``."""
    return DESIGNS[scenario].eta(np.asarray(X, dtype=float))


def draw_responses(eta, marginals, copula, rng):
    """Responses (n, 2) for link-scale predictors ``eta``."""
    n = eta.shape[1]
    cop = get_copula(copula)
    uv = cop.sample(eta[4], n, rng)
    m1, m2 = get_marginal(marginals[0]), get_marginal(marginals[1])
    y1 = m1._ppf(uv[:, 0], eta[0], eta[1])
    y2 = m2._ppf(uv[:, 1], eta[2], eta[3])
    return np.column_stack([y1, y2])


def gen_scenario(spec: ScenarioSpec):
    """Train, validation and test datasets plus the truth table."""
    d = spec.design
    rng = np.random.default_rng(spec.seed)
    out = []
    for n in (spec.n_train, spec.n_val, spec.n_test):
        X = rng.uniform(-1.0, 1.0, (n, spec.p))
        y = draw_responses(d.eta(X), d.marginals, spec.copula, rng) if n else np.empty((0, 2))
        out.append(Dataset(y, X))
    return out[0], out[1], out[2], TruthTable(d.truth)


def scenario_model_spec(spec: ScenarioSpec, nu=0.01, mstop=3000, **kwargs) -> ModelSpec:
    d = spec.design
    return ModelSpec.with_all_covariates(
        spec.p, kind=d.learner, marginal1=d.marginals[0], marginal2=d.marginals[1],
        copula=spec.copula, nu=nu, mstop=mstop, **kwargs)


def tp_fp_counts(selected, truth: TruthTable):
    """Per-parameter ``(TP, FP)`` from per-parameter sets of selected covariate columns."""
    out = []
    for sel, inf in zip(selected, truth.informative):
        sel = set(sel)
        out.append((len(sel & inf), len(sel - inf)))
    return out


# -- study harness ----------------------------------------------------------

METHODS = ("classic", "probing", "stabsel", "deselect")


def parse_method(m):
    """``'deselect(0.01)'`` -> ``('deselect', 0.01)``; plain names map to ``(name, None)``."""
    m = m.strip()
    if m.startswith("deselect"):
        tau = 0.01
        if "(" in m:
            tau = float(m[m.index("(") + 1:m.rindex(")")])
        return "deselect", tau
    if m not in METHODS:
        raise ConfigError(f"unknown method {m!r}; expected one of {METHODS} or deselect(tau)")
    return m, None


@dataclass
class StudyConfig:
    scenario: ScenarioSpec
    methods: tuple = ("classic", "deselect(0.01)")
    runs: int = 1
    nu: float = 0.01
    mstop: int = 3000
    q: int = 20
    pfer: float | None = 5.0
    pi_thr: float | None = None
    B: int = 50
    es_draws: int = 100
    threads: int = 1
    extra: dict = field(default_factory=dict)


def _method_label(name, tau):
    return name if tau is None else f"deselect({tau:g})"


def run_single(cfg: StudyConfig, run: int):
    """All requested methods on one simulated dataset; returns a list of row dicts."""
    from .scoring import energy_score, neg_log_lik, sample_predictive
    from .selection import deselect_refit, probing_fit, stability_select

    sc = cfg.scenario
    seed = int(np.random.SeedSequence([sc.seed, run]).generate_state(1)[0])
    run_spec = ScenarioSpec(sc.scenario, sc.copula, sc.n_train, sc.n_val, sc.n_test, sc.p, seed)
    train, val, test, truth = gen_scenario(run_spec)
    mspec = scenario_model_spec(run_spec, nu=cfg.nu, mstop=cfg.mstop)
    methods = [parse_method(m) for m in cfg.methods]

    rows = []
    classic = None
    classic_time = 0.0

    def get_classic():
        nonlocal classic, classic_time
        if classic is None:
            from .boosting import fit_tuned
            t0 = time.perf_counter()
            classic, _, _ = fit_tuned(train, mspec, validation=val)
            classic_time = time.perf_counter() - t0
        return classic

    for name, tau in methods:
        t0 = time.perf_counter()
        if name == "classic":
            fit = get_classic()
            elapsed = classic_time
        elif name == "deselect":
            base = get_classic()
            t0 = time.perf_counter()
            fit, _ = deselect_refit(base, train, tau)
            elapsed = classic_time + time.perf_counter() - t0
        elif name == "probing":
            fit, _ = probing_fit(train, mspec, seed=seed)
            elapsed = time.perf_counter() - t0
        else:
            fit, _ = stability_select(train, mspec, q=cfg.q, pfer=cfg.pfer, pi_thr=cfg.pi_thr, B=cfg.B,
                                      seed=seed, validation=val)
            elapsed = time.perf_counter() - t0
        counts = tp_fp_counts(fit.selected_columns(), truth)
        nll = neg_log_lik(fit, test)
        es = energy_score(sample_predictive(fit, test.X, cfg.es_draws, seed=seed + 1), test.y) if test.n else np.nan
        row = {"run": run, "seed": seed, "method": _method_label(name, tau), "mstop": fit.mstop}
        for k, (tp, fp) in zip(PARAMS, counts):
            row[f"TP_{k}"] = tp
        for k, (tp, fp) in zip(PARAMS, counts):
            row[f"FP_{k}"] = fp
        row.update(negloglik=nll, energy_score=es, time=elapsed)
        rows.append(row)
    return rows


def _run_safe(args):
    cfg, run = args
    try:
        return run_single(cfg, run), None
    except Exception as exc:  # a failed run is reported and excluded
        log.exception("run %d failed", run)
        return [], f"run {run}: {exc!r}"


def run_study(cfg: StudyConfig):
    """Execute ``cfg.runs`` simulation runs. Returns ``(rows, summary, failures)``."""
    for m in cfg.methods:
        parse_method(m)
    jobs = [(cfg, r) for r in range(cfg.runs)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(_run_safe, jobs))
    else:
        results = [_run_safe(j) for j in jobs]
    rows = [row for res, _ in results for row in res]
    failures = [err for _, err in results if err]
    return rows, summarize(rows), failures


SUMMARY_COLUMNS = ([f"TP_{k}" for k in PARAMS] + [f"FP_{k}" for k in PARAMS]
                   + ["mstop", "negloglik", "energy_score"])


def summarize(rows):
    """Mean and sd per method in the column order of the supplement's tables."""
    out = []
    methods = list(dict.fromkeys(r["method"] for r in rows))
    for m in methods:
        sub = [r for r in rows if r["method"] == m]
        rec = {"method": m, "runs": len(sub)}
        for c in SUMMARY_COLUMNS:
            vals = np.array([r[c] for r in sub], dtype=float)
            rec[f"{c}_mean"] = float(np.mean(vals))
            rec[f"{c}_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rec["time_mean"] = float(np.mean([r["time"] for r in sub]))
        out.append(rec)
    return out


def write_csv(path, rows):
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
