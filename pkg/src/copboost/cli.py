"""Command-line front end: ``copboost <command> [flags]``.

Settings come from built-in defaults, then an optional YAML ``--config``
file, then command-line flags (flags win). Exit status is 0 on success,
1 on usage or input errors and 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import sys

import numpy as np
import yaml

from . import io
from .boosting import cv_risk, fit_boost, fit_tuned
from .errors import ConfigError, CopboostError, NumericalError
from .model import PARAMS, ModelSpec
from .scoring import score_record
from .selection import deselect_refit, probing_fit, report_from_fit, risk_attribution, stability_select
from .simulation import ScenarioSpec, StudyConfig, run_study, write_csv

log = logging.getLogger("copboost")

COMMANDS = ("fit", "cv", "probing", "stabsel", "deselect", "simulate", "score", "predict")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out": "copboost_out",
    "data": {"train": None, "val": None, "test": None, "fit": None},
    "model": {
        "marginals": ["gaussian", "gaussian"], "copula": "gaussian", "nu": 0.1, "mstop": 1000,
        "learner": "pspline", "df": 4.0, "knots": 20, "stabilization": "none",
    },
    "tuning": {"cv_folds": None},
    "selection": {"q": None, "pi_thr": None, "pfer": None, "B": 100, "tau": 0.01},
    "simulate": {
        "scenario": "A", "runs": 1, "methods": ["classic", "deselect(0.01)"], "n_train": 1000,
        "n_val": 1500, "n_test": 1000, "p": None, "nu": 0.01, "mstop": 3000, "es_draws": 100,
    },
    "score": {"draws": 100},
}

# flag dest -> location in the config tree
FLAG_PATHS = {
    "data": ("data", "train"), "val_data": ("data", "val"), "test_data": ("data", "test"),
    "fit": ("data", "fit"), "copula": ("model", "copula"), "marginals": ("model", "marginals"),
    "nu": ("model", "nu"), "mstop": ("model", "mstop"), "learner": ("model", "learner"),
    "sim_nu": ("simulate", "nu"), "sim_mstop": ("simulate", "mstop"),
    "cv_folds": ("tuning", "cv_folds"), "q": ("selection", "q"), "pi_thr": ("selection", "pi_thr"),
    "pfer": ("selection", "pfer"), "B": ("selection", "B"), "tau": ("selection", "tau"),
    "scenario": ("simulate", "scenario"), "runs": ("simulate", "runs"), "methods": ("simulate", "methods"),
    "seed": ("seed",), "threads": ("threads",), "out": ("out",),
}


class UsageError(CopboostError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser():
    common = _Parser(add_help=False)
    a = common.add_argument
    a("--config", help="YAML configuration file; flags override its values")
    a("--data", help="training data CSV (columns y1, y2 and covariates)")
    a("--val-data", help="validation CSV used to tune the stopping iteration")
    a("--test-data", help="test CSV for out-of-sample scores")
    a("--fit", help="saved fit JSON (deselect, score, predict)")
    a("--copula", choices=["gaussian", "clayton", "gumbel"])
    a("--marginals", type=_csv_list, help="two comma-separated marginal families, e.g. lognormal,loglogistic")
    a("--learner", choices=["pspline", "linear"], help="base-learner type for every covariate")
    a("--nu", type=float, help="step length")
    a("--mstop", type=int, help="maximum number of boosting iterations")
    a("--cv-folds", type=int, help="tune the stopping iteration by k-fold cross-validation")
    a("--q", type=int, help="stability selection: learners per subsample")
    a("--pi-thr", type=float, help="stability selection: frequency threshold")
    a("--pfer", type=float, help="stability selection: per-family error rate bound")
    a("--B", type=int, help="stability selection: number of subsamples")
    a("--tau", type=float, help="deselection threshold as a fraction of total risk reduction")
    a("--scenario", choices=["toy", "A", "B", "C"])
    a("--runs", type=int)
    a("--methods", type=_csv_list, help="simulate: comma-separated methods, e.g. classic,deselect(0.01)")
    a("--seed", type=int)
    a("--threads", type=int)
    a("--out", help="output directory")
    a("-v", "--verbose", action="store_true")
    parser = _Parser(prog="copboost", description="Boosting for bivariate distributional copula regression.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "fit": "fit a model (tuned on --val-data or --cv-folds when given)",
        "cv": "k-fold cross-validated stopping iteration and tuned fit",
        "probing": "fit with probing (stop at the first shadow covariate)",
        "stabsel": "stability selection and refit on the stable set",
        "deselect": "risk-attribution deselection and refit",
        "simulate": "simulation study on a built-in scenario",
        "score": "out-of-sample scores of a saved fit",
        "predict": "predicted distribution parameters from a saved fit",
    }
    for c in COMMANDS:
        sub.add_parser(c, parents=[common], help=helps[c])
    return parser


def _deep_update(base, upd, where="config"):
    for k, v in upd.items():
        if k not in base:
            raise ConfigError(f"unknown {where} key {k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where} key {k!r} must be a mapping")
            _deep_update(base[k], v, f"{where}.{k}")
        else:
            base[k] = v


def resolve_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            try:
                loaded = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{args.config}: invalid YAML ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: top level must be a mapping")
        _deep_update(cfg, loaded)
    if args.pi_thr is not None and args.pfer is not None:
        raise ConfigError("--pi-thr and --pfer conflict: give exactly one of them")
    # a threshold flag replaces whichever threshold the config file set
    if args.pi_thr is not None:
        cfg["selection"]["pfer"] = None
    if args.pfer is not None:
        cfg["selection"]["pi_thr"] = None
    # --nu and --mstop also apply to simulation studies
    args.sim_nu, args.sim_mstop = args.nu, args.mstop
    for dest, path in FLAG_PATHS.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        node = cfg
        for p in path[:-1]:
            node = node[p]
        node[path[-1]] = v
    return cfg


def _require(cfg, *path):
    node = cfg
    for p in path:
        node = node[p]
    if node is None:
        flag = {v: k for k, v in FLAG_PATHS.items()}.get(tuple(path), path[-1]).replace("_", "-")
        raise ConfigError(f"missing required setting --{flag}")
    return node


def model_spec(cfg, p):
    mc = cfg["model"]
    margs = mc["marginals"]
    if isinstance(margs, str):
        margs = _csv_list(margs)
    if len(margs) != 2:
        raise ConfigError("--marginals needs exactly two families")
    kw = {}
    if mc["learner"] == "pspline":
        kw = {"df": float(mc["df"]), "knots": int(mc["knots"])}
    elif mc["learner"] != "linear":
        raise ConfigError("learner must be 'pspline' or 'linear'")
    return ModelSpec.with_all_covariates(
        p, kind=mc["learner"], marginal1=margs[0], marginal2=margs[1], copula=mc["copula"],
        nu=float(mc["nu"]), mstop=int(mc["mstop"]), stabilization=mc["stabilization"], **kw)


def _load_optional(path):
    return io.load_dataset(path) if path else None


class Runner:
    def __init__(self, command, cfg, argv):
        self.command = command
        self.cfg = cfg
        self.argv = argv
        self.out = cfg["out"]
        self.outputs = []
        self.status = 0

    def path(self, name):
        os.makedirs(self.out, exist_ok=True)
        p = os.path.join(self.out, name)
        self.outputs.append(name)
        return p

    def finish(self):
        io.write_json(self.path("manifest.json"), io.manifest(self.command, self.cfg, self.argv, self.outputs))
        print(f"wrote {len(self.outputs)} files to {self.out}")
        return self.status

    def check_fit(self, fit):
        if fit.aborted:
            print(f"numerical failure: {fit.aborted}", file=sys.stderr)
            self.status = 2

    def write_fit(self, fit, report=None, test=None):
        io.save_fit(fit, self.path("fit.json"))
        io.write_coefficient_path(fit, self.path("coef_path.csv"))
        (report or report_from_fit(fit)).write_csv(self.path("selection.csv"))
        if test is not None:
            rec = score_record(fit, test, s=int(self.cfg["score"]["draws"]), seed=self.cfg["seed"])
            io.write_json(self.path("score.json"), rec)
        self.check_fit(fit)

    def train_data(self):
        return io.load_dataset(_require(self.cfg, "data", "train"))

    def tuned(self, train, spec):
        val = _load_optional(self.cfg["data"]["val"])
        folds = self.cfg["tuning"]["cv_folds"]
        fit, full, m = fit_tuned(train, spec, validation=val, folds=None if val else folds, seed=self.cfg["seed"])
        return fit, full, m

    # -- commands ---------------------------------------------------------------
    def cmd_fit(self):
        train = self.train_data()
        fit, full, m = self.tuned(train, model_spec(self.cfg, train.p))
        self.write_fit(fit, test=_load_optional(self.cfg["data"]["test"]))
        self._risk_path(full, m)
        print(f"stopping iteration {m}; selected {len(fit.selected())} learners")

    def _risk_path(self, full, m):
        with open(self.path("risk_path.csv"), "w") as fh:
            fh.write("iteration,train_risk\n")
            for i, r in enumerate(full.risk):
                fh.write(f"{i},{r!r}\n")

    def cmd_cv(self):
        train = self.train_data()
        folds = self.cfg["tuning"]["cv_folds"] or 10
        spec = model_spec(self.cfg, train.p)
        path = cv_risk(train, spec, folds, self.cfg["seed"])
        m = int(np.argmin(np.where(np.isfinite(path), path, np.inf)))
        full = fit_boost(train, spec)
        fit = full.truncate(min(m, full.mstop))
        with open(self.path("cv_risk.csv"), "w") as fh:
            fh.write("iteration,cv_risk\n")
            for i, r in enumerate(path):
                fh.write(f"{i},{r!r}\n")
        self.write_fit(fit, test=_load_optional(self.cfg["data"]["test"]))
        print(f"{folds}-fold CV stopping iteration {m}")

    def cmd_probing(self):
        train = self.train_data()
        fit, m = probing_fit(train, model_spec(self.cfg, train.p), seed=self.cfg["seed"])
        self.write_fit(fit, report_from_fit(fit, "probing", stop_iteration=m),
                       test=_load_optional(self.cfg["data"]["test"]))
        print(f"probing stopped after {m} iterations; selected {len(fit.selected())} learners")

    def cmd_stabsel(self):
        sel = self.cfg["selection"]
        q = _require(self.cfg, "selection", "q")
        if (sel["pi_thr"] is None) == (sel["pfer"] is None):
            raise ConfigError("stabsel needs exactly one of --pi-thr and --pfer")
        train = self.train_data()
        val = _load_optional(self.cfg["data"]["val"])
        fit, report = stability_select(
            train, model_spec(self.cfg, train.p), q=int(q), pi_thr=sel["pi_thr"], pfer=sel["pfer"],
            B=int(sel["B"]), seed=self.cfg["seed"], validation=val,
            folds=None if val else self.cfg["tuning"]["cv_folds"], threads=int(self.cfg["threads"]))
        self.write_fit(fit, report, test=_load_optional(self.cfg["data"]["test"]))
        io.write_json(self.path("stabsel.json"), report.info)
        print(f"stable set: {report.n_selected()} learners (pi_thr={report.info['pi_thr']:.4g})")

    def cmd_deselect(self):
        train = self.train_data()
        tau = float(_require(self.cfg, "selection", "tau"))
        if self.cfg["data"]["fit"]:
            base = io.load_fit(self.cfg["data"]["fit"])
        else:
            base, _, _ = self.tuned(train, model_spec(self.cfg, train.p))
        refit, report = deselect_refit(base, train, tau)
        self.write_fit(refit, report, test=_load_optional(self.cfg["data"]["test"]))
        attr = risk_attribution(base)
        total = float(base.risk[0] - base.risk[base.mstop])
        check = {
            "tau": tau, "mstop": base.mstop, "r0": float(base.risk[0]), "r_mstop": float(base.risk[base.mstop]),
            "sum_R": math.fsum(attr.values()), "total_reduction": total,
            "attribution": [{"parameter": PARAMS[k], "learner": s.label(base.names), "R": v}
                            for (k, s), v in sorted(attr.items(), key=lambda kv: (kv[0][0], -kv[1]))],
        }
        io.write_json(self.path("deselect.json"), check)
        print(f"deselection kept {report.n_selected()} learners")

    def cmd_simulate(self):
        sim = self.cfg["simulate"]
        sel = self.cfg["selection"]
        sc = ScenarioSpec(sim["scenario"], self.cfg["model"]["copula"], int(sim["n_train"]), int(sim["n_val"]),
                          int(sim["n_test"]), sim["p"], int(self.cfg["seed"]))
        pfer, pi_thr = sel["pfer"], sel["pi_thr"]
        if pfer is None and pi_thr is None:
            pfer = 5.0
        study = StudyConfig(
            sc, tuple(sim["methods"]), int(sim["runs"]), float(sim["nu"]), int(sim["mstop"]),
            q=int(sel["q"] or 20), pfer=pfer, pi_thr=pi_thr, B=int(sel["B"]), es_draws=int(sim["es_draws"]),
            threads=int(self.cfg["threads"]))
        rows, summary, failures = run_study(study)
        write_csv(self.path("results.csv"), rows)
        write_csv(self.path("summary.csv"), summary)
        for rec in summary:
            print(f"{rec['method']}: negloglik {rec['negloglik_mean']:.2f} ({rec['negloglik_sd']:.2f}), "
                  f"mstop {rec['mstop_mean']:.0f}")
        if failures:
            print(f"{len(failures)} run(s) failed and were excluded:", file=sys.stderr)
            for f in failures:
                print(f"  {f}", file=sys.stderr)
            self.status = 2 if not rows else 0

    def cmd_score(self):
        fit = io.load_fit(_require(self.cfg, "data", "fit"))
        test = io.load_dataset(_require(self.cfg, "data", "test"))
        rec = score_record(fit, test, s=int(self.cfg["score"]["draws"]), seed=self.cfg["seed"])
        io.write_json(self.path("score.json"), rec)
        print(f"negloglik {rec['negloglik']:.4f}, energy score {rec['energy_score']:.4f}")

    def cmd_predict(self):
        fit = io.load_fit(_require(self.cfg, "data", "fit"))
        data = io.load_dataset(_require(self.cfg, "data", "train"), require_response=False)
        params = fit.predict_params(data.X)
        with open(self.path("predictions.csv"), "w") as fh:
            fh.write(",".join(PARAMS) + "\n")
            for row in zip(*(params[k] for k in PARAMS)):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        print(f"predicted {data.n} rows")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        runner = Runner(args.command, cfg, argv)
        getattr(runner, f"cmd_{args.command}")()
        return runner.finish()
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"copboost: error: {msg}", file=sys.stderr)
        if isinstance(exc, UsageError):
            print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
