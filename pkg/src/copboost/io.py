"""Dataset ingestion and artifact persistence (fits, coefficient paths, manifests)."""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from importlib import metadata

import numpy as np

from .baselearners import LearnerSpec, learner_from_state
from .boosting import BoostFit, Step
from .errors import ParseError, SchemaError
from .model import PARAMS, Dataset, ModelSpec

FIT_FORMAT = "copboost-fit"
FIT_VERSION = 1
RESPONSES = ("y1", "y2")


def package_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _cell(text, row, col):
    t = text.strip()
    if t == "" or t.lower() in ("na", "nan"):
        raise ParseError(f"missing value at row {row}, column {col!r}", row, col)
    try:
        v = float(t)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} at row {row}, column {col!r}", row, col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r} at row {row}, column {col!r}", row, col)
    return v


def load_dataset(path, require_response=True):
    """Read a CSV with header; ``y1`` and ``y2`` are the responses, other columns covariates.

    Row numbers in errors count data rows from 1 (the header is row 0). With
    ``require_response=False`` a file without responses loads with NaN ``y``
    (used for prediction).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names")
        missing = [r for r in RESPONSES if r not in header]
        if missing and (require_response or len(missing) == 1):
            raise SchemaError(f"{path}: missing response column {', '.join(repr(m) for m in missing)}")
        has_y = not missing
        ycols = [header.index(r) for r in RESPONSES] if has_y else []
        xcols = [i for i, h in enumerate(header) if h not in RESPONSES]
        rows = []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: row {r} has {len(rec)} fields, expected {len(header)}", r, None)
            rows.append([_cell(rec[i], r, header[i]) for i in ycols + xcols])
    arr = np.array(rows, dtype=float).reshape(len(rows), len(ycols) + len(xcols))
    y = arr[:, :2] if has_y else np.full((len(rows), 2), np.nan)
    X = arr[:, len(ycols):]
    return Dataset(y, X, [header[i] for i in xcols])


def write_dataset(path, data: Dataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(RESPONSES) + list(data.names))
        for yi, xi in zip(data.y, data.X):
            w.writerow([repr(float(v)) for v in yi] + [repr(float(v)) for v in xi])


# -- fits -------------------------------------------------------------------------

def _floats(a):
    return [float(v) for v in np.ravel(a)]


def fit_to_dict(fit: BoostFit):
    return {
        "format": FIT_FORMAT,
        "version": FIT_VERSION,
        "package_version": package_version(),
        "spec": fit.spec.to_dict(),
        "names": list(fit.names) if fit.names is not None else None,
        "menus": {PARAMS[k]: [s.to_dict() for s in menu] for k, menu in enumerate(fit.menus)},
        "learners": {PARAMS[k]: [lr.state() for lr in lrs] for k, lrs in enumerate(fit.learners)},
        "offsets": _floats(fit.offsets),
        "steps": [{"m": s.m, "k": s.k, "j": s.j, "coef": _floats(s.coef), "risk": float(s.risk)}
                  for s in fit.steps],
        "risk": _floats(fit.risk),
        "n_nonfinite": int(fit.n_nonfinite),
        "aborted": fit.aborted,
    }


def fit_from_dict(d):
    if d.get("format") != FIT_FORMAT:
        raise SchemaError("not a fit file")
    if d.get("version") != FIT_VERSION:
        raise SchemaError(f"unsupported fit file version {d.get('version')!r}")
    menus = [[LearnerSpec.from_dict(s) for s in d["menus"][k]] for k in PARAMS]
    learners = [[learner_from_state(st) for st in d["learners"][k]] for k in PARAMS]
    steps = [Step(s["m"], s["k"], s["j"], np.asarray(s["coef"], dtype=float), s["risk"]) for s in d["steps"]]
    return BoostFit(
        spec=ModelSpec.from_dict(d["spec"]), menus=menus, learners=learners,
        offsets=np.asarray(d["offsets"], dtype=float), steps=steps,
        risk=np.asarray(d["risk"], dtype=float), n_nonfinite=d.get("n_nonfinite", 0),
        aborted=d.get("aborted"), names=d.get("names"),
    )


def save_fit(fit: BoostFit, path):
    with open(path, "w") as fh:
        json.dump(fit_to_dict(fit), fh, indent=1)


def load_fit(path) -> BoostFit:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return fit_from_dict(d)


def coefficient_path_rows(fit: BoostFit):
    """Rows ``(iteration, parameter, learner, coefficient_norm)`` for every iteration 0..mstop.

    Every learner committed at least once appears at every iteration, so
    each learner's path is a complete step function.
    """
    keys = sorted({(s.k, s.j) for s in fit.steps})
    acc = {}
    labels = {key: fit.menus[key[0]][key[1]].label(fit.names) for key in keys}
    rows = []

    def emit(m):
        for key in keys:
            norm = float(np.linalg.norm(acc[key])) if key in acc else 0.0
            rows.append((m, PARAMS[key[0]], labels[key], norm))

    emit(0)
    for s in fit.steps:
        key = (s.k, s.j)
        acc[key] = acc.get(key, 0.0) + fit.spec.nu * s.coef
        emit(s.m)
    return rows


def write_coefficient_path(fit: BoostFit, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "parameter", "learner", "coefficient_norm"])
        for m, k, lab, v in coefficient_path_rows(fit):
            w.writerow([m, k, lab, repr(v)])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def manifest(command, config, argv=None, outputs=()):
    """Reproducibility record: the resolved configuration, seed and versions."""
    return {
        "command": command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": config,
        "seed": config.get("seed"),
        "package_version": package_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "outputs": list(outputs),
    }


__all__ = [
    "coefficient_path_rows", "fit_from_dict", "fit_to_dict", "load_dataset", "load_fit", "manifest",
    "save_fit", "write_coefficient_path", "write_dataset", "write_json",
]
