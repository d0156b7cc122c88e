"""Monte Carlo experiments over the simulated model, including the cells of the published simulation table."""
from __future__ import annotations

import configparser
import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .curves import TimeGrid, standard_catalog
from .datagen import CurveModel, MissingMechanism, bayes_oracle_predict, simulate
from .filtering import BasisSpec, score_table
from .kernel_classifier import KernelSpec, predict
from .model_selection import DEFAULT_BANDWIDTHS, SelectionGrid, _fit, _fit_complete_case, d_max, misclassification_rate

CLASSIFIERS = ("proposed", "complete_case", "full_data", "oracle")
WORKERS_ENV = "FRAGCLASS_WORKERS"


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 100
    M: int = 3
    mechanism: str = "NMAR"
    coefs: dict = field(default_factory=dict)
    mcar_rate: float | None = None
    seed: int = 0
    grid_points: int = 1001
    classifiers: tuple[str, ...] = ("proposed", "complete_case", "full_data")
    replications: int = 20
    test_size: int = 1000
    h_values: tuple[float, ...] = DEFAULT_BANDWIDTHS
    n_splits: int = 20
    split_ratio: float = 0.65
    d_max: int | None = None
    kernel: str = "gaussian"
    cc_fragment_rule: str = "coin"

    def __post_init__(self):
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "h_values", tuple(float(h) for h in self.h_values))
        object.__setattr__(self, "coefs", {int(k): tuple(float(x) for x in v) for k, v in self.coefs.items()})
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        bad = set(self.classifiers) - set(CLASSIFIERS)
        if bad or not self.classifiers:
            raise ValueError(f"classifiers must be a nonempty subset of {CLASSIFIERS}")
        self.mechanism_spec()

    def mechanism_spec(self) -> MissingMechanism:
        coefs = {k: v for k, v in self.coefs.items() if k <= self.M}
        return MissingMechanism(self.mechanism, coefs, self.mcar_rate)

    def selection_grid(self) -> SelectionGrid:
        top = self.d_max if self.d_max is not None else d_max(self.n)
        return SelectionGrid(tuple(range(1, top + 1)), self.h_values, self.n_splits, self.split_ratio)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["coefs"] = {str(k): list(v) for k, v in sorted(self.coefs.items())}
        out["classifiers"] = list(self.classifiers)
        out["h_values"] = list(self.h_values)
        return out


_INT_KEYS = {"n", "M", "seed", "grid_points", "replications", "test_size", "n_splits", "d_max"}
_FLOAT_KEYS = {"mcar_rate", "split_ratio"}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` text (``#`` comments) into ExperimentConfig keywords.

    Per-pattern coefficients use keys ``a_2``, ``b_2``, ``c_2``, ...; lists
    (``classifiers``, ``h_values``, ``cells``) are comma separated.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[config]\n" + text)
    raw = dict(cp["config"])
    kw, coefs, extra = {}, {}, {}
    for key, val in raw.items():
        val = val.strip()
        if key[:2] in ("a_", "b_", "c_") and key[2:].isdigit():
            coefs.setdefault(int(key[2:]), [0.0, 0.0, 0.0])["abc".index(key[0])] = float(val)
        elif key in _INT_KEYS:
            kw[key] = None if val.lower() in ("", "none", "auto") else int(val)
        elif key in _FLOAT_KEYS:
            kw[key] = None if val.lower() in ("", "none") else float(val)
        elif key in ("mechanism", "kernel", "cc_fragment_rule"):
            kw[key] = val.upper() if key == "mechanism" else val
        elif key == "mcar":
            kw["mcar_rate"] = float(val)
        elif key == "classifiers":
            kw[key] = tuple(v.strip() for v in val.split(",") if v.strip())
        elif key == "h_values":
            kw[key] = tuple(float(v) for v in val.split(",") if v.strip())
        else:
            extra[key] = val
    if coefs:
        kw["coefs"] = {k: tuple(v) for k, v in coefs.items()}
    kw["_extra"] = extra
    return kw


def load_config(path) -> tuple[ExperimentConfig, dict]:
    with open(path) as fh:
        kw = parse_config_text(fh.read())
    extra = kw.pop("_extra")
    return ExperimentConfig(**kw), extra


@dataclass(frozen=True)
class ResultRow:
    cell: str
    classifier: str
    mean_error: float
    se_error: float
    sd_error: float
    replications: int
    n: int
    M: int
    mechanism: str

    HEADER = ("cell", "classifier", "mean_error", "se_error", "sd_error", "replications", "n", "M", "mechanism")

    def as_list(self):
        return [self.cell, self.classifier, repr(self.mean_error), repr(self.se_error), repr(self.sd_error),
                self.replications, self.n, self.M, self.mechanism]


def summarize(errors) -> tuple[float, float, float]:
    """Mean, standard error of the mean and standard deviation of replicate errors."""
    e = np.asarray(errors, dtype=float)
    mean = math.fsum(e) / len(e)
    if len(e) < 2:
        return mean, 0.0, 0.0
    sd = math.sqrt(math.fsum((x - mean) ** 2 for x in e) / (len(e) - 1))
    return mean, sd / math.sqrt(len(e)), sd


def run_replicate(config: ExperimentConfig, r: int) -> dict[str, float]:
    """Test errors of each configured classifier on replicate ``r``.

    Replicate ``r`` draws from seed ``config.seed + r``; all classifiers share
    the training sample, the test sample and the sequence of splits.
    """
    grid = TimeGrid(config.grid_points)
    catalog = standard_catalog(config.M)
    mech = config.mechanism_spec()
    model = CurveModel()
    sel = config.selection_grid()
    basis = BasisSpec(sel.d_values[-1])
    kernel = KernelSpec(config.kernel)
    train_ss, test_ss, split_ss = np.random.SeedSequence(config.seed + r).spawn(3)
    train = simulate(config.n, model, mech, catalog, np.random.default_rng(train_ss), grid)
    test = simulate(config.test_size, model, mech, catalog, np.random.default_rng(test_ss), grid)
    obs_train, obs_test = train.observed(), test.observed()
    out = {}
    need_obs = {"proposed", "complete_case"} & set(config.classifiers)
    if need_obs:
        tr_scores = score_table(obs_train, basis.max_dim)
        te_scores = score_table(obs_test, basis.max_dim)
    for name in config.classifiers:
        rng = np.random.default_rng(split_ss)
        if name == "proposed":
            fitted, _ = _fit(obs_train, sel, basis, kernel, rng, tr_scores)
            pred = predict(fitted, obs_test, te_scores)
            labels = obs_test.labels
        elif name == "complete_case":
            fitted, _ = _fit_complete_case(obs_train, sel, basis, kernel, rng, tr_scores, config.cc_fragment_rule)
            pred = predict(fitted, obs_test, te_scores)
            labels = obs_test.labels
        elif name == "full_data":
            full_train, full_test = train.unrestricted(), test.unrestricted()
            fitted, _ = _fit(full_train, sel, basis, kernel, rng)
            pred = predict(fitted, full_test)
            labels = full_test.labels
        else:
            pred = bayes_oracle_predict(model, mech, catalog, obs_test)
            labels = obs_test.labels
        out[name] = misclassification_rate(pred, labels)
    return out


def _worker_count(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def run_replicates(config: ExperimentConfig, workers: int | None = None) -> list[dict[str, float]]:
    workers = _worker_count(workers)
    reps = range(config.replications)
    if workers == 1 or config.replications == 1:
        return [run_replicate(config, r) for r in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_replicate, [config] * config.replications, reps))


def run_cell(config: ExperimentConfig, labels: dict[str, str] | None = None, workers: int | None = None):
    """Aggregate replicate errors into one :class:`ResultRow` per classifier.

    Returns ``(rows, per_replicate)`` where ``per_replicate[r][name]`` is the
    raw error of replicate ``r``.
    """
    per_rep = run_replicates(config, workers)
    rows = []
    for name in config.classifiers:
        mean, se, sd = summarize([rep[name] for rep in per_rep])
        cell = (labels or {}).get(name, name)
        rows.append(ResultRow(cell, name, mean, se, sd, config.replications, config.n, config.M, config.mechanism))
    return rows, per_rep


# Simulation-table scenarios: (missing share, n, mechanism variant) -> generator settings.
_NMAR30_A = {2: (0, 0.95, 0.13), 3: (0, 0.9, 1), 4: (0, 1.05, 0.13), 5: (0, 1.2, 1)}
_NMAR30_B = {2: (2, 0.01, 0.8), 3: (2, 0.01, 0.4), 4: (2, 0.01, 0.3), 5: (2, 0.01, 0.3)}
_MAR30 = {2: (1.9, 0.075, 0), 3: (1.9, 0.075, 0), 4: (2, 0.085, 0), 5: (2, 0.085, 0)}
_NMAR80_A = {2: (0, -1.9, 1.5), 3: (0, -1.45, -3), 4: (0, -2.1, 1.5), 5: (0, -2, -3)}
_NMAR80_B = {2: (-5, -0.4, 0.25), 3: (-4, -0.5, -0.15), 4: (-5, -0.4, 0.25), 5: (-4, -0.5, -0.15)}
_MAR80 = {2: (1, -3, 0), 3: (-1.45, -0.95, 0), 4: (0.6, -3, 0), 5: (-1.9, -0.95, 0)}

SCENARIOS = {}
_first_cell = {(30, 100): 3, (30, 200): 15, (80, 100): 27, (80, 200): 39}
for (share, n), first in _first_cell.items():
    variants = [
        ("NMAR_A", "NMAR", _NMAR30_A if share == 30 else _NMAR80_A, None),
        ("NMAR_B", "NMAR", _NMAR30_B if share == 30 else _NMAR80_B, None),
        ("MAR", "MAR", _MAR30 if share == 30 else _MAR80, None),
        ("MCAR", "MCAR", {}, 0.7 if share == 30 else 0.2),
    ]
    for v, (tag, mech, coefs, rate) in enumerate(variants):
        SCENARIOS[f"{share}_{n}_{tag}"] = {"n": n, "mechanism": mech, "coefs": coefs, "mcar_rate": rate,
                                           "cells": tuple(f"C{first + 3 * v + j}" for j in range(3))}

# cell -> (scenario, classifier, M)
CELLS = {"C1": ("30_100_NMAR_B", "full_data", 3), "C2": ("30_200_NMAR_B", "full_data", 3)}
for _name, _sc in SCENARIOS.items():
    cc, m3, m5 = _sc["cells"]
    CELLS[cc] = (_name, "complete_case", 3)
    CELLS[m3] = (_name, "proposed", 3)
    CELLS[m5] = (_name, "proposed", 5)

PUBLISHED_ERRORS = {
    "C1": 0.1771, "C2": 0.1607, "C3": 0.2774, "C4": 0.1920, "C5": 0.2124, "C6": 0.2502, "C7": 0.1581,
    "C8": 0.1650, "C9": 0.2549, "C10": 0.1626, "C11": 0.1700, "C12": 0.2773, "C13": 0.1939, "C14": 0.2121,
    "C15": 0.2672, "C16": 0.1743, "C17": 0.1883, "C18": 0.2451, "C19": 0.1430, "C20": 0.1517, "C21": 0.2470,
    "C22": 0.1510, "C23": 0.1529, "C24": 0.2686, "C25": 0.1744, "C26": 0.1871, "C27": 0.4463, "C28": 0.1970,
    "C29": 0.2284, "C30": 0.4096, "C31": 0.1335, "C32": 0.1554, "C33": 0.4464, "C34": 0.1991, "C35": 0.2273,
    "C36": 0.4419, "C37": 0.1978, "C38": 0.2178, "C39": 0.4410, "C40": 0.1872, "C41": 0.2048, "C42": 0.4087,
    "C43": 0.1264, "C44": 0.1394, "C45": 0.4412, "C46": 0.1824, "C47": 0.2061, "C48": 0.4398, "C49": 0.1800,
    "C50": 0.2058,
}


def cell_config(cell: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Configuration reproducing one simulation-table cell on top of ``base``'s run settings."""
    if cell not in CELLS:
        raise ValueError(f"unknown cell {cell!r}")
    scen, clf, M = CELLS[cell]
    sc = SCENARIOS[scen]
    base = base or ExperimentConfig()
    return replace(base, n=sc["n"], M=M, mechanism=sc["mechanism"], coefs=sc["coefs"], mcar_rate=sc["mcar_rate"],
                   classifiers=(clf,))


def plan_cells(cells, base: ExperimentConfig | None = None) -> list[tuple[ExperimentConfig, dict[str, str]]]:
    """Group requested cells so that cells sharing a generator run together."""
    groups: dict[tuple, tuple[ExperimentConfig, dict]] = {}
    for cell in cells:
        cfg = cell_config(cell, base)
        key = (CELLS[cell][0], cfg.M)
        if key in groups:
            prev, lab = groups[key]
            if cfg.classifiers[0] in lab:
                raise ValueError(f"duplicate cell {cell}")
            groups[key] = (replace(prev, classifiers=prev.classifiers + cfg.classifiers), lab)
        else:
            groups[key] = (cfg, {})
        groups[key][1][cfg.classifiers[0]] = cell
    return list(groups.values())


def reproduce_table(cells, base: ExperimentConfig | None = None, workers: int | None = None):
    """Run the requested simulation-table cells; returns ``(rows, raw)`` in request order.

    ``raw`` maps each cell to its per-replicate errors.
    """
    rows, raw = {}, {}
    for cfg, labels in plan_cells(cells, base):
        res, per_rep = run_cell(cfg, labels, workers)
        for row in res:
            rows[row.cell] = row
            raw[row.cell] = [rep[row.classifier] for rep in per_rep]
    return [rows[c] for c in cells], raw


def write_results(path, rows, raw=None, manifest: dict | None = None) -> None:
    """Result rows to ``path``; raw replicate errors and manifest alongside."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ResultRow.HEADER)
        for row in rows:
            w.writerow(row.as_list())
    stem = os.path.splitext(path)[0]
    if raw is not None:
        with open(stem + ".replicates.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "replicate", "error"])
            for cell, errs in raw.items():
                for r, e in enumerate(errs):
                    w.writerow([cell, r, repr(float(e))])
    if manifest is not None:
        with open(stem + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
