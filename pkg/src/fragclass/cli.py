"""Command line entry point: ``fragclass {simulate,fit,predict,evaluate,reproduce-table}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .curves import CurveSet, DataFormatError, TimeGrid, UnknownPatternError, load_curveset, standard_catalog, read_long_csv, write_long_csv
from .datagen import CurveModel, simulate
from .filtering import BasisSpec, score_table
from .harness import ExperimentConfig, load_config, reproduce_table, write_results
from .kernel_classifier import KernelSpec, load_model, predict, save_model
from .model_selection import _fit, _fit_complete_case, misclassification_rate

log = logging.getLogger("fragclass")


def _config(path) -> tuple[ExperimentConfig, dict]:
    return load_config(path) if path else (ExperimentConfig(), {})


def cmd_simulate(args) -> int:
    cfg, _ = _config(args.config)
    if args.n is not None:
        cfg = replace(cfg, n=args.n)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    grid = TimeGrid(cfg.grid_points)
    sim = simulate(cfg.n, CurveModel(), cfg.mechanism_spec(), standard_catalog(cfg.M),
                   np.random.default_rng(cfg.seed), grid)
    data = sim.unrestricted() if args.full else sim.observed()
    write_long_csv(args.out, data, include_labels=not args.no_labels)
    log.info("wrote %d curves to %s", len(data), args.out)
    return 0


def cmd_fit(args) -> int:
    cfg, _ = _config(args.config)
    grid = TimeGrid(args.grid_points or cfg.grid_points)
    data = load_curveset(args.data, grid)
    if data.labels is None:
        raise DataFormatError("training data needs labels")
    sel = replace(cfg, n=len(data)).selection_grid() if len(data) >= 2 else cfg.selection_grid()
    basis = BasisSpec(sel.d_values[-1])
    kernel = KernelSpec(cfg.kernel)
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    scores = score_table(data, basis.max_dim)
    if args.complete_case:
        model, report = _fit_complete_case(data, sel, basis, kernel, rng, scores, cfg.cc_fragment_rule)
    else:
        model, report = _fit(data, sel, basis, kernel, rng, scores)
    save_model(model, args.model)
    if args.risk_report and report is not None:
        report.to_csv(args.risk_report)
    log.info("d=%d bandwidths=%s", model.d, model.bandwidths)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    values, ids, _, grid = read_long_csv(args.data, model.grid)
    good, patterns, failures = [], [], []
    lookup = {p.mask(grid).tobytes(): p.index for p in model.catalog.patterns}
    for i, row in enumerate(values):
        k = lookup.get(np.isfinite(row).tobytes())
        if k is None:
            failures.append((ids[i], "observability mask matches no pattern of the model"))
        else:
            good.append(i)
            patterns.append(k)
    preds = {}
    if good:
        data = CurveSet(grid, values[good], patterns, model.catalog, None, [ids[i] for i in good])
        preds = dict(zip(data.ids, predict(model, data).tolist()))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "predicted_class"])
        for cid in ids:
            if cid in preds:
                w.writerow([cid, preds[cid]])
    for cid, msg in failures:
        print(f"error,{cid},{msg}", file=sys.stderr)
    return 2 if failures else 0


def _read_labels(path) -> dict[str, int]:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if [h.strip() for h in header[:2]] == ["id", "t"]:
        _, ids, labels, _ = read_long_csv(path)
        if labels is None:
            raise DataFormatError("label file has no labels")
        return dict(zip(ids, labels.tolist()))
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "label"} <= set(reader.fieldnames):
            raise DataFormatError("label file needs id,label columns", line=1)
        for lineno, row in enumerate(reader, start=2):
            if row["label"] not in ("0", "1"):
                raise DataFormatError(f"bad label {row['label']!r}", line=lineno)
            out[row["id"]] = int(row["label"])
    return out


def cmd_evaluate(args) -> int:
    labels = _read_labels(args.labels)
    pred, truth = [], []
    with open(args.predictions, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "predicted_class"} <= set(reader.fieldnames):
            raise DataFormatError("predictions need id,predicted_class columns", line=1)
        for lineno, row in enumerate(reader, start=2):
            if row["id"] not in labels:
                raise DataFormatError(f"no label for id {row['id']}", line=lineno)
            if row["predicted_class"] not in ("0", "1"):
                raise DataFormatError(f"bad class {row['predicted_class']!r}", line=lineno)
            pred.append(int(row["predicted_class"]))
            truth.append(labels[row["id"]])
    rate = misclassification_rate(pred, truth)
    n_wrong = sum(p != t for p, t in zip(pred, truth))
    lines = ["n,misclassified,error_rate", f"{len(pred)},{n_wrong},{rate!r}"]
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_reproduce(args) -> int:
    cfg, extra = _config(args.config)
    cells_arg = args.cells or extra.get("cells", "")
    cells = [c.strip().upper() for c in cells_arg.split(",") if c.strip()]
    if not cells:
        raise ValueError("no cells requested (use --cells C1,C30,...)")
    if args.replications is not None:
        cfg = replace(cfg, replications=args.replications)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    rows, raw = reproduce_table(cells, cfg, args.workers)
    manifest = {
        "fragclass_version": __version__,
        "cells": cells,
        "run_settings": cfg.to_dict(),
        "notes": [
            "generator and classifier fields of run_settings are overridden per cell",
            "replicate r uses seed run_settings.seed + r",
            "bandwidth of a pattern absent from every testing sequence falls back to the grid median",
            "complete-case baseline classifies fragmented queries with rule cc_fragment_rule",
            "se_error is the standard error of the mean; sd_error the spread across replicates",
        ],
    }
    write_results(args.out, rows, raw, manifest)
    for row in rows:
        print(f"{row.cell:>4} {row.classifier:<14} {row.mean_error:.4f} ({row.se_error:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fragclass", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a long-format dataset from the simulation model")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--full", action="store_true", help="write the curves without missing fragments")
    s.add_argument("--no-labels", action="store_true")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", parents=[common], help="select parameters and fit a model file")
    f.add_argument("--data", required=True)
    f.add_argument("--model", required=True)
    f.add_argument("--config")
    f.add_argument("--seed", type=int)
    f.add_argument("--grid-points", type=int)
    f.add_argument("--complete-case", action="store_true")
    f.add_argument("--risk-report")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", parents=[common], help="classify a long-format dataset")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", parents=[common], help="error rate of predictions against labels")
    e.add_argument("--predictions", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    t = sub.add_parser("reproduce-table", parents=[common], help="rerun cells of the published simulation table")
    t.add_argument("--cells")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--replications", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int, help="defaults to $FRAGCLASS_WORKERS or 1")
    t.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (DataFormatError, UnknownPatternError, ValueError, OSError) as exc:
        print(f"fragclass {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
