"""Choosing the dimension and per-pattern bandwidths by repeated data splitting.

For every split the sample is cut into a training part and a testing
sequence; each candidate ``(d, h_1, ..., h_M)`` is scored by its
misclassification rate on the testing sequence and the rates are averaged
over splits. A test curve with pattern ``k`` only ever sees ``h_k``, so the
risk is a sum of per-pattern error counts; we tabulate those counts once
and evaluate any tuple from the table.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .curves import CurveSet, PatternCatalog
from .filtering import BasisSpec, score_table
from .kernel_classifier import FittedModel, KernelSpec, build_model, kernel_profile, predict, prefix_sq_dists

DEFAULT_BANDWIDTHS = tuple(i / 20 for i in range(1, 21))
CARTESIAN_MAX_PATTERNS = 3


def d_max(n: int) -> int:
    """Largest candidate dimension, ``floor(2.5 ln n)`` clamped to at least 1."""
    return max(1, math.floor(2.5 * math.log(max(n, 1))))


@dataclass(frozen=True)
class SelectionGrid:
    d_values: tuple[int, ...]
    h_values: tuple[float, ...] = DEFAULT_BANDWIDTHS
    n_splits: int = 20
    split_ratio: float = 0.65

    def __post_init__(self):
        d_vals = tuple(int(d) for d in self.d_values)
        h_vals = tuple(float(h) for h in self.h_values)
        object.__setattr__(self, "d_values", d_vals)
        object.__setattr__(self, "h_values", h_vals)
        if not d_vals or not h_vals:
            raise ValueError("selection grid is empty")
        if min(d_vals) < 1 or list(d_vals) != sorted(set(d_vals)):
            raise ValueError("d_values must be distinct, ascending and >= 1")
        if min(h_vals) <= 0 or list(h_vals) != sorted(set(h_vals)):
            raise ValueError("h_values must be distinct, ascending and positive")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.n_splits < 1:
            raise ValueError("n_splits must be >= 1")

    @classmethod
    def for_sample_size(cls, n: int, **kw) -> "SelectionGrid":
        return cls(tuple(range(1, d_max(n) + 1)), **kw)

    @property
    def fallback_bandwidth(self) -> float:
        """Grid median (lower middle element for even-sized grids)."""
        return self.h_values[(len(self.h_values) - 1) // 2]


def split(n, ratio: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random partition of ``range(n)`` into ``round(ratio * n)`` training and the rest."""
    n = n if isinstance(n, (int, np.integer)) else len(n)
    if n < 2:
        raise ValueError("need at least 2 observations to split")
    m = math.floor(ratio * n + 0.5)
    if not 0 < m < n:
        raise ValueError(f"split ratio {ratio} leaves an empty part for n={n}")
    perm = rng.permutation(n)
    return np.sort(perm[:m]), np.sort(perm[m:])


def misclassification_rate(predicted, labels) -> float:
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    if predicted.size == 0:
        raise ValueError("empty test sequence")
    return float(np.count_nonzero(predicted != labels)) / predicted.size


def empirical_risk(model: FittedModel, test: CurveSet, scores: np.ndarray | None = None) -> float:
    """Fraction of the labelled curves in ``test`` that ``model`` misclassifies."""
    if test.labels is None:
        raise ValueError("test sequence needs labels")
    return misclassification_rate(predict(model, test, scores), test.labels)


@dataclass
class RiskReport:
    """Error counts of every (split, pattern, d, h) cell and the chosen tuple.

    ``errors[s, i, a, b]`` counts test curves of pattern ``patterns[i]``
    misclassified in split ``s`` at ``d_values[a]`` and ``h_values[b]``.
    """

    d_values: tuple[int, ...]
    h_values: tuple[float, ...]
    patterns: tuple[int, ...]
    errors: np.ndarray
    test_size: int
    selected_d: int
    selected_h: dict[int, float]
    fallback: tuple[int, ...] = ()

    @property
    def n_splits(self) -> int:
        return self.errors.shape[0]

    def split_risks(self, d: int, hs) -> np.ndarray:
        hs = self._h_tuple(hs)
        a = self.d_values.index(d)
        total = np.zeros(self.n_splits, dtype=np.int64)
        for i, h in enumerate(hs):
            total += self.errors[:, i, a, self.h_values.index(h)]
        return total / self.test_size

    def mean_risk(self, d: int, hs) -> float:
        return float(self.split_risks(d, hs).mean())

    def se_risk(self, d: int, hs) -> float:
        r = self.split_risks(d, hs)
        return float(r.std(ddof=1) / math.sqrt(len(r))) if len(r) > 1 else 0.0

    @property
    def selected_tuple(self) -> tuple[float, ...]:
        return tuple(self.selected_h[k] for k in self.patterns)

    @property
    def selected_risk(self) -> float:
        return self.mean_risk(self.selected_d, self.selected_tuple)

    def _h_tuple(self, hs):
        if isinstance(hs, dict):
            return tuple(hs[k] for k in self.patterns)
        hs = tuple(hs)
        if len(hs) != len(self.patterns):
            raise ValueError(f"expected {len(self.patterns)} bandwidths")
        return hs

    def rows(self, max_rows: int = 200_000):
        """``(d, h_1..h_M, mean, se)`` rows over the full grid.

        When the full grid exceeds ``max_rows``, each pattern's bandwidth is
        swept with the others held at their selected values.
        """
        n_full = len(self.d_values) * len(self.h_values) ** len(self.patterns)
        if n_full <= max_rows:
            tuples = itertools.product(self.d_values, itertools.product(self.h_values, repeat=len(self.patterns)))
        else:
            sel = self.selected_tuple
            seen, tuples = set(), []
            for d in self.d_values:
                for i in range(len(self.patterns)):
                    for h in self.h_values:
                        hs = sel[:i] + (h,) + sel[i + 1:]
                        if (d, hs) not in seen:
                            seen.add((d, hs))
                            tuples.append((d, hs))
        for d, hs in tuples:
            yield (d, *hs, self.mean_risk(d, hs), self.se_risk(d, hs))

    def to_csv(self, path, max_rows: int = 200_000) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d"] + [f"h_{k}" for k in self.patterns] + ["mean_risk", "se_risk"])
            for row in self.rows(max_rows):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _pattern_error_counts(Q, yq, T, yt, grid: SelectionGrid, kernel: KernelSpec) -> np.ndarray:
    """``(len(d_values), len(h_values))`` misclassification counts for one pattern."""
    D = len(grid.d_values)
    H = len(grid.h_values)
    if len(yt) == 0:
        # empty vote, every query goes to class 0
        return np.full((D, H), np.count_nonzero(yq == 1), dtype=np.int64)
    cols = np.array(grid.d_values) - 1
    sq = prefix_sq_dists(Q, T, grid.d_values[-1])[:, :, cols]
    signs = 2.0 * yt - 1.0
    out = np.empty((D, H), dtype=np.int64)
    for b, h in enumerate(grid.h_values):
        votes = np.einsum("itc,t->ic", kernel_profile(kernel, sq / (h * h)), signs)
        out[:, b] = np.count_nonzero((votes > 0).astype(int) != yq[:, None], axis=0)
    return out


def select_params(data: CurveSet, grid: SelectionGrid, basis: BasisSpec, kernel: KernelSpec,
                  rng: np.random.Generator, scores: np.ndarray | None = None, search: str = "auto"):
    """Grid empirical-risk minimization over ``(d, h_1, ..., h_M)``.

    Returns ``(d, {k: h_k}, report)``. Ties go to the smallest ``d``,
    then the lexicographically smallest bandwidth tuple. Patterns that never
    reach a testing sequence get the grid-median bandwidth.
    """
    if data.labels is None:
        raise ValueError("selection needs labelled data")
    if grid.d_values[-1] > basis.max_dim:
        raise ValueError(f"d up to {grid.d_values[-1]} exceeds basis.max_dim={basis.max_dim}")
    if search not in ("auto", "cartesian", "decoupled"):
        raise ValueError(f"unknown search {search!r}")
    if scores is None:
        scores = score_table(data, basis.max_dim)
    patterns = tuple(data.catalog.indices)
    K, D, H = len(patterns), len(grid.d_values), len(grid.h_values)
    errors = np.zeros((grid.n_splits, K, D, H), dtype=np.int64)
    seen = np.zeros(K, dtype=bool)
    test_size = None
    for s in range(grid.n_splits):
        tr, te = split(len(data), grid.split_ratio, rng)
        test_size = len(te)
        for i, k in enumerate(patterns):
            qi = te[data.patterns[te] == k]
            if len(qi) == 0:
                continue
            seen[i] = True
            ti = tr[data.patterns[tr] == k]
            errors[s, i] = _pattern_error_counts(scores[qi], data.labels[qi], scores[ti], data.labels[ti], grid, kernel)

    active = [i for i in range(K) if seen[i]]
    totals = errors.sum(axis=0)
    if search == "auto":
        search = "cartesian" if K <= CARTESIAN_MAX_PATTERNS else "decoupled"
    best_d, best_val, best_h = None, None, None
    for a in range(D):
        if search == "cartesian":
            acc = np.zeros((H,) * len(active), dtype=np.int64)
            for pos, i in enumerate(active):
                shape = [1] * len(active)
                shape[pos] = H
                acc = acc + totals[i, a].reshape(shape)
            flat = int(np.argmin(acc)) if active else 0
            val = int(acc.flat[flat]) if active else 0
            h_idx = np.unravel_index(flat, acc.shape) if active else ()
        else:
            h_idx = tuple(int(np.argmin(totals[i, a])) for i in active)
            val = int(sum(totals[i, a, b] for i, b in zip(active, h_idx)))
        if best_val is None or val < best_val:
            best_d, best_val, best_h = grid.d_values[a], val, tuple(int(b) for b in h_idx)
    chosen = {k: grid.fallback_bandwidth for k in patterns}
    for i, b in zip(active, best_h):
        chosen[patterns[i]] = grid.h_values[b]
    report = RiskReport(grid.d_values, grid.h_values, patterns, errors, test_size, best_d, chosen,
                        tuple(patterns[i] for i in range(K) if not seen[i]))
    return best_d, chosen, report


def _fit(data, grid, basis, kernel, rng, scores=None, search="auto") -> tuple[FittedModel, RiskReport]:
    if scores is None:
        scores = score_table(data, basis.max_dim)
    d_sel, h_sel, report = select_params(data, grid, basis, kernel, rng, scores, search)
    model = build_model(scores, data.labels, data.patterns, data.catalog, data.grid, basis, kernel, d_sel, h_sel,
                        meta={"selected_risk": report.selected_risk, "n_train": len(data)})
    return model, report


def fit(data: CurveSet, grid: SelectionGrid, basis: BasisSpec, kernel: KernelSpec, rng: np.random.Generator,
        scores: np.ndarray | None = None) -> FittedModel:
    """Select ``(d, h_1..h_M)`` then refit on the whole sample."""
    return _fit(data, grid, basis, kernel, rng, scores)[0]


def _fit_complete_case(data, grid, basis, kernel, rng, scores=None, fragment_rule="coin"):
    rows = np.flatnonzero(data.patterns == 1)
    if len(rows) == 0:
        raise ValueError("no complete cases in the training data")
    if scores is None:
        scores = score_table(data, basis.max_dim)
    full_only = PatternCatalog((data.catalog[1],))
    cc = CurveSet(data.grid, data.values[rows], data.patterns[rows], full_only, data.labels[rows],
                  [data.ids[i] for i in rows])
    if len(cc) >= 2:
        d_sel, h_sel, report = select_params(cc, grid, basis, kernel, rng, scores[rows])
    else:
        d_sel, h_sel, report = grid.d_values[0], {1: grid.fallback_bandwidth}, None
    coin_seed = int(rng.integers(0, 2**63 - 1))
    model = build_model(scores[rows], cc.labels, cc.patterns, data.catalog, data.grid, basis, kernel, d_sel,
                        {1: h_sel[1]}, dispatch="complete_case", meta={"n_train": len(cc)},
                        fragment_rule=fragment_rule, coin_seed=coin_seed)
    return model, report


def fit_complete_case(data: CurveSet, grid: SelectionGrid, basis: BasisSpec, kernel: KernelSpec,
                      rng: np.random.Generator, scores: np.ndarray | None = None,
                      fragment_rule: str = "coin") -> FittedModel:
    """Baseline that discards every fragmented training curve.

    Complete queries vote against the complete-case store with ``h_1``. A
    fragmented query gets a fair coin (``fragment_rule="coin"``) or its
    observed-set scores are voted against the same store
    (``"observed_set"``).
    """
    return _fit_complete_case(data, grid, basis, kernel, rng, scores, fragment_rule)[0]
