"""Fourier filtering of observed fragments into finite score vectors."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .curves import CurveSet, ObservedCurve, PatternCatalog, TimeGrid, quadrature_weights

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class BasisSpec:
    """Orthonormal Fourier system on [0, 1], truncated at ``max_dim`` terms."""

    max_dim: int
    family: str = "fourier"

    def __post_init__(self):
        if self.family != "fourier":
            raise ValueError(f"unsupported basis family {self.family!r}")
        if self.max_dim < 1:
            raise ValueError("max_dim must be >= 1")


def fourier_basis(j: int, t):
    """Evaluate the ``j``-th basis function (1-based) at ``t``.

    Index 1 is the constant 1, index ``2k`` is ``sqrt(2) cos(2 pi k t)`` and
    index ``2k + 1`` is ``sqrt(2) sin(2 pi k t)``.
    """
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    t = np.asarray(t, dtype=float)
    if j == 1:
        out = np.ones_like(t)
    else:
        k = j // 2
        trig = np.cos if j % 2 == 0 else np.sin
        out = SQRT2 * trig(2.0 * np.pi * k * t)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=32)
def _basis_on_grid(max_dim: int, n_points: int) -> np.ndarray:
    t = TimeGrid(n_points).nodes
    B = np.vstack([fourier_basis(j, t) for j in range(1, max_dim + 1)])
    B.setflags(write=False)
    return B


def basis_matrix(d: int, grid: TimeGrid) -> np.ndarray:
    """``(d, n_points)`` array of basis values on the grid."""
    return _basis_on_grid(d, grid.n_points)


def _projection(pattern, grid: TimeGrid, d: int):
    w = quadrature_weights(pattern, grid)
    idx = np.flatnonzero(pattern.mask(grid))
    return idx, basis_matrix(d, grid)[:, idx] * w[idx]


def _project(values_obs: np.ndarray, W: np.ndarray) -> np.ndarray:
    # elementwise product and a row-wise reduction give a summation order that
    # depends on neither d, the row count nor memory alignment (BLAS dot does)
    values_obs = np.ascontiguousarray(values_obs)
    out = np.empty((values_obs.shape[0], W.shape[0]))
    for j in range(W.shape[0]):
        out[:, j] = np.add.reduce(values_obs * W[j], axis=1)
    return out


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    pattern_index: int

    @property
    def d(self) -> int:
        return len(self.scores)


def filter_curve(curve: ObservedCurve, d: int, basis: BasisSpec, catalog: PatternCatalog) -> ScoreVector:
    """First ``d`` inner products of the curve with the basis over its observed set."""
    if not 1 <= d <= basis.max_dim:
        raise ValueError(f"d={d} outside 1..{basis.max_dim}")
    pattern = catalog[curve.pattern_index]
    idx, W = _projection(pattern, curve.grid, d)
    vals = np.asarray(curve.values, dtype=float)[idx][None, :]
    return ScoreVector(_project(vals, W)[0], curve.pattern_index)


def score_table(data: CurveSet, d: int, pattern_override: int | None = None) -> np.ndarray:
    """``(n, d)`` scores for every curve over its own pattern.

    With ``pattern_override`` every curve is projected over that pattern
    instead (used for the unrestricted curves of the full-data baseline).
    """
    out = np.empty((len(data), d))
    for k in np.unique(data.patterns):
        rows = np.flatnonzero(data.patterns == k)
        pat = data.catalog[int(k) if pattern_override is None else pattern_override]
        idx, W = _projection(pat, data.grid, d)
        out[rows] = _project(data.values[np.ix_(rows, idx)], W)
    return out


def write_scores_csv(path, data: CurveSet, scores: np.ndarray, dims=None) -> None:
    """Write ``id,pattern,d,score_1..score_d``; ``dims`` gives a per-row d."""
    n, dmax = scores.shape
    dims = np.full(n, dmax) if dims is None else np.asarray(dims)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "pattern", "d"] + [f"score_{j}" for j in range(1, dmax + 1)])
        for i in range(n):
            di = int(dims[i])
            w.writerow([data.ids[i], int(data.patterns[i]), di] + [repr(float(s)) for s in scores[i, :di]])


class FourierFilter(TransformerMixin, BaseEstimator):
    """Map partially observed curves to ``n_components`` Fourier scores.

    Input is a :class:`CurveSet` or a 2-D array with NaN at unobserved nodes.
    Patterns are detected at ``fit`` and matched against that catalog at
    ``transform``.

    Parameters
    ----------
    n_components : int, default=11
        Number of basis functions kept.
    """

    def __init__(self, n_components=11):
        self.n_components = n_components

    def fit(self, X, y=None):
        data = X if isinstance(X, CurveSet) else CurveSet.from_array(X)
        BasisSpec(self.n_components)
        self.catalog_ = data.catalog
        self.grid_ = data.grid
        return self

    def transform(self, X):
        check_is_fitted(self, "catalog_")
        data = X if isinstance(X, CurveSet) else CurveSet.from_array(X, catalog=self.catalog_)
        return score_table(data, self.n_components)
