"""scikit-learn style front end for the pattern-wise kernel classifier."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .curves import CurveSet
from .filtering import BasisSpec, score_table
from .kernel_classifier import KernelSpec, decision_values, predict
from .model_selection import DEFAULT_BANDWIDTHS, SelectionGrid, _fit, _fit_complete_case, d_max


def _as_curveset(X, y=None, catalog=None) -> CurveSet:
    if isinstance(X, CurveSet):
        if y is not None:
            return CurveSet(X.grid, X.values, X.patterns, X.catalog, np.asarray(y), X.ids)
        return X
    return CurveSet.from_array(np.asarray(X, dtype=float), y, catalog)


class FragmentKernelClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier for curves with missing fragments.

    Each curve is replaced by its first ``d`` Fourier scores over its
    observed set and classified by the sign of a kernel vote among training
    curves with the same missing pattern. ``d`` and one bandwidth per
    pattern are chosen by averaging test errors over random splits, then the
    model is refit on the whole sample.

    Parameters
    ----------
    n_components : int or None, default=None
        Largest candidate dimension; ``None`` uses ``floor(2.5 ln n)``.
    bandwidths : sequence of float or None, default=None
        Candidate bandwidths; ``None`` uses ``0.05, 0.10, ..., 1.00``.
    n_splits : int, default=20
        Number of random splits averaged during selection.
    split_ratio : float, default=0.65
        Training fraction of each split.
    kernel : {"gaussian", "box"}, default="gaussian"
    complete_case : bool, default=False
        Train on fully observed curves only (baseline).
    fragment_rule : {"coin", "observed_set"}, default="coin"
        How the complete-case baseline treats fragmented queries.
    catalog : PatternCatalog or None, default=None
        Fixed pattern catalog for array input; detected from the data if None.
    random_state : int, Generator or None, default=None

    Attributes
    ----------
    model_ : FittedModel
    report_ : RiskReport or None
    d_ : int
    bandwidths_ : dict
    classes_ : ndarray of shape (2,)
    """

    def __init__(self, n_components=None, bandwidths=None, n_splits=20, split_ratio=0.65, kernel="gaussian",
                 complete_case=False, fragment_rule="coin", catalog=None, random_state=None):
        self.n_components = n_components
        self.bandwidths = bandwidths
        self.n_splits = n_splits
        self.split_ratio = split_ratio
        self.kernel = kernel
        self.complete_case = complete_case
        self.fragment_rule = fragment_rule
        self.catalog = catalog
        self.random_state = random_state

    def fit(self, X, y=None):
        data = _as_curveset(X, y, self.catalog)
        if data.labels is None:
            raise ValueError("labels are required: pass y or a labelled CurveSet")
        top = self.n_components if self.n_components is not None else d_max(len(data))
        grid = SelectionGrid(tuple(range(1, top + 1)),
                             tuple(self.bandwidths) if self.bandwidths is not None else DEFAULT_BANDWIDTHS,
                             self.n_splits, self.split_ratio)
        basis = BasisSpec(top)
        kernel = KernelSpec(self.kernel)
        rng = np.random.default_rng(self.random_state)
        scores = score_table(data, basis.max_dim)
        if self.complete_case:
            self.model_, self.report_ = _fit_complete_case(data, grid, basis, kernel, rng, scores, self.fragment_rule)
        else:
            self.model_, self.report_ = _fit(data, grid, basis, kernel, rng, scores)
        self.d_ = self.model_.d
        self.bandwidths_ = dict(self.model_.bandwidths)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = data.grid.n_points
        return self

    def _data(self, X):
        check_is_fitted(self, "model_")
        if isinstance(X, CurveSet) and X.catalog != self.model_.catalog:
            X = CurveSet.from_array(X.values, X.labels, self.model_.catalog, X.ids)
        return _as_curveset(X, catalog=self.model_.catalog)

    def decision_function(self, X):
        """Kernel votes; positive means class 1."""
        data = self._data(X)
        return decision_values(self.model_, data)

    def predict(self, X):
        data = self._data(X)
        return predict(self.model_, data)
