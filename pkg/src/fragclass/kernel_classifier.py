"""Per-pattern kernel votes and the pattern-dispatched classifier."""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .curves import CurveSet, ObservedCurve, PatternCatalog, TimeGrid, UnknownPatternError
from .filtering import BasisSpec, filter_curve, score_table

KERNELS = ("gaussian", "box")
FRAGMENT_RULES = ("coin", "observed_set")
_CHUNK = 512


@dataclass(frozen=True)
class KernelSpec:
    """Regular kernel: unnormalized Gaussian or indicator of the closed unit ball."""

    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.family!r}")


def kernel_profile(kernel: KernelSpec, r2):
    """Kernel value as a function of the squared norm ``r2 = |u|^2``."""
    r2 = np.asarray(r2, dtype=float)
    if kernel.family == "gaussian":
        return np.exp(-0.5 * r2)
    return (r2 <= 1.0).astype(float)


def kernel_eval(kernel: KernelSpec, u) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(kernel_profile(kernel, u @ u))


def prefix_sq_dists(Q: np.ndarray, T: np.ndarray, d: int) -> np.ndarray:
    """``out[i, j, c]`` = squared distance between ``Q[i, :c+1]`` and ``T[j, :c+1]``."""
    diff = Q[:, None, :d] - T[None, :, :d]
    return np.cumsum(diff * diff, axis=-1)


@dataclass
class FittedModel:
    """Training scores per pattern plus the selected dimension and bandwidths.

    ``store[k]`` holds ``(scores, labels)`` of the training curves with
    pattern ``k``; scores are kept at ``basis.max_dim`` and truncated to
    ``d`` when voting. With ``dispatch == "complete_case"`` complete queries
    vote against ``store[1]`` using ``bandwidths[1]``; fragmented queries
    follow ``fragment_rule``: ``"coin"`` assigns a fair coin seeded by
    ``coin_seed`` and the curve's values, ``"observed_set"`` votes their
    observed-set scores against the complete-case store.
    """

    catalog: PatternCatalog
    grid: TimeGrid
    basis: BasisSpec
    kernel: KernelSpec
    d: int
    bandwidths: dict[int, float]
    store: dict[int, tuple[np.ndarray, np.ndarray]]
    dispatch: str = "pattern"
    meta: dict = field(default_factory=dict)
    fragment_rule: str = "coin"
    coin_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.d <= self.basis.max_dim:
            raise ValueError(f"d={self.d} outside 1..{self.basis.max_dim}")
        if any(h <= 0 for h in self.bandwidths.values()):
            raise ValueError("bandwidths must be positive")
        if self.dispatch not in ("pattern", "complete_case"):
            raise ValueError(f"unknown dispatch {self.dispatch!r}")
        if self.fragment_rule not in FRAGMENT_RULES:
            raise ValueError(f"fragment_rule must be one of {FRAGMENT_RULES}")

    @property
    def n_train(self) -> int:
        return sum(len(lab) for _, lab in self.store.values())

    def _route(self, k: int) -> int:
        if k not in self.catalog:
            raise UnknownPatternError(f"pattern index {k} not in catalog {self.catalog.indices}")
        return 1 if self.dispatch == "complete_case" else k

    def coin_flips(self, values) -> np.ndarray:
        """Fair 0/1 draws keyed by ``coin_seed`` and each curve's sampled values."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return np.array([np.random.default_rng([self.coin_seed, zlib.crc32(row.tobytes())]).integers(0, 2)
                         for row in values], dtype=int)

    def guesses(self, k: int) -> bool:
        return self.dispatch == "complete_case" and self.fragment_rule == "coin" and k != 1

    def votes(self, k: int, X: np.ndarray, h: float | None = None, d: int | None = None) -> np.ndarray:
        """Signed kernel votes of pattern-``k`` queries ``X`` (rows of scores)."""
        kk = self._route(k)
        d = self.d if d is None else d
        h = self.bandwidths[kk] if h is None else h
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return store_votes(self.store.get(kk), X, h, d, self.kernel)


def store_votes(entry, X, h, d, kernel):
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    out = np.zeros(X.shape[0])
    if entry is None or len(entry[1]) == 0:
        return out
    T, y = entry
    signs = 2.0 * y - 1.0
    for s in range(0, X.shape[0], _CHUNK):
        sq = prefix_sq_dists(X[s : s + _CHUNK], T, d)[..., d - 1]
        out[s : s + _CHUNK] = kernel_profile(kernel, sq / (h * h)) @ signs
    return out


def vote(model: FittedModel, k: int, x, h: float, d: int) -> float:
    """Kernel vote at one score vector ``x`` (length >= d) for pattern ``k``."""
    scores = getattr(x, "scores", x)
    return float(model.votes(k, np.asarray(scores)[None, :], h, d)[0])


def classify(model: FittedModel, curve: ObservedCurve) -> int:
    """1 iff the curve's vote is strictly positive."""
    kk = model._route(curve.pattern_index)
    if model.guesses(curve.pattern_index):
        return int(model.coin_flips(curve.values)[0])
    x = filter_curve(curve, model.d, model.basis, model.catalog)
    return int(vote(model, curve.pattern_index, x, model.bandwidths[kk], model.d) > 0)


def decision_values(model: FittedModel, data: CurveSet, scores: np.ndarray | None = None) -> np.ndarray:
    """Votes for every curve of ``data``; raises on patterns outside the catalog."""
    for k in np.unique(data.patterns):
        model._route(int(k))
    if scores is None:
        scores = score_table(data, model.d)
    out = np.empty(len(data))
    for k in np.unique(data.patterns):
        rows = np.flatnonzero(data.patterns == k)
        out[rows] = model.votes(int(k), scores[rows])
    return out


def predict(model: FittedModel, data: CurveSet, scores: np.ndarray | None = None) -> np.ndarray:
    out = (decision_values(model, data, scores) > 0).astype(int)
    for k in np.unique(data.patterns):
        if model.guesses(int(k)):
            rows = np.flatnonzero(data.patterns == k)
            out[rows] = model.coin_flips(data.values[rows])
    return out


def build_model(scores, labels, patterns, catalog, grid, basis, kernel, d, bandwidths, dispatch="pattern", meta=None,
                fragment_rule="coin", coin_seed=0):
    """Partition a training sample by pattern into a :class:`FittedModel`."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    patterns = np.asarray(patterns, dtype=int)
    if scores.shape[1] != basis.max_dim:
        raise ValueError("training scores must be computed at basis.max_dim")
    store = {}
    for k in catalog.indices:
        rows = patterns == k
        if rows.any():
            store[k] = (scores[rows].copy(), labels[rows].copy())
    return FittedModel(catalog, grid, basis, kernel, int(d), {int(k): float(h) for k, h in bandwidths.items()},
                       store, dispatch, dict(meta or {}), fragment_rule, int(coin_seed))


def model_to_dict(model: FittedModel) -> dict:
    return {
        "format": "fragclass-model",
        "version": 1,
        "grid_points": model.grid.n_points,
        "catalog": model.catalog.to_dict(),
        "basis": {"family": model.basis.family, "max_dim": model.basis.max_dim},
        "kernel": {"family": model.kernel.family},
        "dispatch": model.dispatch,
        "fragment_rule": model.fragment_rule,
        "coin_seed": model.coin_seed,
        "d": model.d,
        "bandwidths": {str(k): h for k, h in sorted(model.bandwidths.items())},
        "store": {
            str(k): {"labels": lab.tolist(), "scores": T.tolist()}
            for k, (T, lab) in sorted(model.store.items())
        },
        "meta": model.meta,
    }


def model_from_dict(obj: dict) -> FittedModel:
    if obj.get("format") != "fragclass-model":
        raise ValueError("not a fragclass model file")
    basis = BasisSpec(int(obj["basis"]["max_dim"]), obj["basis"]["family"])
    store = {}
    for k, entry in obj["store"].items():
        T = np.array(entry["scores"], dtype=float).reshape(-1, basis.max_dim)
        store[int(k)] = (T, np.array(entry["labels"], dtype=int))
    return FittedModel(
        PatternCatalog.from_dict(obj["catalog"]),
        TimeGrid(int(obj["grid_points"])),
        basis,
        KernelSpec(obj["kernel"]["family"]),
        int(obj["d"]),
        {int(k): float(h) for k, h in obj["bandwidths"].items()},
        store,
        obj["dispatch"],
        obj.get("meta", {}),
        obj.get("fragment_rule", "coin"),
        int(obj.get("coin_seed", 0)),
    )


def save_model(model: FittedModel, path) -> None:
    # json writes floats with repr, so the round trip is bit-exact
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
