"""Sampled curves with missing fragments, pattern catalogs and Simpson quadrature.

Curves live on a uniform grid over [0, 1]. Unobserved nodes hold NaN so that
any arithmetic that touches them is poisoned rather than silently wrong.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

DEFAULT_GRID_POINTS = 1001
_T_TOL = 1e-9


class DataFormatError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownPatternError(KeyError):
    """An observability mask that matches no pattern of the catalog."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown pattern"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i / (n_points - 1)`` on [0, 1]."""

    n_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 3, got {self.n_points}")

    @property
    def n_cells(self) -> int:
        return self.n_points - 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) / self.n_cells

    def node_index(self, t: float) -> int:
        """Index of the node equal to ``t`` (within 1e-9); raises otherwise."""
        pos = t * self.n_cells
        i = int(round(pos))
        if not 0 <= i < self.n_points or abs(pos - i) * self.spacing > _T_TOL:
            raise ValueError(f"t={t!r} is not a node of a {self.n_points}-point grid")
        return i


@dataclass(frozen=True)
class MissingPattern:
    """Observed set of a curve: sorted, disjoint closed intervals in [0, 1].

    Index 1 is reserved for the fully observed pattern ``[[0, 1]]``.
    """

    intervals: tuple[tuple[float, float], ...]
    index: int = 0

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        if not ivs:
            raise ValueError("a pattern needs at least one interval")
        prev_hi = -math.inf
        for lo, hi in ivs:
            if not (0.0 <= lo < hi <= 1.0):
                raise ValueError(f"bad interval [{lo}, {hi}]")
            if lo <= prev_hi:
                raise ValueError("intervals must be sorted and pairwise disjoint")
            prev_hi = hi
        if self.index == 1 and not self.is_full:
            raise ValueError("index 1 is reserved for the fully observed pattern")
        if self.is_full and self.index not in (0, 1):
            raise ValueError("the fully observed pattern must carry index 1")

    @classmethod
    def full(cls) -> "MissingPattern":
        return cls(((0.0, 1.0),), index=1)

    @property
    def is_full(self) -> bool:
        return self.intervals == ((0.0, 1.0),)

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def with_index(self, index: int) -> "MissingPattern":
        return MissingPattern(self.intervals, index)

    def node_intervals(self, grid: TimeGrid) -> list[tuple[int, int]]:
        return [(grid.node_index(lo), grid.node_index(hi)) for lo, hi in self.intervals]

    def mask(self, grid: TimeGrid) -> np.ndarray:
        m = np.zeros(grid.n_points, dtype=bool)
        for i0, i1 in self.node_intervals(grid):
            m[i0 : i1 + 1] = True
        return m

    def complement(self) -> "MissingPattern | None":
        """Closure of ``[0, 1]`` minus the pattern, or None when empty."""
        out, cursor = [], 0.0
        for lo, hi in self.intervals:
            if lo > cursor:
                out.append((cursor, lo))
            cursor = hi
        if cursor < 1.0:
            out.append((cursor, 1.0))
        return MissingPattern(tuple(out)) if out else None

    def same_set(self, other: "MissingPattern") -> bool:
        return self.intervals == other.intervals


def _simpson_run(n_cells: int, h: float) -> np.ndarray:
    """Weights for one run of ``n_cells`` equal cells, exact for cubics.

    Even runs use composite Simpson; odd runs close with a 3/8 panel.
    """
    if n_cells < 2:
        raise ValueError("an interval needs at least 3 grid nodes for Simpson quadrature")
    w = np.zeros(n_cells + 1)
    n_simp = n_cells if n_cells % 2 == 0 else n_cells - 3
    if n_simp:
        w[0:n_simp + 1:2] += 2.0
        w[1:n_simp:2] += 4.0
        w[0] -= 1.0
        w[n_simp] -= 1.0
        w[:n_simp + 1] *= h / 3.0
    if n_cells % 2:
        w[n_simp:] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


@lru_cache(maxsize=256)
def _cached_weights(intervals, n_points):
    grid = TimeGrid(n_points)
    w = np.zeros(n_points)
    for i0, i1 in MissingPattern(intervals).node_intervals(grid):
        w[i0 : i1 + 1] += _simpson_run(i1 - i0, grid.spacing)
    w.setflags(write=False)
    return w


def quadrature_weights(pattern: MissingPattern, grid: TimeGrid) -> np.ndarray:
    """Full-length weight vector, zero off the pattern (read-only)."""
    return _cached_weights(pattern.intervals, grid.n_points)


def quad_integral(values, pattern: MissingPattern, grid: TimeGrid | None = None) -> float:
    """Integral of sampled ``values`` over the pattern's intervals.

    ``values`` spans the whole grid; only nodes inside the pattern are read, so
    NaN outside the pattern is fine and NaN inside it propagates.
    """
    values = np.asarray(values, dtype=float)
    if grid is None:
        grid = TimeGrid(values.shape[-1])
    w = quadrature_weights(pattern, grid)
    idx = np.flatnonzero(pattern.mask(grid))
    return float(values[..., idx] @ w[idx])


@dataclass(frozen=True)
class PatternCatalog:
    """Distinct missing patterns keyed by index (1 = fully observed)."""

    patterns: tuple[MissingPattern, ...]

    def __post_init__(self):
        pats = tuple(sorted(self.patterns, key=lambda p: p.index))
        object.__setattr__(self, "patterns", pats)
        if not pats:
            raise ValueError("catalog needs at least one pattern")
        idx = [p.index for p in pats]
        if min(idx) < 1 or len(set(idx)) != len(idx):
            raise ValueError(f"pattern indices must be distinct and >= 1, got {idx}")
        if len({p.intervals for p in pats}) != len(pats):
            raise ValueError("catalog patterns must have distinct interval sets")

    @classmethod
    def from_intervals(cls, interval_lists: Sequence[Sequence[tuple[float, float]]]):
        """Catalog of the given interval sets in order; the first must be ``[0, 1]``."""
        pats = [MissingPattern(tuple(map(tuple, ivs)), index=k + 1) for k, ivs in enumerate(interval_lists)]
        return cls(tuple(pats))

    @property
    def indices(self) -> list[int]:
        return [p.index for p in self.patterns]

    def __len__(self):
        return len(self.patterns)

    def __getitem__(self, index: int) -> MissingPattern:
        for p in self.patterns:
            if p.index == index:
                return p
        raise UnknownPatternError(f"pattern index {index} not in catalog {self.indices}")

    def __contains__(self, index) -> bool:
        return index in self.indices

    def match_mask(self, mask: np.ndarray, grid: TimeGrid) -> int:
        """Index of the pattern whose node mask equals ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        for p in self.patterns:
            if np.array_equal(p.mask(grid), mask):
                return p.index
        raise UnknownPatternError("observability mask matches no catalog pattern")

    def to_dict(self):
        return [{"index": p.index, "intervals": [list(iv) for iv in p.intervals]} for p in self.patterns]

    @classmethod
    def from_dict(cls, items):
        return cls(tuple(MissingPattern(tuple(map(tuple, it["intervals"])), int(it["index"])) for it in items))


# Patterns of the simulation study; the first is the full interval.
STANDARD_PATTERNS = (
    ((0.0, 1.0),),
    ((0.0, 0.3), (0.5, 1.0)),
    ((0.0, 0.1), (0.2, 0.45), (0.6, 0.85), (0.9, 1.0)),
    ((0.25, 0.5), (0.65, 1.0)),
    ((0.0, 0.2), (0.3, 0.55), (0.75, 0.9)),
)


def standard_catalog(M: int) -> PatternCatalog:
    if not 1 <= M <= len(STANDARD_PATTERNS):
        raise ValueError(f"M must be in 1..{len(STANDARD_PATTERNS)}")
    return PatternCatalog.from_intervals(STANDARD_PATTERNS[:M])


@dataclass(frozen=True)
class ObservedCurve:
    grid: TimeGrid
    values: np.ndarray
    pattern_index: int
    label: int | None = None
    id: str | None = None


@dataclass
class CurveSet:
    """A dataset of curves on one grid, one row per curve.

    ``values`` is ``(n, grid.n_points)`` with NaN at unobserved nodes and
    ``patterns[i]`` is the catalog index of curve ``i``.
    """

    grid: TimeGrid
    values: np.ndarray
    patterns: np.ndarray
    catalog: PatternCatalog
    labels: np.ndarray | None = None
    ids: list[str] | None = None
    _masks_checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.patterns = np.asarray(self.patterns, dtype=int)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n_points:
            raise ValueError("values must be (n_curves, grid.n_points)")
        if self.patterns.shape != (self.values.shape[0],):
            raise ValueError("one pattern index per curve required")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != self.patterns.shape:
                raise ValueError("one label per curve required")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be 0 or 1")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self))]
        unknown = set(self.patterns.tolist()) - set(self.catalog.indices)
        if unknown:
            raise UnknownPatternError(f"pattern indices {sorted(unknown)} not in catalog")

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i: int) -> ObservedCurve:
        lab = None if self.labels is None else int(self.labels[i])
        return ObservedCurve(self.grid, self.values[i], int(self.patterns[i]), lab, self.ids[i])

    def subset(self, idx) -> "CurveSet":
        idx = np.asarray(idx)
        return CurveSet(
            self.grid,
            self.values[idx],
            self.patterns[idx],
            self.catalog,
            None if self.labels is None else self.labels[idx],
            [self.ids[i] for i in np.arange(len(self))[idx]],
        )

    @classmethod
    def from_curves(cls, curves: Sequence[ObservedCurve], catalog: PatternCatalog) -> "CurveSet":
        grids = {c.grid for c in curves}
        if len(grids) != 1:
            raise ValueError("curves must share one grid")
        labels = [c.label for c in curves]
        return cls(
            grids.pop(),
            np.vstack([c.values for c in curves]),
            [c.pattern_index for c in curves],
            catalog,
            None if any(lab is None for lab in labels) else labels,
            [c.id if c.id is not None else str(i) for i, c in enumerate(curves)],
        )

    @classmethod
    def from_array(cls, values, labels=None, catalog: PatternCatalog | None = None, ids=None) -> "CurveSet":
        """Build from a NaN-masked array, detecting patterns unless a catalog is given."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("expected a 2-D array of curves")
        grid = TimeGrid(values.shape[1])
        masks = np.isfinite(values)
        if catalog is None:
            catalog, patterns = detect_patterns(masks, grid)
        else:
            patterns = assign_patterns(masks, grid, catalog)
        return cls(grid, values, patterns, catalog, labels, ids)


def mask_to_pattern(mask: np.ndarray, grid: TimeGrid) -> MissingPattern:
    """Intervals spanned by the maximal runs of observed nodes."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask has no observed nodes")
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, stops = edges[0::2], edges[1::2] - 1
    if np.any(stops - starts < 2):
        raise ValueError("observed runs need at least 3 grid nodes")
    nodes = grid.nodes
    return MissingPattern(tuple((nodes[a], nodes[b]) for a, b in zip(starts, stops)))


def detect_patterns(masks, grid: TimeGrid) -> tuple[PatternCatalog, np.ndarray]:
    """Catalog the distinct observability masks of a dataset.

    The full mask gets index 1; the others get 2, 3, ... by decreasing
    frequency, ties broken by lexicographic order of the mask.
    """
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[0] == 0:
        raise ValueError("empty dataset")
    if masks.shape[1] != grid.n_points:
        raise ValueError("mask length does not match grid")
    keys = [m.tobytes() for m in masks]
    for i, m in enumerate(masks):
        if m.sum() < 3:
            raise ValueError(f"curve {i} has zero observed measure")
    counts = Counter(keys)
    full_key = np.ones(grid.n_points, dtype=bool).tobytes()
    # bytes of a bool array compare like the tuple of its 0/1 flags
    others = sorted((k for k in counts if k != full_key), key=lambda k: (-counts[k], k))
    order = ([full_key] if full_key in counts else []) + others
    index_of, pats = {}, []
    for pos, key in enumerate(order):
        idx = 1 if key == full_key else pos + (1 if full_key in counts else 2)
        index_of[key] = idx
        mask = np.frombuffer(key, dtype=bool)
        try:
            pat = mask_to_pattern(mask, grid)
        except ValueError as exc:
            bad = keys.index(key)
            raise ValueError(f"curve {bad}: {exc}") from None
        pats.append(pat.with_index(idx))
    return PatternCatalog(tuple(pats)), np.array([index_of[k] for k in keys], dtype=int)


def assign_patterns(masks, grid: TimeGrid, catalog: PatternCatalog) -> np.ndarray:
    lookup = {p.mask(grid).tobytes(): p.index for p in catalog.patterns}
    out = []
    for i, m in enumerate(np.asarray(masks, dtype=bool)):
        try:
            out.append(lookup[m.tobytes()])
        except KeyError:
            raise UnknownPatternError(f"curve {i}: observability mask matches no catalog pattern") from None
    return np.array(out, dtype=int)


def read_long_csv(path, grid: TimeGrid | None = None) -> tuple[np.ndarray, list[str], np.ndarray | None, TimeGrid]:
    """Read ``id,t,value,label`` rows into a NaN-masked array.

    Returns ``(values, ids, labels, grid)``; labels is None when every label
    field is empty. Curves appear in order of first occurrence.
    """
    grid = grid or TimeGrid()
    rows: dict[str, dict[int, float]] = {}
    labels: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["id", "t", "value", "label"]:
            raise DataFormatError("header must be id,t,value,label", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) < 3:
                raise DataFormatError(f"expected 4 fields, got {len(row)}", line=lineno)
            cid, t_raw, v_raw = row[0].strip(), row[1].strip(), row[2].strip()
            lab = row[3].strip() if len(row) > 3 else ""
            try:
                node = grid.node_index(float(t_raw))
            except ValueError as exc:
                raise DataFormatError(str(exc), line=lineno) from None
            curve = rows.setdefault(cid, {})
            if lab:
                if lab not in ("0", "1"):
                    raise DataFormatError(f"label must be 0 or 1, got {lab!r}", line=lineno)
                if labels.setdefault(cid, lab) != lab:
                    raise DataFormatError(f"conflicting labels for id {cid}", line=lineno)
            if not v_raw:
                continue
            try:
                val = float(v_raw)
            except ValueError:
                raise DataFormatError(f"bad value {v_raw!r}", line=lineno) from None
            if node in curve:
                raise DataFormatError(f"duplicate t for id {cid}", line=lineno)
            curve[node] = val
    if not rows:
        raise DataFormatError("no data rows")
    ids = list(rows)
    values = np.full((len(ids), grid.n_points), np.nan)
    for i, cid in enumerate(ids):
        for node, val in rows[cid].items():
            values[i, node] = val
    lab_arr = None
    if labels:
        missing = [cid for cid in ids if cid not in labels]
        if missing:
            raise DataFormatError(f"ids without label: {missing[:5]}")
        lab_arr = np.array([int(labels[cid]) for cid in ids])
    return values, ids, lab_arr, grid


def write_long_csv(path, data: CurveSet, include_labels: bool = True) -> None:
    nodes = data.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t", "value", "label"])
        for i in range(len(data)):
            lab = "" if data.labels is None or not include_labels else str(int(data.labels[i]))
            for j in np.flatnonzero(np.isfinite(data.values[i])):
                w.writerow([data.ids[i], repr(float(nodes[j])), repr(float(data.values[i, j])), lab])


def load_curveset(path, grid: TimeGrid | None = None, catalog: PatternCatalog | None = None) -> CurveSet:
    values, ids, labels, grid = read_long_csv(path, grid)
    return CurveSet.from_array(values, labels, catalog, ids)

