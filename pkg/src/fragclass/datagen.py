"""Simulated partially observed curves and exact optimal-classifier oracles.

Curves follow ``curvature * (t - 0.5)^2 + offset`` with class-dependent
laws for the two coefficients. A candidate missing pattern is drawn uniformly among the
fragmented ones and a logistic coin decides whether the curve is kept whole.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .curves import CurveSet, ObservedCurve, PatternCatalog, TimeGrid, quadrature_weights

MECHANISMS = ("NMAR", "MAR", "MCAR")


@dataclass(frozen=True)
class CurveModel:
    class1_curvature: tuple[float, float] = (5.0, 2.0)   # normal mean, sd
    class1_offset: tuple[float, float] = (1.0, 0.5)
    class0_curvature: tuple[float, float] = (0.0, 5.0)   # uniform low, high
    class0_offset: tuple[float, float] = (0.0, 1.0)
    prior1: float = 0.5

    def density(self, y: int, curvature, offset):
        curvature, offset = np.asarray(curvature, dtype=float), np.asarray(offset, dtype=float)
        if y == 1:
            return _normal_pdf(curvature, *self.class1_curvature) * _normal_pdf(offset, *self.class1_offset)
        (a0, a1), (b0, b1) = self.class0_curvature, self.class0_offset
        inside = (curvature >= a0) & (curvature <= a1) & (offset >= b0) & (offset <= b1)
        return np.where(inside, 1.0 / ((a1 - a0) * (b1 - b0)), 0.0)


def _normal_pdf(x, mu, sd):
    z = (x - mu) / sd
    return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))


def logistic(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass(frozen=True)
class MissingMechanism:
    """Logistic missingness with coefficients ``coefs[k] = (a_k, b_k, c_k)``, k >= 2.

    For MCAR the coefficients are ignored and curves stay whole with
    probability ``mcar_rate``.
    """

    kind: str = "NMAR"
    coefs: dict = field(default_factory=dict)
    mcar_rate: float | None = None

    def __post_init__(self):
        if self.kind not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        coefs = {int(k): tuple(float(v) for v in abc) for k, abc in self.coefs.items()}
        object.__setattr__(self, "coefs", coefs)
        if any(len(abc) != 3 for abc in coefs.values()):
            raise ValueError("each pattern needs (a, b, c)")
        if self.kind == "MAR" and any(c != 0 for _, _, c in coefs.values()):
            raise ValueError("MAR requires c_k = 0 for every pattern")
        if self.kind == "MCAR" and not (self.mcar_rate is not None and 0 < self.mcar_rate < 1):
            raise ValueError("MCAR needs 0 < mcar_rate < 1")

    def check_catalog(self, catalog: PatternCatalog):
        frag = [k for k in catalog.indices if k != 1]
        if catalog.indices[0] != 1:
            raise ValueError("simulation catalog must start with the full pattern")
        if self.kind != "MCAR":
            missing = [k for k in frag if k not in self.coefs]
            if missing:
                raise ValueError(f"no logistic coefficients for patterns {missing}")
        return frag


def _curve_values(curvature, offset, grid: TimeGrid) -> np.ndarray:
    t = grid.nodes
    return curvature[:, None] * (t[None, :] - 0.5) ** 2 + offset[:, None]


def complete_probability(mech: MissingMechanism, catalog: PatternCatalog, k: int, y, curves, grid: TimeGrid):
    """Probability that a curve with candidate pattern ``k`` is kept whole.

    ``curves`` is an ``(n, n_points)`` array of full curves.
    """
    y = np.asarray(y, dtype=float)
    if mech.kind == "MCAR":
        return np.full(len(y), mech.mcar_rate)
    a, b, c = mech.coefs[k]
    pat = catalog[k]
    inside = curves @ quadrature_weights(pat, grid)
    comp = pat.complement()
    outside = (curves * grid.nodes) @ quadrature_weights(comp, grid) if comp is not None else 0.0
    return logistic(a * (1.0 - y) + b * inside + c * outside)


@dataclass
class Simulation:
    """Latent draws behind a simulated sample, with observed and full views."""

    curvature: np.ndarray
    offset: np.ndarray
    labels: np.ndarray
    patterns: np.ndarray
    full_values: np.ndarray
    grid: TimeGrid
    catalog: PatternCatalog

    def observed(self) -> CurveSet:
        vals = np.full_like(self.full_values, np.nan)
        for k in self.catalog.indices:
            rows = self.patterns == k
            m = self.catalog[k].mask(self.grid)
            vals[np.ix_(rows, m)] = self.full_values[np.ix_(rows, m)]
        return CurveSet(self.grid, vals, self.patterns, self.catalog, self.labels)

    def unrestricted(self) -> CurveSet:
        return CurveSet(self.grid, self.full_values, np.ones(len(self.labels), dtype=int),
                        self.catalog, self.labels)


def simulate(n: int, model: CurveModel, mech: MissingMechanism, catalog: PatternCatalog,
             rng: np.random.Generator, grid: TimeGrid | None = None) -> Simulation:
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = grid or TimeGrid()
    frag = mech.check_catalog(catalog)
    y = (rng.random(n) < model.prior1).astype(int)
    curv1 = rng.normal(*model.class1_curvature, size=n)
    off1 = rng.normal(*model.class1_offset, size=n)
    curv0 = rng.uniform(*model.class0_curvature, size=n)
    off0 = rng.uniform(*model.class0_offset, size=n)
    curvature = np.where(y == 1, curv1, curv0)
    offset = np.where(y == 1, off1, off0)
    curves = _curve_values(curvature, offset, grid)
    patterns = np.ones(n, dtype=int)
    if frag:
        cand = np.asarray(frag)[rng.integers(0, len(frag), size=n)]
        u = rng.random(n)
        p = np.empty(n)
        for k in frag:
            rows = cand == k
            if rows.any():
                p[rows] = complete_probability(mech, catalog, k, y[rows], curves[rows], grid)
        patterns = np.where(u < p, 1, cand)
    return Simulation(curvature, offset, y, patterns, curves, grid, catalog)


def gen_dataset(n: int, model: CurveModel, mech: MissingMechanism, catalog: PatternCatalog, seed,
                grid: TimeGrid | None = None) -> CurveSet:
    """``n`` iid observed curves, deterministic in ``seed``."""
    return simulate(n, model, mech, catalog, np.random.default_rng(seed), grid).observed()


def gen_example(model: CurveModel, mech: MissingMechanism, catalog: PatternCatalog, rng: np.random.Generator,
                grid: TimeGrid | None = None) -> ObservedCurve:
    return simulate(1, model, mech, catalog, rng, grid).observed()[0]


def recover_coefficients(values, grid: TimeGrid) -> tuple[float, float]:
    """``(curvature, offset)`` of a noise-free quadratic from its first, middle and last observed nodes."""
    values = np.asarray(values, dtype=float)
    obs = np.flatnonzero(np.isfinite(values))
    if len(obs) < 3:
        raise ValueError("need at least 3 observed nodes to recover the curve")
    pick = obs[[0, len(obs) // 2, -1]]
    t = grid.nodes[pick]
    c2, c1, c0 = np.linalg.solve(np.vander(t, 3), values[pick])
    return float(c2), float(c0 + 0.5 * c1 + 0.25 * c2)


def _selection_probability(model, mech, catalog, grid, k, y, curvature, offset):
    """P(pattern = k | Y = y, curvature, offset) under candidate-first sampling."""
    frag = [j for j in catalog.indices if j != 1]
    curves = _curve_values(curvature, offset, grid)
    yy = np.full(len(curvature), y)
    if not frag:
        return np.ones(len(curvature))
    if k == 1:
        return sum(complete_probability(mech, catalog, j, yy, curves, grid) for j in frag) / len(frag)
    return (1.0 - complete_probability(mech, catalog, k, yy, curves, grid)) / len(frag)


def oracle_scores(model: CurveModel, mech: MissingMechanism, catalog: PatternCatalog, data: CurveSet) -> np.ndarray:
    """Unnormalized ``E[(2Y - 1) 1{pattern = k} | fragment]`` for every curve."""
    curvature = np.empty(len(data))
    offset = np.empty(len(data))
    for i in range(len(data)):
        curvature[i], offset[i] = recover_coefficients(data.values[i], data.grid)
    out = np.zeros(len(data))
    for k in np.unique(data.patterns):
        rows = data.patterns == k
        for y, sign, prior in ((1, 1.0, model.prior1), (0, -1.0, 1.0 - model.prior1)):
            sel = _selection_probability(model, mech, catalog, data.grid, int(k), y, curvature[rows], offset[rows])
            out[rows] += sign * prior * model.density(y, curvature[rows], offset[rows]) * sel
    return out


def bayes_oracle_predict(model, mech, catalog, data: CurveSet) -> np.ndarray:
    return (oracle_scores(model, mech, catalog, data) > 0).astype(int)


def bayes_oracle_sim(model: CurveModel, mech: MissingMechanism, catalog: PatternCatalog,
                     curve: ObservedCurve) -> int:
    """Optimal class of one observed fragment under the generating model."""
    data = CurveSet(curve.grid, np.asarray(curve.values)[None, :], [curve.pattern_index], catalog)
    return int(bayes_oracle_predict(model, mech, catalog, data)[0])


# ---------------------------------------------------------------------------
# Discrete toys: exact optimality checks by enumeration.

MAX_TOY_ATOMS = 20


@dataclass(frozen=True)
class ToyAtom:
    scores: tuple    # scores[k - 1] is the value of the pattern-k score vector
    y: int
    pattern: int
    prob: Fraction


@dataclass(frozen=True)
class DiscreteToyDist:
    """Finite joint law of (per-pattern scores, label, pattern) with exact probabilities."""

    atoms: tuple[ToyAtom, ...]
    M: int

    def __post_init__(self):
        if any(a.prob < 0 for a in self.atoms):
            raise ValueError("probabilities must be nonnegative")
        if sum(a.prob for a in self.atoms) != 1:
            raise ValueError("probabilities must sum to 1")
        for a in self.atoms:
            if len(a.scores) != self.M or not 1 <= a.pattern <= self.M or a.y not in (0, 1):
                raise ValueError(f"malformed atom {a}")

    def cells(self) -> list[tuple[int, object]]:
        """Observable ``(pattern, score)`` pairs with positive probability."""
        return sorted({(a.pattern, a.scores[a.pattern - 1]) for a in self.atoms if a.prob > 0}, key=repr)

    def signed_regression(self, k: int, v) -> Fraction:
        """``E[(2Y - 1) 1{pattern = k} | X^(k) = v]``."""
        num = sum(((2 * a.y - 1) * a.prob for a in self.atoms if a.scores[k - 1] == v and a.pattern == k), Fraction(0))
        den = sum((a.prob for a in self.atoms if a.scores[k - 1] == v), Fraction(0))
        return num / den if den else Fraction(0)

    def error(self, table: dict) -> Fraction:
        return sum((a.prob for a in self.atoms if table[(a.pattern, a.scores[a.pattern - 1])] != a.y), Fraction(0))

    def plugin_table(self, rule=None) -> dict:
        rule = rule or self.signed_regression
        return {(k, v): int(rule(k, v) > 0) for k, v in self.cells()}


@dataclass(frozen=True)
class ToyOptimum:
    table: dict
    error: Fraction
    plugin_table: dict
    plugin_error: Fraction

    @property
    def agrees(self) -> bool:
        return self.table == self.plugin_table and self.error == self.plugin_error


def brute_force_optimal(toy: DiscreteToyDist) -> ToyOptimum:
    """Minimum-error decision table over all ``2^cells`` tables, next to the plug-in rule.

    Tables are enumerated with 0 before 1, so ties resolve to class 0 as
    the strict plug-in rule does.
    """
    if len(toy.atoms) > MAX_TOY_ATOMS:
        raise ValueError(f"support too large for enumeration ({len(toy.atoms)} > {MAX_TOY_ATOMS} atoms)")
    cells = toy.cells()
    best_table, best_err = None, None
    for bits in itertools.product((0, 1), repeat=len(cells)):
        table = dict(zip(cells, bits))
        err = toy.error(table)
        if best_err is None or err < best_err:
            best_table, best_err = table, err
    plug = toy.plugin_table()
    return ToyOptimum(best_table, best_err, plug, toy.error(plug))


def excess_risk_and_bound(toy: DiscreteToyDist, estimate) -> tuple[Fraction, Fraction]:
    """Excess error of ``1{estimate > 0}`` and the bound ``sum_k E|phi_k - phi_tilde_k|``."""
    excess = toy.error(toy.plugin_table(estimate)) - toy.error(toy.plugin_table())
    bound = Fraction(0)
    for k in range(1, toy.M + 1):
        for a in toy.atoms:
            v = a.scores[k - 1]
            bound += a.prob * abs(toy.signed_regression(k, v) - estimate(k, v))
    return excess, bound


def random_toy(rng: np.random.Generator, n_atoms: int = 6, M: int = 2, n_values: int = 2) -> DiscreteToyDist:
    weights = [int(w) for w in rng.integers(1, 10, size=n_atoms)]
    total = sum(weights)
    atoms = tuple(
        ToyAtom(tuple(int(v) for v in rng.integers(0, n_values, size=M)), int(rng.integers(0, 2)),
                int(rng.integers(1, M + 1)), Fraction(w, total))
        for w in weights
    )
    return DiscreteToyDist(atoms, M)
