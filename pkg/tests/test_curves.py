import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fragclass.curves import (
    CurveSet,
    DataFormatError,
    MissingPattern,
    PatternCatalog,
    TimeGrid,
    UnknownPatternError,
    detect_patterns,
    load_curveset,
    standard_catalog,
    quad_integral,
    read_long_csv,
    write_long_csv,
)

FULL = MissingPattern.full()
S2 = MissingPattern(((0.0, 0.3), (0.5, 1.0)))
coef = st.floats(-10, 10, allow_nan=False)


def test_grid_nodes_exact():
    g = TimeGrid(11)
    assert g.nodes[3] == 3 / 10
    assert g.spacing == 0.1
    with pytest.raises(ValueError):
        TimeGrid(10)
    with pytest.raises(ValueError):
        TimeGrid(1)


def test_node_index_tolerance():
    g = TimeGrid(1001)
    assert g.node_index(0.3) == 300
    assert g.node_index(0.3 + 5e-10) == 300
    with pytest.raises(ValueError):
        g.node_index(0.3005)


@pytest.mark.parametrize("intervals", [((0.5, 0.2),), ((0.0, 0.5), (0.4, 1.0)), ((0.5, 1.0), (0.0, 0.2)), ()])
def test_pattern_rejects_bad_intervals(intervals):
    with pytest.raises(ValueError):
        MissingPattern(intervals)


def test_index_one_reserved():
    with pytest.raises(ValueError):
        MissingPattern(((0.0, 0.5),), index=1)
    with pytest.raises(ValueError):
        MissingPattern(((0.0, 1.0),), index=2)


def test_complement():
    assert S2.complement().intervals == ((0.3, 0.5),)
    assert FULL.complement() is None
    s5 = standard_catalog(5)[5]
    assert s5.complement().intervals == ((0.2, 0.3), (0.55, 0.75), (0.9, 1.0))


def test_quad_constant(grid):
    assert quad_integral(np.ones(grid.n_points), FULL, grid) == pytest.approx(1.0, abs=1e-15)


def test_quad_quadratic(grid):
    t = sp.symbols("t")
    exact = float(sp.integrate((t - sp.Rational(1, 2)) ** 2, (t, 0, 1)))
    assert exact == pytest.approx(1 / 12)
    assert quad_integral((grid.nodes - 0.5) ** 2, FULL, grid) == pytest.approx(exact, rel=1e-13)


def test_quad_union_measure(grid):
    assert quad_integral(np.ones(grid.n_points), S2, grid) == pytest.approx(0.8, rel=1e-14)


def test_quad_ignores_nan_outside(grid):
    v = np.where(S2.mask(grid), 1.0, np.nan)
    assert quad_integral(v, S2, grid) == pytest.approx(0.8, rel=1e-14)
    v[10] = np.nan
    assert np.isnan(quad_integral(v, S2, grid))


def test_quad_too_few_nodes():
    g = TimeGrid(11)
    with pytest.raises(ValueError):
        quad_integral(np.ones(11), MissingPattern(((0.0, 0.1),)), g)


def test_quad_odd_cell_count_exact_for_cubics():
    # [0.2, 0.45] spans 25 cells on a 101-node grid
    g = TimeGrid(101)
    pat = MissingPattern(((0.2, 0.45),))
    t = g.nodes
    got = quad_integral(4 * t**3 - t**2 + 2, pat, g)
    exact = (0.45**4 - 0.2**4) - (0.45**3 - 0.2**3) / 3 + 2 * 0.25
    assert got == pytest.approx(exact, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(coef, coef, coef, coef)
def test_quad_exact_on_cubics(c0, c1, c2, c3):
    g = TimeGrid(1001)
    t = g.nodes
    f = c0 + c1 * t + c2 * t**2 + c3 * t**3
    exact = c0 + c1 / 2 + c2 / 3 + c3 / 4
    scale = abs(c0) + abs(c1) / 2 + abs(c2) / 3 + abs(c3) / 4
    assert abs(quad_integral(f, FULL, g) - exact) <= 1e-12 * max(scale, 1e-300)


@settings(max_examples=40, deadline=None)
@given(coef, coef, st.integers(0, 2**32 - 1))
def test_quad_linear(a, b, seed):
    g = TimeGrid(201)
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=(2, g.n_points))
    lhs = quad_integral(a * f + b * h, S2, g)
    rhs = a * quad_integral(f, S2, g) + b * quad_integral(h, S2, g)
    scale = abs(a) * quad_integral(np.abs(f), S2, g) + abs(b) * quad_integral(np.abs(h), S2, g)
    assert abs(lhs - rhs) <= 1e-12 * max(scale, 1e-300)


def _masks(grid, pats):
    return np.vstack([p.mask(grid) for p in pats])


def test_detect_all_full(small_grid):
    cat, idx = detect_patterns(_masks(small_grid, [FULL] * 4), small_grid)
    assert len(cat) == 1 and idx.tolist() == [1, 1, 1, 1]


def test_detect_two_patterns(small_grid):
    cat, idx = detect_patterns(_masks(small_grid, [S2, FULL, S2]), small_grid)
    assert len(cat) == 2
    assert idx.tolist() == [2, 1, 2]
    assert cat[2].intervals == S2.intervals


def test_detect_without_complete(small_grid):
    c = standard_catalog(5)
    pats = [c[2], c[3], c[3], c[4]]
    cat, idx = detect_patterns(_masks(small_grid, pats), small_grid)
    assert len(cat) == 3
    assert 1 not in idx
    # most frequent first
    assert idx[1] == idx[2] == 2


def test_detect_tie_order_lexicographic(small_grid):
    a = MissingPattern(((0.0, 0.5),))
    b = MissingPattern(((0.5, 1.0),))
    _, idx = detect_patterns(_masks(small_grid, [a, b]), small_grid)
    # b's mask starts with zeros, so it sorts first
    assert idx.tolist() == [3, 2]


def test_detect_permutation_stable_and_idempotent(small_grid):
    c = standard_catalog(5)
    pats = [c[k] for k in (1, 2, 2, 3, 5, 5, 5, 4, 1)]
    masks = _masks(small_grid, pats)
    cat, idx = detect_patterns(masks, small_grid)
    perm = np.random.default_rng(0).permutation(len(pats))
    cat2, idx2 = detect_patterns(masks[perm], small_grid)
    assert cat2 == cat
    assert idx2.tolist() == idx[perm].tolist()
    cat3, idx3 = detect_patterns(np.vstack([cat[k].mask(small_grid) for k in idx]), small_grid)
    assert cat3 == cat and idx3.tolist() == idx.tolist()


def test_detect_errors(small_grid):
    with pytest.raises(ValueError, match="empty"):
        detect_patterns(np.zeros((0, small_grid.n_points), dtype=bool), small_grid)
    masks = _masks(small_grid, [FULL, FULL])
    masks[1] = False
    masks[1, 5] = True
    with pytest.raises(ValueError, match="curve 1"):
        detect_patterns(masks, small_grid)


def test_catalog_validation():
    with pytest.raises(ValueError):
        PatternCatalog((S2.with_index(2), S2.with_index(3)))
    cat = standard_catalog(3)
    assert cat.indices == [1, 2, 3]
    with pytest.raises(UnknownPatternError):
        cat[7]
    assert PatternCatalog.from_dict(cat.to_dict()) == cat


def test_curveset_rejects_unknown_pattern(small_grid):
    with pytest.raises(UnknownPatternError):
        CurveSet(small_grid, np.ones((1, small_grid.n_points)), [4], standard_catalog(3))


def test_long_csv_round_trip(tmp_path, sim_small):
    data = sim_small.observed()
    path = tmp_path / "d.csv"
    write_long_csv(path, data)
    back = load_curveset(path, data.grid)
    assert back.ids == data.ids
    np.testing.assert_array_equal(back.values, data.values)
    np.testing.assert_array_equal(back.labels, data.labels)
    # detected catalog may renumber patterns but must preserve the grouping
    for k in np.unique(data.patterns):
        assert len(set(back.patterns[data.patterns == k])) == 1


def test_long_csv_empty_value_means_unobserved(tmp_path):
    p = tmp_path / "x.csv"
    rows = ["id,t,value,label"] + [f"a,{i / 4},{i},1" for i in range(5)] + ["b,0.0,,0", "b,0.25,1,0", "b,0.5,1,0",
                                                                            "b,0.75,1,0", "b,1.0,1,0"]
    p.write_text("\n".join(rows) + "\n")
    values, ids, labels, _ = read_long_csv(p, TimeGrid(5))
    assert ids == ["a", "b"] and labels.tolist() == [1, 0]
    assert np.isnan(values[1, 0]) and values[1, 1] == 1.0


@pytest.mark.parametrize(
    "body, line",
    [
        ("id,t,value\n", 1),
        ("id,t,value,label\na,0.0,1,1\na,0.3,1,1\n", 3),
        ("id,t,value,label\na,0.0,1,1\na,0.0,2,1\n", 3),
        ("id,t,value,label\na,0.0,1,1\na,0.25,x,1\n", 3),
        ("id,t,value,label\na,0.0,1,1\na,0.25,1,0\n", 3),
    ],
)
def test_long_csv_format_errors(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataFormatError) as exc:
        read_long_csv(p, TimeGrid(5))
    assert exc.value.line == line
