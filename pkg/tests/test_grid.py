"""Grid, stencil, and quadrature checks.

Oracles: closed-form derivatives of trigonometric and polynomial fields,
convergence-ratio studies between nested resolutions (a second-order stencil
should shrink errors by about 4x when h halves), and exactness of the
trapezoid/rectangle rules on the function classes they integrate exactly.
"""

import numpy as np
import pytest

from eulerlab import grid as g
from eulerlab import serialize as ser


def torus(n):
    return g.Grid(g.TORUS, n, n, (0.0, 2.0 * np.pi), (0.0, 2.0 * np.pi))


def plane(n, lo=-1.0, hi=1.0):
    return g.Grid(g.PLANE, n, n, (lo, hi), (lo, hi))


def max_err(a, b):
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------------------
# construction invariants


def test_strip_requires_unit_half_width():
    with pytest.raises(g.GridError):
        g.Grid(g.STRIP, 33, 17, (-4.0, 4.0), (-2.0, 2.0))
    gr = g.Grid(g.STRIP, 33, 17, (-4.0, 4.0), (-1.0, 1.0))
    assert gr.wall_rows() == (0, 16)


def test_minimum_node_count():
    with pytest.raises(g.GridError):
        g.Grid(g.PLANE, 4, 32, (0.0, 1.0), (0.0, 1.0))


def test_quadrant_corner_at_origin():
    with pytest.raises(g.GridError):
        g.Grid(g.QUADRANT, 16, 16, (1.0, 2.0), (0.0, 1.0))


def test_half_plane_wall_at_zero():
    with pytest.raises(g.GridError):
        g.Grid(g.HALF_PLANE, 16, 16, (-1.0, 1.0), (-0.5, 1.0))


def test_spacing_conventions():
    t = torus(64)
    assert t.hx == pytest.approx(2.0 * np.pi / 64)
    assert t.x_nodes()[-1] < 2.0 * np.pi  # right end omitted when periodic
    p = plane(65, 0.0, 1.0)
    assert p.hx == pytest.approx(1.0 / 64)
    assert p.x_nodes()[-1] == pytest.approx(1.0)


def test_incompatible_grids_rejected():
    a = g.ScalarField.from_function(plane(16), lambda x, y: x)
    b = g.ScalarField.from_function(plane(17), lambda x, y: y)
    with pytest.raises(g.IncompatibleGrid):
        g.same_grid(a, b)


def test_fields_are_frozen():
    f = g.ScalarField.from_function(plane(16), lambda x, y: x * y)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_nonfinite_values_rejected():
    gr = plane(16)
    bad = np.zeros(gr.shape)
    bad[3, 3] = np.inf
    with pytest.raises(g.GridError):
        g.ScalarField(gr, bad)


# ---------------------------------------------------------------------------
# stencils


def test_gradient_exact_on_cubics():
    # one-sided and centered first-derivative stencils are exact through x^2;
    # interior centered differences are exact through x^3 as well
    gr = plane(17)
    f = g.ScalarField.from_function(gr, lambda x, y: x * x + 3.0 * y * y - 2.0 * x * y)
    w = g.gradient(f)
    xx, yy = gr.mesh()
    assert max_err(w.vx, 2.0 * xx - 2.0 * yy) < 1e-12
    assert max_err(w.vy, 6.0 * yy - 2.0 * xx) < 1e-12


def test_laplacian_exact_on_quadratic():
    gr = plane(17)
    f = g.ScalarField.from_function(gr, lambda x, y: x * x + y * y)
    lap = g.laplacian(f)
    assert max_err(lap.values, 4.0) < 1e-11


def test_derivative_refinement_ratio_on_torus():
    errs = []
    for n in (64, 128):
        t = torus(n)
        f = g.ScalarField.from_function(t, lambda x, y: np.sin(x) * np.sin(y))
        w = g.gradient(f)
        xx, yy = t.mesh()
        errs.append(max_err(w.vx, np.cos(xx) * np.sin(yy)))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_laplacian_refinement_ratio_nonperiodic():
    errs = []
    for n in (33, 65):
        gr = plane(n)
        f = g.ScalarField.from_function(gr, lambda x, y: np.sin(2 * x) * np.cos(y))
        lap = g.laplacian(f)
        xx, yy = gr.mesh()
        errs.append(max_err(lap.values, -5.0 * np.sin(2 * xx) * np.cos(yy)))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_perp_gradient_is_discretely_divergence_free():
    # x- and y-stencils act on different axes, so they commute exactly and
    # div(perp grad u) cancels to rounding at every node, edges included
    rng = np.random.default_rng(7)
    gr = plane(21)
    f = g.ScalarField(gr, rng.standard_normal(gr.shape))
    div = g.divergence(g.perp_gradient(f))
    assert max_err(div.values, 0.0) < 1e-11


def test_operators_are_linear():
    rng = np.random.default_rng(3)
    gr = plane(16)
    a = rng.standard_normal(gr.shape)
    b = rng.standard_normal(gr.shape)
    fa, fb = g.ScalarField(gr, a), g.ScalarField(gr, b)
    fab = g.ScalarField(gr, 2.0 * a - 0.5 * b)
    for op in (g.gradient, g.perp_gradient):
        wa, wb, wab = op(fa), op(fb), op(fab)
        assert max_err(wab.vx, 2.0 * wa.vx - 0.5 * wb.vx) < 1e-12
        assert max_err(wab.vy, 2.0 * wa.vy - 0.5 * wb.vy) < 1e-12
    la, lb, lab = g.laplacian(fa), g.laplacian(fb), g.laplacian(fab)
    assert max_err(lab.values, 2.0 * la.values - 0.5 * lb.values) < 1e-9


# ---------------------------------------------------------------------------
# quadrature


def test_rectangle_rule_exact_for_low_trig_modes():
    t = torus(256)
    f = g.ScalarField.from_function(
        t, lambda x, y: np.sin(x) ** 2 * np.sin(y) ** 2)
    assert g.integrate(f) == pytest.approx(np.pi ** 2, abs=1e-12)


def test_trapezoid_converges_second_order():
    errs = []
    for n in (17, 33):
        gr = plane(n, 0.0, 1.0)
        f = g.ScalarField.from_function(gr, lambda x, y: np.exp(x) * np.exp(y))
        errs.append(abs(g.integrate(f) - (np.e - 1.0) ** 2))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_trapezoid_exact_on_bilinear():
    gr = plane(16, 0.0, 2.0)
    f = g.ScalarField.from_function(gr, lambda x, y: 1.0 + x + y + x * y)
    # integral over [0,2]^2 of 1 + x + y + xy = 4 + 4 + 4 + 4
    assert g.integrate(f) == pytest.approx(16.0, rel=1e-13)


def test_masked_nodes_contribute_zero():
    gr = plane(21, 0.0, 1.0)
    f = g.ScalarField.from_function(gr, lambda x, y: np.ones_like(x))
    mask = np.zeros(gr.shape, dtype=bool)
    mask[:11, :] = True  # left half, x <= 0.5
    got = g.integrate(f, mask=mask)
    # weights are untouched by masking, so the cut column at x = 0.5 keeps
    # its full interior weight h while everything right of it contributes 0
    assert got == pytest.approx(0.5 + gr.hx / 2.0, rel=1e-12)


# ---------------------------------------------------------------------------
# serialization


def test_scalar_roundtrip_and_determinism(tmp_path):
    gr = plane(16)
    f = g.ScalarField.from_function(gr, lambda x, y: np.sin(3 * x) + y / 3.0)
    c1, j1 = tmp_path / "a.csv", tmp_path / "a.json"
    c2, j2 = tmp_path / "b.csv", tmp_path / "b.json"
    g.save_scalar_field(f, c1, j1)
    g.save_scalar_field(f, c2, j2)
    assert c1.read_bytes() == c2.read_bytes()
    assert j1.read_bytes() == j2.read_bytes()
    back = g.load_scalar_field(j1)
    assert back.grid == gr
    assert np.array_equal(back.values, f.values)
    header, cols = ser.read_csv(c1)
    assert header == ["x", "y", "value"]
    assert np.allclose(np.sort(cols[2]), np.sort(f.values.ravel()), atol=0)


def test_csv_rows_scan_bottom_row_first(tmp_path):
    gr = g.Grid(g.PLANE, 8, 8, (0.0, 7.0), (0.0, 7.0))
    f = g.ScalarField.from_function(gr, lambda x, y: 10.0 * y + x)
    path = tmp_path / "f.csv"
    g.save_scalar_field(f, path)
    lines = path.read_text().splitlines()
    assert lines[1].startswith("0,0,")
    assert lines[2].startswith("1,0,")  # x varies fastest
    assert lines[9].startswith("0,1,")


def test_seventeen_digit_floats(tmp_path):
    gr = plane(16)
    f = g.ScalarField.from_function(gr, lambda x, y: np.full_like(x, np.pi))
    path = tmp_path / "pi.csv"
    g.save_scalar_field(f, path)
    assert "3.1415926535897931" in path.read_text()
