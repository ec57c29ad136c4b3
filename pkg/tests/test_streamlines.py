"""Traces, level contours, and stagnation points.

Exact statements (a constant shear stays on its line, wall zeros are exact
by symmetry) are asserted at rounding level; everything tied to the grid
(contour placement, off-node refinement, stream-function drift along a
trace) is asserted at second order with measured headroom, and the drift is
additionally checked to shrink at second order under joint grid/step
refinement.
"""

import numpy as np
import pytest

from eulerlab import elliptic2d, flows, oned, serialize
from eulerlab import grid as g
from eulerlab import streamlines as sl
from eulerlab.grid import ScalarField, VectorField

ARCTAN = oned.arctan_family(4.0)


@pytest.fixture(scope="module")
def strip_pair():
    field = elliptic2d.solve_type3_strip(ARCTAN, L=12.0, nx=769, ny=129)
    return field, flows.velocity_from_stream(field, ARCTAN)


@pytest.fixture(scope="module")
def saddle_pair():
    nl = oned.allen_cahn()
    field = elliptic2d.solve_saddle_quadrant(nl, L=20.0, n=321)
    return field, flows.velocity_from_stream(field, nl)


def taylor_green(n, offset=0.0):
    gr = g.Grid(g.TORUS, n, n, (offset, offset + 2.0 * np.pi),
                (offset, offset + 2.0 * np.pi))
    return flows.analytic_flow("TaylorGreen", gr)


def tg_stream(flow):
    X, Y = flow.grid.mesh()
    return ScalarField(flow.grid, np.sin(X) * np.sin(Y))


def couette(nx=257, ny=65):
    gr = g.Grid(g.STRIP, nx, ny, (-4.0, 4.0), (-1.0, 1.0))
    return flows.analytic_flow("Couette", gr)


def reversed_flow(flow):
    gr = flow.grid
    vx, vy = -flow.velocity.vx, -flow.velocity.vy
    om = ScalarField(gr, g.ddx(ScalarField(gr, vy)) - g.ddy(ScalarField(gr, vx)))
    return flows.Flow(gr, VectorField(gr, vx, vy), om)


def spacing(poly):
    return np.hypot(*np.diff(poly.points, axis=0).T)


# the eight zeros of the cellular flow per period cell
TG_ZEROS = [(a * np.pi / 2.0, b * np.pi / 2.0)
            for a in range(4) for b in range(4)
            if (a % 2 == 0) == (b % 2 == 0)]


def nearest_tg_zero(x, y):
    two_pi = 2.0 * np.pi
    return min(np.hypot((x - a + np.pi) % two_pi - np.pi,
                        (y - b + np.pi) % two_pi - np.pi)
               for a, b in TG_ZEROS)


# ---------------------------------------------------------------------------
# polyline container


def test_polyline_guards():
    with pytest.raises(ValueError):
        sl.Polyline(np.zeros((3, 2)), False, (0.0, 0.0), "Wandered")
    with pytest.raises(ValueError):
        sl.Polyline(np.zeros((2, 3)), False, (0.0, 0.0), "MaxSteps")
    with pytest.raises(ValueError):
        sl.Polyline(np.zeros((0, 2)), False, (0.0, 0.0), "MaxSteps")


def test_polyline_manifest_entry():
    p = sl.Polyline([[0.0, 1.0], [0.5, 1.0]], False, (0.0, 1.0), "LeftDomain")
    assert len(p) == 2
    d = p.to_dict()
    assert d["seed"] == [0.0, 1.0]
    assert d["closed"] is False
    assert d["termination"] == "LeftDomain"
    assert d["n_points"] == 2


# ---------------------------------------------------------------------------
# interpolation


def test_bilinear_reproduces_bilinear_functions():
    gr = g.Grid(g.STRIP, 33, 17, (0.0, 2.0), (-1.0, 1.0))
    X, Y = gr.mesh()
    u = ScalarField(gr, 2.0 + 3.0 * X - Y + 0.5 * X * Y)
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(0.0, 2.0, 40),
                           rng.uniform(-1.0, 1.0, 40)])
    want = 2.0 + 3.0 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1]
    got = sl.bilinear_sample(u, pts)
    assert np.max(np.abs(got - want)) < 1e-13


def test_bilinear_vector_and_shapes():
    f = couette()
    one = sl.bilinear_sample(f.velocity, np.array([0.3, 0.25]))
    assert one.shape == (2,)
    assert one[0] == pytest.approx(0.25, abs=1e-13)
    assert one[1] == 0.0
    many = sl.bilinear_sample(f.velocity, np.zeros((5, 3, 2)))
    assert many.shape == (5, 3, 2)
    with pytest.raises(ValueError):
        sl.bilinear_sample(f.velocity, np.zeros((4, 3)))


def test_bilinear_clamps_outside_bounded_axes():
    gr = g.Grid(g.STRIP, 33, 17, (0.0, 2.0), (-1.0, 1.0))
    u = ScalarField(gr, gr.mesh()[1])
    assert sl.bilinear_sample(u, np.array([5.0, 0.25])) == pytest.approx(0.25, abs=1e-13)
    assert sl.bilinear_sample(u, np.array([1.0, 3.0])) == pytest.approx(1.0, abs=1e-13)


def test_bilinear_wraps_periodic_axes():
    f = taylor_green(64)
    u = tg_stream(f)
    p = np.array([1.1, 2.3])
    q = p + np.array([2.0 * np.pi, -2.0 * np.pi])
    assert sl.bilinear_sample(u, q) == pytest.approx(
        float(sl.bilinear_sample(u, p)), abs=1e-12)


# ---------------------------------------------------------------------------
# tracing


def test_trace_couette_stays_on_its_line():
    p = sl.trace(couette(), (0.0, 0.5))
    assert p.termination == "LeftDomain"
    assert not p.closed
    assert np.max(np.abs(p.points[:, 1] - 0.5)) < 1e-10
    # advances monotonically and stops at the last inside point
    assert np.all(np.diff(p.points[:, 0]) > 0.0)
    assert p.points[-1, 0] == pytest.approx(4.0, abs=1e-9)


def test_trace_rejects_bad_input():
    f = couette()
    with pytest.raises(sl.SeedOutsideDomain):
        sl.trace(f, (0.0, 1.5))
    with pytest.raises(sl.SeedOutsideDomain):
        sl.trace(f, (-9.0, 0.0))
    with pytest.raises(ValueError):
        sl.trace(f, (0.0, 0.5), step=0.0)
    with pytest.raises(ValueError):
        sl.trace(f, (0.0, 0.5), max_steps=0)


def test_trace_stagnates_on_zero_line():
    p = sl.trace(couette(), (0.0, 0.0))
    assert p.termination == "Stagnated"
    assert len(p) == 1


def test_trace_max_steps_budget():
    p = sl.trace(taylor_green(64), (np.pi / 2 + 0.3, np.pi / 2), max_steps=5)
    assert p.termination == "MaxSteps"
    assert len(p) == 6


def test_trace_taylor_green_closes():
    f = taylor_green(64)
    step = 0.5 * min(f.grid.hx, f.grid.hy)
    p = sl.trace(f, (np.pi / 2 + 0.3, np.pi / 2))
    assert p.termination == "Closed"
    assert p.closed
    assert len(p) >= 11
    assert np.hypot(*(p.points[-1] - p.points[0])) <= step
    assert spacing(p).max() <= step * (1.0 + 1e-12)


def test_trace_reversal_gives_same_point_set():
    f = taylor_green(64)
    seed = (np.pi / 2 + 0.3, np.pi / 2)
    step = 0.5 * min(f.grid.hx, f.grid.hy)
    fwd = sl.trace(f, seed)
    bwd = sl.trace(reversed_flow(f), seed)
    assert fwd.termination == bwd.termination == "Closed"
    diff = np.hypot(fwd.points[:, None, 0] - bwd.points[None, :, 0],
                    fwd.points[:, None, 1] - bwd.points[None, :, 1])
    hausdorff = max(diff.min(axis=1).max(), diff.min(axis=0).max())
    assert hausdorff <= 0.75 * step


def test_trace_stream_constancy_refines_second_order():
    seed = (np.pi / 2 + 0.3, np.pi / 2)
    drifts = []
    for n in (64, 128):
        f = taylor_green(n)
        p = sl.trace(f, seed)
        u = sl.bilinear_sample(tg_stream(f), p.points)
        drifts.append(float(np.max(np.abs(u - u[0]))))
    assert drifts[0] < 5e-3
    assert drifts[0] / drifts[1] > 2.5


def test_trace_strip_enters_turns_and_leaves(strip_pair):
    field, flow = strip_pair
    step = 0.5 * min(flow.grid.hx, flow.grid.hy)
    p = sl.trace(flow, (-8.0, -0.5))
    assert p.termination == "LeftDomain"
    # enters moving with the lower far field, crosses to the upper half,
    # and leaves through the same end it came from
    assert p.points[1, 0] > p.points[0, 0]
    assert -2.0 < p.points[:, 0].max() < 0.0
    assert 0.45 < p.points[:, 1].max() < 0.55
    assert p.points[-1, 0] < -11.0
    assert p.points[-1, 1] > 0.45
    assert spacing(p).max() <= step * (1.0 + 1e-12)
    u = sl.bilinear_sample(field, p.points)
    assert np.max(np.abs(u - u[0])) < 1e-3


# ---------------------------------------------------------------------------
# level contours


def test_contour_horizontal_line_through_node_row():
    gr = g.Grid(g.STRIP, 257, 65, (-4.0, 4.0), (-1.0, 1.0))
    u = ScalarField(gr, gr.mesh()[1])
    cs = sl.level_contours(u, [0.5])
    assert len(cs) == 1
    c = cs[0]
    assert not c.closed
    assert c.termination == "LeftDomain"
    assert np.max(np.abs(c.points[:, 1] - 0.5)) < 1e-9
    assert c.points[:, 0].min() == pytest.approx(-4.0, abs=1e-12)
    assert c.points[:, 0].max() == pytest.approx(4.0, abs=1e-12)


def test_contour_taylor_green_loops():
    f = taylor_green(128)
    u = tg_stream(f)
    half = sl.level_contours(u, 0.5)
    assert len(half) == 2
    both = sl.level_contours(u, [0.5, -0.5])
    assert len(both) == 4
    for c in both:
        assert c.closed
        assert np.array_equal(c.points[0], c.points[-1])
        resid = np.abs(np.abs(np.sin(c.points[:, 0]) * np.sin(c.points[:, 1])) - 0.5)
        assert resid.max() < 2e-3
        onlevel = sl.bilinear_sample(u, c.points)
        assert np.max(np.abs(np.abs(onlevel) - 0.5)) < 1e-9


def test_contour_saddle_level_zero_covers_both_axes(saddle_pair):
    field, _ = saddle_pair
    h = max(field.grid.hx, field.grid.hy)
    cs = sl.level_contours(field, [0.0])
    assert len(cs) == 2
    pts = np.vstack([c.points for c in cs])
    # every point hugs an axis ...
    assert np.max(np.minimum(np.abs(pts[:, 0]), np.abs(pts[:, 1]))) < h
    # ... and together the chains cover the wall both ways and the full axis
    assert pts[:, 0].min() < -19.0 and pts[:, 0].max() > 19.0
    assert pts[:, 1].max() > 19.0


def test_contour_guards_and_empty_levels():
    gr = g.Grid(g.STRIP, 33, 17, (0.0, 2.0), (-1.0, 1.0))
    u = ScalarField(gr, gr.mesh()[1])
    with pytest.raises(ValueError):
        sl.level_contours(u, [np.inf])
    assert sl.level_contours(u, [5.0]) == []
    # a constant field offers no crossings at its own value either
    flat = ScalarField(gr, np.zeros(gr.shape))
    assert sl.level_contours(flat, [0.0]) == []


# ---------------------------------------------------------------------------
# stagnation points


def test_stagnation_taylor_green_all_cell_zeros():
    pts = sl.stagnation_points(taylor_green(64))
    assert len(pts) == 8
    for x, y, s in pts:
        assert nearest_tg_zero(x, y) < 1e-12
        assert s < 1e-12


def test_stagnation_refines_between_nodes():
    # shift the grid so every zero falls 0.3 cells off the nearest node
    f = taylor_green(64, offset=0.03)
    h = f.grid.hx
    pts = sl.stagnation_points(f)
    assert len(pts) == 8
    for x, y, s in pts:
        assert nearest_tg_zero(x, y) < 0.05 * h
        assert s < 1e-3


def test_stagnation_strip_wall_points(strip_pair):
    _, flow = strip_pair
    pts = sl.stagnation_points(flow)
    assert len(pts) == 2
    (x0, y0, s0), (x1, y1, s1) = pts
    assert abs(x0) < 2 * flow.grid.hx and abs(x1) < 2 * flow.grid.hx
    assert abs(y0 + 1.0) < 2 * flow.grid.hy
    assert abs(y1 - 1.0) < 2 * flow.grid.hy
    assert max(s0, s1) < 1e-12


def test_stagnation_saddle_origin(saddle_pair):
    _, flow = saddle_pair
    pts = sl.stagnation_points(flow)
    assert len(pts) == 1
    x, y, s = pts[0]
    assert abs(x) < 2 * flow.grid.hx
    assert abs(y) < 2 * flow.grid.hy
    assert s < 1e-12


def test_stagnation_couette_degenerate_set():
    f = couette()
    assert sl.stagnation_points(f) == []
    mask = sl.stagnation_mask(f, floor=0.5 * f.grid.hy)
    assert mask[:, 32].all()
    assert int(mask.sum()) == f.grid.nx


# ---------------------------------------------------------------------------
# emission


def test_save_polylines_csv_and_manifest(tmp_path):
    f = couette()
    polys = [sl.trace(f, (0.0, 0.5), max_steps=20),
             sl.trace(f, (0.0, -0.25), max_steps=10)]
    csv_path = tmp_path / "traces.csv"
    json_path = tmp_path / "traces.json"
    sl.save_polylines(polys, csv_path, json_path)

    header, cols = serialize.read_csv(csv_path)
    assert header == ["trace_id", "order", "x", "y"]
    total = len(polys[0]) + len(polys[1])
    assert all(len(c) == total for c in cols)
    assert cols[0].min() == 0 and cols[0].max() == 1
    first = cols[0] == 0
    assert np.array_equal(cols[2][first], polys[0].points[:, 0])
    assert np.array_equal(cols[3][~first], polys[1].points[:, 1])

    manifest = serialize.read_json(json_path)
    assert manifest["schema_version"] == serialize.SCHEMA_VERSION
    assert [t["trace_id"] for t in manifest["traces"]] == [0, 1]
    assert manifest["traces"][0]["termination"] == "MaxSteps"
    assert manifest["traces"][0]["n_points"] == len(polys[0])
    assert manifest["traces"][1]["seed"] == [0.0, -0.25]
