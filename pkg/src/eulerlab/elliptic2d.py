"""Monotone solver for -Lap(u) = f(u) on rectangles with Dirichlet data.

The iteration is the two-dimensional version of the 1D machinery in
:mod:`eulerlab.oned`: sweeps of (-Lap + shift) u_next = f(u) + shift*u
between a verified discrete subsolution and supersolution.  The inner
linear systems are solved by conjugate gradients preconditioned with the
exact eigendecomposition of the shifted 5-point Laplacian (a DST-I pair of
transforms), so each solve converges in one or two iterations.

Two flow constructions sit on top:

* ``solve_type3_strip`` builds the transversally pinned strip flow: solve on
  the half strip (0, L) x (-1, 1) with the 1D transverse profile as far-field
  data, then extend oddly through x1 = 0.
* ``solve_saddle_quadrant`` builds the half-plane saddle: solve on the
  quadrant (0, L)^2 with heteroclinic traces on the far sides, then extend
  oddly in x1.

Both reuse the 1D solutions on the same node set, which makes the constant
extension (strip) and min construction (quadrant) exact discrete
supersolutions rather than approximate ones.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dstn

from . import oned
from .flows import odd_extend_x1
from .grid import Grid, GridError, ScalarField, STRIP, QUADRANT


class NonConvergence(RuntimeError):
    pass


class BoxOutsideGrid(GridError):
    pass


class NotASubsolution(ValueError):
    pass


class NotASupersolution(ValueError):
    pass


# ---------------------------------------------------------------------------
# problem description


class ZeroFarField:
    """Truncation closed with zero Dirichlet data (the exhaustion choice)."""

    def __repr__(self):
        return "ZeroFarField()"


class ProfileFarField:
    """Truncation closed with Dirichlet data sampled from a 1D profile."""

    def __init__(self, profile: oned.Profile):
        self.profile = profile

    def __repr__(self):
        return "ProfileFarField(%r)" % (self.profile,)


class FromSub:
    """Start the iteration ascending from a discrete subsolution."""

    def __init__(self, field: ScalarField):
        self.field = field


class FromSuper:
    """Start the iteration descending from a discrete supersolution."""

    def __init__(self, field: ScalarField):
        self.field = field


class EllipticProblem:
    """-Lap(u) = f(u) on a rectangle grid with Dirichlet ring data.

    ``dirichlet`` is an (nx, ny) array whose boundary ring carries the data;
    interior entries are ignored.  ``truncation_bc`` records how the far side
    was closed and is validated against the grid when it carries a profile.
    """

    def __init__(self, grid: Grid, nl: oned.Nonlinearity, dirichlet,
                 truncation_bc, shift: float):
        if grid.periodic_x or grid.periodic_y:
            raise GridError("Dirichlet problems need a non-periodic grid")
        d = np.asarray(dirichlet, dtype=float)
        if d.shape != (grid.nx, grid.ny):
            raise ValueError("dirichlet array must cover the full grid ring")
        if not np.all(np.isfinite(d)):
            raise ValueError("dirichlet data must be finite")
        if isinstance(truncation_bc, ProfileFarField):
            lo, hi = truncation_bc.profile.interval
            if not (np.isclose(lo, grid.y_range[0]) and np.isclose(hi, grid.y_range[1])):
                raise ValueError(
                    "far-field profile lives on [%g, %g], grid transverse "
                    "range is [%g, %g]" % (lo, hi, *grid.y_range))
        elif not isinstance(truncation_bc, ZeroFarField):
            raise TypeError("truncation_bc must be ZeroFarField or ProfileFarField")
        shift = float(shift)
        if not (np.isfinite(shift) and shift >= 0.0):
            raise ValueError("shift must be finite and nonnegative")
        self.grid = grid
        self.nl = nl
        self.dirichlet = d
        self.truncation_bc = truncation_bc
        self.shift = shift


class SolveReport:
    def __init__(self, iterations, final_residual, final_update,
                 sandwich_violations=0, monotone=True):
        self.iterations = int(iterations)
        self.final_residual = float(final_residual)
        self.final_update = float(final_update)
        self.sandwich_violations = int(sandwich_violations)
        self.monotone = bool(monotone)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "final_update": self.final_update,
            "sandwich_violations": self.sandwich_violations,
            "monotone": self.monotone,
        }


def dirichlet_ring(grid: Grid, left=0.0, right=0.0, bottom=0.0, top=0.0):
    """Assemble the (nx, ny) Dirichlet array from per-edge data.

    Each edge accepts a scalar or a 1D array along that edge.  Corners are
    written by the x1 edges last, so left/right win where edges meet; the
    constructions here only use data that agrees at corners anyway.
    """
    d = np.zeros((grid.nx, grid.ny))
    d[:, 0] = bottom
    d[:, -1] = top
    d[0, :] = left
    d[-1, :] = right
    return d


# ---------------------------------------------------------------------------
# linear core


def _five_point(values, hx, hy):
    """-Lap_h on the interior nodes of a full-grid array."""
    v = values
    return ((2.0 * v[1:-1, 1:-1] - v[2:, 1:-1] - v[:-2, 1:-1]) / hx ** 2
            + (2.0 * v[1:-1, 1:-1] - v[1:-1, 2:] - v[1:-1, :-2]) / hy ** 2)


class _DirichletSolver:
    """Conjugate gradients for (-Lap_h + shift) w = rhs, zero-ring unknowns.

    The preconditioner applies the exact inverse through DST-I transforms
    (the 5-point Dirichlet Laplacian is diagonal in that basis), so CG is a
    residual-checked direct solve; the iteration cap only guards surprises.
    """

    def __init__(self, grid: Grid, shift: float):
        if shift < 0:
            raise ValueError("shift must be nonnegative")
        self.grid = grid
        self.shift = float(shift)
        self.hx, self.hy = grid.hx, grid.hy
        mx, my = grid.nx - 2, grid.ny - 2
        kx = np.arange(1, mx + 1)
        ky = np.arange(1, my + 1)
        ex = (2.0 - 2.0 * np.cos(kx * np.pi / (mx + 1))) / self.hx ** 2
        ey = (2.0 - 2.0 * np.cos(ky * np.pi / (my + 1))) / self.hy ** 2
        self._eig = ex[:, None] + ey[None, :] + self.shift
        self.maxiter = 10 * (grid.nx + grid.ny)

    def _apply(self, v):
        out = (2.0 / self.hx ** 2 + 2.0 / self.hy ** 2 + self.shift) * v
        out[1:, :] -= v[:-1, :] / self.hx ** 2
        out[:-1, :] -= v[1:, :] / self.hx ** 2
        out[:, 1:] -= v[:, :-1] / self.hy ** 2
        out[:, :-1] -= v[:, 1:] / self.hy ** 2
        return out

    def _precondition(self, v):
        return dstn(dstn(v, type=1, norm="ortho") / self._eig,
                    type=1, norm="ortho")

    def solve_interior(self, rhs, rtol=1e-12):
        bnorm = float(np.linalg.norm(rhs))
        if bnorm == 0.0:
            return np.zeros_like(rhs), 0
        x = np.zeros_like(rhs)
        r = rhs.copy()
        z = self._precondition(r)
        p = z.copy()
        rz = float(np.vdot(r, z))
        for it in range(1, self.maxiter + 1):
            ap = self._apply(p)
            alpha = rz / float(np.vdot(p, ap))
            x += alpha * p
            r -= alpha * ap
            if float(np.linalg.norm(r)) <= rtol * bnorm:
                return x, it
            z = self._precondition(r)
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise NonConvergence("conjugate gradients stalled after %d iterations"
                             % self.maxiter)

    def solve(self, rhs_interior, dirichlet, rtol=1e-12):
        """Full-grid solution with the ring folded into the right side."""
        b = np.array(rhs_interior, dtype=float)
        b[0, :] += dirichlet[0, 1:-1] / self.hx ** 2
        b[-1, :] += dirichlet[-1, 1:-1] / self.hx ** 2
        b[:, 0] += dirichlet[1:-1, 0] / self.hy ** 2
        b[:, -1] += dirichlet[1:-1, -1] / self.hy ** 2
        w, its = self.solve_interior(b, rtol)
        full = np.array(dirichlet, dtype=float)
        full[1:-1, 1:-1] = w
        return full, its


def linear_solve(grid: Grid, shift: float, rhs: ScalarField, dirichlet) -> ScalarField:
    """Solve (-Lap_h + shift) w = rhs with Dirichlet ring data.

    ``dirichlet`` is a scalar or an (nx, ny) array whose ring is used.
    """
    if isinstance(rhs, ScalarField):
        if rhs.grid != grid:
            raise GridError("rhs lives on a different grid")
        rhs = rhs.values
    d = np.broadcast_to(np.asarray(dirichlet, dtype=float), (grid.nx, grid.ny))
    solver = _DirichletSolver(grid, shift)
    full, _ = solver.solve(np.asarray(rhs)[1:-1, 1:-1], d)
    return ScalarField(grid, full)


def residual(u: ScalarField, nl: oned.Nonlinearity) -> ScalarField:
    """Defect -Lap_h(u) - f(u) at interior nodes; the ring is set to zero.

    Boundary nodes are flagged by ``~u.grid.interior_mask()``; their zeros are
    placeholders, not small defects.
    """
    g = u.grid
    if g.periodic_x or g.periodic_y:
        v = u.values
        lap = ((np.roll(v, 1, 0) + np.roll(v, -1, 0) - 2.0 * v) / g.hx ** 2
               + (np.roll(v, 1, 1) + np.roll(v, -1, 1) - 2.0 * v) / g.hy ** 2)
        if not g.periodic_x:
            lap[0, :] = lap[-1, :] = 0.0
        if not g.periodic_y:
            lap[:, 0] = lap[:, -1] = 0.0
        return ScalarField(g, -lap - np.where(g.interior_mask(), nl.f(v), 0.0))
    out = np.zeros((g.nx, g.ny))
    out[1:-1, 1:-1] = _five_point(u.values, g.hx, g.hy) - nl.f(u.values[1:-1, 1:-1])
    return ScalarField(g, out)


# ---------------------------------------------------------------------------
# sub/supersolutions


def subsolution_strip(grid: Grid, eps: float, delta: float, h_offset: float) -> ScalarField:
    """Compactly supported positive bump that the reaction term dominates.

    Inside the box (h, h + pi/delta) x (-(1-delta), 1-delta) the field is
    eps*sin(delta*(x1-h))*cos(pi*x2/(2(1-delta))), zero outside.  The product
    structure gives -Lap u = (delta^2 + pi^2/(4(1-delta)^2)) u there, and
    truncating to zero only lowers the discrete Laplacian at nodes whose
    stencil crosses the box edge, so the discrete subsolution inequality
    survives the kinks.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    h0 = float(h_offset)
    x_hi = h0 + np.pi / delta
    y_hi = 1.0 - delta
    X, Y = grid.mesh()
    inside = (X > h0) & (X < x_hi) & (np.abs(Y) < y_hi)
    if not bool(inside.any()):
        raise BoxOutsideGrid(
            "box (%g, %g) x (-%g, %g) misses every grid node"
            % (h0, x_hi, y_hi, y_hi))
    bump = eps * np.sin(delta * (X - h0)) * np.cos(np.pi * Y / (2.0 * y_hi))
    return ScalarField(grid, np.where(inside, bump, 0.0))


def _stencil_slack(grid: Grid, shift: float, scale: float) -> float:
    # roundoff bound for evaluating the shifted 5-point stencil on values
    # of size `scale`; sub/supersolution margins below this are noise
    weight = 4.0 / grid.hx ** 2 + 4.0 / grid.hy ** 2 + shift
    return 64.0 * np.finfo(float).eps * weight * max(scale, 1.0)


def _check_one_sided(problem, field, kind):
    g = problem.grid
    v = field.values
    scale = float(np.max(np.abs(v)))
    slack = _stencil_slack(g, problem.shift, scale) + 1e-10 * (1.0 + scale)
    defect = _five_point(v, g.hx, g.hy) - problem.nl.f(v[1:-1, 1:-1])
    ring_gap = v - problem.dirichlet
    if kind == "sub":
        worst = float(defect.max())
        if worst > slack:
            raise NotASubsolution(
                "-Lap_h(s) - f(s) reaches %.3e > 0 at an interior node" % worst)
        edge = max(float(ring_gap[0, :].max()), float(ring_gap[-1, :].max()),
                   float(ring_gap[:, 0].max()), float(ring_gap[:, -1].max()))
        if edge > slack:
            raise NotASubsolution(
                "subsolution exceeds the Dirichlet data by %.3e on the ring" % edge)
    else:
        worst = float(defect.min())
        if worst < -slack:
            raise NotASupersolution(
                "-Lap_h(S) - f(S) reaches %.3e < 0 at an interior node" % worst)
        edge = min(float(ring_gap[0, :].min()), float(ring_gap[-1, :].min()),
                   float(ring_gap[:, 0].min()), float(ring_gap[:, -1].min()))
        if edge < -slack:
            raise NotASupersolution(
                "supersolution undercuts the Dirichlet data by %.3e on the ring" % edge)


# ---------------------------------------------------------------------------
# monotone iteration


def solve_semilinear(problem: EllipticProblem, start, tol: float = 1e-8,
                     max_iter: int = 10000, bound: ScalarField | None = None):
    """Monotone fixed point of u -> linear_solve(f(u) + shift*u).

    ``start`` is FromSub or FromSuper wrapping a field that is verified
    against the discrete stencil before any sweep runs.  ``bound``, when
    given, is the opposite side of the sandwich, verified the same way and
    enforced on every iterate.  Returns (solution, SolveReport).
    """
    if isinstance(start, FromSub):
        ascending = True
    elif isinstance(start, FromSuper):
        ascending = False
    else:
        raise TypeError("start must be FromSub(...) or FromSuper(...)")
    g = problem.grid
    nl = problem.nl
    if start.field.grid != g:
        raise GridError("start field lives on a different grid")
    _check_one_sided(problem, start.field, "sub" if ascending else "super")
    if bound is not None:
        if bound.grid != g:
            raise GridError("bound field lives on a different grid")
        _check_one_sided(problem, bound, "super" if ascending else "sub")
        order = bound.values - start.field.values if ascending \
            else start.field.values - bound.values
        if float(order.min()) < -1e-12:
            raise ValueError("sandwich ordering sub <= super fails pointwise")

    smax = float(np.max(np.abs(start.field.values)))
    if bound is not None:
        smax = max(smax, float(np.max(np.abs(bound.values))))
    probe = np.linspace(0.0, max(smax, 1e-12), 4096)
    if problem.shift < float(np.max(nl.f_prime(probe))) - 1e-12:
        raise ValueError("shift is below max f' on the sandwich range; "
                         "sweeps would not be monotone")

    solver = _DirichletSolver(g, problem.shift)
    slack = 1e-10 * (1.0 + smax)
    u = np.array(start.field.values, dtype=float)
    update = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        rhs = nl.f(u[1:-1, 1:-1]) + problem.shift * u[1:-1, 1:-1]
        nxt, _ = solver.solve(rhs, problem.dirichlet)
        step = nxt - u
        if ascending:
            if float(step.min()) < -slack:
                raise NonConvergence("ascending sweep lost monotonicity "
                                     "(worst step %.3e)" % float(step.min()))
        else:
            if float(step.max()) > slack:
                raise NonConvergence("descending sweep lost monotonicity "
                                     "(worst step %.3e)" % float(step.max()))
        if bound is not None:
            gap = bound.values - nxt if ascending else nxt - bound.values
            if float(gap.min()) < -slack:
                raise NonConvergence("iterate escaped the sub/supersolution "
                                     "sandwich by %.3e" % -float(gap.min()))
        u = nxt
        update = float(np.max(np.abs(step)))
        res = float(np.max(np.abs(
            _five_point(u, g.hx, g.hy) - nl.f(u[1:-1, 1:-1]))))
        if update < tol and res < tol:
            return (ScalarField(g, u),
                    SolveReport(it, res, update, 0, True))
    raise NonConvergence(
        "no convergence in %d sweeps (update %.3e, residual %.3e)"
        % (max_iter, update, res))


# ---------------------------------------------------------------------------
# flow constructions


def _halve_under(sub_builder, eps, super_values):
    """Shrink the bump amplitude until it sits under the supersolution.

    Subsolutions here scale linearly in eps and the reaction inequality only
    needs s <= the selected amplitude, so halving preserves it.
    """
    for _ in range(60):
        s = sub_builder(eps)
        if float(np.max(s.values - super_values)) <= 0.0:
            return s, eps
        eps *= 0.5
    raise oned.NoSubsolution("bump cannot be placed under the supersolution")


def solve_type3_strip(nl: oned.Nonlinearity, L: float = 12.0, nx: int = 769,
                      ny: int = 129, tol: float = 1e-8,
                      far_field: str = "profile", start: str = "sub",
                      with_report: bool = False):
    """Stream function of the transversally pinned strip flow on (-L, L) x (-1, 1).

    Solves on the half strip (0, L) x (-1, 1) with zero data on x1 = 0 and the
    walls, far-field data at x1 = L from the 1D transverse profile (or zero
    with far_field="zero", the exhaustion variant), then odd-extends through
    x1 = 0.  The transverse profile is solved on the same ny-node grid, so its
    constant extension is an exact discrete supersolution.

    nx must be odd so that x1 = 0 is a node column.
    """
    if nl.family != "ArctanFamily":
        raise ValueError("the pinned strip construction needs the arctan family")
    if abs(float(nl.f(0.0))) > 1e-12:
        raise ValueError("f(0) must vanish; the odd extension needs an odd f")
    nx = int(nx)
    ny = int(ny)
    if nx % 2 == 0:
        raise ValueError("nx must be odd so x1=0 is a node column")
    if far_field not in ("profile", "zero"):
        raise ValueError("far_field must be 'profile' or 'zero'")
    if start not in ("sub", "super"):
        raise ValueError("start must be 'sub' or 'super'")
    L = float(L)
    mx = (nx + 1) // 2
    half = Grid(STRIP, mx, ny, (0.0, L), (-1.0, 1.0))

    profile = oned.solve_strip_profile(nl, ny, tol=min(1e-10, tol))
    super_vals = np.tile(profile.values, (mx, 1))
    supersol = ScalarField(half, super_vals)

    if far_field == "profile":
        ring = dirichlet_ring(half, left=0.0, right=profile.values,
                              bottom=0.0, top=0.0)
        bc = ProfileFarField(profile)
    else:
        ring = dirichlet_ring(half)
        bc = ZeroFarField()

    shift = oned.picard_shift(nl, float(super_vals.max()))
    problem = EllipticProblem(half, nl, ring, bc, shift)
    if far_field == "zero" and start == "sub":
        # the bump pokes above zero far-field data where the box is cut by
        # the x1 = L edge, so the exhaustion variant descends instead
        start = "super"
    if start == "sub":
        delta = 0.05
        rate = delta ** 2 + np.pi ** 2 / (4.0 * (1.0 - delta) ** 2)
        eps = oned.select_subsolution_amplitude(nl, rate)
        sub, eps = _halve_under(
            lambda e: subsolution_strip(half, e, delta, half.hx), eps, super_vals)
        u_half, report = solve_semilinear(problem, FromSub(sub), tol,
                                          bound=supersol)
    else:
        zero = ScalarField(half, np.zeros((mx, ny)))
        u_half, report = solve_semilinear(problem, FromSuper(supersol), tol,
                                          bound=zero)

    field = odd_extend_x1(u_half, "odd")
    if with_report:
        return field, report
    return field


def solve_saddle_quadrant(nl: oned.Nonlinearity, L: float = 20.0, n: int = 321,
                          tol: float = 1e-8, start: str = "super",
                          with_report: bool = False):
    """Stream function of the half-plane saddle on (-L, L) x (0, L).

    Solves on the quadrant (0, L)^2 with zero data on both axes and
    heteroclinic traces g on the far sides, descending from the exact
    discrete supersolution min(g(x1), g(x2)) (or ascending from a product
    sine bump with start="sub"), then odd-extends in x1.  The heteroclinic
    is solved on the same n-node axis grid.
    """
    if nl.family != "AllenCahn":
        raise ValueError("the saddle construction needs the double-well term")
    if start not in ("sub", "super"):
        raise ValueError("start must be 'sub' or 'super'")
    L = float(L)
    n = int(n)
    g = oned.solve_heteroclinic(nl, L=L, n=n, tol=min(1e-10, tol))
    quad = Grid(QUADRANT, n, n, (0.0, L), (0.0, L))

    super_vals = np.minimum(g.values[:, None], g.values[None, :])
    supersol = ScalarField(quad, super_vals)
    ring = dirichlet_ring(quad, left=0.0, right=g.values, bottom=0.0,
                          top=g.values)

    delta = 2.0 * np.pi / L
    rate = 2.0 * delta ** 2
    eps = oned.select_subsolution_amplitude(nl, rate)

    def bump(e):
        X, Y = quad.mesh()
        h0 = quad.hx
        hi = h0 + np.pi / delta
        inside = (X > h0) & (X < hi) & (Y > h0) & (Y < hi)
        vals = e * np.sin(delta * (X - h0)) * np.sin(delta * (Y - h0))
        return ScalarField(quad, np.where(inside, vals, 0.0))

    sub, eps = _halve_under(bump, eps, super_vals)

    shift = oned.picard_shift(nl, 1.0)
    problem = EllipticProblem(quad, nl, ring, ProfileFarField(g), shift)
    if start == "super":
        u_quad, report = solve_semilinear(problem, FromSuper(supersol), tol,
                                          bound=sub)
    else:
        u_quad, report = solve_semilinear(problem, FromSub(sub), tol,
                                          bound=supersol)

    field = odd_extend_x1(u_quad, "odd")
    if with_report:
        return field, report
    return field
