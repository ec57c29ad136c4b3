"""Flow-angle sets, curvature integrals, wall-trace functionals, and the
classification verdicts built from them.

Angle bins use a round-to-center convention: bin b of n covers the angles
within half a width of b*(2pi/n) - pi, so the cardinal directions sit at bin
centers instead of edges and finite-difference jitter around an exact
direction cannot flip occupancy.  Bin 0 straddles the seam at +-pi.

Every curvature quantity shares one stagnation floor,
max(1e-10, 1e-3 * h * max|grad v|): angles are only defined where the
velocity is visibly nonzero, and the curvature integrand is set to zero on
the floored set (it vanishes almost everywhere on stagnation sets in the
continuum, so this discards nothing).

The wall functional is computed by two routes that share no code: an
interior integral of the signed curvature density, and a cutoff-weighted
trace integral along the walls.  Their agreement is a consistency check on
the whole pipeline, so the report carries both.
"""

from __future__ import annotations

import numpy as np

from . import grid as _g
from . import serialize as _ser
from .grid import (Grid, GridError, ScalarField, VectorField,
                   STRIP, HALF_PLANE, TORUS, PLANE)


class NonUnitReference(ValueError):
    pass


class RTooLarge(ValueError):
    """Cutoff plateau radius exceeds the truncated domain."""


class NotAStripGrid(GridError):
    pass


VERDICTS = ("Shear", "FullCircle", "TypeIIIUpper", "TypeIIILower",
            "Arc", "Indeterminate")


# ---------------------------------------------------------------------------
# angles


def angle_from(e, u):
    """Angle from reference direction e to vector u, in (-pi, pi].

    sgn(u . e_perp) * arccos(u . e / |u|), with the zero vector mapped to 0
    and the antipodal boundary case (u . e_perp = 0, u . e < 0) to +pi.
    Accepts single vectors or arrays with components along the last axis.
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (2,) or abs(float(np.hypot(e[0], e[1])) - 1.0) > 1e-12:
        raise NonUnitReference("reference direction must be a unit 2-vector")
    u = np.asarray(u, dtype=float)
    scalar = u.shape == (2,)
    u1, u2 = u[..., 0], u[..., 1]
    dot = u1 * e[0] + u2 * e[1]
    perp = u2 * e[0] - u1 * e[1]
    mag = np.hypot(u1, u2)
    safe = np.where(mag > 0.0, mag, 1.0)
    core = np.arccos(np.clip(dot / safe, -1.0, 1.0))
    sign = np.where(perp > 0.0, 1.0, np.where(perp < 0.0, -1.0, 1.0))
    out = np.where(mag > 0.0, sign * core, 0.0)
    return float(out) if scalar else out


def _bin_index(theta, n_bins):
    # round-to-center: cardinal angles land mid-bin
    w = 2.0 * np.pi / n_bins
    return np.round((theta + np.pi) / w).astype(int) % n_bins


def bin_centers(n_bins: int) -> np.ndarray:
    """Center angle of each bin; bin 0 reports -pi (the +-pi seam)."""
    return np.arange(n_bins) * (2.0 * np.pi / n_bins) - np.pi


def stagnation_floor(flow) -> float:
    """Speed below which a node counts as stagnant."""
    v1x, v1y, v2x, v2y = _g.vector_gradient(flow.velocity)
    gmax = max(np.abs(v1x).max(), np.abs(v1y).max(),
               np.abs(v2x).max(), np.abs(v2y).max())
    h = max(flow.grid.hx, flow.grid.hy)
    return max(1e-10, 1e-3 * h * float(gmax))


def _neighbor_dot(vx, vy, axis, periodic):
    # v(node+h) . v(node-h) along one axis; +inf where a neighbor is off-grid
    dot = (np.roll(vx, -1, axis) * np.roll(vx, 1, axis)
           + np.roll(vy, -1, axis) * np.roll(vy, 1, axis))
    if not periodic:
        edge = [slice(None), slice(None)]
        for j in (0, -1):
            edge[axis] = j
            dot[tuple(edge)] = np.inf
    return dot


def _curvature_parts(flow):
    """Split the curvature quadrature into resolved and sub-cell parts.

    Returns (dens, live, ridge_mass).  ``dens`` is the pointwise density
    |v1 grad v2 - v2 grad v1|^2 / |v|^2 on ``live`` nodes and zero
    elsewhere; ``ridge_mass`` is a per-node correction, zero off a small
    exceptional set.

    A node is censored from ``dens`` when |v| <= h_n |grad v| with h_n the
    node spacing across the direction of steepest velocity variation: there
    the flow direction turns through order one inside a single cell, and a
    nodewise sample weighted by a full cell misreads what the cell actually
    holds.  The archetype is the centerline of a strip flow far downstream,
    where the along-strip component crosses zero on a line while the
    crossflow decays: the density carries an O(1) ridge value on the line
    itself but the turning band around it has width |v| / |grad v|, soon far
    below the mesh, and keeping the ridge row makes the quadrature error
    first order in h no matter how the resolved cells refine.

    Censoring alone swings the error to a first-order undercount, because
    the band's mass is genuine.  But in the thin-band limit the transverse
    profile is explicit: with t along the band and n across it,
    v ~ (c n, b) in local frame, the density is a Lorentzian bump
    a^2 b^2/(c^2 n^2 + b^2) whose n-integral is pi |c b| = pi |v1 grad v2 -
    v2 grad v1| exactly, evaluated at the band center.  So each censored
    node whose cell straddles such a band contributes the closed-form band
    mass pi |v1 grad v2 - v2 grad v1| per unit length along the band,
    discretized as that value times cell-area / h_n.

    A censored node qualifies only when its two neighbors across the band
    point in opposed directions, v(+h_n) . v(-h_n) < 0: that is the
    signature of a direction sweep through the cell.  Nodes censored next
    to an isolated stagnation point fail this test (the direction field is
    merely slow there, not folded) and carry no correction; their true mass
    is O(h^2).  Every ingredient -- speeds, gradient norms, the neighbor
    dot -- is invariant under a constant rotation of the velocity vectors
    and scales cleanly under v -> c v, so the exceptional set is too.

    Censored nodes keep their genuine directions (angle sets are built on
    the plain stagnation floor); they just cannot carry naive cell weight.
    """
    g = flow.grid
    v = flow.velocity
    v1x, v1y, v2x, v2y = _g.vector_gradient(v)
    cx = v.vx * v2x - v.vy * v1x
    cy = v.vx * v2y - v.vy * v1y
    speed2 = v.vx ** 2 + v.vy ** 2
    speed = np.sqrt(speed2)
    gx2 = v1x ** 2 + v2x ** 2
    gy2 = v1y ** 2 + v2y ** 2
    across_y = gy2 >= gx2
    hn = np.where(across_y, g.hy, g.hx)
    moving = speed > stagnation_floor(flow)
    censored = moving & (speed <= hn * np.sqrt(gx2 + gy2))
    live = moving & ~censored
    dens = np.where(live, (cx ** 2 + cy ** 2) / np.where(live, speed2, 1.0), 0.0)
    sweep = np.where(across_y,
                     _neighbor_dot(v.vx, v.vy, 1, g.periodic_y),
                     _neighbor_dot(v.vx, v.vy, 0, g.periodic_x)) < 0.0
    ridge = censored & sweep
    wq = _g.quadrature_weights(g)
    ridge_mass = np.where(ridge, np.pi * np.hypot(cx, cy) * wq / hn, 0.0)
    return dens, live, ridge_mass


class AngleSet:
    """Occupancy and |v|-weighted mass of flow directions over angle bins."""

    def __init__(self, n_bins, occupied, mass, stagnation_threshold):
        self.n_bins = int(n_bins)
        self.occupied = np.asarray(occupied, dtype=bool)
        self.mass = np.asarray(mass, dtype=float)
        self.stagnation_threshold = float(stagnation_threshold)

    def occupied_indices(self):
        return np.flatnonzero(self.occupied)


def angle_set(flow, threshold: float | None = None, n_bins: int = 360) -> AngleSet:
    """Bin the directions angle_from((1,0), v) of all non-stagnant nodes."""
    if threshold is None:
        threshold = stagnation_floor(flow)
    if not threshold > 0.0:
        raise ValueError("threshold must be positive")
    v = flow.velocity
    speed = np.hypot(v.vx, v.vy)
    live = speed > threshold
    theta = angle_from(np.array([1.0, 0.0]),
                       np.stack([v.vx[live], v.vy[live]], axis=-1))
    idx = _bin_index(theta, n_bins)
    mass = np.bincount(idx, weights=speed[live], minlength=n_bins)
    return AngleSet(n_bins, mass > 0.0, mass, threshold)


# ---------------------------------------------------------------------------
# curvature integrals


def total_curvature(flow, region_mask=None) -> float:
    dens, _, ridge_mass = _curvature_parts(flow)
    if region_mask is not None:
        ridge_mass = np.where(np.asarray(region_mask, dtype=bool), ridge_mass, 0.0)
    return (_g.integrate(ScalarField(flow.grid, dens), mask=region_mask)
            + float(ridge_mass.sum()))


def signed_curvature_integral(flow) -> float:
    """(2/pi) * integral of sgn(v2) times the curvature density.

    v2 vanishes identically on slip walls while the density does not, so
    wall rows take the sign of v2 one row inside; the pointwise wall sign
    (always 0) would silently drop the walls' quadrature share from one route
    and not the other.
    """
    dens, _, ridge_mass = _curvature_parts(flow)
    sgn = np.sign(flow.velocity.vy)
    ny = flow.grid.ny
    for j in flow.grid.wall_rows():
        inner = 1 if j == 0 else ny - 2
        sgn[:, j] = np.sign(flow.velocity.vy[:, inner])
    return 2.0 / np.pi * (_g.integrate(ScalarField(flow.grid, sgn * dens))
                          + float((sgn * ridge_mass).sum()))


def curvature_identity_residual(flow, derivatives: str = "fd",
                                speed_fraction: float = 0.05) -> ScalarField:
    """Nodewise spread of the equivalent curvature-density expressions.

    Compares |grad v|^2 - |grad |v||^2, |v|^2 |grad(v/|v|)|^2,
    |v1 grad v2 - v2 grad v1|^2/|v|^2, and (with pressure) |grad P|^2/|v|^2;
    returns the max pairwise discrepancy.

    In FD mode the comparison is masked where |v| <= speed_fraction times
    the peak speed (and one node beyond): every expression divides by a
    power of |v|, so the finite-difference error grows without bound as the
    stagnation set is approached, and only a floor that does not shrink
    with the mesh leaves a max that refines at second order.  With
    derivatives="analytic" the catalog's closed-form evaluators replace the
    stencils, the identity becomes exact algebra, and only the stagnation
    floor itself is masked.
    """
    g = flow.grid
    if derivatives == "fd":
        v = flow.velocity
        v1, v2 = v.vx, v.vy
        v1x, v1y, v2x, v2y = _g.vector_gradient(v)
        pgrads = None
        if flow.pressure is not None:
            pg = _g.gradient(flow.pressure)
            pgrads = (pg.vx, pg.vy)
    elif derivatives == "analytic":
        if flow.closed_form is None:
            raise ValueError("flow carries no closed-form evaluators")
        X, Y = g.mesh()
        cf = flow.closed_form
        v1, v2 = cf["v1"](X, Y), cf["v2"](X, Y)
        v1x, v1y = cf["v1_x"](X, Y), cf["v1_y"](X, Y)
        v2x, v2y = cf["v2_x"](X, Y), cf["v2_y"](X, Y)
        pgrads = (cf["P_x"](X, Y), cf["P_y"](X, Y))
    else:
        raise ValueError("derivatives must be 'fd' or 'analytic'")

    speed2 = v1 ** 2 + v2 ** 2
    speed = np.sqrt(speed2)
    floor = stagnation_floor(flow)
    if derivatives == "fd":
        floor = max(floor, speed_fraction * float(speed.max()))
    live = speed > floor
    denom2 = np.where(live, speed2, 1.0)

    grad_v2 = v1x ** 2 + v1y ** 2 + v2x ** 2 + v2y ** 2
    if derivatives == "fd":
        gs = _g.gradient(ScalarField(g, speed))
        grad_speed2 = gs.vx ** 2 + gs.vy ** 2
        unit = np.where(live, 1.0, 0.0) / np.where(live, speed, 1.0)
        w = VectorField(g, v1 * unit, v2 * unit)
        w1x, w1y, w2x, w2y = _g.vector_gradient(w)
    else:
        dotx = v1 * v1x + v2 * v2x
        doty = v1 * v1y + v2 * v2y
        denom = np.where(live, speed, 1.0)
        grad_speed2 = (dotx ** 2 + doty ** 2) / denom2
        w1x = v1x / denom - v1 * dotx / (denom2 * denom)
        w1y = v1y / denom - v1 * doty / (denom2 * denom)
        w2x = v2x / denom - v2 * dotx / (denom2 * denom)
        w2y = v2y / denom - v2 * doty / (denom2 * denom)

    exprs = [grad_v2 - grad_speed2,
             speed2 * (w1x ** 2 + w1y ** 2 + w2x ** 2 + w2y ** 2),
             ((v1 * v2x - v2 * v1x) ** 2 + (v1 * v2y - v2 * v1y) ** 2) / denom2]
    if pgrads is not None:
        exprs.append((pgrads[0] ** 2 + pgrads[1] ** 2) / denom2)

    spread = np.zeros(g.shape)
    for a in range(len(exprs)):
        for b in range(a + 1, len(exprs)):
            spread = np.maximum(spread, np.abs(exprs[a] - exprs[b]))

    dead = ~live
    halo = dead.copy()
    if g.periodic_x:
        halo |= np.roll(dead, 1, 0) | np.roll(dead, -1, 0)
    else:
        halo[1:, :] |= dead[:-1, :]
        halo[:-1, :] |= dead[1:, :]
    if g.periodic_y:
        halo |= np.roll(dead, 1, 1) | np.roll(dead, -1, 1)
    else:
        halo[:, 1:] |= dead[:, :-1]
        halo[:, :-1] |= dead[:, 1:]
    spread[halo] = 0.0
    return ScalarField(g, spread)


def boundary_trace_Jinf(flow, R_list):
    """Wall-trace route: -integral of phi_R |v1| dn(v2) along each wall.

    phi_R is the tent cutoff max(0, min(1, 2 - |x1|/R)) on strips and the
    logarithmic cutoff min(1, max(0, 2 - log|x1|/log R)) on half planes; dn
    is the outer normal derivative (one-sided second order).  The cutoff's
    taper is clipped at the truncated domain edge; values are reported per R
    as a sequence, convergence being the caller's question.
    """
    g = flow.grid
    if g.kind not in (STRIP, HALF_PLANE):
        raise GridError("wall trace needs a strip or half-plane grid")
    x = g.x_nodes()
    span = max(abs(g.x_range[0]), abs(g.x_range[1]))
    dn_all = _g.ddy(ScalarField(g, flow.velocity.vy))
    wx = _g.axis_weights(g.nx, g.hx, False)
    out = []
    for R in R_list:
        R = float(R)
        if R <= 0.0:
            raise ValueError("cutoff radius must be positive")
        if R > span:
            raise RTooLarge("plateau radius %g exceeds the domain half-width %g"
                            % (R, span))
        if g.kind == STRIP:
            phi = np.clip(2.0 - np.abs(x) / R, 0.0, 1.0)
        else:
            if R <= 1.0:
                raise ValueError("log cutoff needs R > 1")
            with np.errstate(divide="ignore"):
                decay = 2.0 - np.log(np.abs(x)) / np.log(R)
            decay[np.abs(x) <= R] = 1.0
            phi = np.clip(decay, 0.0, 1.0)
        total = 0.0
        for j in g.wall_rows():
            dn = -dn_all[:, j] if j == 0 else dn_all[:, j]
            total += float(np.sum(wx * phi * np.abs(flow.velocity.vx[:, j]) * dn))
        out.append((R, -total))
    return out


class CurvatureProfile:
    """Curvature mass accumulated into equal-width angle bins."""

    def __init__(self, n_bins, bin_mass):
        self.n_bins = int(n_bins)
        self.bin_mass = np.asarray(bin_mass, dtype=float)
        self.total = float(self.bin_mass.sum())


def kappa_distribution(flow, n_bins: int = 64) -> CurvatureProfile:
    """Bin the curvature density by flow direction.

    Equal bin masses over an arc mean the angular curvature distribution is
    constant there; that is the discretization-robust reading of constancy
    claims, since each mass approximates the distribution integrated over one
    bin width.

    A node's mass belongs to an arc, not a point: the directions inside its
    cell span the stretch between the midpoints toward its two neighbors
    across the steepest-variation axis.  Nodes whose arc fits inside one bin
    (almost all of them) land in the bin of their own direction; a node
    whose cell sweeps wider than a bin spreads its mass uniformly over its
    arc, and the sub-cell band corrections of _curvature_parts spread over
    the half circle centered on the node's direction, which is exactly the
    turn such a band makes.  Every spread is normalized to the node's full
    mass, so the profile total matches total_curvature to rounding.
    """
    if n_bins < 16:
        raise ValueError("need at least 16 bins")
    g = flow.grid
    dens, live, ridge_mass = _curvature_parts(flow)
    wq = _g.quadrature_weights(g)
    v = flow.velocity
    width = 2.0 * np.pi / n_bins

    e1 = np.array([1.0, 0.0])
    theta = angle_from(e1, np.stack([v.vx, v.vy], axis=-1))
    v1x, v1y, v2x, v2y = _g.vector_gradient(v)
    across_y = (v1y ** 2 + v2y ** 2) >= (v1x ** 2 + v2x ** 2)

    def wrap(a):
        return (a + np.pi) % (2.0 * np.pi) - np.pi

    def voronoi_arc(axis, periodic):
        up = wrap(np.roll(theta, -1, axis) - theta)
        dn = wrap(np.roll(theta, 1, axis) - theta)
        if not periodic:
            edge = [slice(None), slice(None)]
            for j in (0, -1):
                edge[axis] = j
                up[tuple(edge)] = 0.0
                dn[tuple(edge)] = 0.0
        lo = np.minimum(up, dn) / 2.0
        hi = np.maximum(up, dn) / 2.0
        return np.clip(hi - lo, 0.0, np.pi), theta + (hi + lo) / 2.0

    span_y, center_y = voronoi_arc(1, g.periodic_y)
    span_x, center_x = voronoi_arc(0, g.periodic_x)
    span = np.where(across_y, span_y, span_x)
    center = np.where(across_y, center_y, center_x)

    node_mass = wq * dens
    point = live & (span <= width)
    wide = live & ~point
    idx = _bin_index(theta[point], n_bins)
    mass = np.bincount(idx, weights=node_mass[point], minlength=n_bins)

    ridge = ridge_mass > 0.0
    starts = np.concatenate([(center[wide] - 0.5 * span[wide]).ravel(),
                             (theta[ridge] - 0.5 * np.pi).ravel()])
    spans = np.concatenate([span[wide].ravel(),
                            np.full(int(ridge.sum()), np.pi)])
    amounts = np.concatenate([node_mass[wide].ravel(), ridge_mass[ridge].ravel()])
    if amounts.size:
        lo_edges = bin_centers(n_bins) - 0.5 * width
        # overlap of each bin with the arc [start, start + span], mod 2pi
        d = (lo_edges[None, :] - starts[:, None]) % (2.0 * np.pi)
        s = spans[:, None]
        overlap = (np.clip(s - d, 0.0, width)
                   + np.clip(np.minimum(d + width - 2.0 * np.pi, s), 0.0, width))
        share = overlap / overlap.sum(axis=1, keepdims=True)
        mass = mass + amounts @ share
    return CurvatureProfile(n_bins, mass)


def semicircle_bins(n_bins: int):
    """(upper closed, lower closed, endpoint) bin index sets.

    Endpoints are the bins holding the directions (1,0) and (-1,0), shared
    by both closed semicircles.
    """
    theta = bin_centers(n_bins)
    s = np.sin(theta)
    upper = set(np.flatnonzero(s >= -1e-12))
    lower = set(np.flatnonzero(s <= 1e-12))
    return upper, lower, upper & lower


def _interior_bins(n_bins, sign):
    # bins whose full width lies strictly inside the open upper/lower arc
    theta = bin_centers(n_bins)
    half = np.pi / n_bins
    lo = sign * theta - half
    hi = sign * theta + half
    return np.flatnonzero((lo > 1e-12) & (hi < np.pi - 1e-12))


def semicircle_cv(profile: CurvatureProfile, side: str) -> float:
    """Coefficient of variation of bin masses strictly inside one open
    semicircle; 0 for an empty distribution."""
    idx = _interior_bins(profile.n_bins, 1.0 if side == "upper" else -1.0)
    vals = profile.bin_mass[idx]
    mean = float(vals.mean())
    if mean == 0.0:
        return 0.0
    return float(vals.std() / mean)


# ---------------------------------------------------------------------------
# classification


class Classification:
    def __init__(self, kind: str, beta=None, theta0=None):
        if kind not in VERDICTS:
            raise ValueError("unknown verdict %r" % (kind,))
        self.kind = kind
        self.beta = None if beta is None else float(beta)
        self.theta0 = None if theta0 is None else float(theta0)

    def __eq__(self, other):
        return isinstance(other, Classification) and (
            self.kind, self.beta, self.theta0
        ) == (other.kind, other.beta, other.theta0)

    def __repr__(self):
        if self.kind == "Arc":
            return "Arc(beta=%.6g, theta0=%.6g)" % (self.beta, self.theta0)
        return self.kind

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta, "theta0": self.theta0}


def classify(angle_set: AngleSet, total_curvature: float,
             tol_curv: float = 1e-8,
             occupancy_rule: str = "endpoint-slack") -> Classification:
    """Verdict from angle occupancy, checked in order of specificity.

    Shear wins on vanishing curvature; FullCircle on total occupancy; the
    two semicircle verdicts next; a contiguous occupied arc is reported with
    its gap half-width beta and arc center theta0; anything else is
    Indeterminate.  occupancy_rule "endpoint-slack" (default) lets each of
    the two semicircle endpoint bins be empty, since the axial directions
    are realized exactly on walls and stagnation rims where the floor may
    mute them; "exact" requires the full closed semicircle.

    A single empty bin flanked by occupied neighbors is filled before any
    occupancy decision.  Node sampling cannot certify a gap narrower than
    its own angular step: where the direction field crosses a sampled value
    steeply (a symmetry ray hit exactly by grid nodes, say), the two
    adjacent one-bin slots may simply never be landed on, and treating such
    pinholes as genuine gaps would misreport an occupancy that every finer
    grid refills.  Gaps of two or more bins are always respected.
    """
    if occupancy_rule not in ("endpoint-slack", "exact"):
        raise ValueError("occupancy_rule must be 'endpoint-slack' or 'exact'")
    if total_curvature < tol_curv:
        return Classification("Shear")
    filled = angle_set.occupied | (np.roll(angle_set.occupied, 1)
                                   & np.roll(angle_set.occupied, -1))
    if filled.all():
        return Classification("FullCircle")
    occ = set(np.flatnonzero(filled))
    upper, lower, ends = semicircle_bins(angle_set.n_bins)
    slack = ends if occupancy_rule == "endpoint-slack" else set()
    if (upper - slack) <= occ <= upper:
        return Classification("TypeIIIUpper")
    if (lower - slack) <= occ <= lower:
        return Classification("TypeIIILower")
    if occ:
        runs = _empty_runs(filled)
        if len(runs) == 1:
            start, length = runs[0]
            n = angle_set.n_bins
            w = 2.0 * np.pi / n
            beta = 0.5 * length * w
            center = (start + length + (n - length - 1) / 2.0) % n
            theta0 = center * w - np.pi
            if theta0 <= -np.pi:
                theta0 += 2.0 * np.pi
            return Classification("Arc", beta=beta, theta0=theta0)
    return Classification("Indeterminate")


def _empty_runs(occupied):
    """Maximal circular runs of empty bins as (start, length) pairs."""
    n = len(occupied)
    empty = ~occupied
    if not empty.any():
        return []
    if empty.all():
        return [(0, n)]
    # rotate so position 0 is occupied, then find plain runs
    first = int(np.flatnonzero(occupied)[0])
    rolled = np.roll(empty, -first)
    runs = []
    k = 0
    while k < n:
        if rolled[k]:
            start = k
            while k < n and rolled[k]:
                k += 1
            runs.append(((start + first) % n, k - start))
        else:
            k += 1
    return runs


# ---------------------------------------------------------------------------
# wall limits and stability


def wall_limits(flow, fraction: float = 0.1):
    """Far-field wall speeds, averaged over the outer columns of each wall.

    Returns {"bottom": (left, right), "top": (left, right)} means of v1 over
    the first and last ceil(fraction*nx) columns; "top" only on strips.
    Tail-averaging is justified by the uniform far-field convergence of the
    solved flows.
    """
    g = flow.grid
    if g.kind not in (STRIP, HALF_PLANE):
        raise GridError("wall limits need a strip or half-plane grid")
    m = max(1, int(np.ceil(fraction * g.nx)))
    out = {}
    for j in g.wall_rows():
        row = flow.velocity.vx[:, j]
        name = "bottom" if j == 0 else "top"
        out[name] = (float(row[:m].mean()), float(row[-m:].mean()))
    return out


def _d1_1d(vals, h):
    out = np.empty_like(vals)
    out[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * h)
    out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
    out[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * h)
    return out


def _d2_1d(vals, h):
    out = np.empty_like(vals)
    out[1:-1] = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / h ** 2
    out[0] = (2.0 * vals[0] - 5.0 * vals[1] + 4.0 * vals[2] - vals[3]) / h ** 2
    out[-1] = (2.0 * vals[-1] - 5.0 * vals[-2] + 4.0 * vals[-3] - vals[-4]) / h ** 2
    return out


def stability_margin(flow, profile, mode: str = "VorticityGradient") -> float:
    """Distance of a strip flow from a given shear profile s.

    VorticityGradient returns min s'' - max |d/dx2 (omega - omega_s)| with
    omega_s = -s'; a positive value certifies the rigidity hypothesis that
    forces the flow to be that shear.  W2inf returns the plain W^{2,inf}
    distance max over |v1 - s| and its first and second differences.
    """
    g = flow.grid
    if g.kind != STRIP:
        raise NotAStripGrid("stability margins are defined on strip grids")
    if profile.n != g.ny or not np.allclose(profile.interval, g.y_range):
        raise ValueError("profile is sampled on a different transverse axis")
    s = profile.values
    if mode == "VorticityGradient":
        omega_s = -_d1_1d(s, g.hy)
        diff = flow.vorticity.values - omega_s[None, :]
        dd = _g.ddy(ScalarField(g, diff))
        return float(_d2_1d(s, g.hy).min() - np.abs(dd).max())
    if mode == "W2inf":
        e = ScalarField(g, flow.velocity.vx - s[None, :])
        worst = float(np.abs(e.values).max())
        ex, ey = _g.ddx(e), _g.ddy(e)
        for arr in (ex, ey):
            worst = max(worst, float(np.abs(arr).max()))
        for arr in (_g.ddx(ScalarField(g, ex)), _g.ddy(ScalarField(g, ex)),
                    _g.ddy(ScalarField(g, ey))):
            worst = max(worst, float(np.abs(arr).max()))
        return worst
    raise ValueError("mode must be 'VorticityGradient' or 'W2inf'")


# ---------------------------------------------------------------------------
# report


class DiagnosticsReport:
    def __init__(self, total_curvature, J_inf_signed, J_inf_trace, verdict,
                 kappa_cv_upper, kappa_cv_lower, identity_residual_max):
        self.total_curvature = float(total_curvature)
        self.J_inf_signed = float(J_inf_signed)
        self.J_inf_trace = [(float(r), float(v)) for r, v in J_inf_trace]
        self.verdict = verdict
        self.kappa_cv_upper = float(kappa_cv_upper)
        self.kappa_cv_lower = float(kappa_cv_lower)
        self.identity_residual_max = float(identity_residual_max)
        self.lower_bound_gap = (2.0 / np.pi) * self.total_curvature \
            - abs(self.J_inf_signed)

    def to_dict(self):
        return {
            "total_curvature": self.total_curvature,
            "J_inf_signed": self.J_inf_signed,
            "J_inf_trace": [list(p) for p in self.J_inf_trace],
            "lower_bound_gap": self.lower_bound_gap,
            "verdict": self.verdict.to_dict(),
            "kappa_cv_upper": self.kappa_cv_upper,
            "kappa_cv_lower": self.kappa_cv_lower,
            "identity_residual_max": self.identity_residual_max,
        }


def run_diagnostics(flow, R_list=None, n_bins: int = 360,
                    kappa_bins: int = 64, shear_tol: float = 1e-8):
    """Assemble the full report for one flow.

    R_list defaults to quarter points of the domain half-width on wall
    geometries and stays empty elsewhere (the trace route needs walls).
    """
    aset = angle_set(flow, n_bins=n_bins)
    tc = total_curvature(flow)
    j_signed = signed_curvature_integral(flow)
    if flow.grid.kind in (STRIP, HALF_PLANE):
        if R_list is None:
            span = max(abs(flow.grid.x_range[0]), abs(flow.grid.x_range[1]))
            R_list = [0.25 * span, 0.5 * span, 0.75 * span]
        trace = boundary_trace_Jinf(flow, R_list)
    else:
        trace = []
    prof = kappa_distribution(flow, kappa_bins)
    resid = curvature_identity_residual(flow)
    interior = flow.grid.interior_mask()
    return DiagnosticsReport(
        total_curvature=tc,
        J_inf_signed=j_signed,
        J_inf_trace=trace,
        verdict=classify(aset, tc, tol_curv=shear_tol),
        kappa_cv_upper=semicircle_cv(prof, "upper"),
        kappa_cv_lower=semicircle_cv(prof, "lower"),
        identity_residual_max=float(resid.values[interior].max()),
    )


def save_report(report: DiagnosticsReport, path, extra=None) -> None:
    env = {"schema_version": _ser.SCHEMA_VERSION, **report.to_dict()}
    if extra:
        env.update(extra)
    _ser.write_json(env, path)


def save_angle_set(aset: AngleSet, path) -> None:
    _ser.write_csv(path, ["bin_center", "mass", "occupied"],
                   [bin_centers(aset.n_bins), aset.mass,
                    aset.occupied.astype(int)])


def save_curvature_profile(prof: CurvatureProfile, path) -> None:
    _ser.write_csv(path, ["bin_center", "mass", "occupied"],
                   [bin_centers(prof.n_bins), prof.bin_mass,
                    (prof.bin_mass > 0.0).astype(int)])
