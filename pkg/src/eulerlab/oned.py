"""One-dimensional boundary-value problems behind the planar constructions.

Two problems are solved here, both of the form -u'' = f(u) with Dirichlet
data, by the method of sub- and supersolutions run as a shifted Picard
iteration:

* the positive transverse profile on (-1, 1) vanishing at both walls, which
  exists once f beats the principal Dirichlet eigenvalue pi^2/4 at the origin
  and f(s)/s decreases;
* the increasing connection on (0, L) from 0 to the far-field state 1 of a
  balanced double-well nonlinearity (tanh(x/sqrt 2) for f(s) = s - s^3).

Each linear sweep solves (-d^2/dx^2 + shift) u_next = f(u) + shift*u by
tridiagonal elimination.  With the shift at least the Lipschitz bound of f on
the sandwich range, sweeps started from a subsolution increase pointwise and
sweeps started from a supersolution decrease, staying inside the sandwich;
both facts are asserted on every sweep rather than trusted.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solveh_banded

from . import serialize as _ser


class NoSubsolution(RuntimeError):
    """No admissible subsolution amplitude exists: f never clears the
    principal-eigenvalue line near 0, so only the trivial solution remains."""


class NonConvergence(RuntimeError):
    pass


class BadTruncation(RuntimeError):
    """The truncated interval is too short for the far-field attachment."""


# ---------------------------------------------------------------------------
# nonlinearities


class Nonlinearity:
    """An odd reaction term f with derivative, antiderivative, and bound.

    ``F`` is the antiderivative with F(0) = 0.  ``bound_M`` bounds |f| on the
    range the solvers visit (all of R for the arctan family, [-1, 1] for the
    double well).  ``family`` tags the construction: ArctanFamily, AllenCahn,
    SignFunction, or Custom.
    """

    def __init__(self, f, f_prime, F, bound_M, family, params=None):
        self.f = f
        self.f_prime = f_prime
        self.F = F
        self.bound_M = float(bound_M)
        self.family = family
        self.params = dict(params or {})

    def __repr__(self):
        return "Nonlinearity(%s, %r)" % (self.family, self.params)

    def check_odd(self, samples) -> float:
        s = np.asarray(samples, dtype=float)
        return float(np.max(np.abs(self.f(s) + self.f(-s))))


def arctan_family(lam: float) -> Nonlinearity:
    """f(s) = lam*arctan(s): odd, bounded by lam*pi/2, f(s)/s decreasing.

    Solvability of the strip profile needs lam > pi^2/4; smaller lam is
    accepted here and rejected by the solver (NoSubsolution), which is the
    observable the eigenvalue threshold produces.
    """
    lam = float(lam)
    if lam <= 0:
        raise ValueError("lam must be positive")
    return Nonlinearity(
        f=lambda s: lam * np.arctan(s),
        f_prime=lambda s: lam / (1.0 + np.square(s)),
        F=lambda s: lam * (s * np.arctan(s) - 0.5 * np.log1p(np.square(s))),
        bound_M=lam * np.pi / 2.0,
        family="ArctanFamily",
        params={"lambda": lam},
    )


def allen_cahn() -> Nonlinearity:
    # |f| <= 2/(3 sqrt 3) on [-1, 1], the range the double-well solvers visit
    return Nonlinearity(
        f=lambda s: s - s ** 3,
        f_prime=lambda s: 1.0 - 3.0 * np.square(s),
        F=lambda s: 0.5 * np.square(s) - 0.25 * np.square(s) ** 2,
        bound_M=2.0 / (3.0 * np.sqrt(3.0)),
        family="AllenCahn",
    )


def sign_equation() -> Nonlinearity:
    """Reaction term of the kinked shear example: Laplacian(u) = sgn(u)
    written as -Laplacian(u) = f(u) with f(s) = -sgn(s)."""
    return Nonlinearity(
        f=lambda s: -np.sign(s),
        f_prime=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        F=lambda s: -np.abs(s),
        bound_M=1.0,
        family="SignFunction",
    )


def custom(f, f_prime, F, bound_M) -> Nonlinearity:
    return Nonlinearity(f, f_prime, F, bound_M, family="Custom")


def picard_shift(nl: Nonlinearity, smax: float) -> float:
    """Linearizing shift for the monotone sweeps over the range [0, smax].

    Monotonicity of s -> f(s) + shift*s needs shift >= -min f'; keeping
    shift >= max f' as well makes the sweep operator a contraction on the
    sandwich.  Both are covered by the Lipschitz bound max |f'| plus margin.
    """
    s = np.linspace(0.0, max(smax, 1e-12), 4096)
    return float(np.max(np.abs(nl.f_prime(s)))) + 0.1


# ---------------------------------------------------------------------------
# profiles


class Profile:
    """Converged profile on a uniform grid.

    ``residual`` is the defect max-norm achieved by the solver in its working
    precision; re-evaluating the stencil on the float64 ``values`` gives a
    larger number dominated by representation rounding (eps*|u|/h^2).
    """

    def __init__(self, interval, values, dirichlet, residual, iterations):
        self.interval = (float(interval[0]), float(interval[1]))
        v = np.ascontiguousarray(values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("profile contains non-finite values")
        v.flags.writeable = False
        self.values = v
        self.n = len(v)
        self.dirichlet = (float(dirichlet[0]), float(dirichlet[1]))
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.boundary_derivatives = (boundary_slope(self, "lower"),
                                     boundary_slope(self, "upper"))

    @property
    def h(self) -> float:
        return (self.interval[1] - self.interval[0]) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.interval[0], self.interval[1], self.n)

    def sample(self, x) -> np.ndarray:
        return np.interp(x, self.nodes(), self.values)


def boundary_slope(p: Profile, end: str) -> float:
    """One-sided second-order derivative of a profile at an endpoint."""
    v, h = p.values, p.h
    if end == "lower":
        return float((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h))
    if end == "upper":
        return float((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h))
    raise ValueError("end must be 'lower' or 'upper', got %r" % (end,))


# ---------------------------------------------------------------------------
# monotone iteration core


def _monotone_sweeps(nl, h, start, lower, upper, bc, shift, tol, max_iter,
                     ascending):
    """Shifted Picard iteration between verified bounds, in two phases.

    Phase one runs in float64 until the sweep update drops below tol,
    asserting pointwise monotonicity and the sandwich on every sweep; either
    failing means the shift did not linearize f on the range, which is a
    solver defect and not something to iterate past.  Phase two re-runs the
    same sweeps in extended precision until the measured defect of
    -u'' - f(u) is below tol as well: a float64 iterate cannot certify a
    defect much below eps*|u|/h^2 (a few 1e-10 at h = 1e-3), since rounding
    the exact solution to doubles already costs that much.
    """
    n = len(start)
    slack = 1e-10 * (1.0 + float(np.max(np.abs(upper))))
    ab = np.zeros((2, n - 2))
    ab[0, 1:] = -1.0 / h ** 2
    ab[1, :] = 2.0 / h ** 2 + shift

    u = np.array(start, dtype=float)
    u[0], u[-1] = bc
    f = nl.f
    update = np.inf
    for it in range(1, max_iter + 1):
        rhs = f(u[1:-1]) + shift * u[1:-1]
        rhs[0] += bc[0] / h ** 2
        rhs[-1] += bc[1] / h ** 2
        nxt = np.empty(n)
        nxt[0], nxt[-1] = bc
        nxt[1:-1] = solveh_banded(ab, rhs)

        step = nxt - u
        if ascending:
            if float(step.min()) < -slack:
                raise NonConvergence("ascending sweep lost monotonicity")
        else:
            if float(step.max()) > slack:
                raise NonConvergence("descending sweep lost monotonicity")
        if float(np.max(lower - nxt)) > slack or float(np.max(nxt - upper)) > slack:
            raise NonConvergence("iterate escaped the sub/supersolution sandwich")

        u = nxt
        update = float(np.max(np.abs(step)))
        if update < tol:
            break
    else:
        raise NonConvergence("no convergence in %d sweeps (last update %.3e)"
                             % (max_iter, update))
    return _polish_sweeps(nl, h, u, lower, upper, bc, shift, tol, slack, it)


def _polish_sweeps(nl, h, u, lower, upper, bc, shift, tol, slack, it1):
    """Continue the Picard sweeps in extended precision until the defect
    passes tol.  The tridiagonal solves use the Thomas algorithm (the matrix
    is constant, SPD and diagonally dominant, so factoring once is safe).
    Nonlinearity callables built from numpy ufuncs preserve the dtype, which
    is what makes the higher-precision f evaluations meaningful."""
    ld = np.longdouble
    hl = ld(h)
    n = len(u)
    diag = ld(2.0) / hl ** 2 + ld(shift)
    off = ld(-1.0) / hl ** 2
    denom = np.empty(n - 2, dtype=ld)
    cp = np.empty(n - 2, dtype=ld)
    denom[0] = diag
    cp[0] = off / diag
    for i in range(1, n - 2):
        denom[i] = diag - off * cp[i - 1]
        cp[i] = off / denom[i]

    lo = np.asarray(lower, dtype=ld)
    hi = np.asarray(upper, dtype=ld)
    ul = u.astype(ld)
    f = nl.f
    it2 = 0
    res = _residual_1d(ul, hl, nl)
    while res >= tol:
        if it2 >= 1000:
            raise NonConvergence(
                "defect stalled at %.3e (tol %.3e) after %d polish sweeps"
                % (res, tol, it2))
        rhs = f(ul[1:-1]) + ld(shift) * ul[1:-1]
        rhs[0] += ld(bc[0]) / hl ** 2
        rhs[-1] += ld(bc[1]) / hl ** 2
        d = rhs.astype(ld, copy=True)
        d[0] = d[0] / denom[0]
        for i in range(1, n - 2):
            d[i] = (d[i] - off * d[i - 1]) / denom[i]
        for i in range(n - 4, -1, -1):
            d[i] = d[i] - cp[i] * d[i + 1]
        ul[1:-1] = d
        it2 += 1
        if float(np.max(lo - ul)) > slack or float(np.max(ul - hi)) > slack:
            raise NonConvergence("iterate escaped the sub/supersolution sandwich")
        res = _residual_1d(ul, hl, nl)
    return np.asarray(ul, dtype=float), res, it1 + it2


def _residual_1d(u, h, nl) -> float:
    """Max interior defect of -u'' = f(u), measured in the dtype of u."""
    inner = -(u[2:] - 2.0 * u[1:-1] + u[:-2]) / h ** 2 - nl.f(u[1:-1])
    return float(np.max(np.abs(inner)))


def select_subsolution_amplitude(nl: Nonlinearity, rate: float) -> float:
    """Largest amplitude eps <= 1 with f(s) >= rate*s on all of (0, eps].

    Bisection against a dense sampling of the inequality; the admissible set
    is an interval (it only shrinks as eps grows) so bisection is valid.
    """
    s_unit = np.linspace(1.0 / 512, 1.0, 512)

    def admissible(eps):
        s = eps * s_unit
        return float(np.min(nl.f(s) - rate * s)) >= -1e-14

    if admissible(1.0):
        return 1.0
    lo = 1e-6
    if not admissible(lo):
        raise NoSubsolution(
            "f(s) never dominates %.6g*s near s=0 (f'(0) below the "
            "principal-eigenvalue threshold)" % rate)
    hi = 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def solve_strip_profile(nl: Nonlinearity, n: int, tol: float = 1e-10,
                        start: str = "sub", max_iter: int = 200000) -> Profile:
    """Positive transverse profile on (-1, 1) with -u'' = f(u), u(+-1) = 0.

    The iteration ascends from the cosine subsolution eps*cos(pi x/2) (eps by
    the bisection rule with delta = 0.05) or, with start="super", descends
    from the parabolic supersolution M(1 - x^2)/2.  Both limits coincide when
    f(s)/s strictly decreases, which is the uniqueness test hook.
    """
    n = int(n)
    if n < 8:
        raise ValueError("need at least 8 nodes")
    delta = 0.05
    rate = np.pi ** 2 / 4.0 + delta ** 2
    eps = select_subsolution_amplitude(nl, rate)

    x = np.linspace(-1.0, 1.0, n)
    h = 2.0 / (n - 1)
    sub = eps * np.cos(0.5 * np.pi * x)
    sup = 0.5 * nl.bound_M * (1.0 - x ** 2)
    # the paper's construction takes eps small enough to slide under the
    # supersolution; halve until the discrete ordering holds
    for _ in range(60):
        if np.all(sub <= sup + 1e-15):
            break
        eps *= 0.5
        sub = eps * np.cos(0.5 * np.pi * x)
    else:
        raise NoSubsolution("subsolution cannot be placed under supersolution")
    sub[0] = sub[-1] = 0.0

    shift = picard_shift(nl, float(np.max(sup)))
    if start == "sub":
        u0, ascending = sub, True
    elif start == "super":
        u0, ascending = sup, False
    else:
        raise ValueError("start must be 'sub' or 'super'")
    u, res, its = _monotone_sweeps(nl, h, u0, sub, sup, (0.0, 0.0), shift,
                                   tol, max_iter, ascending)
    return Profile((-1.0, 1.0), u, (0.0, 0.0), res, its)


def solve_heteroclinic(nl: Nonlinearity, L: float = 20.0, n: int = 4001,
                       tol: float = 1e-10, max_iter: int = 200000) -> Profile:
    """Increasing connection on [0, L] with -g'' = f(g), g(0)=0, g(L)=1.

    Requires a balanced double well (f(1) = 0 makes the constant 1 a
    supersolution; 0 is a subsolution).  Raises BadTruncation when the
    solved profile still moves between L-1 and L, i.e. the interval cut the
    transition layer.
    """
    L = float(L)
    n = int(n)
    if n < 8:
        raise ValueError("need at least 8 nodes")
    if L <= 1.0:
        raise BadTruncation("interval [0, %g] cannot hold the transition layer" % L)
    if abs(float(nl.f(1.0))) > 1e-12:
        raise ValueError("far-field state 1 must be an equilibrium: f(1)=%g"
                         % float(nl.f(1.0)))
    h = L / (n - 1)
    sub = np.zeros(n)
    sup = np.ones(n)
    shift = picard_shift(nl, 1.0)
    u, res, its = _monotone_sweeps(nl, h, sub, sub, sup, (0.0, 1.0), shift,
                                   tol, max_iter, ascending=True)
    p = Profile((0.0, L), u, (0.0, 1.0), res, its)
    gap = abs(float(p.sample(L) - p.sample(L - 1.0)))
    if gap > 1e-6:
        raise BadTruncation(
            "profile still varies by %.3e over the last unit length; "
            "increase L" % gap)
    return p


# ---------------------------------------------------------------------------
# serialization


def save_profile(p: Profile, csv_path, json_path=None, extra=None) -> None:
    _ser.write_csv(csv_path, ["x", "value"], [p.nodes(), p.values])
    if json_path is not None:
        env = {
            "schema_version": _ser.SCHEMA_VERSION,
            "interval": list(p.interval),
            "n": p.n,
            "dirichlet": list(p.dirichlet),
            "boundary_slopes": list(p.boundary_derivatives),
            "residual": p.residual,
            "iterations": p.iterations,
        }
        if extra:
            env.update(extra)
        _ser.write_json(env, json_path)
