"""Manufactured solutions: truncation orders of the discrete operators and
forced runs whose exact solution is known.

The fields are smooth and satisfy the boundary conditions exactly:

    u     = 0.5 sin(pi x) cos t + 0.2 sin(3 pi x)
    v     = sin(pi x) sin t + 0.3 sin(2 pi x)
    theta = 2 + 0.5 cos(pi x) cos t + 0.2 cos(2 pi x)

on (0, 1). v, u are odd about both ends (v = v_xx = 0, u = 0) and theta is
even (theta_x = 0), so the ghost conventions are consistent to all orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import entropy_rate, l2_norm, z_residual
from .mesh import State, build_grid, d1_even, d1_odd, d2_neumann
from .model import EntropyTransform, make_material_law, regularize
from .solver import build_operators, rhs, step_imex

PI = math.pi


def fields(x, t):
    """Exact (v, u, theta) and the derivatives needed by the equations."""
    s1, s2, s3 = np.sin(PI * x), np.sin(2 * PI * x), np.sin(3 * PI * x)
    c1, c2 = np.cos(PI * x), np.cos(2 * PI * x)
    d = {}
    d["v"] = s1 * math.sin(t) + 0.3 * s2
    d["v_t"] = s1 * math.cos(t)
    d["v_x"] = PI * c1 * math.sin(t) + 0.6 * PI * c2
    d["v_xxxx"] = PI**4 * s1 * math.sin(t) + 0.3 * (2 * PI) ** 4 * s2
    d["u"] = 0.5 * s1 * math.cos(t) + 0.2 * s3
    d["u_t"] = -0.5 * s1 * math.sin(t)
    d["u_xx"] = -0.5 * PI**2 * s1 * math.cos(t) - 0.2 * (3 * PI) ** 2 * s3
    d["th"] = 2 + 0.5 * c1 * math.cos(t) + 0.2 * c2
    d["th_t"] = -0.5 * c1 * math.sin(t)
    d["th_x"] = -0.5 * PI * s1 * math.cos(t) - 0.4 * PI * s2
    d["th_xx"] = -0.5 * PI**2 * c1 * math.cos(t) - 0.8 * PI**2 * c2
    return d


def exact_state(grid, t: float) -> State:
    d = fields(grid.x, t)
    v, u = d["v"], d["u"]
    v[0] = v[-1] = u[0] = u[-1] = 0.0
    return State(t, v, u, d["th"])


def analytic_rhs(law, eps, x, t):
    """(dv, du, dtheta, dz) of the PDE evaluated on the exact fields."""
    d = fields(x, t)
    f, fp, _ = law.evaluate(d["th"])
    dv = -eps * d["v_xxxx"] + d["u_xx"] - fp * d["th_x"]
    du = eps * d["u_xx"] + d["v"]
    dth = d["th_xx"] - f * d["v_x"]
    z_x = -d["th_x"] / f
    z_xx = -d["th_xx"] / f + fp * d["th_x"] ** 2 / f**2
    dz = z_xx - fp * z_x**2 + d["v_x"]
    return dv, du, dth, dz


def forcing(law, eps, x, t):
    """Source terms that make the manufactured fields an exact solution."""
    d = fields(x, t)
    dv, du, dth, _ = analytic_rhs(law, eps, x, t)
    return d["v_t"] - dv, d["u_t"] - du, d["th_t"] - dth


def discrete_z_operator(s: State, law, transform, g):
    z = transform.ell(s.theta)
    zx = d1_even(z, g.dx)
    return d2_neumann(z, g.dx) - law.fprime(s.theta) * zx**2 + d1_odd(s.v, g.dx)


@dataclass
class LevelErrors:
    N: int
    dx: float
    e_v: float
    e_u: float
    e_theta: float
    e_z: float
    rate_defect: float


def truncation_errors(N: int, law, eps: float, t: float = 0.3) -> LevelErrors:
    """L2 norms of discrete minus analytic operators on the exact fields.

    Boundary rows of dv, du are excluded (those values are imposed, not
    computed). ``rate_defect`` is |dZ/dt + Z_diss| along the semi-discrete
    flow, which vanishes in the continuum.
    """
    from .diagnostics import entropy_dissipation

    g = build_grid(N)
    s = exact_state(g, t)
    transform = EntropyTransform(law)
    dv, du, dth = rhs(s, law, g, eps)
    av, au, ath, az = analytic_rhs(law, eps, g.x, t)
    inner = slice(1, -1)

    def norm(r, sl=slice(None)):
        return math.sqrt(np.dot(g.weights[sl], r[sl] ** 2))

    dz = discrete_z_operator(s, law, transform, g)
    defect = abs(entropy_rate(s, law, transform, g) + entropy_dissipation(s, law, transform, g))
    return LevelErrors(
        N, g.dx, norm(dv - av, inner), norm(du - au, inner), norm(dth - ath),
        norm(dz - az), defect,
    )


def observed_orders(errors):
    """log2 of successive error ratios (levels must double N + 1)."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def default_law(eps: float = 1e-3):
    return regularize(make_material_law("identity"), eps)


def forced_run(N: int, dt: float, T: float, law, eps: float, scheme: str = "imex-euler"):
    """Integrate the forced system from the exact data; returns the last two
    states and the forcing of the last step, for residual checks."""
    g = build_grid(N)
    nsteps = int(round(T / dt))
    if not math.isclose(nsteps * dt, T, rel_tol=1e-9):
        raise ValueError("T must be a whole number of steps")
    ops = build_operators(g, eps, dt, scheme)
    s = exact_state(g, 0.0)
    prev = s
    for _ in range(nsteps):
        prev = s
        s = step_imex(s, dt, ops, law, forcing=forcing(law, eps, g.x, s.t))
    return g, prev, s


def forced_z_residual(N: int, dt: float, T: float, law, eps: float) -> float:
    """L2 norm of the z-equation residual over the last step of a forced run,
    with the (known) forcing contribution removed."""
    g, prev, s = forced_run(N, dt, T, law, eps)
    transform = EntropyTransform(law)
    r = z_residual(prev, s, law, transform, g)
    tb = 0.5 * (prev.t + s.t)
    _, _, fth = forcing(law, eps, g.x, tb)
    thb = 0.5 * (prev.theta + s.theta)
    # z = ell(theta) turns a theta source F into -F / f(theta)
    return l2_norm(r + fth / law.f(thb), g)


def forced_error(N: int, dt: float, T: float, law, eps: float) -> float:
    """max-norm error of the forced run against the exact solution at T."""
    g, _, s = forced_run(N, dt, T, law, eps)
    ex = exact_state(g, s.t)
    return max(np.max(np.abs(s.v - ex.v)), np.max(np.abs(s.u - ex.u)),
               np.max(np.abs(s.theta - ex.theta)))
