"""Uniform grid, nodal state and the second-order difference operators.

Nodes are x_i = a + i*dx for i = 0..N+1, so every field carries its two
boundary values. Ghost conventions:

* v (simply supported, v = v_xx = 0): ghost = -first interior value
* u (Dirichlet): boundary values are 0, no ghost needed
* theta, z (Neumann): ghost = first interior value
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    N: int
    a: float
    b: float

    @property
    def dx(self) -> float:
        return (self.b - self.a) / (self.N + 1)

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def x(self) -> np.ndarray:
        return self.a + self.dx * np.arange(self.N + 2)

    @property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights (sum to |Omega|)."""
        w = np.full(self.N + 2, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def build_grid(N: int, a: float = 0.0, b: float = 1.0) -> Grid:
    if int(N) != N or N < 8:
        raise ValueError(f"need N >= 8 interior nodes, got {N}")
    if not (np.isfinite(a) and np.isfinite(b)) or not b > a:
        raise ValueError(f"degenerate interval ({a}, {b})")
    return Grid(int(N), float(a), float(b))


@dataclass
class State:
    t: float
    v: np.ndarray
    u: np.ndarray
    theta: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.v.copy(), self.u.copy(), self.theta.copy())

    def check(self) -> None:
        if self.v[0] != 0 or self.v[-1] != 0 or self.u[0] != 0 or self.u[-1] != 0:
            raise ValueError("v and u must vanish at the boundary nodes")
        for name in ("v", "u", "theta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise FloatingPointError(f"non-finite values in {name}")


def d1_odd(v, dx):
    """Central D1 for a field continued oddly past the boundary."""
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
    out[0] = (v[1] + v[1]) / (2 * dx) - v[0] / dx
    out[-1] = -(v[-2] + v[-2]) / (2 * dx) + v[-1] / dx
    return out


def d1_even(z, dx):
    """Central D1 for a field continued evenly (Neumann): zero on the boundary."""
    out = np.zeros_like(z)
    out[1:-1] = (z[2:] - z[:-2]) / (2 * dx)
    return out


def d1_interior(g, dx):
    """Central D1 on interior nodes, zero on the boundary rows."""
    out = np.zeros_like(g)
    out[1:-1] = (g[2:] - g[:-2]) / (2 * dx)
    return out


def d2_dirichlet(u, dx):
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
    return out


def d2_neumann(th, dx):
    out = np.empty_like(th)
    out[1:-1] = (th[2:] - 2 * th[1:-1] + th[:-2]) / dx**2
    out[0] = 2 * (th[1] - th[0]) / dx**2
    out[-1] = 2 * (th[-2] - th[-1]) / dx**2
    return out


def d4_simply_supported(v, dx):
    """D2 applied twice with v = v_xx = 0 (D2 v vanishes on the boundary)."""
    return d2_dirichlet(d2_dirichlet(v, dx), dx)


def edge_diff(u, dx):
    """Forward differences on the N + 1 cells."""
    return np.diff(u) / dx
