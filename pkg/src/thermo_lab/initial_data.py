"""Rough initial data in the energy class and their smooth approximations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .mesh import Grid, edge_diff

DATUM_KINDS = ("step", "sawtooth", "spike", "fourier-random", "constant")
MAX_MODES = 32


@dataclass(frozen=True)
class RoughDatumSpec:
    """Parameters of a rough datum.

    Positions (``location``, ``width``) are fractions of the interval.
    Every kind adds ``u0_sine * sin(pi s)`` to u0 and ``u0t_sine * sin(pi s)``
    to u0t, with s = (x - a) / |Omega|.

    * constant: theta0 = ``theta0``
    * step: ``theta_high`` left of ``location``, ``theta0`` right of it
    * spike: ``theta0`` plus ``theta_high`` on a box of width ``width``
    * sawtooth: theta0 + theta_high * frac(teeth * s); u0, u0t triangle waves
      with ``teeth`` humps scaled by ``u0_amp``, ``u0t_amp``
    * fourier-random: seeded sine series (1/k^2 decay for u0, 1/k for u0t)
      and a cosine series of amplitude ``theta_high`` around ``theta0``
    """

    kind: str = "constant"
    theta0: float = 1.0
    theta_high: float = 0.0
    location: float = 0.5
    width: float = 0.05
    u0_sine: float = 0.0
    u0t_sine: float = 0.0
    u0_amp: float = 0.0
    u0t_amp: float = 0.0
    teeth: int = 3
    modes: int = 16
    seed: int = 0


@dataclass
class RoughDatum:
    spec: RoughDatumSpec
    grid: Grid
    u0: np.ndarray
    u0t: np.ndarray
    theta0: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def to_csv(self, path) -> None:
        write_columns(path, {"x": self.x, "u0": self.u0, "u0t": self.u0t, "theta0": self.theta0})


@dataclass
class MollifiedDatum:
    source: RoughDatum
    eps: float
    v0: np.ndarray
    u0: np.ndarray
    theta0: np.ndarray
    floor: float = field(default=0.0)

    @property
    def grid(self) -> Grid:
        return self.source.grid

    # the same attribute names as RoughDatum, for the energy-formula helpers
    @property
    def u0t(self) -> np.ndarray:
        return self.v0


def write_columns(path, columns: dict) -> None:
    names = list(columns)
    rows = zip(*(np.asarray(columns[k]) for k in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([repr(float(val)) for val in row])


def _triangle(s, teeth):
    # continuous, piecewise linear, zero at s = 0 and s = 1, peaks of height 1
    y = np.abs(((teeth * s) % 1.0) * 2.0 - 1.0)
    return 1.0 - y


def make_rough_datum(spec: RoughDatumSpec, grid: Grid) -> RoughDatum:
    if spec.kind not in DATUM_KINDS:
        raise ValueError(f"unknown datum kind {spec.kind!r}")
    numbers = [v for v in vars(spec).values() if isinstance(v, (int, float))]
    if not all(np.isfinite(numbers)):
        raise ValueError("datum parameters must be finite")
    s = (grid.x - grid.a) / grid.length
    n = s.size
    u0 = np.zeros(n)
    u0t = np.zeros(n)
    theta0 = np.full(n, float(spec.theta0))

    if spec.kind == "step":
        theta0 = np.where(s < spec.location, spec.theta_high, spec.theta0).astype(float)
    elif spec.kind == "spike":
        inside = np.abs(s - spec.location) < 0.5 * spec.width
        theta0 = theta0 + spec.theta_high * inside
    elif spec.kind == "sawtooth":
        if spec.teeth < 1:
            raise ValueError("sawtooth needs teeth >= 1")
        theta0 = theta0 + spec.theta_high * ((spec.teeth * s) % 1.0)
        u0 += spec.u0_amp * _triangle(s, spec.teeth)
        u0t += spec.u0t_amp * _triangle(s, spec.teeth)
    elif spec.kind == "fourier-random":
        if not 1 <= spec.modes <= MAX_MODES:
            raise ValueError(f"modes must lie in [1, {MAX_MODES}]")
        rng = np.random.default_rng(spec.seed)
        k = np.arange(1, spec.modes + 1)
        a, b, c = rng.standard_normal((3, spec.modes))
        sines = np.sin(np.pi * np.outer(s, k))
        u0 += spec.u0_amp * sines @ (a / k**2)
        u0t += spec.u0t_amp * sines @ (b / k)
        theta0 = theta0 + spec.theta_high * np.cos(np.pi * np.outer(s, k)) @ (c / k)

    u0 += spec.u0_sine * np.sin(np.pi * s)
    u0t += spec.u0t_sine * np.sin(np.pi * s)
    u0[0] = u0[-1] = u0t[0] = u0t[-1] = 0.0

    if np.any(theta0 < 0):
        i = int(np.argmin(theta0))
        raise ValueError(f"theta0 is negative at node {i} ({theta0[i]:.3g})")
    if not grid.integrate(theta0) > 0:
        raise ValueError("theta0 must have positive mass")
    return RoughDatum(spec, grid, u0, u0t, theta0)


def _bump_weights(radius: float, dx: float) -> np.ndarray:
    m = int(np.ceil(radius / dx)) - 1
    m = max(m, 0)
    s = np.arange(-m, m + 1) * dx / radius
    w = np.zeros_like(s)
    inside = np.abs(s) < 1
    w[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return w / w.sum()


def _smooth(values: np.ndarray, w: np.ndarray, odd: bool) -> np.ndarray:
    m = (w.size - 1) // 2
    if m == 0:
        return values.copy()
    left = values[1 : m + 1][::-1]
    right = values[-m - 1 : -1][::-1]
    if odd:
        # odd about the (zero) boundary values
        left = 2 * values[0] - left
        right = 2 * values[-1] - right
    ext = np.concatenate([left, values, right])
    return np.convolve(ext, w, mode="valid")


def mollify(datum: RoughDatum, eps: float) -> MollifiedDatum:
    """Bump-kernel smoothing of radius eps*|Omega|/4.

    u0 and u0t are continued oddly (zero trace is kept, D2 at the boundary
    vanishes), theta0 evenly, and theta0 is lifted by eps * mass / (4 |Omega|).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    grid = datum.grid
    w = _bump_weights(eps * grid.length / 4.0, grid.dx)

    u_src = datum.u0.copy()
    v_src = datum.u0t.copy()
    u_src[0] = u_src[-1] = 0.0
    v_src[0] = v_src[-1] = 0.0
    u0 = _smooth(u_src, w, odd=True)
    v0 = _smooth(v_src, w, odd=True)
    u0[0] = u0[-1] = v0[0] = v0[-1] = 0.0

    mass = grid.integrate(datum.theta0)
    floor = eps * mass / (4.0 * grid.length)
    theta0 = _smooth(datum.theta0, w, odd=False) + floor

    if not np.all(theta0 > 0):
        raise ArithmeticError("mollified temperature is not strictly positive")
    if grid.integrate(theta0) < 0.5 * mass:
        raise ArithmeticError("mollified temperature lost more than half its mass")
    return MollifiedDatum(datum, float(eps), v0, u0, theta0, floor)


def datum_distances(moll: MollifiedDatum) -> dict:
    """L1 distance of temperatures, L2 of velocities, W^{1,2} of deformations."""
    src = moll.source
    g = src.grid
    du = moll.u0 - src.u0
    return {
        "theta_L1": g.integrate(np.abs(moll.theta0 - src.theta0)),
        "v_L2": np.sqrt(g.integrate((moll.v0 - src.u0t) ** 2)),
        "u_W12": np.sqrt(g.integrate(du**2) + g.dx * np.sum(edge_diff(du, g.dx) ** 2)),
    }
