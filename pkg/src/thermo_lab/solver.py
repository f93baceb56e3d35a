"""Method-of-lines integration of the regularized thermoelastic system

    v_t     = -eps v_xxxx + u_xx - (f_eps(theta))_x
    u_t     =  eps u_xx + v
    theta_t =  theta_xx - f_eps(theta) v_x

with v = v_xx = 0, u = 0 and theta_x = 0 on the boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .mesh import (
    Grid,
    State,
    d1_interior,
    d1_odd,
    d2_dirichlet,
    d2_neumann,
    d4_simply_supported,
)
from .model import RegularizedLaw

log = logging.getLogger(__name__)

SCHEMES = ("imex-euler", "cn-ab2")


class SolverError(RuntimeError):
    """Integration failure; carries the last healthy state when known."""

    def __init__(self, message, last_state=None, trajectory=None):
        super().__init__(message)
        self.last_state = last_state
        self.trajectory = trajectory


class BlowUpError(SolverError):
    pass


def select_dt(grid: Grid, eps: float, safety: float) -> float:
    """Wave CFL step safety * dx / 2; the stiff linear parts are implicit, so
    eps does not enter."""
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    return safety * grid.dx / 2.0


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def dirichlet_d2_matrix(grid: Grid) -> sp.csr_matrix:
    n = grid.N
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csr") / grid.dx**2


def neumann_d2_matrix(grid: Grid) -> sp.csr_matrix:
    n = grid.N + 2
    lower = np.ones(n - 1)
    upper = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    m = sp.diags([lower, -2.0 * np.ones(n), upper], [-1, 0, 1], format="csr")
    return m / grid.dx**2


def to_band(m, p: int) -> np.ndarray:
    """Band storage B[i, p + j - i] = M[i, j]."""
    m = sp.csr_matrix(m)
    n = m.shape[0]
    B = np.zeros((n, 2 * p + 1))
    coo = m.tocoo()
    if coo.nnz and np.max(np.abs(coo.col - coo.row)) > p:
        raise ValueError("matrix bandwidth exceeds p")
    B[coo.row, p + coo.col - coo.row] = coo.data
    return B


def factor_band(m, p: int) -> np.ndarray:
    return K.band_factor(to_band(m, p))


@dataclass
class LinearOperatorBundle:
    """Difference matrices and the factored implicit systems for one (eps, dt).

    ``lu_v`` holds I + dt eps D4 for imex-euler and the reduced Crank-Nicolson
    velocity matrix for cn-ab2. The two ``hist`` arrays carry the previous
    explicit coupling terms of cn-ab2 between calls.
    """

    grid: Grid
    eps: float
    dt: float
    scheme: str
    D2_dirichlet: sp.csr_matrix
    D4: sp.csr_matrix
    D2_neumann: sp.csr_matrix
    lu_u: np.ndarray
    lu_v: np.ndarray
    lu_theta: np.ndarray
    hist_v: np.ndarray = field(repr=False, default=None)
    hist_theta: np.ndarray = field(repr=False, default=None)
    have_hist: bool = False


def build_operators(grid: Grid, eps: float, dt: float, scheme: str = "imex-euler"):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = dirichlet_d2_matrix(grid)
    D4 = (A @ A).tocsr()
    Dn = neumann_d2_matrix(grid)
    I = sp.identity(grid.N, format="csr")
    In = sp.identity(grid.N + 2, format="csr")
    if scheme == "imex-euler":
        lu_u = factor_band(I - dt * eps * A, 1)
        lu_v = factor_band(I + dt * eps * D4, 2)
        lu_th = factor_band(In - dt * Dn, 1)
    else:
        h = 0.5 * dt
        lu_u = factor_band(I - h * eps * A, 1)
        W = (I - h * eps * A) @ (I + h * eps * D4) - h * h * A
        lu_v = factor_band(W, 3)
        lu_th = factor_band(In - h * Dn, 1)
    n = grid.N + 2
    return LinearOperatorBundle(
        grid, float(eps), float(dt), scheme, A, D4, Dn, lu_u, lu_v, lu_th,
        np.zeros(n), np.zeros(n), False,
    )


# ---------------------------------------------------------------------------
# semi-discrete right-hand side and single steps
# ---------------------------------------------------------------------------


def rhs(s: State, law: RegularizedLaw, g: Grid, eps: float):
    """Semi-discrete tendencies (dv, du, dtheta); dv, du vanish on the boundary."""
    dx = g.dx
    f = law.f(s.theta)
    dv = -eps * d4_simply_supported(s.v, dx) + d2_dirichlet(s.u, dx) - d1_interior(f, dx)
    du = eps * d2_dirichlet(s.u, dx) + s.v
    du[0] = du[-1] = 0.0
    dv[0] = dv[-1] = 0.0
    dtheta = d2_neumann(s.theta, dx) - f * d1_odd(s.v, dx)
    for name, arr in (("dv", dv), ("du", du), ("dtheta", dtheta)):
        if not np.all(np.isfinite(arr)):
            raise SolverError(f"non-finite tendency {name}")
    return dv, du, dtheta


def _kernel_law(law: RegularizedLaw, eps: float):
    # the kernels take eps once, for both the damping and the regularized law
    code, K_f, law_eps, tx, ts = law.params()
    if not math.isclose(law_eps, eps, rel_tol=1e-12):
        raise ValueError("law and operators must share the same eps")
    return code, K_f, tx, ts


def _work(n: int) -> np.ndarray:
    return np.zeros((10, n))


def step_imex(s: State, dt: float, ops: LinearOperatorBundle, law: RegularizedLaw,
              forcing=None) -> State:
    """Advance one step; returns a new State. ``forcing`` = (fv, fu, ftheta)
    nodal source terms, added explicitly (used by manufactured solutions)."""
    if not math.isclose(dt, ops.dt, rel_tol=1e-12):
        raise ValueError("operators were factored for a different dt")
    n = s.v.size
    v, u, th = s.v.copy(), s.u.copy(), s.theta.copy()
    if forcing is None:
        fv = fu = fth = np.zeros(n)
    else:
        fv, fu, fth = (np.ascontiguousarray(a, dtype=float) for a in forcing)
    work = _work(n)
    params = _kernel_law(law, ops.eps)
    if ops.scheme == "imex-euler":
        status, _ = K.step_euler(
            v, u, th, dt, ops.grid.dx, ops.eps, *params, ops.lu_u, ops.lu_v,
            ops.lu_theta, fv, fu, fth, work,
        )
    else:
        status, _ = K.step_cnab2(
            v, u, th, dt, ops.grid.dx, ops.eps, *params, ops.lu_u, ops.lu_v,
            ops.lu_theta, fv, fu, fth, ops.hist_v, ops.hist_theta, ops.have_hist, work,
        )
        ops.have_hist = True
    if status != K.STATUS_OK:
        raise SolverError(f"step failed ({_STATUS_TEXT[status]})", last_state=s)
    return State(s.t + dt, v, u, th)


_STATUS_TEXT = {
    K.STATUS_NONFINITE: "non-finite field values",
    K.STATUS_CAP: "field magnitude above the blow-up cap",
    K.STATUS_NEWTON: "temperature coupling solve did not converge",
}


# ---------------------------------------------------------------------------
# whole runs
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Snapshots plus one diagnostics record per diagnostics step.

    ``records`` is a list of ``diagnostics.DiagnosticsRecord``; ``dt`` is the
    step actually used (T_end is hit exactly).
    """

    grid: Grid
    law: RegularizedLaw
    eps: float
    dt: float
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    datum: object = None
    config: object = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> State:
        return self.snapshots[-1]

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _schedule(every, dt, nsteps):
    """Step indices closest to the multiples of ``every`` (no drift)."""
    if every is None or every <= 0:
        return set()
    k = np.arange(1, int(nsteps * dt / every + 1e-9) + 1)
    steps = np.rint(k * every / dt).astype(np.int64)
    return set(int(n) for n in steps if 0 < n < nsteps)


def integrate(state0: State, grid: Grid, law: RegularizedLaw, eps: float, *,
              T_end: float, safety: float = 0.5, scheme: str = "imex-euler",
              snapshot_every=None, diag_every=None, blowup_cap: float = 1e12,
              ladder_b: float = 0.14, ladder_kmax: int = 14, datum=None,
              config=None) -> Trajectory:
    """Integrate from ``state0`` to ``T_end`` and collect snapshots/diagnostics.

    Snapshot and diagnostics times are rounded to whole steps; the initial
    and final states are always included.
    """
    from . import diagnostics as dg
    from .model import EntropyTransform

    state0.check()
    if T_end < 0:
        raise ValueError("T_end must be nonnegative")
    dt0 = select_dt(grid, eps, safety)
    nsteps = int(math.ceil(T_end / dt0 - 1e-9)) if T_end > 0 else 0
    dt = T_end / nsteps if nsteps else dt0
    traj = Trajectory(grid, law, eps, dt, datum=datum, config=config)
    transform = EntropyTransform(law)
    recorder = dg.Recorder(grid, law, transform, eps, ladder_b, ladder_kmax)

    state = state0.copy()
    traj.snapshots.append(state.copy())
    traj.records.append(recorder.record(state, None, 0.0))
    if nsteps == 0:
        return traj

    ops = build_operators(grid, eps, dt, scheme)
    snap = _schedule(snapshot_every, dt, nsteps)
    diag = _schedule(diag_every, dt, nsteps)
    events = sorted(snap | diag | {nsteps})

    n = grid.N + 2
    v, u, th = state.v.copy(), state.u.copy(), state.theta.copy()
    pv, pu, pth = np.zeros(n), np.zeros(n), np.zeros(n)
    zeros = np.zeros(n)
    work = _work(n)
    code = 0 if scheme == "imex-euler" else 1
    kparams = _kernel_law(law, eps)
    dissipated = 0.0
    flag_level = -10.0 * grid.dx**2
    flagged = False
    done = 0
    for target in events:
        status, k, dd, low = K.advance(
            code, v, u, th, target - done, dt, grid.dx, eps, *kparams,
            ops.lu_u, ops.lu_v, ops.lu_theta, blowup_cap, zeros, ops.hist_v,
            ops.hist_theta, done > 0, work, pv, pu, pth,
        )
        dissipated += dd
        if low < flag_level and not flagged:
            flagged = True
            msg = f"theta dipped to {low:.3e} before t = {(done + k) * dt:.6g}"
            traj.warnings.append(msg)
            log.warning(msg)
        if status != K.STATUS_OK:
            last = State((done + k) * dt, pv.copy(), pu.copy(), pth.copy())
            err = BlowUpError if status in (K.STATUS_CAP, K.STATUS_NONFINITE) else SolverError
            raise err(
                f"{_STATUS_TEXT[status]} at t = {(done + k + 1) * dt:.6g}",
                last_state=last, trajectory=traj,
            )
        done = target
        t = done * dt
        state = State(t, v.copy(), u.copy(), th.copy())
        if done == nsteps or done in diag:
            prev = State(t - dt, pv.copy(), pu.copy(), pth.copy())
            traj.records.append(recorder.record(state, prev, dissipated))
        if done == nsteps or done in snap:
            traj.snapshots.append(state)
    return traj


def run(config) -> Trajectory:
    """Build everything a RunConfig describes and integrate it."""
    from .initial_data import make_rough_datum, mollify
    from .mesh import build_grid
    from .model import make_material_law, regularize

    grid = build_grid(config.N, config.a, config.b)
    law = regularize(make_material_law(config.law, config.K_f, table=config.law_table()),
                     config.eps_pde)
    rough = make_rough_datum(config.datum_spec(), grid)
    moll = mollify(rough, config.eps_data)
    s0 = State(0.0, moll.v0.copy(), moll.u0.copy(), moll.theta0.copy())
    return integrate(
        s0, grid, law, config.eps_pde, T_end=config.T_end, safety=config.safety,
        scheme=config.scheme, snapshot_every=config.snapshot_every,
        diag_every=config.diag_every, blowup_cap=config.blowup_cap,
        ladder_b=config.ladder_b, ladder_kmax=config.ladder_kmax, datum=moll,
        config=config,
    )
