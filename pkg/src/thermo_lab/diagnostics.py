"""Energy, entropy, norms and the large-time verdicts computed on trajectories.

All spatial integrals use the composite trapezoid rule on the nodal grid;
the strain part of the energy uses forward differences on cells, which is
the pairing under which the semi-discrete scheme exchanges energy exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .mesh import Grid, State, d1_even, d1_odd, d2_dirichlet, d2_neumann, edge_diff
from .model import EntropyTransform, RegularizedLaw


class NonPositiveTemperatureError(ValueError):
    def __init__(self, index: int, value: float):
        super().__init__(f"theta = {value:.3e} <= 0 at node {index}; entropy undefined")
        self.index = index
        self.value = value


class PlateauError(RuntimeError):
    """Entropy has not settled; no limit temperature is reported."""


# ---------------------------------------------------------------------------
# scalar functionals of one state
# ---------------------------------------------------------------------------


def l2_norm(values, g: Grid) -> float:
    return math.sqrt(g.integrate(np.square(values)))


def energy(s: State, g: Grid) -> float:
    kinetic = 0.5 * g.integrate(s.v**2)
    strain = 0.5 * g.dx * np.sum(edge_diff(s.u, g.dx) ** 2)
    return float(kinetic + strain + g.integrate(s.theta))


def energy_dissipation_rate(s: State, g: Grid, eps: float) -> float:
    vxx = d2_dirichlet(s.v, g.dx)
    uxx = d2_dirichlet(s.u, g.dx)
    return float(eps * g.dx * (np.sum(vxx**2) + np.sum(uxx**2)))


def _check_positive(theta):
    bad = np.flatnonzero(~(theta > 0))
    if bad.size:
        raise NonPositiveTemperatureError(int(bad[0]), float(theta[bad[0]]))


def entropy_density(s: State, t: EntropyTransform) -> np.ndarray:
    _check_positive(s.theta)
    return t.ell(s.theta)


def entropy_total(s: State, t: EntropyTransform, g: Grid) -> float:
    return g.integrate(entropy_density(s, t))


def entropy_dissipation(s: State, law, t: EntropyTransform, g: Grid, z=None) -> float:
    """sum f_eps'(theta) (D1 z)^2 dx with z = ell_eps(theta)."""
    if z is None:
        z = entropy_density(s, t)
    zx = d1_even(z, g.dx)
    return g.integrate(law.fprime(s.theta) * zx**2)


def entropy_rate(s: State, law, t: EntropyTransform, g: Grid) -> float:
    """d/dt of sum ell(theta) dx along the semi-discrete flow."""
    from .solver import rhs

    _check_positive(s.theta)
    _, _, dtheta = rhs(s, law, g, law.eps)
    return g.integrate(-dtheta / law.f(s.theta))


def z_residual(s_prev: State, s_next: State, law, t: EntropyTransform, g: Grid,
               z_prev=None, z_next=None):
    """Nodal residual of z_t = z_xx - f'(theta) z_x^2 + v_x with midpoint averages."""
    dt = s_next.t - s_prev.t
    if not dt > 0:
        raise ValueError("states must be consecutive in time")
    zp = entropy_density(s_prev, t) if z_prev is None else z_prev
    zn = entropy_density(s_next, t) if z_next is None else z_next
    zb = 0.5 * (zp + zn)
    thb = 0.5 * (s_prev.theta + s_next.theta)
    vb = 0.5 * (s_prev.v + s_next.v)
    zx = d1_even(zb, g.dx)
    return (zn - zp) / dt - d2_neumann(zb, g.dx) + law.fprime(thb) * zx**2 - d1_odd(vb, g.dx)


def theta_residual(s_prev: State, s_next: State, law, g: Grid):
    """Nodal residual of theta_t = theta_xx - f(theta) v_x with midpoint averages."""
    dt = s_next.t - s_prev.t
    if not dt > 0:
        raise ValueError("states must be consecutive in time")
    thb = 0.5 * (s_prev.theta + s_next.theta)
    vb = 0.5 * (s_prev.v + s_next.v)
    return (s_next.theta - s_prev.theta) / dt - d2_neumann(thb, g.dx) + law.f(thb) * d1_odd(vb, g.dx)


def sup_deviation(values, a: float) -> float:
    return float(np.max(np.abs(np.asarray(values) - a)))


def _log_lp(dev_abs, w, p):
    m = dev_abs.max()
    if m == 0:
        return -np.inf
    return math.log(m) + math.log(np.dot(w, (dev_abs / m) ** p)) / p


def lp_ladder(values, a: float, b: float, kmax: int, g: Grid):
    """[(p_k, alpha_k, ||values - a||_{L^p_k})] for p_k = 2^k, alpha_k = (2^k - 1) b."""
    if not 0 <= kmax <= 20:
        raise ValueError("kmax must lie in [0, 20]")
    if not 0 < b < 1 / 7:
        raise ValueError("b must lie in (0, 1/7)")
    dev = np.abs(np.asarray(values, dtype=float) - a)
    w = g.weights
    out = []
    for k in range(kmax + 1):
        p = 2**k
        out.append((p, (p - 1) * b, math.exp(_log_lp(dev, w, p))))
    return out


def negative_sobolev_norm(values, g: Grid) -> float:
    """Dual W^{1,2} norm: ||w||_{W^{1,2}} where -D2 w + w = values (Neumann)."""
    n = g.N + 2
    h2 = 1.0 / g.dx**2
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + 2.0 * h2
    ab[0, 1:] = -h2
    ab[2, :-1] = -h2
    ab[0, 1] = -2.0 * h2
    ab[2, -2] = -2.0 * h2
    w = solve_banded((1, 1), ab, np.asarray(values, dtype=float))
    return math.sqrt(g.integrate(w**2) + g.dx * np.sum(edge_diff(w, g.dx) ** 2))


def dual_norm_constant(g: Grid, count: int = 50, modes: int = 8, seed: int = 0) -> float:
    """max ||psi||_{L2} / ||psi_x||_* over seeded smooth psi with zero ends."""
    rng = np.random.default_rng(seed)
    s = (g.x - g.a) / g.length
    k = np.arange(1, modes + 1)
    basis = np.sin(np.pi * np.outer(s, k))
    worst = 0.0
    for _ in range(count):
        psi = basis @ (rng.standard_normal(modes) / k)
        psi[0] = psi[-1] = 0.0
        dpsi = np.gradient(psi, g.dx, edge_order=2)
        worst = max(worst, l2_norm(psi, g) / negative_sobolev_norm(dpsi, g))
    return worst


def predict_theta_infinity_energy(datum, g: Grid) -> float:
    """Total energy over |Omega| (the limit temperature when f = id and no
    energy is dissipated)."""
    kinetic = 0.5 * g.integrate(np.asarray(datum.u0t) ** 2)
    strain = 0.5 * g.dx * np.sum(edge_diff(np.asarray(datum.u0), g.dx) ** 2)
    return float((kinetic + strain + g.integrate(datum.theta0)) / g.length)


# ---------------------------------------------------------------------------
# per-step records
# ---------------------------------------------------------------------------

RECORD_FIELDS = (
    "t", "E", "D_cum", "Z", "Z_diss", "u_sup", "u_L2", "theta_min",
    "theta_max", "theta_dev_sup", "z_residual_norm",
)


@dataclass
class DiagnosticsRecord:
    """One diagnostics sample. theta_dev_sup and the ladder are taken about
    theta_ref = ell^{-1}(Z / |Omega|), the entropy-equivalent temperature."""

    t: float
    E: float
    D_cum: float
    Z: float
    Z_diss: float
    u_sup: float
    u_L2: float
    theta_min: float
    theta_max: float
    theta_dev_sup: float
    z_residual_norm: float
    theta_ref: float = float("nan")
    ladder: list = field(default_factory=list)

    def dev_about(self, a: float) -> float:
        """||theta - a||_inf, exact from the stored extremes."""
        return max(self.theta_max - a, a - self.theta_min)


class Recorder:
    def __init__(self, grid, law, transform, eps, ladder_b=0.14, ladder_kmax=14):
        self.grid = grid
        self.law = law
        self.transform = transform
        self.eps = eps
        self.ladder_b = ladder_b
        self.ladder_kmax = ladder_kmax

    def record(self, s: State, prev: State | None, dissipated: float) -> DiagnosticsRecord:
        g = self.grid
        th_min = float(s.theta.min())
        th_max = float(s.theta.max())
        nan = float("nan")
        Z = Z_diss = res = ref = dev = nan
        ladder = []
        if th_min > 0:
            z = self.transform.ell(s.theta)
            Z = g.integrate(z)
            Z_diss = entropy_dissipation(s, self.law, self.transform, g, z=z)
            ref = self.transform.ell_inverse(Z / g.length, (th_min, th_max))
            dev = max(th_max - ref, ref - th_min)
            ladder = [(p, n) for p, _, n in lp_ladder(s.theta, ref, self.ladder_b, self.ladder_kmax, g)]
            res = 0.0
            if prev is not None and prev.theta.min() > 0:
                res = l2_norm(z_residual(prev, s, self.law, self.transform, g, z_next=z), g)
        return DiagnosticsRecord(
            t=float(s.t), E=energy(s, g), D_cum=float(dissipated), Z=Z, Z_diss=Z_diss,
            u_sup=float(np.max(np.abs(s.u))), u_L2=l2_norm(s.u, g),
            theta_min=th_min, theta_max=th_max, theta_dev_sup=dev,
            z_residual_norm=res, theta_ref=ref, ladder=ladder,
        )


# ---------------------------------------------------------------------------
# trajectory-level quantities
# ---------------------------------------------------------------------------


def _series(records, name):
    return np.array([getattr(r, name) for r in records])


def estimate_theta_infinity_records(records, transform: EntropyTransform, grid: Grid,
                                    plateau_tol: float = 1e-6) -> float:
    t = _series(records, "t")
    Z = _series(records, "Z")
    if not np.all(np.isfinite(Z)):
        raise PlateauError("entropy series contains undefined values")
    tail = t >= 0.9 * t[-1]
    drift = np.max(np.abs(Z[tail] - Z[-1]))
    if drift > plateau_tol * abs(Z[-1]) + 1e-14:
        raise PlateauError(
            f"entropy still moving over the last 10% of the run (drift {drift:.3e})"
        )
    last = records[-1]
    return transform.ell_inverse(Z[-1] / grid.length, (last.theta_min, last.theta_max))


def estimate_theta_infinity(traj, transform: EntropyTransform | None = None,
                            plateau_tol: float = 1e-6) -> float:
    """ell^{-1}(Z(T_end) / |Omega|), once Z has plateaued."""
    transform = transform or EntropyTransform(traj.law)
    return estimate_theta_infinity_records(traj.records, transform, traj.grid, plateau_tol)


def _snapshot_at(traj, t: float) -> State:
    times = traj.times
    i = int(np.argmin(np.abs(times - t)))
    return traj.snapshots[i]


def windowed_ladder_maxima(traj, t_star: float, b: float = 0.14, kmax: int = 8,
                           a: float | None = None, delta: float | None = None):
    """M_k = 1 + max over stored t in (t*, t* + 1/2) of
    (t - t* + delta)^{-alpha_k} * int |theta - a|^{p_k}."""
    times = traj.times
    if times[-1] < t_star + 0.5 - 1e-12 or times[0] > t_star + 1e-12:
        raise ValueError("window (t*, t* + 1/2) is not covered by the trajectory")
    inside = [s for s in traj.snapshots if t_star < s.t < t_star + 0.5]
    if not inside:
        raise ValueError("no snapshots inside (t*, t* + 1/2)")
    if a is None:
        a = estimate_theta_infinity(traj)
    if delta is None:
        delta = sup_deviation(_snapshot_at(traj, t_star).theta, a) ** (1.0 / b)
    w = traj.grid.weights
    out = []
    for k in range(kmax + 1):
        p = 2**k
        alpha = (p - 1) * b
        best = -np.inf
        for s in inside:
            lp = _log_lp(np.abs(s.theta - a), w, p)
            best = max(best, p * lp - alpha * math.log(s.t - t_star + delta))
        out.append(1.0 + (math.exp(best) if best < 700 else math.inf))
    return out


def fit_holder(records, t_star: float, a: float, span: float = 0.5):
    """Least-squares fit of |dev(t) - dev(t*)| ~ C (t - t*)^beta on (t*, t*+span).

    Returns (C, beta), or (nan, nan) if the increments vanish.
    """
    t = _series(records, "t")
    dev = np.array([r.dev_about(a) for r in records])
    i0 = int(np.argmin(np.abs(t - t_star)))
    sel = (t > t[i0]) & (t < t[i0] + span)
    x = t[sel] - t[i0]
    y = np.abs(dev[sel] - dev[i0])
    keep = y > 0
    if keep.sum() < 3:
        return float("nan"), float("nan")
    beta, logc = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(math.exp(logc)), float(beta)


def window_averages(t, values, width: float = 1.0):
    """(t_j, int_{t_j - width}^{t_j} values) at t_j = width, 2 width, ... <= t[-1]."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(t))])
    ends = np.arange(t[0] + width, t[-1] + 1e-9, width)
    at = np.interp(ends, t, cum)
    start = np.interp(ends - width, t, cum)
    return ends, at - start


def u_decay_metric(traj, window: float = 1.0, min_samples: int = 4):
    """[(t_k, int_{t_k}^{t_k+window} ||u(t) - u(t_k)||_{L2}^2 dt)] on consecutive windows."""
    times = traj.times
    if times.size < 2 or np.max(np.diff(times)) > window / min_samples + 1e-12:
        raise ValueError(
            f"insufficient snapshot cadence: need at least {min_samples} per window of {window}"
        )
    g = traj.grid
    out = []
    start = times[0]
    while start + window <= times[-1] + 1e-9:
        i0 = int(np.argmin(np.abs(times - start)))
        sel = (times >= times[i0] - 1e-12) & (times <= times[i0] + window + 1e-9)
        idx = np.flatnonzero(sel)
        u0 = traj.snapshots[i0].u
        vals = np.array([g.integrate((traj.snapshots[j].u - u0) ** 2) for j in idx])
        out.append((float(times[i0]), float(np.trapezoid(vals, times[idx]))))
        start += window
    return out


def energy_defect(records) -> np.ndarray:
    E = _series(records, "E")
    return E + _series(records, "D_cum") - E[0]


def entropy_increments(records) -> np.ndarray:
    return np.diff(_series(records, "Z"))


def _nonincreasing(values, tol):
    return bool(np.all(np.diff(values) <= tol))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

TOLERANCES = {
    "theta_dev": 0.02,
    "u_sup": 0.02,
    "theta_inf_formula": 0.03,
    "energy_rel": 1e-3,
    "entropy_rel": 1e-8,
    "entropy_abs": 1e-12,
    "window_abs": 1e-9,
}


@dataclass
class StabilizationReport:
    theta_inf: float | None
    converged: bool
    T_end: float
    theta_dev_final: float | None = None
    u_sup_final: float | None = None
    theta_inf_predicted: float | None = None
    energy_defect_max: float | None = None
    entropy_max_increase: float | None = None
    theta_min_after_tau: float | None = None
    theta_max_after_tau: float | None = None
    holder_C: float | None = None
    holder_exponent: float | None = None
    window_t: list = field(default_factory=list)
    window_theta_dev: list = field(default_factory=list)
    window_u_sup: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def asymptotics_attempted(self) -> bool:
        return self.T_end > 0

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if key in ("verdicts", "config_echo"):
                continue
            if isinstance(value, list):
                value = ",".join(repr(float(x)) if not isinstance(x, str) else x for x in value)
            lines.append(f"{key}={value}")
        if not self.asymptotics_attempted:
            lines.append("asymptotics=no asymptotics attempted")
        for key, value in self.verdicts.items():
            lines.append(f"verdict.{key}={'pass' if value else 'fail'}")
        for key, value in self.config_echo.items():
            lines.append(f"config.{key}={value}")
        return "\n".join(lines) + "\n"


def evaluate(records, grid: Grid, law, *, T_end: float, datum=None, tau: float = 1.0,
             transient: float = 0.2, config_echo=None, tol=None) -> StabilizationReport:
    """Verdicts from a diagnostics series (plus the datum for the formula check)."""
    tol = {**TOLERANCES, **(tol or {})}
    transform = EntropyTransform(law)
    t = _series(records, "t")
    rep = StabilizationReport(theta_inf=None, converged=False, T_end=float(T_end),
                              config_echo=dict(config_echo or {}))

    E0 = records[0].E
    defect = energy_defect(records)
    rep.energy_defect_max = float(np.max(np.abs(defect)))
    rep.verdicts["energy_balance"] = rep.energy_defect_max <= tol["energy_rel"] * abs(E0)

    Z = _series(records, "Z")
    if np.all(np.isfinite(Z)):
        inc = np.diff(Z)
        rep.entropy_max_increase = float(inc.max()) if inc.size else 0.0
        rep.verdicts["entropy_monotone"] = bool(
            np.all(inc <= tol["entropy_rel"] * abs(Z[0]) + tol["entropy_abs"])
        )
    else:
        rep.verdicts["entropy_monotone"] = False
        rep.notes.append("entropy undefined at some record (theta <= 0)")

    if not T_end > 0:
        rep.notes.append("no asymptotics attempted")
        return rep

    late = t >= min(tau, t[-1])
    th_min = _series(records, "theta_min")[late]
    th_max = _series(records, "theta_max")[late]
    rep.theta_min_after_tau = float(th_min.min())
    rep.theta_max_after_tau = float(th_max.max())
    rep.verdicts["two_sided_bounds"] = bool(
        rep.theta_min_after_tau > 0 and np.isfinite(rep.theta_max_after_tau)
    )

    try:
        a = estimate_theta_infinity_records(records, transform, grid)
        rep.theta_inf = float(a)
        rep.converged = True
    except PlateauError as exc:
        rep.notes.append(str(exc))
        rep.verdicts["theta_inf_converged"] = False
        return rep

    last = records[-1]
    rep.theta_dev_final = float(last.dev_about(a))
    rep.u_sup_final = float(last.u_sup)
    rep.verdicts["theta_uniform"] = rep.theta_dev_final <= tol["theta_dev"]
    rep.verdicts["u_uniform"] = rep.u_sup_final <= tol["u_sup"]

    dev = np.array([r.dev_about(a) for r in records])
    ends, A_theta = window_averages(t, dev)
    _, A_u = window_averages(t, _series(records, "u_sup"))
    rep.window_t = ends.tolist()
    rep.window_theta_dev = A_theta.tolist()
    rep.window_u_sup = A_u.tolist()
    after = ends >= transient * T_end
    rep.verdicts["theta_window_monotone"] = _nonincreasing(A_theta[after], tol["window_abs"])
    rep.verdicts["u_window_monotone"] = _nonincreasing(A_u[after], tol["window_abs"])

    if datum is not None and law.kind == "identity":
        src = getattr(datum, "source", datum)
        rep.theta_inf_predicted = predict_theta_infinity_energy(src, grid)
        rep.verdicts["theta_inf_formula"] = (
            abs(rep.theta_inf - rep.theta_inf_predicted) <= tol["theta_inf_formula"]
        )

    # Hoelder-type fit at the first record passing the smallness gate
    b = 0.14
    for r in records:
        if r.t > 1.0 and r.t + 0.5 <= t[-1] and r.dev_about(a) ** (1 / b) <= 0.5:
            rep.holder_C, rep.holder_exponent = fit_holder(records, r.t, a)
            break
    return rep


def build_report(traj, **kwargs) -> StabilizationReport:
    cfg = traj.config
    echo = cfg.echo() if cfg is not None and hasattr(cfg, "echo") else {}
    T_end = traj.records[-1].t
    return evaluate(traj.records, traj.grid, traj.law, T_end=T_end, datum=traj.datum,
                    config_echo=echo, **kwargs)
