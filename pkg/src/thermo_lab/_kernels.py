"""Compiled inner loops: constitutive laws, banded LU, and the time steppers.

Everything here works on plain float64 arrays so that numba can compile it.
Field arrays have length N + 2 (boundary nodes included); interior matrices
act on the N interior nodes only.
"""

import math

import numpy as np
from numba import njit

_jit = {"cache": True, "nogil": True}

KIND_IDENTITY = 0
KIND_SATURATING = 1
KIND_TABLE = 2

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_CAP = 2
STATUS_NEWTON = 3


# ---------------------------------------------------------------------------
# constitutive laws
# ---------------------------------------------------------------------------


@njit(**_jit)
def base_law(kind, K, tx, ts, xi):
    """f, f', f'' of the unregularized law at xi >= 0."""
    if kind == KIND_IDENTITY:
        return xi, 1.0, 0.0
    if kind == KIND_SATURATING:
        e = math.exp(-xi)
        return K * (1.0 - e), K * e, -K * e
    # piecewise-linear f' through (tx[j], ts[j]); constant past the last knot
    m = tx.shape[0]
    acc = 0.0
    for j in range(m - 1):
        x0 = tx[j]
        x1 = tx[j + 1]
        s0 = ts[j]
        s1 = ts[j + 1]
        if xi <= x1:
            h = xi - x0
            curv = (s1 - s0) / (x1 - x0)
            return acc + s0 * h + 0.5 * curv * h * h, s0 + curv * h, curv
        acc += 0.5 * (s0 + s1) * (x1 - x0)
    return acc + ts[m - 1] * (xi - tx[m - 1]), ts[m - 1], 0.0


@njit(**_jit)
def reg_law(kind, K, eps, tx, ts, xi):
    """f_eps, f_eps', f_eps'' with the linear extension below zero.

    f_eps = (1 - eps/2) f + (eps/2) K (1 - exp(-xi)); eps = 0 gives f itself.
    """
    w = 0.5 * eps
    if xi < 0.0:
        f0, fp0, _ = base_law(kind, K, tx, ts, 0.0)
        slope = (1.0 - w) * fp0 + w * K
        return slope * xi, slope, 0.0
    f, fp, fpp = base_law(kind, K, tx, ts, xi)
    e = math.exp(-xi)
    return (
        (1.0 - w) * f + w * K * (1.0 - e),
        (1.0 - w) * fp + w * K * e,
        (1.0 - w) * fpp - w * K * e,
    )


@njit(**_jit)
def law_eval(kind, K, eps, tx, ts, xi, out_f, out_fp, out_fpp):
    flat = xi.ravel()
    of = out_f.ravel()
    ofp = out_fp.ravel()
    ofpp = out_fpp.ravel()
    for i in range(flat.shape[0]):
        of[i], ofp[i], ofpp[i] = reg_law(kind, K, eps, tx, ts, flat[i])


@njit(**_jit)
def inverse_f_eval(kind, K, eps, tx, ts, xi, out):
    flat = xi.ravel()
    o = out.ravel()
    for i in range(flat.shape[0]):
        f, _, _ = reg_law(kind, K, eps, tx, ts, flat[i])
        o[i] = 1.0 / f


# ---------------------------------------------------------------------------
# banded LU without pivoting (all our matrices are SPD or diagonally dominant)
# band storage: B[i, p + j - i] = M[i, j] for |i - j| <= p
# ---------------------------------------------------------------------------


@njit(**_jit)
def band_factor(B):
    """In-place LU factorization of a band matrix; returns B holding L\\U."""
    n, width = B.shape
    p = (width - 1) // 2
    for k in range(n):
        piv = B[k, p]
        if piv == 0.0 or not math.isfinite(piv):
            raise ZeroDivisionError("singular band matrix")
        for i in range(k + 1, min(n, k + p + 1)):
            lik = B[i, p + k - i] / piv
            B[i, p + k - i] = lik
            for j in range(k + 1, min(n, k + p + 1)):
                B[i, p + j - i] -= lik * B[k, p + j - k]
    return B


@njit(**_jit)
def band_solve(LU, rhs):
    """Solve with factors from band_factor; rhs is overwritten and returned."""
    n, width = LU.shape
    p = (width - 1) // 2
    for i in range(n):
        acc = rhs[i]
        for j in range(max(0, i - p), i):
            acc -= LU[i, p + j - i] * rhs[j]
        rhs[i] = acc
    for i in range(n - 1, -1, -1):
        acc = rhs[i]
        for j in range(i + 1, min(n, i + p + 1)):
            acc -= LU[i, p + j - i] * rhs[j]
        rhs[i] = acc / LU[i, p]
    return rhs


# ---------------------------------------------------------------------------
# difference operators on full nodal arrays
# ---------------------------------------------------------------------------


@njit(**_jit)
def d1_odd(v, dx, out):
    """Central first difference with ghost antisymmetry (v = v_xx = 0)."""
    n = v.shape[0]
    out[0] = v[1] / dx
    out[n - 1] = -v[n - 2] / dx
    inv = 0.5 / dx
    for i in range(1, n - 1):
        out[i] = (v[i + 1] - v[i - 1]) * inv
    return out


@njit(**_jit)
def d2_interior(u, dx, out):
    """Dirichlet second difference on interior nodes; zero at boundary nodes."""
    n = u.shape[0]
    inv = 1.0 / (dx * dx)
    out[0] = 0.0
    out[n - 1] = 0.0
    for i in range(1, n - 1):
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv
    return out


@njit(**_jit)
def d2_neumann(th, dx, out):
    """Second difference with the mirror ghost (ghost = first interior)."""
    n = th.shape[0]
    inv = 1.0 / (dx * dx)
    out[0] = 2.0 * (th[1] - th[0]) * inv
    out[n - 1] = 2.0 * (th[n - 2] - th[n - 1]) * inv
    for i in range(1, n - 1):
        out[i] = (th[i + 1] - 2.0 * th[i] + th[i - 1]) * inv
    return out


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


@njit(**_jit)
def _implicit_coupling(kind, K, eps, tx, ts, th, c, dt, out, out_f):
    """Solve y + dt*c*f_eps(y) = th node by node (Newton); out_f = f_eps(y).

    The first iterate is one Newton step from th; iteration stops on a
    roundoff-level residual, so out_f is f_eps at exactly the returned y.
    False on failure.
    """
    for i in range(th.shape[0]):
        a = dt * c[i]
        t = th[i]
        f, fp, _ = reg_law(kind, K, eps, tx, ts, t)
        hp = 1.0 + a * fp
        if hp <= 0.0:
            return False
        y = t - a * f / hp
        tol = 1e-15 * max(1.0, abs(t))
        ok = False
        for _ in range(60):
            f, fp, _ = reg_law(kind, K, eps, tx, ts, y)
            h = y + a * f - t
            if abs(h) <= tol:
                ok = True
                break
            hp = 1.0 + a * fp
            if hp <= 0.0 or not math.isfinite(h):
                return False
            dy = h / hp
            y -= dy
            if abs(dy) <= 1e-16 * max(1.0, abs(y)):
                # stalled at roundoff: accept, with f at the final iterate
                f, _, _ = reg_law(kind, K, eps, tx, ts, y)
                ok = True
                break
        if not ok:
            return False
        out[i] = y
        out_f[i] = f
    return True


@njit(**_jit)
def _finish(v, u, th, dx, eps, rv, ru, tmp, tmp2):
    """Re-impose boundary values; return (status, eps*(|D2 rv|^2 + |D2 ru|^2))."""
    n = v.shape[0]
    v[0] = 0.0
    v[n - 1] = 0.0
    u[0] = 0.0
    u[n - 1] = 0.0
    for i in range(n):
        if not (math.isfinite(v[i]) and math.isfinite(u[i]) and math.isfinite(th[i])):
            return STATUS_NONFINITE, 0.0
    d2_interior(ru, dx, tmp)
    d2_interior(rv, dx, tmp2)
    diss = 0.0
    for i in range(1, n - 1):
        diss += tmp[i] * tmp[i] + tmp2[i] * tmp2[i]
    return STATUS_OK, eps * diss * dx


@njit(**_jit)
def step_euler(
    v, u, th, dt, dx, eps, kind, K, tx, ts, LU_u, LU_v, LU_th, fv, fu, fth, work
):
    """One IMEX-Euler step in place. Returns (status, dissipation rate at t+dt).

    Order: temperature (coupling implicit in theta with the old velocity, then
    implicit diffusion), deformation (implicit viscosity, old velocity),
    velocity (implicit beam term, new deformation, coupling f_eps evaluated at
    the post-coupling temperature so the heat exchange pairs with it).
    """
    n = v.shape[0]
    m = n - 2
    c = work[0]
    g = work[1]
    tmp = work[2]
    rhs = work[3]
    tmp2 = work[4]

    # temperature
    d1_odd(v, dx, c)
    for i in range(n):
        tmp[i] = th[i] + dt * fth[i]
    if not _implicit_coupling(kind, K, eps, tx, ts, tmp, c, dt, rhs, g):
        return STATUS_NEWTON, 0.0
    band_solve(LU_th, rhs)
    for i in range(n):
        th[i] = rhs[i]

    # deformation
    r = rhs[:m]
    for i in range(m):
        r[i] = u[i + 1] + dt * (v[i + 1] + fu[i + 1])
    band_solve(LU_u, r)
    for i in range(m):
        u[i + 1] = r[i]

    # velocity
    d2_interior(u, dx, tmp)
    inv2 = 0.5 / dx
    for i in range(m):
        r[i] = v[i + 1] + dt * (tmp[i + 1] - (g[i + 2] - g[i]) * inv2 + fv[i + 1])
    band_solve(LU_v, r)
    for i in range(m):
        v[i + 1] = r[i]

    return _finish(v, u, th, dx, eps, v, u, tmp, tmp2)


@njit(**_jit)
def step_cnab2(
    v, u, th, dt, dx, eps, kind, K, tx, ts, LU_u, LU_w, LU_th, fv, fu, fth,
    hist_v, hist_th, have_hist, work,
):
    """One Crank-Nicolson / Adams-Bashforth-2 step in place.

    The (v, u) pair and the temperature diffusion are Crank-Nicolson; the two
    f_eps couplings are extrapolated from this and the previous step.
    hist_v / hist_th hold the previous coupling terms and are overwritten.
    Returns (status, dissipation rate at the step midpoint).
    """
    n = v.shape[0]
    m = n - 2
    h = 0.5 * dt
    c = work[0]
    g = work[1]
    tmp = work[2]
    rhs = work[3]
    av = work[4]
    au = work[5]
    r_v = work[6]
    r_u = work[7]
    v_old = work[8]
    u_old = work[9]
    for i in range(n):
        v_old[i] = v[i]
        u_old[i] = u[i]

    d1_odd(v, dx, c)
    inv2 = 0.5 / dx
    for i in range(n):
        g[i], _, _ = reg_law(kind, K, eps, tx, ts, th[i])
    for i in range(n):
        cur_th = -g[i] * c[i]
        cur_v = 0.0
        if 0 < i < n - 1:
            cur_v = -(g[i + 1] - g[i - 1]) * inv2
        if have_hist:
            ex_th = 1.5 * cur_th - 0.5 * hist_th[i]
            ex_v = 1.5 * cur_v - 0.5 * hist_v[i]
        else:
            ex_th = cur_th
            ex_v = cur_v
        hist_th[i] = cur_th
        hist_v[i] = cur_v
        tmp[i] = ex_th
        av[i] = ex_v
    for i in range(n):
        c[i] = tmp[i]
        g[i] = av[i]

    # temperature: (I - h D2N) th+ = (I + h D2N) th + dt F
    d2_neumann(th, dx, tmp)
    for i in range(n):
        rhs[i] = th[i] + h * tmp[i] + dt * (c[i] + fth[i])
    band_solve(LU_th, rhs)
    for i in range(n):
        th[i] = rhs[i]

    # coupled (v, u) Crank-Nicolson reduced to a single solve for v:
    # [(I - h eps A)(I + h eps A^2) - h^2 A] v+ = (I - h eps A) r_v + h A r_u
    d2_interior(v, dx, av)
    d2_interior(u, dx, au)
    d2_interior(av, dx, tmp)
    for i in range(1, n - 1):
        r_v[i] = v[i] - h * eps * tmp[i] + h * au[i] + dt * (g[i] + fv[i])
        r_u[i] = u[i] + h * eps * au[i] + h * v[i] + dt * fu[i]
    r_v[0] = 0.0
    r_v[n - 1] = 0.0
    r_u[0] = 0.0
    r_u[n - 1] = 0.0
    d2_interior(r_v, dx, av)
    d2_interior(r_u, dx, au)
    r = rhs[:m]
    for i in range(m):
        r[i] = r_v[i + 1] - h * eps * av[i + 1] + h * au[i + 1]
    band_solve(LU_w, r)
    for i in range(m):
        v[i + 1] = r[i]
    for i in range(m):
        r[i] = r_u[i + 1] + h * v[i + 1]
    band_solve(LU_u, r)
    for i in range(m):
        u[i + 1] = r[i]

    v[0] = 0.0
    v[n - 1] = 0.0
    for i in range(n):
        v_old[i] = 0.5 * (v_old[i] + v[i])
        u_old[i] = 0.5 * (u_old[i] + u[i])
    return _finish(v, u, th, dx, eps, v_old, u_old, tmp, c)


@njit(**_jit)
def max_abs(v, u, th):
    big = 0.0
    for i in range(v.shape[0]):
        a = max(abs(v[i]), abs(u[i]), abs(th[i]))
        if a > big:
            big = a
    return big


@njit(**_jit)
def advance(
    scheme, v, u, th, nsteps, dt, dx, eps, kind, K, tx, ts, LU_u, LU_v, LU_th,
    cap, zeros, hist_v, hist_th, have_hist, work, pv, pu, pth,
):
    """Run nsteps steps in place.

    Returns (status, steps done, eps-dissipation accumulated, min theta seen).
    pv, pu, pth receive the state before the last completed step.
    """
    dissipated = 0.0
    theta_low = np.inf
    for k in range(nsteps):
        pv[:] = v
        pu[:] = u
        pth[:] = th
        if scheme == 0:
            status, rate = step_euler(
                v, u, th, dt, dx, eps, kind, K, tx, ts, LU_u, LU_v, LU_th,
                zeros, zeros, zeros, work,
            )
        else:
            status, rate = step_cnab2(
                v, u, th, dt, dx, eps, kind, K, tx, ts, LU_u, LU_v, LU_th,
                zeros, zeros, zeros, hist_v, hist_th, have_hist or k > 0, work,
            )
        if status != STATUS_OK:
            return status, k, dissipated, theta_low
        if max_abs(v, u, th) > cap:
            return STATUS_CAP, k, dissipated, theta_low
        dissipated += dt * rate
        for i in range(th.shape[0]):
            if th[i] < theta_low:
                theta_low = th[i]
    return STATUS_OK, nsteps, dissipated, theta_low
