"""Constitutive laws, their regularizations and the entropy transform."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

LAW_KINDS = {
    "identity": K.KIND_IDENTITY,
    "saturating": K.KIND_SATURATING,
    "custom-table": K.KIND_TABLE,
}

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _evaluate(code, K_f, eps, tx, ts, xi):
    xi = np.asarray(xi, dtype=float)
    arr = np.ascontiguousarray(xi)
    f = np.empty_like(arr)
    fp = np.empty_like(arr)
    fpp = np.empty_like(arr)
    K.law_eval(code, K_f, eps, tx, ts, arr, f, fp, fpp)
    if xi.ndim == 0:
        return float(f.flat[0]), float(fp.flat[0]), float(fpp.flat[0])
    return f, fp, fpp


@dataclass(frozen=True, eq=False)
class MaterialLaw:
    """Coupling function f with f(0) = 0 and 0 < f' <= K_f on [0, inf).

    ``custom-table`` laws are given by knots ``table_xi`` (starting at 0) and
    positive slopes ``table_slope``; f' is interpolated linearly between knots
    and held constant beyond the last one.
    """

    kind: str
    K_f: float
    table_xi: np.ndarray = field(default_factory=lambda: np.zeros(1))
    table_slope: np.ndarray = field(default_factory=lambda: np.ones(1))

    @property
    def code(self) -> int:
        return LAW_KINDS[self.kind]

    @property
    def eps(self) -> float:
        return 0.0

    def params(self):
        return self.code, float(self.K_f), 0.0, self.table_xi, self.table_slope

    def f(self, xi):
        return _evaluate(*self.params(), xi)[0]

    def fprime(self, xi):
        return _evaluate(*self.params(), xi)[1]

    def check_invariants(self, xi_max: float = 100.0, n: int = 10_000) -> None:
        xi = np.linspace(0.0, xi_max, n)
        f, fp, _ = _evaluate(*self.params(), xi)
        if f[0] != 0.0:
            raise ValueError(f"f(0) = {f[0]} != 0")
        if np.any(fp <= 0.0) or np.any(fp > self.K_f * (1 + 1e-12)):
            raise ValueError("f' leaves (0, K_f] on the sample grid")
        if np.any(np.diff(f) < 0.0):
            raise ValueError("f is not nondecreasing on the sample grid")


@dataclass(frozen=True, eq=False)
class RegularizedLaw:
    """f_eps = (1 - eps/2) f + (eps/2) K_f (1 - exp(-xi)), extended linearly below 0."""

    base: MaterialLaw
    eps: float

    @property
    def K_f(self) -> float:
        return self.base.K_f

    @property
    def kind(self) -> str:
        return self.base.kind

    def params(self):
        b = self.base
        return b.code, float(b.K_f), float(self.eps), b.table_xi, b.table_slope

    def f(self, xi):
        return _evaluate(*self.params(), xi)[0]

    def fprime(self, xi):
        return _evaluate(*self.params(), xi)[1]

    def fsecond(self, xi):
        return _evaluate(*self.params(), xi)[2]

    def evaluate(self, xi):
        """(f_eps, f_eps', f_eps'') in one pass."""
        return _evaluate(*self.params(), xi)

    def check_invariants(self, xi_max: float = 100.0, n: int = 10_000) -> None:
        xi = np.linspace(0.0, xi_max, n)
        f, fp, _ = self.evaluate(xi)
        bound = 2.0 * self.K_f
        if np.any(f < 0.0) or np.any(f > bound * xi * (1 + 1e-12)):
            raise ValueError("0 <= f_eps <= 2 K_f xi violated")
        if np.any(fp <= 0.0) or np.any(fp > bound):
            raise ValueError("0 < f_eps' <= 2 K_f violated")
        if np.any(f[1:] <= 0.0):
            raise ValueError("f_eps must be positive for xi > 0")


def make_material_law(kind: str, K_f: float = 1.0, table=None) -> MaterialLaw:
    """Build a law: identity (f = xi, K_f = 1), saturating K_f (1 - e^-xi),
    or custom-table with ``table=(knots, slopes)``."""
    if kind not in LAW_KINDS:
        raise ValueError(f"unsupported law kind {kind!r}")
    if kind != "custom-table" and not K_f > 0:
        raise ValueError(f"K_f must be positive, got {K_f}")
    if kind == "identity":
        if K_f != 1.0:
            raise ValueError("identity law has K_f = 1")
        law = MaterialLaw("identity", 1.0)
    elif kind == "saturating":
        law = MaterialLaw("saturating", float(K_f))
    else:
        if table is None:
            raise ValueError("custom-table law needs table=(knots, slopes)")
        tx = np.ascontiguousarray(table[0], dtype=float)
        ts = np.ascontiguousarray(table[1], dtype=float)
        if tx.shape != ts.shape or tx.size < 2:
            raise ValueError("table needs at least two (knot, slope) pairs")
        if tx[0] != 0.0 or np.any(np.diff(tx) <= 0):
            raise ValueError("table knots must start at 0 and increase")
        if np.any(ts <= 0):
            raise ValueError("table slopes must be positive")
        k_max = float(ts.max())
        if K_f is None or K_f < k_max:
            K_f = k_max
        law = MaterialLaw("custom-table", float(K_f), tx, ts)
    law.check_invariants()
    return law


def regularize(law: MaterialLaw, eps: float) -> RegularizedLaw:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    reg = RegularizedLaw(law, float(eps))
    reg.check_invariants()
    return reg


@dataclass(frozen=True, eq=False)
class EntropyTransform:
    """ell(xi) = -int_1^xi d(sigma) / f(sigma), for a regularized or plain law.

    Quadrature is composite 16-point Gauss-Legendre on panels graded
    geometrically between 1 and xi; the panel count doubles until two
    successive estimates agree to ``tol``.
    """

    law: RegularizedLaw | MaterialLaw
    tol: float = 1e-10

    def _integral(self, lo, hi, panels):
        # lo, hi: positive arrays with lo <= hi
        ratio = (hi / lo)[:, None]
        j = np.arange(panels + 1)[None, :]
        edges = lo[:, None] * ratio ** (j / panels)
        a = edges[:, :-1, None]
        b = edges[:, 1:, None]
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = np.ascontiguousarray(mid + half * _GL_NODES)
        inv = np.empty_like(nodes)
        K.inverse_f_eval(*self.law.params(), nodes, inv)
        return np.sum(half[..., 0] * (inv @ _GL_WEIGHTS), axis=1)

    def ell(self, xi):
        xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
        if np.any(~(xi_arr > 0)):
            raise ValueError("ell is defined only for xi > 0")
        flat = xi_arr.ravel()
        lo = np.minimum(flat, 1.0)
        hi = np.maximum(flat, 1.0)
        panels = 4
        fine = self._integral(lo, hi, panels)
        todo = np.arange(flat.size)
        while todo.size and panels < 4096:
            panels *= 2
            coarse = fine[todo]
            fine[todo] = self._integral(lo[todo], hi[todo], panels)
            # keep refining only the entries whose estimate still moves
            todo = todo[np.abs(fine[todo] - coarse) > self.tol]
        out = np.where(flat >= 1.0, -fine, fine).reshape(xi_arr.shape)
        if np.ndim(xi) == 0:
            return float(out[0])
        return out

    def ell_inverse(self, y, bracket, width: float = 1e-12):
        """xi in ``bracket`` with ell(xi) = y, located to a bracket of ``width``.

        Safeguarded Newton (ell' = -1/f) shrinks the bracket; steps leaving
        it fall back to bisection, and convergence is certified by a sign
        check on an interval of the requested width.
        """
        c1, c2 = float(bracket[0]), float(bracket[1])
        if not 0.0 < c1 <= c2:
            raise ValueError(f"bracket must satisfy 0 < c1 <= c2, got {bracket}")
        y_arr = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
        top = self.ell(c1)
        bottom = self.ell(c2)
        slack = 10 * self.tol
        if np.any(y_arr > top + slack) or np.any(y_arr < bottom - slack):
            raise ValueError(
                f"y outside the bracket image [{bottom}, {top}] of {bracket}"
            )
        lo = np.full(y_arr.shape, c1)
        hi = np.full(y_arr.shape, c2)
        x = 0.5 * (lo + hi)
        for _ in range(200):
            if np.max(hi - lo) <= width:
                break
            r = self.ell(x) - y_arr
            # ell decreasing: r > 0 means the root lies right of x
            lo = np.where(r > 0, x, lo)
            hi = np.where(r > 0, hi, x)
            step = r * self.law.f(x)
            nxt = x + step
            bad = ~((nxt > lo) & (nxt < hi))
            nxt = np.where(bad, 0.5 * (lo + hi), nxt)
            if np.max(np.abs(nxt - x)) < 0.25 * width:
                a = np.maximum(nxt - 0.5 * width, lo)
                b = np.minimum(nxt + 0.5 * width, hi)
                ok = (self.ell(a) >= y_arr) & (self.ell(b) <= y_arr)
                lo = np.where(ok, a, lo)
                hi = np.where(ok, b, hi)
                nxt = np.where(ok, nxt, 0.5 * (lo + hi))
            x = nxt
        out = 0.5 * (lo + hi)
        if np.ndim(y) == 0:
            return float(out[0])
        return out.reshape(np.shape(y))


def entropy_ell(t: EntropyTransform, xi):
    return t.ell(xi)


def entropy_ell_inverse(t: EntropyTransform, y, bracket):
    return t.ell_inverse(y, bracket)
