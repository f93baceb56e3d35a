import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermo_lab.model import (
    EntropyTransform,
    entropy_ell,
    entropy_ell_inverse,
    make_material_law,
    regularize,
)


def test_identity_law():
    law = make_material_law("identity")
    assert law.f(2.5) == 2.5 and law.fprime(7.0) == 1.0


def test_saturating_law_values():
    law = make_material_law("saturating", 2.0)
    assert law.f(0.0) == 0.0
    assert law.f(1.0) == pytest.approx(2.0 * (1 - math.exp(-1)))
    assert law.fprime(0.0) == pytest.approx(2.0)


def test_table_law_is_integral_of_slopes():
    law = make_material_law("custom-table", table=([0.0, 1.0, 3.0], [1.0, 2.0, 0.5]))
    assert law.K_f == 2.0
    # f(1) = trapezoid of slope 1 -> 2 over [0, 1]
    assert law.f(1.0) == pytest.approx(1.5)
    # past the last knot the slope stays 0.5
    assert law.f(5.0) - law.f(4.0) == pytest.approx(0.5)


@pytest.mark.parametrize(
    "kind, kw",
    [("quadratic", {}), ("saturating", {"K_f": 0.0}), ("saturating", {"K_f": -1.0}),
     ("identity", {"K_f": 2.0}), ("custom-table", {}),
     ("custom-table", {"table": ([0.0, 1.0], [1.0, -1.0])})],
)
def test_make_material_law_errors(kind, kw):
    with pytest.raises(ValueError):
        make_material_law(kind, **kw)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5])
def test_regularize_rejects_eps(eps):
    with pytest.raises(ValueError):
        regularize(make_material_law("identity"), eps)


def test_regularized_formula():
    eps = 0.2
    law = regularize(make_material_law("identity"), eps)
    xi = np.array([0.0, 0.5, 3.0])
    expected = (1 - eps / 2) * xi + eps / 2 * (1 - np.exp(-xi))
    assert np.allclose(law.f(xi), expected, rtol=1e-15)


def test_regularized_linear_below_zero():
    law = regularize(make_material_law("saturating", 1.5), 0.1)
    slope = law.fprime(0.0)
    assert law.f(-0.3) == pytest.approx(-0.3 * slope)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["identity", "saturating"]),
    st.floats(0.1, 5.0),
    st.floats(1e-4, 0.99),
)
def test_regularized_invariants(kind, K_f, eps):
    base = make_material_law(kind, 1.0 if kind == "identity" else K_f)
    law = regularize(base, eps)
    xi = np.linspace(0, 50, 2001)
    f, fp, _ = law.evaluate(xi)
    K = base.K_f
    assert np.all(f >= 0) and np.all(f <= 2 * K * xi + 1e-12)
    assert np.all(fp > 0) and np.all(fp <= 2 * K)
    assert np.all(f[1:] > 0)


def test_ell_at_one_is_zero():
    t = EntropyTransform(regularize(make_material_law("identity"), 1e-3))
    assert t.ell(1.0) == 0.0


def test_ell_identity_is_minus_log():
    t = EntropyTransform(make_material_law("identity"))
    assert t.ell(math.e) == pytest.approx(-1.0, abs=1e-10)
    xs = np.array([0.01, 0.5, 2.0, 40.0])
    assert np.allclose(t.ell(xs), -np.log(xs), atol=1e-9)


def test_ell_saturating_closed_form():
    # 1 / (1 - e^-s) integrates to log(e^s - 1)
    t = EntropyTransform(make_material_law("saturating", 1.0))
    x = 3.0
    exact = -(math.log(math.expm1(x)) - math.log(math.expm1(1.0)))
    assert t.ell(x) == pytest.approx(exact, abs=1e-9)


def test_ell_rejects_nonpositive():
    t = EntropyTransform(make_material_law("identity"))
    with pytest.raises(ValueError):
        t.ell(np.array([1.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(1e-3, 0.5))
def test_ell_inverse_roundtrip(x, eps):
    t = EntropyTransform(regularize(make_material_law("saturating", 1.0), eps))
    y = entropy_ell(t, x)
    back = entropy_ell_inverse(t, y, (0.04, 25.0))
    assert abs(back - x) <= 1e-11 * max(1.0, x)


def test_ell_decreasing():
    t = EntropyTransform(regularize(make_material_law("identity"), 0.01))
    xs = np.linspace(0.1, 10, 200)
    assert np.all(np.diff(t.ell(xs)) < 0)


def test_ell_inverse_outside_bracket():
    t = EntropyTransform(make_material_law("identity"))
    with pytest.raises(ValueError):
        t.ell_inverse(t.ell(5.0), (1.0, 2.0))


@pytest.mark.parametrize("kind", ["identity", "saturating"])
def test_fsecond_matches_difference_of_fprime(kind):
    law = regularize(make_material_law(kind, K_f=1.0), 1e-2)
    xi = np.linspace(0.1, 5.0, 50)
    h = 1e-5
    fd = (law.fprime(xi + h) - law.fprime(xi - h)) / (2 * h)
    assert np.allclose(law.fsecond(xi), fd, rtol=1e-6, atol=1e-8)
