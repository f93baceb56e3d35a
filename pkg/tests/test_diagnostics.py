import math

import numpy as np
import pytest

from thermo_lab import diagnostics as dg
from thermo_lab.experiments import benchmark_config
from thermo_lab.mesh import State, build_grid
from thermo_lab.model import EntropyTransform, make_material_law, regularize
from thermo_lab.solver import run

PI = math.pi


def state(g, v=None, u=None, theta=None, t=0.0):
    z = np.zeros(g.N + 2)
    return State(t, z.copy() if v is None else v, z.copy() if u is None else u,
                 z.copy() if theta is None else theta)


def sine(g, k=1):
    out = np.sin(k * PI * (g.x - g.a) / g.length)
    out[0] = out[-1] = 0.0
    return out


def test_energy_zero_state():
    g = build_grid(31)
    assert dg.energy(state(g), g) == 0.0


def test_energy_unit_temperature():
    g = build_grid(31)
    assert dg.energy(state(g, theta=np.ones(g.N + 2)), g) == pytest.approx(1.0)


def test_energy_sine_velocity():
    g = build_grid(256)
    assert dg.energy(state(g, v=sine(g), theta=np.ones(g.N + 2)), g) == pytest.approx(1.25, abs=1e-3)


def test_dissipation_rate_zero_and_sine():
    g = build_grid(256)
    assert dg.energy_dissipation_rate(state(g), g, 1e-2) == 0.0
    rate = dg.energy_dissipation_rate(state(g, u=sine(g)), g, 1e-2)
    assert rate == pytest.approx(1e-2 * PI**4 / 2, rel=0.02)


def test_dissipation_rate_nonnegative():
    g = build_grid(63)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(g.N + 2)
        u = rng.standard_normal(g.N + 2)
        v[0] = v[-1] = u[0] = u[-1] = 0
        assert dg.energy_dissipation_rate(state(g, v=v, u=u), g, 0.3) >= 0


@pytest.fixture
def transform():
    return EntropyTransform(regularize(make_material_law("identity"), 1e-3))


def test_entropy_unit_temperature(transform):
    g = build_grid(31)
    assert dg.entropy_total(state(g, theta=np.ones(g.N + 2)), transform, g) == 0.0


def test_entropy_at_e_for_identity():
    g = build_grid(100, -1, 1)
    t = EntropyTransform(make_material_law("identity"))
    assert dg.entropy_total(state(g, theta=np.full(g.N + 2, math.e)), t, g) == pytest.approx(-2.0)


def test_entropy_decreasing_in_temperature(transform):
    g = build_grid(63)
    a = 1.0 + 0.5 * np.random.default_rng(2).random(g.N + 2)
    b = a + 0.1
    assert dg.entropy_total(state(g, theta=b), transform, g) <= dg.entropy_total(state(g, theta=a), transform, g)


def test_entropy_rejects_nonpositive_with_index(transform):
    g = build_grid(31)
    th = np.ones(g.N + 2)
    th[7] = -0.1
    with pytest.raises(dg.NonPositiveTemperatureError) as info:
        dg.entropy_total(state(g, theta=th), transform, g)
    assert info.value.index == 7


def test_entropy_dissipation_constant_and_small_amplitude():
    g = build_grid(511)
    law = regularize(make_material_law("identity"), 1e-6)
    t = EntropyTransform(law)
    assert dg.entropy_dissipation(state(g, theta=np.full(g.N + 2, 2.0)), law, t, g) == 0.0
    th = 1 + 0.1 * np.cos(PI * g.x)
    value = dg.entropy_dissipation(state(g, theta=th), law, t, g)
    assert value == pytest.approx(0.005 * PI**2, rel=0.05)


def test_z_residual_equilibrium(transform):
    g = build_grid(63)
    law = transform.law
    a = state(g, theta=np.full(g.N + 2, 1.3))
    b = state(g, theta=np.full(g.N + 2, 1.3), t=0.01)
    assert np.max(np.abs(dg.z_residual(a, b, law, transform, g))) < 1e-12


def test_z_and_theta_residuals_agree_through_chain_rule():
    # on a real trajectory: r_z ~ -r_theta / f(theta)
    traj = run(benchmark_config(N=255, T_end=0.5, snapshot_every=0.0))
    g, law = traj.grid, traj.law
    t = EntropyTransform(law)
    from thermo_lab.solver import build_operators, step_imex

    s0 = traj.final
    ops = build_operators(g, law.eps, traj.dt)
    s1 = step_imex(s0, traj.dt, ops, law)
    rz = dg.z_residual(s0, s1, law, t, g)
    rth = dg.theta_residual(s0, s1, law, g)
    thb = 0.5 * (s0.theta + s1.theta)
    mismatch = dg.l2_norm(rz + rth / law.f(thb), g)
    assert mismatch < 0.05 * dg.l2_norm(rz, g)


def test_sup_deviation():
    assert dg.sup_deviation(np.array([0.5, 1.0, 2.5]), 1.0) == 1.5


def test_ladder_monotone_and_converges_to_sup():
    g = build_grid(511)
    th = 1.2 + 0.3 * np.cos(PI * g.x) + 0.1 * np.cos(3 * PI * g.x)
    a = 1.25
    ladder = dg.lp_ladder(th, a, 0.14, 14, g)
    normalized = [n / g.length ** (1 / p) for p, _, n in ladder]
    assert np.all(np.diff(normalized) >= -1e-12)
    assert ladder[-1][2] == pytest.approx(dg.sup_deviation(th, a), rel=0.02)
    assert [p for p, _, _ in ladder] == [2**k for k in range(15)]
    assert ladder[3][1] == pytest.approx(7 * 0.14)


def test_ladder_survives_huge_exponents():
    g = build_grid(63)
    th = np.full(g.N + 2, 1.0)
    th[5] = 40.0
    ladder = dg.lp_ladder(th, 0.0, 0.1, 20, g)
    assert all(np.isfinite(n) for _, _, n in ladder)


@pytest.mark.parametrize("b, kmax", [(0.0, 4), (0.15, 4), (0.1, 21)])
def test_ladder_rejects_parameters(b, kmax):
    g = build_grid(15)
    with pytest.raises(ValueError):
        dg.lp_ladder(np.ones(g.N + 2), 1.0, b, kmax, g)


def test_dual_norm_of_constant_is_one():
    g = build_grid(127)
    assert dg.negative_sobolev_norm(np.ones(g.N + 2), g) == pytest.approx(1.0, rel=1e-12)


def test_dual_norm_of_cosine():
    g = build_grid(511)
    exact = 1 / math.sqrt(2 * (1 + PI**2))
    assert dg.negative_sobolev_norm(np.cos(PI * g.x), g) == pytest.approx(exact, rel=1e-4)


def test_dual_norm_constant_stable_under_refinement():
    cs = [dg.dual_norm_constant(build_grid(n)) for n in (128, 256, 512)]
    assert max(cs) / min(cs) < 1.1
    # single-mode psi = sin(pi x): ratio sqrt(1 + pi^2) / pi
    assert min(cs) >= math.sqrt(1 + PI**2) / PI * 0.99


def test_estimate_theta_infinity_constant_trajectory():
    traj = run(benchmark_config(N=63, T_end=1.0, u0t_sine=0.0, theta0=1.7))
    c = traj.final.theta[0]
    assert dg.estimate_theta_infinity(traj) == pytest.approx(c, abs=1e-10)


def test_estimate_theta_infinity_refuses_without_plateau():
    traj = run(benchmark_config(N=63, T_end=2.0))
    with pytest.raises(dg.PlateauError):
        dg.estimate_theta_infinity(traj)


def test_predict_theta_infinity_benchmark_datum():
    from thermo_lab.initial_data import RoughDatumSpec, make_rough_datum

    g = build_grid(512)
    d = make_rough_datum(RoughDatumSpec(kind="constant", theta0=1.0, u0t_sine=1.0), g)
    assert dg.predict_theta_infinity_energy(d, g) == pytest.approx(1.25, abs=1e-12)


def test_window_averages():
    t = np.linspace(0, 3, 301)
    ends, avg = dg.window_averages(t, 2 * t)
    assert np.allclose(ends, [1, 2, 3])
    assert np.allclose(avg, [1, 3, 5])


def test_u_decay_metric_needs_cadence():
    traj = run(benchmark_config(N=63, T_end=2.0, snapshot_every=0.5))
    with pytest.raises(ValueError, match="cadence"):
        dg.u_decay_metric(traj, window=1.0)


def test_u_decay_metric_values():
    traj = run(benchmark_config(N=63, T_end=3.0, snapshot_every=0.1))
    m = dg.u_decay_metric(traj)
    assert np.allclose([t for t, _ in m], [0.0, 1.0, 2.0], atol=traj.dt)
    assert all(val >= 0 for _, val in m)


def test_windowed_ladder_requires_coverage():
    traj = run(benchmark_config(N=63, T_end=1.0, snapshot_every=0.1))
    with pytest.raises(ValueError):
        dg.windowed_ladder_maxima(traj, 0.8, a=1.2)


def test_windowed_ladder_maxima_at_least_one():
    traj = run(benchmark_config(N=63, T_end=2.0, snapshot_every=0.05))
    m = dg.windowed_ladder_maxima(traj, 1.0, kmax=6, a=1.2)
    assert len(m) == 7 and all(x >= 1.0 for x in m)


def test_records_are_finite_and_ordered():
    traj = run(benchmark_config(N=63, T_end=1.0))
    for r in traj.records:
        vals = [getattr(r, k) for k in dg.RECORD_FIELDS]
        assert all(np.isfinite(vals))
        assert r.theta_min <= r.theta_max


def test_report_marks_zero_horizon():
    traj = run(benchmark_config(N=63, T_end=0.0))
    rep = dg.build_report(traj)
    assert "no asymptotics attempted" in rep.to_text()
