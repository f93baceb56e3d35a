"""Acceptance criteria 1-8 on the reference runs.

Each test records a one-line verdict (shown in the terminal summary) before
asserting. Tolerances are the fixed acceptance values; nothing here is tuned
to the observed numbers.

Runtime is dominated by five long runs at N = 512 (or 1025) to T = 500.
"""

import math

import numpy as np
import pytest
from conftest import ACCEPTANCE

from thermo_lab import diagnostics as dg
from thermo_lab.experiments import (
    SweepConfig,
    benchmark_config,
    eps_sweep,
    refinement_study,
    run_experiment,
)
from thermo_lab.mesh import build_grid

THETA_INF_FORMULA = 1.25  # (1/2 int sin^2 + int 1) / |Omega| on (0, 1)


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def bench(benchmark_result):
    return benchmark_result


def test_criterion_1_theta_infinity_formula(bench):
    rep = bench.report
    assert rep.converged, rep.notes
    err = abs(rep.theta_inf - THETA_INF_FORMULA)
    record(1, err <= 0.03, f"theta_inf={rep.theta_inf:.6f} |err|={err:.4f} (tol 0.03)")
    assert err <= 0.03


def test_criterion_2_uniform_stabilization(bench):
    rep = bench.report
    final = bench.trajectory.final
    theta_dev = dg.sup_deviation(final.theta, rep.theta_inf)
    u_sup = float(np.max(np.abs(final.u)))
    mono = rep.verdicts["theta_window_monotone"] and rep.verdicts["u_window_monotone"]
    ok = theta_dev <= 0.02 and u_sup <= 0.02 and mono
    record(2, ok, f"|theta-theta_inf|_inf={theta_dev:.2e} |u|_inf={u_sup:.2e} "
                  f"(tol 0.02) unit-window averages monotone={mono}")
    assert theta_dev <= 0.02 and u_sup <= 0.02
    assert mono


@pytest.fixture(scope="module")
def refined_energy_defect():
    res = run_experiment(benchmark_config(N=1025), keep_trajectory=False)
    return res.report.energy_defect_max


def test_criterion_3_energy_balance(bench, refined_energy_defect):
    E0 = bench.trajectory.records[0].E
    coarse = bench.report.energy_defect_max
    ratio = coarse / refined_energy_defect
    ok = coarse <= 1e-3 * E0 and ratio >= 2.0
    record(3, ok, f"max defect={coarse:.3e} (tol {1e-3 * E0:.3e}); "
                  f"N=1025 defect={refined_energy_defect:.3e} reduction={ratio:.3f} (need >= 2)")
    assert coarse <= 1e-3 * E0
    assert ratio >= 2.0


@pytest.fixture(scope="module")
def study():
    return refinement_study(4)


def test_criterion_4_entropy_monotone(bench, study):
    Z = bench.trajectory.series("Z")
    tol = 1e-8 * abs(Z[0]) + 1e-12
    worst = float(np.max(np.diff(Z)))
    ratios = [a.rate_defect / b.rate_defect for a, b in zip(study.levels, study.levels[1:])]
    ok = worst <= tol and min(ratios) >= 3.0
    record(4, ok, f"max Z increment={worst:.2e} (tol {tol:.2e}); rate-defect ratios "
                  f"{', '.join(f'{r:.2f}' for r in ratios)} (need >= 3)")
    assert worst <= tol
    assert min(ratios) >= 3.0


def test_criterion_5_mms_orders(study):
    keys = ("e_v", "e_u", "e_theta", "e_z")
    orders = {k: study.orders[k] for k in keys}
    ok = all(np.all((o >= 1.8) & (o <= 2.2)) for o in orders.values())
    detail = " ".join(f"{k}=[{', '.join(f'{x:.3f}' for x in o)}]" for k, o in orders.items())
    record(5, ok, detail + " (range [1.8, 2.2])")
    assert ok


def test_criterion_6_eps_sweep():
    eps = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    res = eps_sweep(SweepConfig(benchmark_config(snapshot_every=0.25), eps))
    th_gaps = [r.theta_gap for r in res.rows]
    u_gaps = [r.u_gap for r in res.rows]
    last = res.theta_inf[-1]
    rel = abs(last - THETA_INF_FORMULA) / THETA_INF_FORMULA
    ok = res.theta_gaps_decreasing and res.u_gaps_decreasing and rel <= 0.05
    record(6, ok, f"theta gaps={['%.3e' % g for g in th_gaps]} u gaps={['%.3e' % g for g in u_gaps]} "
                  f"theta_inf(eps)={['%.5f' % t for t in res.theta_inf]} rel err={rel:.4f} (tol 0.05)")
    assert res.theta_gaps_decreasing and res.u_gaps_decreasing
    assert rel <= 0.05


def test_criterion_7_two_sided_bounds_step_datum():
    # theta0 = 2 on the left half, 0 on the right half
    res = run_experiment(benchmark_config(datum="step", theta0=0.0, theta_high=2.0, T_end=100.0))
    rec = res.trajectory.records
    late = [r for r in rec if r.t >= 1.0]
    lo = min(r.theta_min for r in late)
    hi = max(r.theta_max for r in late)
    ok = lo > 0 and math.isfinite(hi) and all(r.theta_min > 0 for r in late)
    record(7, ok, f"min theta on [1, T]={lo:.4f} max={hi:.4f}")
    assert ok


def test_criterion_8_dual_norm_and_saturating_law():
    cs = [dg.dual_norm_constant(build_grid(n), count=50) for n in (128, 256, 512)]
    spread = max(cs) / min(cs) - 1
    res = run_experiment(benchmark_config(law="saturating", K_f=1.0))
    v = res.report.verdicts
    final = res.trajectory.final
    theta_dev = dg.sup_deviation(final.theta, res.report.theta_inf)
    u_sup = float(np.max(np.abs(final.u)))
    late = [r for r in res.trajectory.records if r.t >= 1.0]
    positive = all(r.theta_min > 0 for r in late)
    crit2 = theta_dev <= 0.02 and u_sup <= 0.02 and v["theta_window_monotone"] and v["u_window_monotone"]
    crit4 = v["entropy_monotone"]
    crit7 = positive and v["two_sided_bounds"]
    ok = spread <= 0.10 and crit2 and crit4 and crit7
    record(8, ok, f"C={['%.4f' % c for c in cs]} spread={spread:.3%} (tol 10%); saturating run: "
                  f"theta_inf={res.report.theta_inf:.5f} crit2={crit2} crit4={crit4} crit7={crit7}")
    assert spread <= 0.10
    assert crit2 and crit4 and crit7


def test_dissipation_rate_decays_on_benchmark(bench):
    # regression anchor: last-window rate below a tenth of the first-window rate
    traj = bench.trajectory
    t = traj.times
    rates = np.array([dg.energy_dissipation_rate(s, traj.grid, traj.eps) for s in traj.snapshots])
    first = rates[t <= 1.0 + 1e-9].mean()
    last = rates[t >= t[-1] - 1.0 - 1e-9].mean()
    assert last < first / 10


def test_theta_infinity_consistent_with_energy_prediction(bench):
    # the estimate and the energy formula agree within 2% + O(eps)
    rep = bench.report
    assert abs(rep.theta_inf - rep.theta_inf_predicted) <= 0.02 * rep.theta_inf_predicted + 10 * 1e-3
