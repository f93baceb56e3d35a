import pytest

from thermo_lab.experiments import benchmark_config, run_experiment

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def benchmark_result():
    """The reference run: identity law, u0t = sin(pi x), theta0 = 1, eps = 1e-3,
    N = 512, T_end = 500, imex-euler at safety 0.5."""
    return run_experiment(benchmark_config(snapshot_every=0.25))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
