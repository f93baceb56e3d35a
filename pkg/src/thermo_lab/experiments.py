"""Run configuration, orchestration, eps-sweeps, refinement studies and
artifact files (snapshots, diagnostics CSV, report)."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .initial_data import DATUM_KINDS, MAX_MODES, RoughDatumSpec, write_columns
from .mesh import State, build_grid
from .model import LAW_KINDS, make_material_law, regularize
from .solver import SCHEMES, SolverError, run

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """All violations found while parsing a configuration."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    law: str = "identity"
    K_f: float = 1.0
    table_xi: tuple = ()
    table_slope: tuple = ()
    eps_pde: float = 1e-3
    eps_data: float = 1e-3
    N: int = 512
    a: float = 0.0
    b: float = 1.0
    safety: float = 0.5
    scheme: str = "imex-euler"
    T_end: float = 500.0
    datum: str = "constant"
    theta0: float = 1.0
    theta_high: float = 0.0
    location: float = 0.5
    width: float = 0.05
    u0_sine: float = 0.0
    u0t_sine: float = 1.0
    u0_amp: float = 0.0
    u0t_amp: float = 0.0
    teeth: int = 3
    modes: int = 16
    snapshot_every: float = 1.0
    diag_every: float = 0.1
    out: str = ""
    ladder_b: float = 0.14
    ladder_kmax: int = 14
    blowup_cap: float = 1e12
    seed: int = 0

    def datum_spec(self) -> RoughDatumSpec:
        return RoughDatumSpec(
            kind=self.datum, theta0=self.theta0, theta_high=self.theta_high,
            location=self.location, width=self.width, u0_sine=self.u0_sine,
            u0t_sine=self.u0t_sine, u0_amp=self.u0_amp, u0t_amp=self.u0t_amp,
            teeth=self.teeth, modes=self.modes, seed=self.seed,
        )

    def law_table(self):
        if self.law != "custom-table":
            return None
        return np.array(self.table_xi, dtype=float), np.array(self.table_slope, dtype=float)

    def build_law(self):
        base = make_material_law(self.law, self.K_f, table=self.law_table())
        return regularize(base, self.eps_pde)

    def echo(self) -> dict:
        """Every field, defaults included, as text."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(float(x)) for x in value)
            out[f.name] = str(value)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.echo().items())


REQUIRED_KEYS = ("eps_pde", "N", "T_end")

_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw):
    kind = _TYPES[key]
    if kind == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError("expected an integer")
        return int(value)
    if kind == "float":
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError("expected a finite number")
        return value
    if kind == "tuple":
        return tuple(float(x) for x in raw.split(",") if x.strip())
    return raw


def _check_ranges(cfg: RunConfig):
    errs = []

    def need(ok, key, msg):
        if not ok:
            errs.append(f"{key}: {msg} (got {getattr(cfg, key)!r})")

    need(cfg.law in LAW_KINDS, "law", f"must be one of {sorted(LAW_KINDS)}")
    need(cfg.K_f > 0, "K_f", "must be positive")
    if cfg.law == "identity":
        need(cfg.K_f == 1.0, "K_f", "identity law has K_f = 1")
    if cfg.law == "custom-table":
        need(len(cfg.table_xi) >= 2 and len(cfg.table_xi) == len(cfg.table_slope),
             "table_xi", "custom-table needs matching table_xi / table_slope lists")
    need(0 < cfg.eps_pde < 1, "eps_pde", "must lie in (0, 1)")
    need(0 < cfg.eps_data < 1, "eps_data", "must lie in (0, 1)")
    need(cfg.N >= 8, "N", "must be >= 8")
    need(cfg.b > cfg.a, "b", "must exceed a")
    need(0 < cfg.safety <= 1, "safety", "must lie in (0, 1]")
    need(cfg.scheme in SCHEMES, "scheme", f"must be one of {list(SCHEMES)}")
    need(cfg.T_end >= 0, "T_end", "must be >= 0")
    need(cfg.datum in DATUM_KINDS, "datum", f"must be one of {list(DATUM_KINDS)}")
    need(cfg.theta0 >= 0, "theta0", "must be >= 0")
    need(cfg.theta_high >= 0, "theta_high", "must be >= 0")
    need(0 <= cfg.location <= 1, "location", "must lie in [0, 1]")
    need(0 < cfg.width <= 1, "width", "must lie in (0, 1]")
    need(cfg.teeth >= 1, "teeth", "must be >= 1")
    need(1 <= cfg.modes <= MAX_MODES, "modes", f"must lie in [1, {MAX_MODES}]")
    need(cfg.snapshot_every >= 0, "snapshot_every", "must be >= 0")
    need(cfg.diag_every >= 0, "diag_every", "must be >= 0")
    need(0 < cfg.ladder_b < 1 / 7, "ladder_b", "must lie in (0, 1/7)")
    need(0 <= cfg.ladder_kmax <= 20, "ladder_kmax", "must lie in [0, 20]")
    need(cfg.blowup_cap > 0, "blowup_cap", "must be positive")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    return errs


def parse_config(text: str) -> RunConfig:
    """Parse key = value lines (# starts a comment). Raises ConfigError
    listing every problem found. eps_data defaults to eps_pde."""
    errs = []
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {lineno}: expected key = value")
            continue
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _TYPES:
            errs.append(f"{key}: unknown key")
            continue
        if key in values:
            errs.append(f"{key}: given twice")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            errs.append(f"{key}: {exc} (got {raw!r})")
    for key in REQUIRED_KEYS:
        if key not in values and not any(e.startswith(f"{key}:") for e in errs):
            errs.append(f"{key}: missing required key")
    if "eps_data" not in values and isinstance(values.get("eps_pde"), float):
        values["eps_data"] = values["eps_pde"]
    if errs:
        # range-check whatever did parse, so one pass reports everything
        try:
            errs += [e for e in _check_ranges(RunConfig(**values))
                     if e.split(":")[0] not in {x.split(":")[0] for x in errs}]
        except TypeError:
            pass
        raise ConfigError(errs)
    cfg = RunConfig(**values)
    errs = _check_ranges(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def benchmark_config(**overrides) -> RunConfig:
    """Identity law, u0t = sin(pi x), theta0 = 1 on (0, 1)."""
    return replace(RunConfig(), **overrides)


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    eps: tuple
    late_fraction: float = 0.5
    norms: tuple = ("u_C0", "theta_L2_late")

    def __post_init__(self):
        e = np.asarray(self.eps, dtype=float)
        if e.size < 3:
            raise ConfigError(["eps: a sweep needs at least 3 values"])
        if np.any(e <= 0) or np.any(e >= 1):
            raise ConfigError(["eps: values must lie in (0, 1)"])
        if np.any(np.diff(e) >= 0):
            raise ConfigError(["eps: sequence must be strictly decreasing"])
        if not 0 <= self.late_fraction < 1:
            raise ConfigError(["late_fraction: must lie in [0, 1)"])


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def snapshot_name(t: float) -> str:
    return f"snap_t{t:012.6f}.csv"


def write_snapshot(directory, s: State, grid) -> Path:
    path = Path(directory) / snapshot_name(s.t)
    write_columns(path, {"x": grid.x, "v": s.v, "u": s.u, "theta": s.theta})
    return path


def write_diagnostics(path, records, kmax: int) -> None:
    header = list(dg.RECORD_FIELDS) + [f"p{k}" for k in range(1, kmax + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in records:
            row = [repr(float(getattr(r, name))) for name in dg.RECORD_FIELDS]
            # ladder column p<k> holds the L^{2^k} deviation norm
            norms = {p: n for p, n in r.ladder}
            row += [repr(float(norms.get(2**k, math.nan))) for k in range(1, kmax + 1)]
            w.writerow(row)


def read_diagnostics(path):
    records = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        for row in rows:
            ladder = [(2 ** int(k[1:]), float(v)) for k, v in row.items() if k.startswith("p")]
            base = {k: float(row[k]) for k in dg.RECORD_FIELDS}
            records.append(dg.DiagnosticsRecord(**base, ladder=ladder))
    return records


def write_report(path, report: dg.StabilizationReport) -> None:
    Path(path).write_text(report.to_text(), encoding="utf-8")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    report: dg.StabilizationReport
    trajectory: object = None
    out: Path | None = None


def report_from_trajectory(traj, cfg: RunConfig) -> dg.StabilizationReport:
    return dg.evaluate(traj.records, traj.grid, traj.law, T_end=cfg.T_end,
                       datum=traj.datum, config_echo=cfg.echo())


def run_experiment(cfg: RunConfig, out=None, keep_trajectory: bool = True) -> RunResult:
    """Run, diagnose and (if ``out`` or cfg.out is set) write artifacts.

    On blow-up the last healthy state is written as a snapshot before the
    error propagates.
    """
    out = out or cfg.out or None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    try:
        traj = run(cfg)
    except SolverError as exc:
        if out is not None and exc.last_state is not None:
            write_snapshot(out, exc.last_state, build_grid(cfg.N, cfg.a, cfg.b))
        raise
    report = report_from_trajectory(traj, cfg)
    report.notes += traj.warnings
    if out is not None:
        for s in traj.snapshots:
            write_snapshot(out, s, traj.grid)
        write_diagnostics(out / "diagnostics.csv", traj.records, cfg.ladder_kmax)
        write_report(out / "report.txt", report)
    return RunResult(cfg, report, traj if keep_trajectory else None, out)


def reevaluate(directory) -> dg.StabilizationReport:
    """Rebuild the report of a finished run from config.txt and diagnostics.csv."""
    directory = Path(directory)
    cfg = load_config(directory / "config.txt")
    records = read_diagnostics(directory / "diagnostics.csv")
    grid = build_grid(cfg.N, cfg.a, cfg.b)
    datum = None
    if cfg.law == "identity":
        from .initial_data import make_rough_datum

        datum = make_rough_datum(cfg.datum_spec(), grid)
    return dg.evaluate(records, grid, cfg.build_law(), T_end=cfg.T_end, datum=datum,
                       config_echo=cfg.echo())


# ---------------------------------------------------------------------------
# concurrency
# ---------------------------------------------------------------------------


def max_workers() -> int:
    raw = os.environ.get("THERMO_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer THERMO_LAB_THREADS=%r", raw)
    return os.cpu_count() or 1


def _map(fn, items, workers=None):
    workers = min(workers or max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# eps sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    eps_a: float
    eps_b: float
    u_gap: float
    theta_gap: float


@dataclass
class SweepResult:
    eps: tuple
    theta_inf: list
    rows: list
    theta_inf_predicted: float | None = None
    notes: list = field(default_factory=list)

    @property
    def theta_gaps_decreasing(self) -> bool:
        g = [r.theta_gap for r in self.rows]
        return all(b < a for a, b in zip(g, g[1:]))

    @property
    def u_gaps_decreasing(self) -> bool:
        g = [r.u_gap for r in self.rows]
        return all(b < a for a, b in zip(g, g[1:]))

    @property
    def passed(self) -> bool:
        return self.theta_gaps_decreasing and self.u_gaps_decreasing

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps_a", "eps_b", "u_gap", "theta_gap"])
            for r in self.rows:
                w.writerow([repr(r.eps_a), repr(r.eps_b), repr(r.u_gap), repr(r.theta_gap)])

    def to_text(self) -> str:
        lines = [f"eps={','.join(repr(e) for e in self.eps)}"]
        for e, th in zip(self.eps, self.theta_inf):
            lines.append(f"theta_inf[{e!r}]={th}")
        if self.theta_inf_predicted is not None:
            lines.append(f"theta_inf_predicted={self.theta_inf_predicted}")
        lines.append(f"verdict.theta_gaps_decreasing={'pass' if self.theta_gaps_decreasing else 'fail'}")
        lines.append(f"verdict.u_gaps_decreasing={'pass' if self.u_gaps_decreasing else 'fail'}")
        lines += [f"note={n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _interp_fields(traj, times):
    """Snapshot fields (u, theta) linearly interpolated to ``times``."""
    t = traj.times
    U = np.array([s.u for s in traj.snapshots])
    TH = np.array([s.theta for s in traj.snapshots])
    idx = np.clip(np.searchsorted(t, times, side="right") - 1, 0, len(t) - 2)
    lam = ((times - t[idx]) / (t[idx + 1] - t[idx]))[:, None]
    return (1 - lam) * U[idx] + lam * U[idx + 1], (1 - lam) * TH[idx] + lam * TH[idx + 1]


def trajectory_gaps(ta, tb, times=None, late_fraction: float = 0.5):
    """(max_t ||u_a - u_b||_C0, ||theta_a - theta_b||_{L2(late window x Omega)}).

    ``times`` defaults to the snapshot times of ``ta``; ``tb`` is
    interpolated linearly in time onto them.
    """
    ga, gb = ta.grid, tb.grid
    if (ga.N, ga.a, ga.b) != (gb.N, gb.a, gb.b):
        raise ValueError("trajectories live on different grids")
    times = ta.times if times is None else np.asarray(times, dtype=float)
    times = times[times <= min(ta.times[-1], tb.times[-1]) + 1e-12]
    Ua, THa = _interp_fields(ta, times)
    Ub, THb = _interp_fields(tb, times)
    u_gap = float(np.max(np.abs(Ua - Ub)))
    late = times >= late_fraction * times[-1]
    sq = (THa[late] - THb[late]) ** 2 @ ga.weights
    th_gap = math.sqrt(np.trapezoid(sq, times[late])) if late.sum() > 1 else math.sqrt(sq.sum())
    return u_gap, th_gap


def eps_sweep(sweep: SweepConfig, workers=None) -> SweepResult:
    """One run per eps (PDE and data share it); consecutive gaps on the
    coarsest run's snapshot times."""
    cfgs = [replace(sweep.base, eps_pde=float(e), eps_data=float(e), out="") for e in sweep.eps]
    trajs = _map(run, cfgs, workers)
    # coarsest = fewest snapshots (all share N, so this is the first in practice)
    common = min(trajs, key=lambda t: len(t.snapshots)).times
    rows = []
    for (ea, ta), (eb, tb) in zip(zip(sweep.eps, trajs), zip(sweep.eps[1:], trajs[1:])):
        u_gap, th_gap = trajectory_gaps(ta, tb, common, sweep.late_fraction)
        rows.append(SweepRow(float(ea), float(eb), u_gap, th_gap))
    theta_inf, notes = [], []
    for e, tr in zip(sweep.eps, trajs):
        try:
            theta_inf.append(dg.estimate_theta_infinity(tr))
        except dg.PlateauError as exc:
            theta_inf.append(math.nan)
            notes.append(f"eps={e}: {exc}")
    predicted = None
    if sweep.base.law == "identity":
        predicted = dg.predict_theta_infinity_energy(trajs[-1].datum.source, trajs[-1].grid)
    return SweepResult(tuple(float(e) for e in sweep.eps), theta_inf, rows, predicted, notes)


# ---------------------------------------------------------------------------
# refinement (manufactured solutions)
# ---------------------------------------------------------------------------


@dataclass
class RefinementResult:
    levels: list
    orders: dict
    order_range: tuple = (1.8, 2.2)

    @property
    def monotone(self) -> bool:
        keys = ("e_v", "e_u", "e_theta", "e_z")
        return all(np.all(np.diff([getattr(lev, k) for lev in self.levels]) < 0) for k in keys)

    @property
    def passed(self) -> bool:
        lo, hi = self.order_range
        return self.monotone and all(
            np.all((o >= lo) & (o <= hi)) for k, o in self.orders.items() if k != "rate_defect"
        )

    def to_csv(self, path) -> None:
        keys = ("e_v", "e_u", "e_theta", "e_z", "rate_defect")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "dx", *keys, *(f"order_{k}" for k in keys)])
            for i, lev in enumerate(self.levels):
                orders = [repr(float(self.orders[k][i - 1])) if i else "" for k in keys]
                w.writerow([lev.N, repr(lev.dx), *(repr(getattr(lev, k)) for k in keys), *orders])


def refinement_study(levels: int, law=None, eps: float = 1e-3, n0: int = 32) -> RefinementResult:
    """Truncation errors on N + 1 = n0 * 2^j, j < levels, and observed orders."""
    from .mms import default_law, observed_orders, truncation_errors

    if int(levels) != levels or levels < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    law = law or default_law(eps)
    sizes = [n0 * 2**j - 1 for j in range(levels)]
    rows = [truncation_errors(n, law, eps) for n in sizes]
    orders = {k: observed_orders([getattr(r, k) for r in rows])
              for k in ("e_v", "e_u", "e_theta", "e_z", "rate_defect")}
    return RefinementResult(rows, orders)
