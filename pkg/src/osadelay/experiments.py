"""Scenario definitions, method dispatch, sweeps, clustering and comparison reports."""
from __future__ import annotations

import configparser
import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import combined, occupancy, sim
from .core import (
    DelayReport,
    NonConvergenceError,
    ParameterError,
    SystemParams,
    UndefinedDelayError,
    UnsupportedMethodError,
    derive,
)
from .queueing import single_node_delay

ALL_METHODS = ("sim", "sim-truncated", "exact-mc", "combined-exact", "combined-dist",
               "combined-avg", "pawelczak", "closed-form-n1")
ANALYTIC_METHODS = ALL_METHODS[2:]
SWEEP_FIELDS = {"lambda": "lam", "p": "p", "q": "q", "p_c": "p_c", "M_C": "M_C"}
CSV_COLUMNS = ("scenario", "method", "sweep_param", "sweep_value", "mean_system_time_slots",
               "ci95", "rho", "stable", "runtime_ms")
DEFAULT_TOLERANCES = {"combined-exact": 0.03, "combined-dist": 0.10, "combined-avg": 0.10,
                      "pawelczak": 0.10, "exact-mc": 0.03, "closed-form-n1": 0.03}
FALLBACK_TOLERANCE = 0.05


@dataclass(frozen=True)
class SimControls:
    horizon: int = 350_000
    replications: int = 10
    base_seed: int = 1


@dataclass(frozen=True)
class Scenario:
    """One experiment: base parameters, methods and an optional one-parameter sweep."""

    name: str
    params: SystemParams
    methods: tuple = ("combined-exact",)
    sweep_param: str | None = None
    sweep_values: tuple = ()
    sim: SimControls = SimControls()
    availability_profile: tuple | None = None
    fixed_load: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad or not self.methods:
            raise ParameterError("methods", f"unknown or empty method list {bad or list(self.methods)}")
        if self.sweep_param is not None:
            if self.sweep_param not in SWEEP_FIELDS:
                raise ParameterError("sweep_param", f"{self.sweep_param!r} not in {sorted(SWEEP_FIELDS)}")
            vals = np.asarray(self.sweep_values, dtype=float)
            if vals.size == 0 or np.any(np.diff(vals) <= 0):
                raise ParameterError("sweep_values", "grid must be non-empty and strictly increasing")
        if self.availability_profile is not None:
            if any(not 0.0 < v <= 1.0 for v in self.availability_profile):
                raise ParameterError("availability_profile", "entries must lie in (0, 1]")
        if self.fixed_load is not None and self.fixed_load <= 0:
            raise ParameterError("fixed_load", "must be positive")

    def point(self, value=None) -> SystemParams:
        """Parameters at one sweep value, with the linked quantities applied."""
        changes = {}
        if value is not None:
            key = SWEEP_FIELDS[self.sweep_param]
            changes[key] = int(round(value)) if key == "M_C" else float(value)
        params = self.params.with_(**changes)
        if self.availability_profile is not None:
            idx = min(params.M_C, len(self.availability_profile)) - 1
            psi = self.availability_profile[idx]
            if params.p_c >= 1.0:
                raise ParameterError("availability_profile", "needs p_c < 1")
            params = params.with_(eta=psi / (1.0 - params.p_c))
        if self.fixed_load is not None:
            # aggregate offered load N * lam / q held constant
            params = params.with_(lam=self.fixed_load * params.q / params.N)
        return params

    def points(self) -> list[tuple]:
        if self.sweep_param is None:
            return [(math.nan, self.point())]
        return [(float(v), self.point(v)) for v in self.sweep_values]


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    method: str
    sweep_param: str
    sweep_value: float
    report: DelayReport
    runtime_ms: float = 0.0

    @property
    def mean(self) -> float:
        return self.report.mean_system_time

    @property
    def stable(self) -> bool:
        return self.report.stable

    @property
    def error(self) -> str:
        return self.report.error

    def as_csv(self) -> list:
        r = self.report
        return [self.scenario, self.method, self.sweep_param, fmt_value(self.sweep_value),
                fmt_value(r.mean_system_time), fmt_value(r.ci95), fmt_value(r.rho), int(bool(r.stable)),
                fmt_value(self.runtime_ms)]


def fmt_value(x) -> str:
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _sim_report(method: str, params: SystemParams, controls: SimControls) -> DelayReport:
    s = sim.run_batch(params, controls.horizon, controls.replications, controls.base_seed,
                      truncated=method == "sim-truncated")
    if not s.defined:
        return DelayReport(method, math.nan, error="no completed packets")
    return DelayReport(method, s.mean_system_time, stable=not s.unstable, rho=s.busy_fraction,
                       service_m2=s.service_m2, ci95=s.ci95_halfwidth,
                       error="queue grows without bound" if s.unstable else "",
                       extras={"completed": s.completed, "dropped": s.dropped,
                               "E[X]": s.service_m1, "E[X_R]": s.reservation_m1})


def _exact_report(params: SystemParams) -> DelayReport:
    return occupancy.solve(params)


def evaluate(method: str, params: SystemParams, controls: SimControls = SimControls(),
             substitution: str = "chi") -> DelayReport:
    """Run one method at one point; failures come back as rows, never as exceptions."""
    if params.lam == 0.0:
        return DelayReport(method, math.nan, stable=True, rho=0.0, error="empty traffic")
    try:
        if method in ("sim", "sim-truncated"):
            return _sim_report(method, params, controls)
        if method == "exact-mc":
            return _exact_report(params)
        if method == "closed-form-n1":
            return single_node_delay(params)
        if method in combined.REPORT_METHODS:
            return combined.solve_delay(params, method, substitution)
        raise ParameterError("method", f"unknown method {method!r}")
    except NonConvergenceError as exc:
        return DelayReport(method, math.nan, stable=False, error=f"non-convergence: {exc}")
    except (UnsupportedMethodError, occupancy.StateSpaceTooLarge, UndefinedDelayError) as exc:
        return DelayReport(method, math.nan, stable=False, error=str(exc))


def _task(args):
    name, method, sweep_param, value, params, controls, timing = args
    t0 = time.perf_counter()
    report = evaluate(method, params, controls)
    ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    return ResultRow(name, method, sweep_param, value, report, ms)


def _run_tasks(tasks: list, workers: int) -> list[ResultRow]:
    if workers <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks))


def run_scenario(scenario: Scenario, workers: int = 1, timing: bool = True,
                 sweep: bool = True) -> list[ResultRow]:
    """Every requested method at every sweep point, in a fixed order."""
    points = scenario.points() if sweep else [(math.nan, scenario.point())]
    label = scenario.sweep_param if sweep and scenario.sweep_param else ""
    tasks = [(scenario.name, m, label, v, params, scenario.sim, timing)
             for v, params in points for m in scenario.methods]
    return _run_tasks(tasks, workers)


def write_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())


def read_csv(path) -> list[ResultRow]:
    """Inverse of write_csv (the in-row error text is not persisted)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            num = lambda s: float(s) if s != "" else math.nan  # noqa: E731
            rep = DelayReport(rec["method"], num(rec["mean_system_time_slots"]),
                              stable=rec["stable"] == "1", rho=num(rec["rho"]), ci95=num(rec["ci95"]))
            rows.append(ResultRow(rec["scenario"], rec["method"], rec["sweep_param"],
                                  num(rec["sweep_value"]), rep, num(rec["runtime_ms"])))
    return rows


# ---------------------------------------------------------------- clustering

@dataclass(frozen=True)
class ClusterPoint:
    lam: float
    single: ResultRow
    clustered: ResultRow
    p_single: float
    p_clustered: float


def cluster_params(base: SystemParams, clusters: int) -> SystemParams:
    """One of ``clusters`` identical sub-systems; each spends one channel on control.

    ``base.M_C`` is the data-channel count of the unclustered system, so the
    total channel budget is ``M = base.M_C + 1``.
    """
    if clusters < 1:
        raise ParameterError("clusters", "must be >= 1")
    M = base.M_C + 1
    if base.N % clusters or M % clusters:
        raise ParameterError("clusters", f"N={base.N} and M={M} must both divide by {clusters}")
    data = M // clusters - 1
    if data < 1:
        raise ParameterError("clusters", f"{clusters} clusters leave no data channel")
    return base.with_(N=base.N // clusters, M_C=data)


def _best_over_p(method, params, p_grid, controls):
    best = None
    for p in p_grid:
        rep = evaluate(method, params.with_(p=float(p)), controls)
        key = rep.mean_system_time if rep.stable and math.isfinite(rep.mean_system_time) else math.inf
        if best is None or key < best[0]:
            best = (key, float(p), rep)
    return best[1], best[2]


def cluster_experiment(base: Scenario, clusters: int, lambdas=None, p_grid=None,
                       method: str | None = None) -> list[ClusterPoint]:
    """Paired delays of the single system and one of ``clusters`` sub-systems over a lambda grid."""
    sub = cluster_params(base.params, clusters)
    if lambdas is None:
        if base.sweep_param != "lambda":
            raise ParameterError("lambdas", "give a lambda grid or a lambda sweep in the scenario")
        lambdas = base.sweep_values
    method = method or base.methods[0]
    out = []
    for lam in lambdas:
        one = base.params.with_(lam=float(lam))
        many = sub.with_(lam=float(lam))
        if p_grid is not None:
            p1, r1 = _best_over_p(method, one, p_grid, base.sim)
            p2, r2 = _best_over_p(method, many, p_grid, base.sim)
        else:
            p1 = p2 = one.p
            r1 = evaluate(method, one, base.sim)
            r2 = evaluate(method, many, base.sim)
        out.append(ClusterPoint(
            float(lam),
            ResultRow(f"{base.name}/c=1", method, "lambda", float(lam), r1),
            ResultRow(f"{base.name}/c={clusters}", method, "lambda", float(lam), r2),
            p1, p2))
    return out


# ---------------------------------------------------------------- comparison

@dataclass(frozen=True)
class MethodSummary:
    method: str
    points: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.points > 0 and self.max_error <= self.tolerance


def relative_errors(rows: list[ResultRow], baseline: str = "sim") -> list[tuple]:
    """(row, baseline row, relative error) for every non-baseline row with a stable baseline."""
    base = {(r.scenario, r.sweep_value if not math.isnan(r.sweep_value) else None): r
            for r in rows if r.method == baseline}
    if not base:
        raise ValueError(f"no rows for baseline method {baseline!r}")
    out = []
    for r in rows:
        if r.method == baseline:
            continue
        key = (r.scenario, r.sweep_value if not math.isnan(r.sweep_value) else None)
        b = base.get(key)
        if b is None or not b.stable or not math.isfinite(b.mean):
            continue
        if r.stable and math.isfinite(r.mean):
            err = abs(r.mean - b.mean) / b.mean
        else:
            err = math.inf
        out.append((r, b, err))
    return out


def compare_report(rows: list[ResultRow], baseline: str = "sim", tolerances=None,
                   csv_name: str = "compare.csv") -> tuple[str, str, list[MethodSummary]]:
    """Text summary and comparison CSV of every method against the baseline."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    errs = relative_errors(rows, baseline)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scenario", "method", "sweep_param", "sweep_value", "mean_system_time_slots",
                "baseline_slots", "rel_error", "tolerance", "verdict"))
    per_method: dict[str, list[float]] = {}
    for r, b, e in errs:
        t = tol.get(r.method, FALLBACK_TOLERANCE)
        per_method.setdefault(r.method, []).append(e)
        w.writerow((r.scenario, r.method, r.sweep_param, fmt_value(r.sweep_value), fmt_value(r.mean),
                    fmt_value(b.mean), fmt_value(e), fmt_value(t), "PASS" if e <= t else "FAIL"))
    summaries = [MethodSummary(m, len(v), max(v), tol.get(m, FALLBACK_TOLERANCE))
                 for m, v in per_method.items()]
    lines = [f"baseline: {baseline}"]
    for s in summaries:
        lines.append(f"{s.method:16s} points={s.points:3d} max_rel_error={s.max_error:.4f} "
                     f"tol={s.tolerance:.3f} {'PASS' if s.passed else 'FAIL'}")
    return "\n".join(lines) + "\n", buf.getvalue(), summaries


def gnuplot_script(csv_path: str, rows: list[ResultRow], title: str = "") -> str:
    """Plot mean system time against the sweep value, one curve per (scenario, method)."""
    series = []
    for r in rows:
        key = (r.scenario, r.method)
        if key not in series:
            series.append(key)
    xlabel = next((r.sweep_param for r in rows if r.sweep_param), "point")
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        "set ylabel 'mean system time (slots)'",
        "set key left top",
        "set logscale y",
    ]
    plots = []
    for scen, meth in series:
        cond = f'(strcol(1) eq "{scen}" && strcol(2) eq "{meth}" && strcol(8) eq "1") ? $5 : 1/0'
        plots.append(f"'{csv_path}' every ::1 using 4:({cond}) with linespoints title '{scen} {meth}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- configuration

_FIELD_KEYS = {"n": "N", "m_c": "M_C", "p_c": "p_c", "eta": "eta", "eta_c": "eta_C",
               "lambda": "lam", "lam": "lam", "q": "q", "p": "p", "qs_max": "Qs_max",
               "protocol": "protocol"}
_INT_FIELDS = {"N", "M_C", "Qs_max"}
_KNOWN = set(_FIELD_KEYS) | {"psi", "chi", "methods", "sweep_param", "sweep_values", "horizon",
                             "replications", "base_seed", "availability_profile", "fixed_load"}


def parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _int(name, text):
    try:
        return int(text)
    except ValueError:
        raise ParameterError(name, f"expected an integer, got {text!r}") from None


def parse_float(name, text):
    try:
        return float(text)
    except ValueError:
        raise ParameterError(name, f"expected a number, got {text!r}") from None


def scenario_from_section(name: str, sec) -> Scenario:
    unknown = set(sec) - _KNOWN
    if unknown:
        raise ParameterError(sorted(unknown)[0], f"unknown key in section [{name}]")
    raw = {}
    for key, field_name in _FIELD_KEYS.items():
        if key in sec:
            if field_name == "protocol":
                raw[field_name] = sec[key]
            elif field_name in _INT_FIELDS:
                raw[field_name] = _int(key, sec[key])
            else:
                raw[field_name] = parse_float(key, sec[key])
    p_c = raw.get("p_c", 0.0)
    for alias, target in (("psi", "eta"), ("chi", "eta_C")):
        if alias in sec:
            if p_c >= 1.0:
                raise ParameterError(alias, "needs p_c < 1")
            raw[target] = parse_float(alias, sec[alias]) / (1.0 - p_c)
    missing = [f for f in ("N", "M_C", "eta", "eta_C", "q", "p") if f not in raw]
    if missing:
        raise ParameterError(missing[0], f"missing in section [{name}]")
    raw.setdefault("p_c", 0.0)
    raw.setdefault("lam", 0.0)
    params = derive(**raw)
    methods = tuple(m.strip() for m in sec.get("methods", "combined-exact").split(",") if m.strip())
    controls = SimControls(_int("horizon", sec.get("horizon", "350000")),
                           _int("replications", sec.get("replications", "10")),
                           _int("base_seed", sec.get("base_seed", "1")))
    sweep_param = sec.get("sweep_param") or None
    sweep_values = parse_floats(sec.get("sweep_values", "")) if sweep_param else ()
    profile = parse_floats(sec["availability_profile"]) if "availability_profile" in sec else None
    load = parse_float("fixed_load", sec["fixed_load"]) if "fixed_load" in sec else None
    return Scenario(name, params, methods, sweep_param, sweep_values, controls, profile, load)


def load_config(path) -> list[Scenario]:
    """One scenario per section; ``[DEFAULT]`` values are shared."""
    path = Path(path)
    if not path.is_file():
        raise ParameterError("config", f"no such file {str(path)!r}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ParameterError("config", str(exc)) from None
    if not cp.sections():
        raise ParameterError("config", f"{path} defines no scenario sections")
    return [scenario_from_section(name, cp[name]) for name in cp.sections()]


def override(scenario: Scenario, seed: int | None = None, methods=None) -> Scenario:
    changes = {}
    if seed is not None:
        changes["sim"] = replace(scenario.sim, base_seed=seed)
    if methods:
        changes["methods"] = tuple(methods)
    return replace(scenario, **changes) if changes else scenario
