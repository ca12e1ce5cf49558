"""Experiment front end: plan files, sweeps, decay fits and CSV reports.

Plan files are TOML.  A minimal plan:

    [experiment]
    output_dir = "out"

    [grid]
    p = 2.0
    r = 1.5            # any of p, r may be a list: cartesian sweep

    [graph]
    kind = "lattice"   # or "edge_list" with path = "graph.txt"
    dim = 1            # may be a list
    radius = 250       # or "auto"

    [absorption]
    kind = "constant"  # constant | power | power_log
    c = 1.0            # c / alpha / beta may be lists

    [initial]
    kind = "delta"     # delta | box | file
    mass = 1.0

    [time]
    t_end = 1000.0

    [output]
    t_first = 1.0
    ratio = 1.333521432163324
    count = 25

Every swept combination is validated eagerly (the window 2 <= p < r+1, the
fit window, the schedule); violations name the offending keys.  Each run
writes its series as `<label>.csv` and the sweep writes one `summary.csv`
row per run.  Identical plans reproduce byte-identical outputs, regardless
of the worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .graphs import LatticeSpec, WeightedGraph
from .integrate import DecaySeries, SimConfig, run
from .operators import (AbsorptionProfile, box_field, delta_field, load_field)
from .theory import (RateModel, critical_exponent, mass_envelope, phi,
                     phi_inverse, sup_envelope)


class ConfigError(ValueError):
    """A plan or model file is malformed or violates a parameter invariant."""


@dataclass(frozen=True)
class InitialSpec:
    """Initial data recipe: delta at the root, a box, or a file of values."""

    kind: str = "delta"
    mass: float = 1.0
    width: int = 0
    path: str | None = None

    def build(self, g: WeightedGraph) -> np.ndarray:
        if self.kind == "delta":
            return delta_field(g, self.mass)
        if self.kind == "box":
            return box_field(g, self.width, self.mass)
        if self.kind == "file":
            return load_field(g, self.path)
        raise ConfigError(f"unknown initial data kind {self.kind!r}")


@dataclass(frozen=True)
class RunCase:
    """One fully resolved run of a sweep."""

    label: str
    config: SimConfig
    initial: InitialSpec
    N: int


@dataclass(frozen=True)
class ExperimentPlan:
    cases: tuple[RunCase, ...]
    output_dir: Path
    fit_window: tuple[float, float] | None = None
    envelope_compare: bool = True
    decay_threshold: float = 0.05
    workers: int = 1


@dataclass
class ReportRow:
    """Summary of one run: fitted decay behaviour against the envelopes."""

    label: str
    p: float
    r: float
    N: int
    profile: str
    mass_initial: float = math.nan
    mass_final: float = math.nan
    slope: float = math.nan
    slope_stderr: float = math.nan
    predicted_slope: float = math.nan
    env_ratio_max: float = math.nan
    env_ratio_min: float = math.nan
    env_ratio_final: float = math.nan
    fitted_C: float = math.nan
    sup_ratio_max: float = math.nan
    sup_ratio_final: float = math.nan
    verdict: str = ""
    alarmed: bool = False
    finding: str = ""
    error: str = ""

    FIELDS = ("label", "p", "r", "N", "profile", "mass_initial", "mass_final",
              "slope", "slope_stderr", "predicted_slope", "env_ratio_max",
              "env_ratio_min", "env_ratio_final", "fitted_C", "sup_ratio_max",
              "sup_ratio_final", "verdict", "alarmed", "finding", "error")


def _as_list(value) -> list:
    return list(value) if isinstance(value, list) else [value]


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] is missing required key {key!r}")
    return table[key]


def _profile_from_table(tab: dict, c, alpha, beta) -> AbsorptionProfile:
    kind = tab.get("kind", "constant")
    try:
        if kind == "constant":
            return AbsorptionProfile.constant(c)
        if kind == "power":
            return AbsorptionProfile.power(
                alpha, tab.get("alpha1"), tab.get("alpha2"))
        if kind == "power_log":
            return AbsorptionProfile.power_log(
                alpha, beta, tab.get("alpha1", 0.0), tab.get("alpha2"))
    except ValueError as exc:
        raise ConfigError(f"[absorption] {exc}") from None
    raise ConfigError(f"[absorption] unknown kind {kind!r}")


def _auto_radius(p: float, t_end: float, sup0: float) -> int:
    """Truncation radius guidance from the effective support growth; the
    boundary-flux alarm remains the authoritative safety net."""
    c = 8.0
    if p == 2:
        return max(4, math.ceil(c * math.sqrt(t_end)))
    return max(4, math.ceil(c * (t_end * sup0 ** (p - 2.0)) ** (1.0 / p)))


def parse_config(path) -> ExperimentPlan:
    """Load and validate a plan file, expanding sweep axes eagerly."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    exp = raw.get("experiment", {})
    grid = raw.get("grid", {})
    graph_tab = raw.get("graph", {})
    absorb = raw.get("absorption", {})
    initial_tab = raw.get("initial", {})
    time_tab = raw.get("time", {})
    out_tab = raw.get("output", {})

    t_end = float(_require(time_tab, "t_end", "time"))
    initial = InitialSpec(
        kind=initial_tab.get("kind", "delta"),
        mass=float(initial_tab.get("mass", 1.0)),
        width=int(initial_tab.get("width", 0)),
        path=initial_tab.get("path"))
    if initial.kind not in ("delta", "box", "file"):
        raise ConfigError(f"[initial] unknown kind {initial.kind!r}")
    if initial.kind == "file" and not initial.path:
        raise ConfigError("[initial] kind 'file' requires a path")

    graph_kind = graph_tab.get("kind", "lattice")
    if graph_kind not in ("lattice", "edge_list"):
        raise ConfigError(f"[graph] unknown kind {graph_kind!r}")
    if graph_kind == "edge_list" and "path" not in graph_tab:
        raise ConfigError("[graph] kind 'edge_list' requires a path")

    p_vals = [float(v) for v in _as_list(_require(grid, "p", "grid"))]
    r_vals = [float(v) for v in _as_list(_require(grid, "r", "grid"))]
    c_vals = [float(v) for v in _as_list(absorb.get("c", 1.0))]
    a_vals = [float(v) for v in _as_list(absorb.get("alpha", 0.0))]
    b_vals = [float(v) for v in _as_list(absorb.get("beta", 0.0))]
    dims = [int(v) for v in _as_list(graph_tab.get("dim", 1))]

    sched = dict(
        t_first=float(out_tab.get("t_first", 1.0)),
        ratio=float(out_tab.get("ratio", 10 ** 0.125)),
        count=int(out_tab.get("count", 25)))
    knobs = dict(
        dt_init=float(time_tab.get("dt_init", 1e-6)),
        dt_safety=float(time_tab.get("dt_safety", 0.9)),
        rel_step_cap=float(time_tab.get("rel_step_cap", 0.02)),
        positivity_eps=float(time_tab.get("positivity_eps", 1e-12)),
        flux_alarm_fraction=float(time_tab.get("flux_alarm_fraction", 1e-3)))

    cases = []
    idx = 0
    for dim in dims:
        for p in p_vals:
            for r in r_vals:
                for c in c_vals:
                    for alpha in a_vals:
                        for beta in b_vals:
                            if not (2 <= p < r + 1):
                                raise ConfigError(
                                    f"{path}: [grid] p={p:g}, r={r:g} violates "
                                    f"2 <= p < r+1 (r+1-p = {r + 1 - p:g})")
                            profile = _profile_from_table(absorb, c, alpha, beta)
                            if graph_kind == "lattice":
                                radius = graph_tab.get("radius", "auto")
                                if radius == "auto":
                                    sup0 = initial.mass / \
                                        (2 * dim * float(graph_tab.get("weight", 1.0)))
                                    radius = _auto_radius(p, t_end, sup0)
                                source = LatticeSpec(
                                    dim=dim, radius=int(radius),
                                    weight=float(graph_tab.get("weight", 1.0)))
                                n_dim = int(graph_tab.get("N", dim))
                            else:
                                source = str(graph_tab["path"])
                                n_dim = int(graph_tab.get("N", 1))
                            try:
                                config = SimConfig(
                                    p=p, r=r, profile=profile,
                                    graph_source=source, t_end=t_end,
                                    **knobs, **sched)
                            except ValueError as exc:
                                raise ConfigError(f"{path}: {exc}") from None
                            parts = [f"run{idx:02d}"]
                            if len(dims) > 1:
                                parts.append(f"dim{dim:g}")
                            parts.append(f"p{p:g}")
                            parts.append(f"r{r:g}")
                            if len(c_vals) > 1:
                                parts.append(f"c{c:g}")
                            if len(a_vals) > 1:
                                parts.append(f"a{alpha:g}")
                            if len(b_vals) > 1:
                                parts.append(f"b{beta:g}")
                            cases.append(RunCase(
                                label="_".join(parts), config=config,
                                initial=initial, N=n_dim))
                            idx += 1

    fit_window = None
    if "fit_window" in exp:
        lo, hi = (float(v) for v in exp["fit_window"])
        if not lo < hi:
            raise ConfigError(
                f"[experiment] fit_window needs t_lo < t_hi, got [{lo:g}, {hi:g}]")
        if hi > t_end * (1 + 1e-9):
            raise ConfigError(
                f"[experiment] fit_window end {hi:g} exceeds t_end {t_end:g}")
        fit_window = (lo, hi)

    return ExperimentPlan(
        cases=tuple(cases),
        output_dir=Path(exp.get("output_dir", "plapdecay-out")),
        fit_window=fit_window,
        envelope_compare=bool(exp.get("envelope_compare", True)),
        decay_threshold=float(exp.get("decay_threshold", 0.05)),
        workers=int(exp.get("workers", 1)))


def fit_decay_exponent(series: DecaySeries, t_lo: float,
                       t_hi: float) -> tuple[float, float]:
    """Least-squares slope (and its standard error) of log M against log t
    over the records falling in [t_lo, t_hi]."""
    sel = (series.t >= t_lo * (1 - 1e-12)) & (series.t <= t_hi * (1 + 1e-12))
    n = int(sel.sum())
    if n < 5:
        raise ValueError(
            f"need at least 5 records in [{t_lo:g}, {t_hi:g}], found {n}")
    M = series.mass[sel]
    if not (M > 0).all():
        raise ValueError("nonpositive mass inside the fit window")
    x = np.log(series.t[sel])
    y = np.log(M)
    xc = x - x.mean()
    sxx = float(np.sum(xc * xc))
    slope = float(np.sum(xc * (y - y.mean())) / sxx)
    resid = y - y.mean() - slope * xc
    ssr = float(np.sum(resid ** 2))
    stderr = math.sqrt(max(ssr, 0.0) / (n - 2) / sxx)
    return slope, stderr


def _execute_case(case: RunCase):
    """Worker body: build the graph and initial data, run, and return the
    series plus the ring-mass tail of u0 (for the envelope's tail term)."""
    g = case.config.build_graph()
    u0 = case.initial.build(g)
    series = run(case.config, u0, graph=g)
    ring = np.zeros(g.radius + 1)
    np.add.at(ring, g.dist, u0 * g.measure)
    tail = np.concatenate([np.cumsum(ring[::-1])[::-1][1:], [0.0]])
    return series, tail


def _tail_fn(tail: np.ndarray):
    def u0_tail(R: float) -> float:
        k = int(math.floor(R))
        return float(tail[min(k, len(tail) - 1)])
    return u0_tail


def _analyze(case: RunCase, series: DecaySeries, tail: np.ndarray,
             plan: ExperimentPlan) -> ReportRow:
    cfg = case.config
    row = ReportRow(label=case.label, p=cfg.p, r=cfg.r, N=case.N,
                    profile=cfg.profile.describe())
    row.mass_initial = float(series.mass[0])
    row.mass_final = float(series.mass[-1])
    row.alarmed = series.alarmed
    row.verdict = ("decay" if row.mass_final <= plan.decay_threshold *
                   row.mass_initial else "no-decay")
    findings = []
    if series.alarmed:
        findings.append(f"truncation alarm at t={series.alarm_time:g}")

    window = plan.fit_window or (cfg.t_end / 10.0, cfg.t_end)
    try:
        row.slope, row.slope_stderr = fit_decay_exponent(series, *window)
    except ValueError as exc:
        findings.append(f"fit skipped: {exc}")

    if plan.envelope_compare:
        try:
            model = RateModel(p=cfg.p, r=cfg.r, N=case.N, profile=cfg.profile)
            u0_tail = _tail_fn(tail)
            sel = ((series.t >= window[0] * (1 - 1e-12))
                   & (series.t <= window[1] * (1 + 1e-12))
                   & (series.mass > 0))
            ts = series.t[sel]
            if len(ts) >= 2 and ts[0] >= phi(model, 1.0):
                env = np.array([mass_envelope(model, t, u0_tail) for t in ts])
                ratio = series.mass[sel] / env
                row.env_ratio_max = float(ratio.max())
                row.env_ratio_min = float(ratio.min())
                row.env_ratio_final = float(ratio[-1])
                row.fitted_C = row.env_ratio_max
                row.predicted_slope = float(
                    (math.log(env[-1]) - math.log(env[0]))
                    / (math.log(ts[-1]) - math.log(ts[0])))
                senv = np.array([sup_envelope(model, t, M) for t, M in
                                 zip(ts, series.mass[sel])])
                sratio = series.sup[sel] / senv
                row.sup_ratio_max = float(sratio.max())
                row.sup_ratio_final = float(sratio[-1])
            else:
                findings.append("envelope skipped: fit window outside the "
                                "rate function's range")
        except (ValueError, ArithmeticError) as exc:
            findings.append(f"envelope skipped: {type(exc).__name__}: {exc}")

    if (row.verdict == "decay" and cfg.profile.kind == "constant"
            and cfg.profile.c == 1.0):
        rstar = critical_exponent(cfg.p, case.N, mode="fujita_q1")
        if cfg.r >= rstar:
            findings.append(
                f"decay verdict although r={cfg.r:g} >= r*={rstar:g}")
    row.finding = "; ".join(findings)
    return row


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_summary(path: Path, rows: list[ReportRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ReportRow.FIELDS)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, f))
                             for f in ReportRow.FIELDS])


def run_experiment(plan: ExperimentPlan) -> list[ReportRow]:
    """Run every case of the plan, write per-run series CSVs and summary.csv.

    Integrator failures are recorded per row and do not abort the sweep.
    """
    plan.output_dir.mkdir(parents=True, exist_ok=True)
    outcomes: list = [None] * len(plan.cases)
    if plan.workers > 1 and len(plan.cases) > 1:
        with concurrent.futures.ProcessPoolExecutor(plan.workers) as pool:
            futures = [pool.submit(_execute_case, c) for c in plan.cases]
            for i, fut in enumerate(futures):
                try:
                    outcomes[i] = fut.result()
                except Exception as exc:  # noqa: BLE001 - per-row isolation
                    outcomes[i] = exc
    else:
        for i, case in enumerate(plan.cases):
            try:
                outcomes[i] = _execute_case(case)
            except Exception as exc:  # noqa: BLE001 - per-row isolation
                outcomes[i] = exc

    rows = []
    for case, outcome in zip(plan.cases, outcomes):
        if isinstance(outcome, Exception):
            row = ReportRow(label=case.label, p=case.config.p, r=case.config.r,
                            N=case.N, profile=case.config.profile.describe(),
                            error=f"{type(outcome).__name__}: {outcome}")
        else:
            series, tail = outcome
            series.to_csv(plan.output_dir / f"{case.label}.csv")
            row = _analyze(case, series, tail, plan)
        rows.append(row)
    _write_summary(plan.output_dir / "summary.csv", rows)
    return rows


THEORY_HEADER = ("t", "R_tilde", "mass_rate", "sup_env_unit_mass",
                 "rstar_fujita_q1", "rstar_fujita_power", "rstar_alpha_eq_r",
                 "lambda", "H", "gamma")


def theory_report(model: RateModel, t_list, out_path=None) -> list[dict]:
    """Tabulate the closed-form rate quantities at the given times.

    Each row carries the effective radius, the mass envelope's rate part,
    the sup envelope at unit mass, the three critical exponents and the
    derived constants.  Times below Phi(1) are rejected.
    """
    alpha = model.profile.alpha
    try:
        r_power = critical_exponent(model.p, model.N, alpha, "fujita_power")
    except ValueError:
        r_power = math.nan
    fixed = dict(
        rstar_fujita_q1=critical_exponent(model.p, model.N, mode="fujita_q1"),
        rstar_fujita_power=r_power,
        rstar_alpha_eq_r=critical_exponent(model.p, model.N,
                                           mode="alpha_eq_r"),
        **{"lambda": model.lam}, H=model.H, gamma=model.gamma)
    rows = []
    for t in t_list:
        t = float(t)
        if t < phi(model, 1.0) * (1 - 1e-12):
            raise ValueError(f"t={t:g} is below Phi(1)={phi(model, 1.0):g}")
        rows.append(dict(
            t=t, R_tilde=phi_inverse(model, t),
            mass_rate=mass_envelope(model, t),
            sup_env_unit_mass=sup_envelope(model, t, 1.0), **fixed))
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(THEORY_HEADER)
            for row in rows:
                writer.writerow([_format_cell(row[k]) for k in THEORY_HEADER])
    return rows


def parse_model_file(path) -> RateModel:
    """Load a RateModel from a TOML file with [model] and [absorption]."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    model_tab = raw.get("model", {})
    absorb = raw.get("absorption", {})
    profile = _profile_from_table(
        absorb, float(absorb.get("c", 1.0)), float(absorb.get("alpha", 0.0)),
        float(absorb.get("beta", 0.0)))
    try:
        return RateModel(
            p=float(_require(model_tab, "p", "model")),
            r=float(_require(model_tab, "r", "model")),
            N=int(_require(model_tab, "N", "model")),
            profile=profile)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
