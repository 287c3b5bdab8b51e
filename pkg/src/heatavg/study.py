"""End-to-end studies: coupled epsilon sweeps, lemma checks and CSV emission."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .besov import (SampledFunction, besov_norm, dyadic_sum, lemma2_version_and_bound,
                    w2_profile)
from .coefficients import (MODULATIONS, CoefficientSet, G_sigma, SigmaSpec,
                           averaged_oscillation_integral)
from .config import StudyConfig
from .kernel import KernelParams, kernel_dx_bound_check, log_tail_bound
from .measure import (DyadicDomain, check_tau_integrability, realize_sm, series_stabilized,
                      squared_integral_series, unit_interval_family)
from .solver import (ConvergenceError, HeatPropagator, NoiseTables, SpaceTimeGrid, solve_mild,
                     sup_error, time_kernel_table)

log = logging.getLogger(__name__)


class StudyError(RuntimeError):
    pass


def gamma1_bound(beta_sigma: float) -> float:
    """Supremum of admissible rates, ``(1 - 1/(2 beta)) / 2``."""
    return 0.5 * (1.0 - 1.0 / (2.0 * beta_sigma))


def _line_fit(pairs) -> tuple[float, float]:
    le = np.log([p[0] for p in pairs])
    lr = np.log([p[1] for p in pairs])
    xm, ym = le.mean(), lr.mean()
    slope = float(np.dot(le - xm, lr - ym) / np.dot(le - xm, le - xm))
    return slope, float(ym - slope * xm)


def fit_rate(pairs: Sequence[tuple[float, float]]) -> float | None:
    """Least-squares slope of ``log error`` against ``log eps``; ``None`` if an error is not positive."""
    if len(pairs) < 3:
        raise ValueError("need at least three (eps, error) pairs")
    if any(e <= 0 for _, e in pairs) or any(eps <= 0 for eps, _ in pairs):
        return None
    return _line_fit(pairs)[0]


def build_setup(config: StudyConfig):
    grid = SpaceTimeGrid(config.R, config.n_max, config.T, config.nt)
    spec = SigmaSpec(config.sigma_family, config.modulation, config.beta_sigma, config.smooth_sigma)
    coeffs = CoefficientSet(spec, config.drift, config.u0)
    return grid, spec, coeffs


def realize_for(config: StudyConfig, domain: DyadicDomain, seed: int):
    return realize_sm(config.sm_kind, domain, seed, weight=config.sm_weight, hurst=config.hurst,
                      stability=config.stability, jump_rate=config.jump_rate,
                      jump_size=config.jump_size)


@dataclass
class ReplicationResult:
    index: int
    seed: int
    errors: list
    checksums: list
    iterations: list
    flagged: str = ""


@dataclass
class RateReport:
    eps: tuple
    seeds: list
    errors: np.ndarray
    slopes: list
    median_slope: float | None
    gamma1_theoretical: float
    verdict: bool
    status: str
    probe_ratios: list = field(default_factory=list)
    flagged: list = field(default_factory=list)
    checksums: list = field(default_factory=list)
    intercepts: list = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return self.status.startswith("degenerate")


def _replication(config: StudyConfig, index: int, tables: NoiseTables | None) -> ReplicationResult:
    grid, spec, coeffs = build_setup(config)
    seed = config.base_seed + index
    sm = realize_for(config, grid.domain(), seed)
    prop = HeatPropagator(grid, config.n_std)
    res = ReplicationResult(index, seed, [], [], [])
    try:
        ubar = solve_mild(sm, coeffs, None, grid, config.tol, config.max_iter, tables, prop)
        res.checksums.append(ubar.meta["checksum"])
        res.iterations.append(ubar.meta["iterations"])
        for eps in config.eps:
            ueps = solve_mild(sm, coeffs, eps, grid, config.tol, config.max_iter, tables, prop)
            res.errors.append(sup_error(ueps, ubar, config.margin))
            res.checksums.append(ueps.meta["checksum"])
            res.iterations.append(ueps.meta["iterations"])
    except (ConvergenceError, FloatingPointError) as exc:
        res.flagged = str(exc)
    return res


def _replication_job(args):
    return _replication(*args)


def run_convergence_study(config: StudyConfig, jobs: int = 1) -> RateReport:
    """Coupled solves of the averaged and every epsilon equation per replication."""
    grid, spec, coeffs = build_setup(config)
    tables = NoiseTables.build(grid, spec, config.eps, config.points_per_period)
    tasks = [(config, m, tables) for m in range(config.replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replication_job, tasks))
    else:
        results = [_replication_job(t) for t in tasks]
    flagged = [r for r in results if r.flagged]
    for r in flagged:
        log.warning("replication %d (seed %d) excluded: %s", r.index, r.seed, r.flagged)
    if len(flagged) > 0.1 * len(results):
        raise StudyError(f"{len(flagged)} of {len(results)} replications failed to converge")
    good = [r for r in results if not r.flagged]
    for r in good:
        if len(set(r.checksums)) != 1:
            raise StudyError(f"replication {r.index} did not reuse one realization")
    errors = np.array([r.errors for r in good])
    gamma1 = 0.25 if spec.smooth else gamma1_bound(spec.beta_sigma)
    report = RateReport(tuple(config.eps), [r.seed for r in good], errors, [], None, gamma1,
                        False, "", flagged=[(r.index, r.flagged) for r in flagged],
                        checksums=[r.checksums[0] for r in good])
    if np.all(errors <= 2.0 * config.tol):
        report.status = "degenerate: exact averaging"
        report.verdict = True
        return report
    if len(config.eps) < 3:
        report.status = "degenerate: fewer than three eps values"
        return report
    gamma_probe = 0.9 * gamma1
    eps_arr = np.array(config.eps)
    for row in errors:
        pairs = list(zip(config.eps, row))
        slope = fit_rate(pairs)
        report.slopes.append(slope)
        report.intercepts.append(_line_fit(pairs)[1] if slope is not None else None)
        scaled = eps_arr ** (-gamma_probe) * row
        report.probe_ratios.append(float(scaled.max() / scaled.min()) if scaled.min() > 0 else math.inf)
    valid = [s for s in report.slopes if s is not None]
    if not valid:
        report.status = "degenerate: no positive errors"
        return report
    report.median_slope = float(np.median(valid))
    report.verdict = bool(report.median_slope >= gamma1 - config.slope_tol)
    report.status = "ok"
    return report


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows, comments: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_rate_report(report: RateReport, path: Path) -> None:
    rows = []
    for m, seed in enumerate(report.seeds):
        for k, eps in enumerate(report.eps):
            rows.append(("sup_error", m, seed, eps, report.errors[m, k]))
        if report.slopes:
            rows.append(("slope", m, seed, None, report.slopes[m]))
            rows.append(("probe_ratio", m, seed, None, report.probe_ratios[m]))
    rows.append(("median_slope", None, None, None, report.median_slope))
    rows.append(("gamma1_theoretical", None, None, None, report.gamma1_theoretical))
    rows.append(("verdict", None, None, None, report.verdict))
    _write_csv(path, ("record", "replication", "seed", "eps", "value"), rows,
               [f"status: {report.status}"])


def emit_plot_data(report: RateReport, path) -> None:
    """``series,replication,eps,error,slope,intercept``: one ``data`` row per
    (replication, eps) and one ``fit`` row per replication with the fitted
    line ``log error = intercept + slope log eps``."""
    path = Path(path)
    header = ("series", "replication", "eps", "error", "slope", "intercept")
    if report.degenerate or not report.slopes:
        _write_csv(path, header, [], [f"verdict: {report.status}"])
        return
    rows = []
    for m in range(len(report.seeds)):
        for k, eps in enumerate(report.eps):
            rows.append(("data", m, eps, report.errors[m, k], None, None))
    for m in range(len(report.seeds)):
        rows.append(("fit", m, None, None, report.slopes[m], report.intercepts[m]))
    _write_csv(path, header, rows)


def read_plot_data(path) -> dict:
    """Parse ``emit_plot_data`` output into ``{replication: [(eps, error), ...]}``."""
    out: dict = {}
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        if row["series"] == "data":
            out.setdefault(int(row["replication"]), []).append(
                (float(row["eps"]), float(row["error"])))
    return out


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict
    expected_fail: bool = False

    @property
    def ok(self) -> bool:
        return self.passed != self.expected_fail


def lemma1_checks(config: StudyConfig) -> list[Check]:
    dom = DyadicDomain(-8, 8, config.n_max)
    fam = unit_interval_family(-8, 8, rho=6.0)
    stable, worst, tau_ok = [], 0.0, []
    for i in range(config.lemma_seeds):
        sm = realize_for(config, dom, config.base_seed + i)
        s = squared_integral_series(sm, fam)
        stable.append(series_stabilized(s, 1e-3, 4))
        tail = s[-5:]
        worst = max(worst, float(np.max(np.abs(np.diff(tail)) / np.where(tail[1:] > 0, tail[1:], 1.0))))
        tau_ok.append(check_tau_integrability(sm, 3.0, (4, 6, 8)).stabilized)
    return [Check("lemma1_series_rho6", all(stable), {"worst_rel_increment": worst,
                                                      "seeds": config.lemma_seeds}),
            Check("tau3_integrability", all(tau_ok), {"stabilized": sum(tau_ok)})]


def lemma2_q_functions(config: StudyConfig) -> dict:
    spec = SigmaSpec(config.sigma_family, config.modulation, config.beta_sigma, config.smooth_sigma)
    grid = SpaceTimeGrid(2, config.n_max, config.T, 4)
    K = time_kernel_table(grid, spec, 1e-2, config.points_per_period)
    y = np.linspace(0.0, 1.0, (1 << config.n_max) + 1)
    d = np.rint(np.abs(y - 0.5) / grid.dx).astype(int)
    return {
        "constant": np.full_like(y, 1.5),
        "linear": y.copy(),
        "holder075": np.abs(y - 0.3) ** 0.75,
        "sine": np.sin(2 * math.pi * y),
        "step1_field": spec.amplitude(y) * K[-1, d],
    }


def lemma2_checks(config: StudyConfig) -> list[Check]:
    dom = DyadicDomain(-1, 1, config.n_max)
    qs = lemma2_q_functions(config)
    results = []
    for i in range(config.lemma_seeds):
        sm = realize_for(config, dom, config.base_seed + i)
        for name, vals in qs.items():
            q = SampledFunction(0.0, 1.0, vals)
            for beta in (0.2, 0.5):
                r = lemma2_version_and_bound(q, sm, 0, beta)
                results.append((name, i, beta, r))
    margin = min(r["bound"] - abs(r["eta_tilde"]) for *_, r in results)
    return [Check("lemma2_dyadic_bound", all(r["holds"] for *_, r in results),
                  {"combinations": len(results), "min_slack": margin})]


def besov_ratio_rows(depths=(8, 10, 12), exponent: float = 0.75, alpha: float = 0.6):
    beta = 2 * alpha - 1
    rows = []
    for n in depths:
        q = SampledFunction.from_callable(lambda y: np.abs(y) ** exponent, 0.0, 1.0, 1 << n)
        ds = dyadic_sum(q, beta, n)
        rep = besov_norm(q, alpha)
        rows.append({"n_max": n, "dyadic_sum": ds, "besov_norm": rep.norm,
                     "l2_part": rep.l2_part, "modulus_integral": rep.modulus_integral,
                     "ratio": ds / rep.norm})
    return rows


def besov_ratio_check(rows, spread: float = 1.1) -> Check:
    ratios = [r["ratio"] for r in rows]
    stable = max(ratios) / min(ratios) <= spread
    return Check("besov_ratio_stability", bool(stable and all(np.isfinite(ratios))),
                 {"min_ratio": min(ratios), "max_ratio": max(ratios)})


OSC_EPS = (1e-1, 1e-2, 1e-3, 1e-4)
OSC_D = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
OSC_T = (0.1, 0.5, 1.0)
OSC_Y = (-2.0, 0.0, 2.0)


def oscillation_sweep(spec: SigmaSpec) -> dict:
    """Max of the scaled oscillation integral over the D, t, y lattice for each eps."""
    out = {}
    for eps in OSC_EPS:
        out[eps] = max(abs(averaged_oscillation_integral(spec, eps, D, t, y))
                       for D in OSC_D for t in OSC_T for y in OSC_Y)
    return out


def oscillation_check(spec: SigmaSpec) -> Check:
    maxima = oscillation_sweep(spec)
    finite = all(np.isfinite(v) for v in maxima.values())
    ok = finite and maxima[OSC_EPS[-1]] <= 2.0 * maxima[OSC_EPS[0]]
    return Check("oscillation_uniformity", bool(ok), {f"max_eps_{e:g}": v for e, v in maxima.items()})


def kernel_dx_sweep(params: KernelParams, n_t: int = 31, n_x: int = 2001) -> Check:
    worst = -math.inf
    fails = 0
    for t in np.logspace(-3, 0, n_t):
        for x in np.linspace(-10, 10, n_x):
            r = kernel_dx_bound_check(float(t), float(x), params)
            fails += not r["holds"]
            if r["rhs"] > 0:
                worst = max(worst, r["lhs"] / r["rhs"])
    name = "kernel_dx_bound" if params.lambda_dx == 0.125 else f"kernel_dx_bound_lambda_{params.lambda_dx:g}"
    return Check(name, fails == 0, {"failures": fails, "max_lhs_over_rhs": worst})


def log_tail_sweep(T: float) -> Check:
    fails, slack = 0, math.inf
    for b in np.logspace(-4, 2, 61):
        r = log_tail_bound(float(b), T, T)
        fails += not r["holds"]
        slack = min(slack, r["rhs"] - r["lhs"])
    return Check("log_tail_bound", fails == 0, {"failures": fails, "min_slack": slack})


def G_sigma_sweep(spec: SigmaSpec, n_r: int = 20001) -> Check:
    """``|G_sigma| <= 2 P M_sigma`` on ``r in [0, 100 P]`` and no growth between quarter and full sweep."""
    P = spec.period or 2 * math.pi
    r = np.linspace(0.0, 100 * P, n_r)
    G = np.abs(np.stack([G_sigma(spec, r, y) for y in OSC_Y]))
    full = float(G.max())
    quarter = float(G[:, : n_r // 4 + 1].max())
    growth = full / quarter if quarter > 0 else 1.0
    bound = 2 * P * spec.M_sigma
    ok = full <= bound and growth <= 1.5
    return Check(f"G_sigma_bounded_{spec.modulation}", bool(ok),
                 {"max_abs_G": full, "bound": bound, "growth_ratio": growth},
                 expected_fail=not spec.has_bounded_primitive)


def run_lemma_suite(config: StudyConfig) -> list[Check]:
    _, spec, _ = build_setup(config)
    params = KernelParams(config.C_dx, config.lambda_dx, config.T)
    checks = []
    checks += lemma1_checks(config)
    checks += lemma2_checks(config)
    checks.append(besov_ratio_check(besov_ratio_rows()))
    checks.append(oscillation_check(spec))
    checks.append(kernel_dx_sweep(params))
    bad = kernel_dx_sweep(KernelParams(config.C_dx, 10.0, config.T), n_t=7, n_x=201)
    bad.expected_fail = True
    checks.append(bad)
    checks.append(log_tail_sweep(config.T))
    checks.append(G_sigma_sweep(spec))
    checks.append(G_sigma_sweep(SigmaSpec("chirp", beta_sigma=spec.beta_sigma if not spec.smooth else 0.75)))
    return checks


def write_checks(checks: Sequence[Check], path: Path) -> None:
    rows = [(c.name, c.passed, c.expected_fail, c.ok, json.dumps(c.detail, sort_keys=True,
                                                                  default=float))
            for c in checks]
    _write_csv(path, ("check", "passed", "expected_fail", "ok", "detail"), rows)


PROBE_EPS = (1e-1, 1e-3)
PROBE_T = (0.25, 0.5, 1.0)
PROBE_X = (0.0, 0.25, 0.5, 0.75)


def interpolation_probe(spec: SigmaSpec, n_max: int = 8, points_per_period: int = 32) -> dict:
    """``C(eps) = max over z, r of w2(g(z, .), r)^2 / min(r^(2 beta), eps)`` on ``[0, 1]``."""
    grid = SpaceTimeGrid(2, n_max, 1.0, 4)
    y = np.linspace(0.0, 1.0, (1 << n_max) + 1)
    r = np.arange(1, y.size) * grid.dx
    out = {}
    for eps in PROBE_EPS:
        K = time_kernel_table(grid, spec, eps, points_per_period)
        best = 0.0
        for t in PROBE_T:
            i = int(round(t / grid.dt))
            for x in PROBE_X:
                d = np.rint(np.abs(y - x) / grid.dx).astype(int)
                g = SampledFunction(0.0, 1.0, spec.amplitude(y) * K[i, d])
                w = w2_profile(g)[1:]
                best = max(best, float(np.max(w ** 2 / np.minimum(r ** (2 * spec.beta_sigma), eps))))
        out[eps] = best
    return out


def interpolation_check(spec: SigmaSpec, factor: float = 3.0) -> Check:
    C = interpolation_probe(spec)
    spread = max(C.values()) / min(C.values())
    return Check("interpolation_probe", bool(spread <= factor),
                 {**{f"C_eps_{e:g}": v for e, v in C.items()}, "spread": spread})


def run_besov_suite(config: StudyConfig) -> tuple[list[dict], list[Check]]:
    _, spec, _ = build_setup(config)
    rows = besov_ratio_rows()
    checks = [besov_ratio_check(rows), interpolation_check(spec)]
    return rows, checks


def write_besov(rows, checks, path: Path) -> None:
    out = [("ratio", r["n_max"], r["dyadic_sum"], r["besov_norm"], r["l2_part"],
            r["modulus_integral"], r["ratio"]) for r in rows]
    for c in checks:
        for k, v in sorted(c.detail.items()):
            out.append((c.name, k, None, None, None, None, v))
    _write_csv(path, ("record", "key", "dyadic_sum", "besov_norm", "l2_part",
                      "modulus_integral", "value"), out)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_suites(config: StudyConfig, suites: Sequence[str], out_dir, jobs: int = 1) -> dict:
    """Run the selected suites, write CSVs and the manifest; returns pass flags per suite."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status: dict = {}
    written = []
    if "rate" in suites:
        report = run_convergence_study(config, jobs)
        write_rate_report(report, out / "rate_report.csv")
        emit_plot_data(report, out / "rate_plot.csv")
        written += ["rate_report.csv", "rate_plot.csv"]
        status["rate"] = report.verdict
    if "lemmas" in suites:
        checks = run_lemma_suite(config)
        write_checks(checks, out / "lemma_suite.csv")
        written.append("lemma_suite.csv")
        status["lemmas"] = all(c.ok for c in checks)
    if "besov" in suites:
        rows, checks = run_besov_suite(config)
        write_besov(rows, checks, out / "besov_ratios.csv")
        written.append("besov_ratios.csv")
        status["besov"] = all(c.ok for c in checks)
    manifest = {
        "config": config.to_text().splitlines(),
        "versions": {"heatavg": __version__, "numpy": np.__version__},
        "suites": list(suites),
        "status": status,
        "checksums": {name: _sha(out / name) for name in written},
    }
    (out / "study_manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    return status
