"""The nine acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line, printed in the terminal summary.
Criterion 1 is split: 1a is the median slope verdict, 1b the per-replication
boundedness probe of the normalised error.
"""
import filecmp

import numpy as np
import pytest
from scipy import integrate

from heatavg.coefficients import CoefficientSet, SigmaSpec
from heatavg.config import StudyConfig
from heatavg.kernel import KernelParams, heat_kernel, kernel_convolve
from heatavg.measure import zero_measure
from heatavg.solver import AVERAGED, SpaceTimeGrid, solve_mild
from heatavg.study import (OSC_EPS, interpolation_probe, kernel_dx_sweep, lemma1_checks,
                           lemma2_checks, log_tail_sweep, oscillation_sweep, run_convergence_study,
                           run_suites)


@pytest.fixture(scope="module")
def default_rate():
    return run_convergence_study(StudyConfig())


def test_c1a_rate_median_slope(default_rate, record_criterion):
    r = default_rate
    ok = (r.status == "ok" and len(r.slopes) == 16 and r.median_slope >= 1 / 6 - 0.05
          and r.verdict)
    record_criterion("1a", ok, f"median slope {r.median_slope:.4f} >= 0.1167 over "
                               f"{len(r.slopes)} replications (range {min(r.slopes):.3f}.."
                               f"{max(r.slopes):.3f})")
    assert ok


def test_c1b_rate_boundedness_probe(default_rate, record_criterion):
    ratios = np.array(default_rate.probe_ratios)
    ok = bool(np.all(ratios <= 10.0))
    record_criterion("1b", ok, f"max/min of eps^-0.15 * sup_error per replication: "
                               f"{ratios.min():.2f}..{ratios.max():.2f} (limit 10, "
                               f"{int(np.sum(ratios > 10))}/16 over)")
    assert ok


def test_c2_lemma2_inequality(record_criterion):
    check = lemma2_checks(StudyConfig())[0]
    n = check.detail["combinations"]
    ok = check.passed and n >= 48
    record_criterion("2", ok, f"{n} (q, seed, beta) combinations, min slack "
                              f"{check.detail['min_slack']:.3g}")
    assert ok


def test_c3_oscillation_uniformity(record_criterion):
    maxima = oscillation_sweep(SigmaSpec())
    finite = all(np.isfinite(v) for v in maxima.values())
    ok = finite and maxima[OSC_EPS[-1]] <= 2 * maxima[OSC_EPS[0]]
    record_criterion("3", ok, "sweep maxima " + ", ".join(f"eps={e:g}: {v:.4g}"
                                                           for e, v in maxima.items()))
    assert ok


def test_c4_analytic_oracles(record_criterion):
    grid = SpaceTimeGrid(R=8, n_max=6, T=1.0, nt=32)
    u = solve_mild(zero_measure(grid.domain()), CoefficientSet(SigmaSpec(), "zero", "gauss"),
                   AVERAGED, grid)
    t, x = grid.t[:, None], grid.x[None, :]
    solve_err = float(np.max(np.abs(u.values - np.sqrt(1 / (1 + t)) * np.exp(-x ** 2 / (4 * (1 + t))))))
    mass_err = max(abs(integrate.quad(lambda y: heat_kernel(s, y), -np.inf, np.inf,
                                      epsabs=1e-12)[0] - 1) for s in np.logspace(-3, 0, 13))
    dx = 2.0 ** -6
    y = np.arange(-8, 8 + dx / 2, dx)
    field = np.exp(-y ** 2) * (1 + 0.5 * np.cos(3 * y))
    semi_err = float(np.max(np.abs(kernel_convolve(kernel_convolve(field, 0.1, dx), 0.3, dx)
                                   - kernel_convolve(field, 0.4, dx))))
    ok = solve_err < 1e-3 and mass_err < 1e-8 and semi_err < 1e-4
    record_criterion("4", ok, f"solve {solve_err:.2e} < 1e-3, mass {mass_err:.2e} < 1e-8, "
                              f"semigroup {semi_err:.2e} < 1e-4")
    assert ok


def test_c5_kernel_estimates(record_criterion):
    dx_check = kernel_dx_sweep(KernelParams())
    tail = log_tail_sweep(1.0)
    ok = dx_check.passed and tail.passed
    record_criterion("5", ok, f"derivative bound failures {dx_check.detail['failures']} "
                              f"(max lhs/rhs {dx_check.detail['max_lhs_over_rhs']:.16g}), "
                              f"log-tail failures {tail.detail['failures']}")
    assert ok


def test_c6_degenerate_averaging(record_criterion):
    cfg = StudyConfig(sigma_family="time_constant", replications=4)
    r = run_convergence_study(cfg)
    worst = float(r.errors.max())
    ok = worst <= 2 * cfg.tol and r.status == "degenerate: exact averaging"
    record_criterion("6", ok, f"max sup_error {worst:.3g} <= {2 * cfg.tol:g}")
    assert ok


def test_c7_lemma1_stabilization(record_criterion):
    series, _ = lemma1_checks(StudyConfig())
    ok = series.passed and series.detail["seeds"] == 8
    record_criterion("7", ok, f"8 seeds, worst tail relative increment "
                              f"{series.detail['worst_rel_increment']:.3g} (limit 1e-3)")
    assert ok


def test_c8_interpolation_probe(record_criterion):
    C = interpolation_probe(SigmaSpec())
    spread = max(C.values()) / min(C.values())
    ok = spread <= 3.0
    record_criterion("8", ok, "C(eps) " + ", ".join(f"{e:g}: {v:.4g}" for e, v in C.items())
                     + f"; spread {spread:.2f} <= 3")
    assert ok


def test_c9_determinism(tmp_path, record_criterion):
    cfg = StudyConfig(R=2, n_max=5, nt=16, eps=(2.0 ** -2, 2.0 ** -4, 2.0 ** -6),
                      replications=3, lemma_seeds=2)
    a, b = tmp_path / "a", tmp_path / "b"
    run_suites(cfg, cfg.suites, a)
    run_suites(cfg, cfg.suites, b)
    names = ["rate_report.csv", "rate_plot.csv", "lemma_suite.csv", "besov_ratios.csv",
             "study_manifest"]
    same = [filecmp.cmp(a / n, b / n, shallow=False) for n in names]
    ok = all(same)
    record_criterion("9", ok, f"{sum(same)}/{len(names)} output files byte-identical")
    assert ok
