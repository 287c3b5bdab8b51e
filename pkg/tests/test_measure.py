import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from heatavg.measure import (DyadicDomain, IntegrandFamily, atom_indicator, chambers_mallows_stuck,
                             check_tau_integrability, fgn_davies_harte, integrate_deterministic,
                             load_realization, measure_of, realize_sm, save_realization,
                             series_stabilized, squared_integral_series, unit_interval_family,
                             zero_measure)


@pytest.fixture(scope="module")
def wiener_unit():
    return realize_sm("wiener", DyadicDomain(-8, 8, 8), 3, weight="unit")


def test_domain_grid():
    dom = DyadicDomain(-1, 1, 8)
    assert dom.atoms_per_unit == 256
    assert dom.n_atoms == 512
    e = dom.endpoints()
    for n in range(dom.n_max + 1):
        for k in range(0, (1 << n) + 1, max(1, (1 << n) // 4)):
            assert e[dom.grid_index(dom.d(0, k, n))] == 0 + k * 2.0 ** -n
    with pytest.raises(ValueError):
        DyadicDomain(1, 1, 3)
    with pytest.raises(ValueError):
        DyadicDomain(0, 1, 0)


def test_seed_reproducible():
    dom = DyadicDomain(-1, 1, 8)
    a = realize_sm("wiener", dom, 7)
    b = realize_sm("wiener", dom, 7)
    assert np.array_equal(a.atom_values, b.atom_values)
    assert not np.array_equal(a.atom_values, realize_sm("wiener", dom, 8).atom_values)


@pytest.mark.parametrize("kind", ["fbm_weighted", "alpha_stable", "pure_jump_martingale"])
def test_other_kinds_reproducible(kind):
    dom = DyadicDomain(-2, 2, 6)
    a = realize_sm(kind, dom, 11)
    assert np.array_equal(a.atom_values, realize_sm(kind, dom, 11).atom_values)
    assert np.all(np.isfinite(a.atom_values))


def test_wiener_variance_matches_atom_length(wiener_unit):
    v = wiener_unit.atom_values
    assert v.size >= 2 ** 12
    assert abs(v.var() / 2.0 ** -8 - 1.0) < 0.1


def test_wiener_atoms_uncorrelated(wiener_unit):
    v = wiener_unit.atom_values
    for lag in (1, 2, 7):
        assert abs(np.corrcoef(v[:-lag], v[lag:])[0, 1]) < 0.1


def test_fbm_zero_weight():
    sm = realize_sm("fbm_weighted", DyadicDomain(-2, 2, 6), 5, weight="zero")
    assert np.all(sm.atom_values == 0.0)


def test_fbm_rejects_non_decaying_weight():
    with pytest.raises(ValueError):
        realize_sm("fbm_weighted", DyadicDomain(-2, 2, 6), 5, weight="unit")


@pytest.mark.parametrize("kind,kw", [("fbm_weighted", {"hurst": 0.5}), ("fbm_weighted", {"hurst": 1.0}),
                                     ("alpha_stable", {"stability": 1.0}),
                                     ("alpha_stable", {"stability": 2.0}), ("cauchy", {})])
def test_invalid_parameters(kind, kw):
    with pytest.raises(ValueError):
        realize_sm(kind, DyadicDomain(-1, 1, 4), 0, **kw)


def test_atom_budget():
    with pytest.raises(ValueError):
        realize_sm("wiener", DyadicDomain(-8, 8, 20), 0)


def test_fgn_covariance_monte_carlo():
    # exact fGn autocovariance at unit step versus many short samples
    H, n, reps = 0.7, 8, 20000
    rng = np.random.default_rng(0)
    samples = np.array([fgn_davies_harte(n, H, 1.0, rng) for _ in range(reps)])
    emp = samples.T @ samples / reps
    k = np.arange(n)
    gamma = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    exact = gamma[np.abs(k[:, None] - k[None, :])]
    assert np.max(np.abs(emp - exact)) < 0.05


def test_cms_matches_scipy_stable():
    rng = np.random.default_rng(1)
    x = chambers_mallows_stuck(1.5, 2000, rng)
    p = stats.kstest(x, stats.levy_stable(1.5, 0.0).cdf).pvalue
    assert p > 1e-3


def test_pure_jump_moments():
    sm = realize_sm("pure_jump_martingale", DyadicDomain(-8, 8, 6), 2, weight="unit",
                    jump_rate=4.0, jump_size=0.5)
    v = sm.atom_values
    assert abs(v.mean()) < 4 * math.sqrt(0.25 * 4 * 2.0 ** -6 / v.size)
    assert abs(v.var() / (0.25 * 4 * 2.0 ** -6) - 1) < 0.15


def test_parent_equals_children_exactly():
    sm = realize_sm("alpha_stable", DyadicDomain(-2, 2, 7), 4)
    for j in range(-2, 2):
        lv = sm.levels(j)
        for n in range(sm.domain.n_max):
            assert np.array_equal(lv[n], lv[n + 1][0::2] + lv[n + 1][1::2])


def test_measure_of_examples():
    sm = realize_sm("wiener", DyadicDomain(-1, 1, 8), 7)
    whole = measure_of(sm, 0, 1)
    assert whole == pytest.approx(sm.unit_block(0).sum(), rel=1e-12, abs=1e-15)
    assert measure_of(sm, 0, 0.5) + measure_of(sm, 0.5, 1) == whole
    assert measure_of(sm, 0.25, 0.25) == 0.0
    assert measure_of(sm, -1, 1) == pytest.approx(sm.atom_values.sum(), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 8), k=st.integers(1, 256), j=st.sampled_from([-1, 0]))
def test_measure_of_dyadic_interval_is_tree_value(n, k, j):
    sm = realize_sm("wiener", DyadicDomain(-1, 1, 8), 9)
    k = (k - 1) % (1 << n) + 1
    a, b = j + (k - 1) * 2.0 ** -n, j + k * 2.0 ** -n
    assert measure_of(sm, a, b) == sm.levels(j)[n][k - 1]


def test_measure_of_errors():
    sm = realize_sm("wiener", DyadicDomain(-1, 1, 4), 0)
    with pytest.raises(ValueError):
        measure_of(sm, 0.01, 0.5)
    with pytest.raises(ValueError):
        measure_of(sm, 0, 2)
    with pytest.raises(ValueError):
        measure_of(sm, 0.5, 0)


def test_integrate_indicator_and_constant():
    sm = realize_sm("wiener", DyadicDomain(-2, 2, 8), 1)
    assert integrate_deterministic(sm, atom_indicator(0, 1)) == pytest.approx(
        measure_of(sm, 0, 1), rel=1e-12, abs=1e-15)
    assert integrate_deterministic(sm, atom_indicator(-0.5, -0.25)) == pytest.approx(
        measure_of(sm, -0.5, -0.25), rel=1e-12, abs=1e-15)
    assert integrate_deterministic(sm, lambda y: 2.5) == pytest.approx(
        2.5 * measure_of(sm, -2, 2), rel=1e-12)


def test_integrate_linear():
    sm = realize_sm("wiener", DyadicDomain(-2, 2, 8), 1)
    g, h = np.sin, lambda y: y ** 2
    lhs = integrate_deterministic(sm, lambda y: 3 * g(y) - 0.5 * h(y))
    rhs = 3 * integrate_deterministic(sm, g) - 0.5 * integrate_deterministic(sm, h)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_integrate_rejects_nonfinite():
    sm = realize_sm("wiener", DyadicDomain(-1, 1, 4), 0)
    with pytest.raises(ValueError):
        integrate_deterministic(sm, lambda y: np.where(y == 0, np.inf, 1.0))


def test_integrate_refinement_on_shared_path():
    n = 8
    fine = realize_sm("wiener", DyadicDomain(-4, 4, n + 2), 12)
    coarse = fine.coarsen(n)
    diff = abs(integrate_deterministic(fine, np.sin) - integrate_deterministic(coarse, np.sin))
    path = np.concatenate([[0.0], np.cumsum(fine.atom_values)])
    modulus = path.max() - path.min()
    assert diff < 2.0 ** (-n / 2) * modulus


def test_squared_series_examples():
    sm = realize_sm("wiener", DyadicDomain(-8, 8, 8), 0)
    zero = IntegrandFamily([lambda y: 0.0 * y] * 5)
    assert np.all(squared_integral_series(sm, zero) == 0)
    single = IntegrandFamily([atom_indicator(0, 1)])
    assert squared_integral_series(sm, single, 1)[0] == pytest.approx(measure_of(sm, 0, 1) ** 2,
                                                                      rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_squared_series_rho6_stabilizes(seed):
    sm = realize_sm("wiener", DyadicDomain(-8, 8, 8), seed)
    s = squared_integral_series(sm, unit_interval_family(-8, 8, 6.0))
    assert np.all(np.diff(s) >= 0)
    assert series_stabilized(s, 1e-3, 4)


def test_family_envelope_finite():
    fam = unit_interval_family(-8, 8, 6.0)
    y = DyadicDomain(-8, 8, 4).endpoints()
    env = fam.envelope(y)
    assert np.all(np.isfinite(env))
    assert env.max() <= 9.0 ** 3


def test_tau_integrability():
    dom = DyadicDomain(-8, 8, 8)
    rep = check_tau_integrability(realize_sm("wiener", dom, 3), 3.0, (6, 8))
    assert rep.stabilized
    zero = check_tau_integrability(zero_measure(dom), 3.0, (6, 8))
    assert zero.stabilized and zero.integrals == (0.0, 0.0)
    # negative control: no decay in the control measure
    flat = check_tau_integrability(realize_sm("wiener", dom, 3, weight="unit"), 3.0, (6, 8))
    assert not flat.stabilized
    with pytest.raises(ValueError):
        check_tau_integrability(realize_sm("wiener", dom, 3), 3.0, (6, 10))
    with pytest.raises(ValueError):
        check_tau_integrability(realize_sm("wiener", dom, 3), 2.0, (6, 8))


@pytest.mark.parametrize("kind", ["wiener", "fbm_weighted", "alpha_stable", "pure_jump_martingale"])
def test_text_round_trip_bit_exact(tmp_path, kind):
    sm = realize_sm(kind, DyadicDomain(-2, 1, 5), 21)
    path = tmp_path / "sm.txt"
    save_realization(sm, path)
    back = load_realization(path)
    assert back.domain == sm.domain and back.kind == sm.kind and back.seed == sm.seed
    assert back.params == sm.params
    assert np.array_equal(back.atom_values, sm.atom_values)


def test_realization_immutable():
    sm = realize_sm("wiener", DyadicDomain(-1, 1, 3), 0)
    with pytest.raises(ValueError):
        sm.atom_values[0] = 1.0
