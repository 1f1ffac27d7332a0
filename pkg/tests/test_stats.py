from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import j0
from scipy.stats import norm

from specgraph.errors import FourierArtifact, GridMismatch
from specgraph.orbits import OrbitExpansion
from specgraph.series import HarmonicSeries, TransitionSeries
from specgraph.stats import (
    BLOCK,
    DistributionEstimate,
    bessel_distribution,
    char_fn_bessel,
    char_fn_gaussian,
    char_fn_mc,
    char_fn_simple_orbit,
    default_t_grid,
    distribution_metrics,
    empirical_distribution,
    exact_distribution_mc,
    form_factor,
    form_factor_direct,
    gaussian_distribution,
    gaussian_reference,
    histogram_estimate,
    invert_char_fn,
    ks_to_reference,
    point_mass,
    propagate_hierarchy,
    r2_correlation,
    simple_orbit_distribution,
)


def on_line(amplitudes, multiples, phases=None, parities=None):
    """Series whose terms all live on one torus axis, with integer multiples."""
    n = len(amplitudes)
    return HarmonicSeries(
        0.0, np.asarray(amplitudes, float), np.sqrt(2.0) * np.asarray(multiples, float),
        np.zeros(n) if phases is None else np.asarray(phases, float), np.arange(n),
        np.asarray(multiples, np.int64).reshape(n, 1), np.zeros(n, np.int64) if parities is None else np.asarray(parities),
    )


def test_empty_series_gives_point_masses():
    s = HarmonicSeries.synthetic([], mean=0.3)
    for est in (empirical_distribution(s, 100, 0), exact_distribution_mc(s), simple_orbit_distribution(s),
                bessel_distribution(s), gaussian_distribution(s)):
        assert est.mean() == pytest.approx(0.3)
        assert est.variance() < 1e-12
    assert gaussian_reference(s).variance == 0.0


def test_arcsine_law_single_harmonic():
    est = empirical_distribution(HarmonicSeries.synthetic([1.0]), 10**5, 3)
    F = 0.5 + np.arcsin(np.clip(est.edges, -1, 1)) / np.pi
    l1 = np.sum(np.abs(est.masses - np.diff(F)))
    assert l1 < 0.05


def test_sample_mean_within_three_sigma():
    s = HarmonicSeries.synthetic([0.3, 0.2, 0.1], mean=0.25)
    N = 20000
    est = empirical_distribution(s, N, 11)
    sd = np.sqrt(s.variance)
    assert abs(est.metadata["sample_mean"] - 0.25) < 3 * sd / np.sqrt(N)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6), st.integers(0, 1000))
def test_char_fns_normalized_and_bounded(amps, seed):
    s = HarmonicSeries.synthetic(amps, phases=np.linspace(0, 1, len(amps)))
    t = np.linspace(0, 20, 64)
    for phi in (char_fn_mc(s, t, 500, seed), char_fn_bessel(s, t), char_fn_gaussian(s, t), char_fn_simple_orbit(s, t)[0]):
        assert phi[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.abs(phi) <= 1 + 1e-9)


def test_single_harmonic_mc_matches_bessel():
    s = HarmonicSeries.synthetic([0.7])
    t = np.linspace(0, 10, 50)
    N = 40000
    assert np.abs(char_fn_mc(s, t, N, 1) - j0(0.7 * t)).max() < 5 / np.sqrt(N)


def test_two_incommensurate_harmonics():
    s = HarmonicSeries.synthetic([0.5, 0.3])
    emp = empirical_distribution(s, 4 * 10**5, 2)
    l1, _ = distribution_metrics(bessel_distribution(s), emp)
    assert l1 < 0.05


def test_one_class_is_exact():
    s = on_line([0.5, 0.3, 0.2], [1, 2, -3], phases=[0.0, 0.4, 1.1])
    t = np.linspace(0, 15, 40)
    theta = 2 * np.pi * np.arange(20000) / 20000
    f = -(np.cos(np.outer(theta, [1, 2, -3]) + [0.0, 0.4, 1.1]) @ [0.5, 0.3, 0.2])
    oracle = np.exp(1j * np.outer(t, f)).mean(axis=1)
    phi, info = char_fn_simple_orbit(s, t)
    assert info["classes"] == 1
    assert np.abs(phi - oracle).max() < 1e-10


def test_single_member_classes_reduce_to_bessel():
    s = HarmonicSeries.synthetic([0.5, 0.3, 0.2, 0.1], phases=[0.1, 0.2, 0.3, 0.4])
    t = np.linspace(0, 30, 80)
    phi, info = char_fn_simple_orbit(s, t)
    assert info["classes"] == 4
    assert np.abs(phi - char_fn_bessel(s, t)).max() < 1e-10


def test_parity_terms_enter_through_the_bit():
    # parity-only term: f = -c cos(pi b), a symmetric two-point law
    s = on_line([0.4], [0], parities=[1])
    t = np.linspace(0, 5, 11)
    phi, info = char_fn_simple_orbit(s, t)
    assert info["degenerate_terms"] == 1
    assert np.allclose(phi, np.cos(0.4 * t))


def test_vanishing_amplitudes_give_a_delta():
    s = HarmonicSeries.synthetic([0.0, 0.0], mean=-0.1)
    est = bessel_distribution(s)
    assert est.mean() == pytest.approx(-0.1)
    assert est.variance() < 1e-12


def test_many_terms_approach_gaussian():
    rng = np.random.default_rng(5)
    C = rng.uniform(0.5, 1.0, 400) / 20
    assert np.max(C**2) / np.sum(C**2) < 0.05
    s = HarmonicSeries.synthetic(C, phases=rng.uniform(0, 2 * np.pi, 400))
    emp = empirical_distribution(s, 10**5, 8)
    assert ks_to_reference(emp, gaussian_reference(s)) < 0.02


def test_gaussian_reference_variance():
    assert gaussian_reference(HarmonicSeries.synthetic([0.3, 0.4])).variance == pytest.approx(0.125)


def test_form_factor_of_gaussian_has_gaussian_modulus():
    L0 = 2.5
    tau = np.linspace(0, 5, 50)
    s2 = 0.09
    K = form_factor([lambda x: np.exp(-0.5 * s2 * x**2)], L0, tau)
    assert np.allclose(np.abs(K.values), (np.pi / L0) * np.exp(-0.5 * s2 * tau**2))
    assert K.values[0] == pytest.approx(np.pi / L0)


def test_form_factor_picket_fence():
    L0 = 1.7
    k = (np.pi / L0) * np.arange(400)
    m_max = 4
    tau = np.linspace(0, 4 * L0, 161)
    model = form_factor([np.ones(len(tau))] * m_max, L0, tau)
    direct = form_factor_direct(k, m_max, tau)
    assert np.abs(model.values - direct).max() < 1e-9
    peaks = np.isclose(tau % (2 * L0), 0, atol=1e-9)
    assert np.allclose(np.abs(model.values[peaks]), np.pi / L0 * m_max)
    assert model.tail == pytest.approx(1.0)


def test_r2_requires_shared_grid():
    a = DistributionEstimate(np.linspace(0, 1, 11), np.ones(11), "x")
    b = DistributionEstimate(np.linspace(0, 1.1, 11), np.ones(11), "x")
    with pytest.raises(GridMismatch):
        r2_correlation([a, b], 1.0)
    with pytest.raises(GridMismatch):
        r2_correlation([], 1.0)
    r2 = r2_correlation([a, a], 2.0)
    assert np.allclose(r2.values, np.pi)


def test_propagation_from_zero_level_matches_frozen_series():
    exp = OrbitExpansion(np.array([[1, 0], [0, 1], [1, 1]]), np.array([0.3, 0.2j, -0.1]), np.array([0.6, 0.9]), 4)
    T = TransitionSeries(exp, lambda n: np.zeros(np.shape(n)), "exact", 0.0)
    frozen = T.series_at(5)
    edges = np.linspace(-1.2, 1.2, 121)
    prop = propagate_hierarchy(point_mass(0.0), T, 60000, 4, edges=edges)
    emp = empirical_distribution(frozen, 60000, 4, edges=edges)
    # a point mass of width 1e-6 shifts values by O(1e-6) only
    l1, ks = distribution_metrics(prop, emp)
    assert l1 < 0.05 and ks < 0.01


def test_metrics_examples():
    g = norm.pdf(np.linspace(-6, 6, 1201))
    a = DistributionEstimate(np.linspace(-6, 6, 1201), g, "a")
    assert distribution_metrics(a, a) == (0.0, 0.0)
    l1, ks = distribution_metrics(point_mass(0.0), point_mass(1.0))
    assert (l1, ks) == pytest.approx((2.0, 1.0))
    b = DistributionEstimate(np.linspace(-6, 6, 1201) + 0.1, g, "b")
    _, ks = distribution_metrics(a, b)
    assert ks == pytest.approx(2 * norm.cdf(0.05) - 1, rel=0.1)


def test_empirical_identical_across_thread_counts():
    s = HarmonicSeries.synthetic([0.4, 0.3, 0.2])
    N = 3 * BLOCK + 17
    one = empirical_distribution(s, N, 9, threads=1)
    four = empirical_distribution(s, N, 9, threads=4)
    assert np.array_equal(one.density, four.density) and np.array_equal(one.grid, four.grid)
    t = np.linspace(0, 8, 33)
    assert np.array_equal(char_fn_mc(s, t, N, 9, threads=1), char_fn_mc(s, t, N, 9, threads=4))


def test_invalid_char_fn_raises_fourier_artifact():
    # 2 N(0,1) - N(0,4) has negative tails, so this is not a characteristic function
    t = np.linspace(0, 12, 512)
    phi = 2 * np.exp(-0.5 * t**2) - np.exp(-0.5 * 4 * t**2)
    with pytest.raises(FourierArtifact):
        invert_char_fn(t, phi, 0.0, np.linspace(-6, 6, 241), "bessel")
    ok = invert_char_fn(t, np.exp(-0.5 * t**2), 0.0, np.linspace(-6, 6, 241), "gaussian")
    # the taper convolves with a Gaussian of width TAPER / t_max = 1/3
    assert np.abs(ok.density - norm.pdf(ok.grid, scale=np.sqrt(1 + 1 / 9))).max() < 1e-6


def test_densities_integrate_to_one():
    s = HarmonicSeries.synthetic([0.4, 0.3, 0.2], phases=[0.3, 0.0, 1.0])
    for est in (empirical_distribution(s, 20000, 1), exact_distribution_mc(s, sample_count=20000),
                simple_orbit_distribution(s), bessel_distribution(s), gaussian_distribution(s),
                histogram_estimate(np.arange(10.0), "h")):
        assert est.total_mass() == pytest.approx(1.0, abs=2e-3)
    with pytest.raises(GridMismatch):
        histogram_estimate([0.0, 1.0], "h", edges=[0.0, 0.5, 2.0])


def test_default_t_grid_scales_with_width():
    s = HarmonicSeries.synthetic([0.2])
    t = default_t_grid(s)
    assert t[0] == 0.0 and t[-1] == pytest.approx(128 / np.sqrt(0.02))
