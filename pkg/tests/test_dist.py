import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp
from scipy import integrate

from solarprob.dist import (
    CalibratedPrediction,
    EnsemblePrediction,
    GaussianPrediction,
    PiecewiseUniformPrediction,
    SIGMA_FLOOR,
    affine,
    cdf,
    crps,
    point_mass,
    quantile,
)
from solarprob.errors import InvalidProbability, NonPositiveScale


def crps_by_integration(F, y, lo, hi, points=()):
    """Integral of (F(x) - 1{x >= y})^2 split at y and at any kinks."""
    cuts = sorted({lo, hi, y, *[p for p in points if lo < p < hi]})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(lambda x: (F(x) - (x >= y)) ** 2, a, b, limit=200, epsabs=1e-12, epsrel=1e-12)
        total += val
    return total


def ensemble_crps_bruteforce(x, y):
    x = np.asarray(x, dtype=float)
    return np.mean(np.abs(x - y)) - 0.5 * np.mean(np.abs(x[:, None] - x[None, :]))


# -- quantile ---------------------------------------------------------------

def test_gaussian_median_is_mean():
    assert quantile(GaussianPrediction(0.0, 1.0), 0.5) == 0.0


def test_gaussian_quantile_matches_high_precision_bisection():
    mp.dps = 40
    target = mp.mpf("0.975")
    lo, hi = mp.mpf(0), mp.mpf(5)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mp.ncdf(mid) < target:
            lo = mid
        else:
            hi = mid
    expected = float(lo)
    assert abs(expected - 1.959964) < 1e-6
    assert quantile(GaussianPrediction(0.0, 1.0), 0.975) == pytest.approx(expected, abs=1e-12)


def test_uniform_quantile_identity():
    assert quantile(PiecewiseUniformPrediction(np.array([0.0, 1.0]), np.array([1.0])), 0.25) == pytest.approx(0.25)


def test_ensemble_quantile_type7():
    e = EnsemblePrediction(np.array([3.0, 1.0, 2.0, 10.0]))
    for p in (0.05, 0.3, 0.5, 0.9):
        assert e.quantile(p) == pytest.approx(np.quantile([1, 2, 3, 10], p))


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_rejects_levels_outside_open_interval(p):
    with pytest.raises(InvalidProbability):
        quantile(GaussianPrediction(0.0, 1.0), p)


# -- cdf --------------------------------------------------------------------

def test_cdf_examples():
    assert cdf(GaussianPrediction(0.0, 1.0), 0.0) == 0.5
    assert cdf(EnsemblePrediction(np.array([1.0, 2.0, 3.0])), 2.0) == pytest.approx(2 / 3)
    assert cdf(PiecewiseUniformPrediction(np.array([0.0, 2.0]), np.array([1.0])), 0.5) == pytest.approx(0.25)


def test_ensemble_cdf_is_right_continuous_step():
    e = EnsemblePrediction(np.array([1.0, 1.0, 2.0]))
    assert e.cdf(0.999) == 0.0
    assert e.cdf(1.0) == pytest.approx(2 / 3)
    assert e.cdf(2.0) == 1.0


# -- crps -------------------------------------------------------------------

def test_gaussian_crps_standard_value():
    mp.dps = 30
    exact = float(2 * mp.npdf(0) - 1 / mp.sqrt(mp.pi))  # 0.23369497725...
    F = GaussianPrediction(0.0, 1.0).cdf
    oracle = crps_by_integration(F, 0.0, -12.0, 12.0)
    assert oracle == pytest.approx(exact, abs=1e-9)
    assert crps(GaussianPrediction(0.0, 1.0), 0.0) == pytest.approx(exact, abs=1e-12)
    # the commonly quoted 7-digit value is a truncation of the exact one
    assert crps(GaussianPrediction(0.0, 1.0), 0.0) == pytest.approx(0.2336946, abs=5e-7)


def test_gaussian_crps_matches_integration_grid():
    rng = np.random.default_rng(1)
    for _ in range(60):
        mu, sigma, y = rng.normal(0, 2), rng.uniform(0.05, 3.0), rng.normal(0, 3)
        g = GaussianPrediction(mu, sigma)
        oracle = crps_by_integration(g.cdf, y, mu - 14 * sigma, mu + 14 * sigma)
        assert g.crps(y) == pytest.approx(oracle, abs=1e-7)


def test_ensemble_crps_examples():
    assert crps(EnsemblePrediction(np.array([3.0])), 5.0) == pytest.approx(2.0)
    assert crps(EnsemblePrediction(np.array([0.0, 2.0])), 1.0) == pytest.approx(0.5)
    F = EnsemblePrediction(np.array([0.0, 2.0])).cdf
    assert crps_by_integration(F, 1.0, -1.0, 3.0, points=(0.0, 2.0)) == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=60),
    st.floats(-60, 60, allow_nan=False),
)
def test_ensemble_crps_fast_path_matches_quadratic_formula(members, y):
    fast = EnsemblePrediction(np.array(members)).crps(y)
    assert fast == pytest.approx(ensemble_crps_bruteforce(members, y), abs=1e-10)


def test_piecewise_uniform_crps_matches_integration():
    rng = np.random.default_rng(2)
    for _ in range(30):
        edges = np.sort(rng.uniform(0, 1.2, size=rng.integers(2, 8)))
        edges = np.unique(edges)
        if edges.size < 2:
            continue
        w = rng.dirichlet(np.ones(edges.size - 1))
        d = PiecewiseUniformPrediction(edges, w)
        y = rng.uniform(-0.2, 1.4)
        oracle = crps_by_integration(d.cdf, y, -0.5, 1.7, points=tuple(edges))
        assert d.crps(y) == pytest.approx(oracle, abs=1e-8)


def test_crps_nonnegative_and_zero_for_point_mass_hit():
    assert crps(point_mass(0.4), 0.4) == 0.0
    assert crps(GaussianPrediction(1.0, 0.3), -2.0) > 0


def test_calibrated_identity_crps_matches_closed_form():
    class Identity:
        def quantile(self, pred, p):
            return pred.quantile(p)

    g = GaussianPrediction(0.3, 0.1)
    c = CalibratedPrediction(g, Identity())
    for y in (0.0, 0.25, 0.3, 0.42, 0.6):
        assert c.crps(y) == pytest.approx(g.crps(y), rel=2e-3, abs=1e-6)
    assert c.cdf(0.3) == pytest.approx(0.5, abs=1e-8)


# -- affine -----------------------------------------------------------------

def test_affine_identity_and_linearity():
    g = GaussianPrediction(0.5, 0.1)
    assert affine(g, 1.0, 0.0) == g
    h = affine(g, 800.0)
    assert (h.mu, h.sigma) == pytest.approx((400.0, 80.0))


def test_affine_rejects_nonpositive_scale():
    with pytest.raises(NonPositiveScale):
        affine(GaussianPrediction(0.0, 1.0), 0.0)


def test_affine_crps_homogeneity():
    e = EnsemblePrediction(np.array([0.1, 0.5, 0.7]))
    p = PiecewiseUniformPrediction(np.array([0.0, 0.5, 1.0]), np.array([0.3, 0.7]))
    for d in (e, p, GaussianPrediction(0.5, 0.2)):
        assert affine(d, 800.0).crps(800.0 * 0.6) == pytest.approx(800.0 * d.crps(0.6), rel=1e-12)


# -- invariants -------------------------------------------------------------

def test_sigma_floor_applied():
    assert GaussianPrediction(0.0, 1e-12).sigma == SIGMA_FLOOR
    with pytest.raises(ValueError):
        GaussianPrediction(0.0, 0.0)


def test_ensemble_sorted_and_finite():
    assert list(EnsemblePrediction(np.array([2.0, 1.0])).samples) == [1.0, 2.0]
    with pytest.raises(ValueError):
        EnsemblePrediction(np.array([1.0, math.nan]))


def test_piecewise_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        PiecewiseUniformPrediction(np.array([0.0, 1.0, 2.0]), np.array([0.5, 0.6]))


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(0.01, 0.99))
def test_quantile_cdf_round_trip(mu, sigma, p):
    g = GaussianPrediction(mu, sigma)
    assert g.cdf(g.quantile(p)) == pytest.approx(p, abs=1e-9)
