import numpy as np
import pytest
from scipy import optimize, stats

from solarprob.calibrate import (
    CALIBRATORS,
    CrudeCalibrator,
    KuleshovCalibrator,
    crude_fit,
    crude_quantile,
    crude_shift_errors,
    fit_calibrator,
    isotonic_fit,
    kuleshov_fit,
    kuleshov_quantile,
    mle_fit,
    pit_values,
)
from solarprob.dist import SIGMA_FLOOR, CalibratedPrediction, GaussianPrediction
from solarprob.errors import EmptyCalibrationSet, LengthMismatch
from solarprob.metrics import DEFAULT_LEVELS, calibration_error
from solarprob.serialize import dumps, loads


def gaussians(mu, sigma):
    mu, sigma = np.broadcast_arrays(np.asarray(mu, float), np.asarray(sigma, float))
    return [GaussianPrediction(m, s) for m, s in zip(mu, sigma)]


def synthetic(n, seed, sigma_factor=1.0, bias=0.0):
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.5, 0.2, n)
    sigma = rng.uniform(0.05, 0.15, n)
    y = mu + bias + sigma * rng.normal(size=n)
    return gaussians(mu, sigma_factor * sigma), y


# -- PIT --------------------------------------------------------------------

def test_pit_at_mean_is_half():
    assert np.all(pit_values(gaussians([0, 1, 2], 1.0), [0, 1, 2]) == 0.5)


def test_pit_uniform_for_calibrated_draws():
    preds, y = synthetic(2000, 1)
    assert stats.kstest(pit_values(preds, y), "uniform").statistic < 0.05


def test_pit_tail_saturates():
    assert pit_values(gaussians([0.0], 0.1), [1.0])[0] == pytest.approx(1.0, abs=1e-12)


def test_length_mismatch_and_empty_set():
    with pytest.raises(LengthMismatch):
        pit_values(gaussians([0.0], 1.0), [0.0, 1.0])
    for name in ("mle", "crude", "kuleshov"):
        with pytest.raises(EmptyCalibrationSet):
            fit_calibrator(name, [], [])
        with pytest.raises(LengthMismatch):
            fit_calibrator(name, gaussians([0.0], 1.0), [0.0, 1.0])


# -- CRUDE ------------------------------------------------------------------

def test_crude_symmetric_residuals_pick_zero_shift():
    preds = gaussians(np.zeros(6), 1.0)
    y = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    assert crude_fit(preds, y).shift == 0.0


def test_crude_constant_bias_residuals():
    preds = gaussians(np.linspace(0, 1, 20), np.linspace(0.1, 0.3, 20))
    y = np.array([p.mu + p.sigma for p in preds])
    np.testing.assert_allclose(crude_fit(preds, y).residuals, 1.0)


def test_crude_shift_matches_brute_force_grid():
    preds = gaussians([0.0, 0.2, 0.5], [0.1, 0.2, 0.1])
    y = np.array([0.05, -0.1, 0.7])
    cal = crude_fit(preds, y, shift_grid_size=5)
    mu = np.array([0.0, 0.2, 0.5])
    sigma = np.array([0.1, 0.2, 0.1])
    e = np.sort((y - mu) / sigma)
    half = 2 * np.median(sigma) * np.max(np.abs(e))
    grid = np.array([-half, -half / 2, 0.0, half / 2, half])
    z = np.quantile(e, DEFAULT_LEVELS)
    errors = []
    for s in grid:
        p_hat = [np.mean(y <= mu + s + sigma * zj) for zj in z]
        errors.append(np.mean(np.abs(np.array(p_hat) - DEFAULT_LEVELS)))
    errors = np.array(errors)
    candidates = [g for g, err in zip(grid, errors) if err <= errors.min() + 1e-12]
    expected = min(candidates, key=lambda g: (abs(g), g))
    assert cal.shift == pytest.approx(expected, abs=1e-15)
    np.testing.assert_allclose(crude_shift_errors(mu, sigma, y, e, grid), errors, atol=1e-15)


def test_crude_quantile_examples():
    cal = CrudeCalibrator(np.array([-1.0, 0.0, 1.0]), 0.0)
    assert crude_quantile(cal, GaussianPrediction(10.0, 2.0), 0.5) == 10.0
    rng = np.random.default_rng(2)
    big = CrudeCalibrator(np.sort(rng.normal(size=100_000)), 0.0)
    assert crude_quantile(big, GaussianPrediction(0.3, 0.1), 0.975) == pytest.approx(0.3 + 1.96 * 0.1, abs=0.03)


def test_crude_with_floored_sigma_collapses_to_shifted_mean():
    cal = CrudeCalibrator(np.array([-1.0, 0.0, 2.0]), 0.25)
    pred = GaussianPrediction(0.4, SIGMA_FLOOR)
    for p in (0.05, 0.5, 0.95):
        assert crude_quantile(cal, pred, p) == pytest.approx(0.65, abs=1e-5)


# -- Kuleshov ---------------------------------------------------------------

def test_isotonic_fit_is_pava():
    np.testing.assert_allclose(isotonic_fit([1.0, 3.0, 2.0, 4.0]), [1.0, 2.5, 2.5, 4.0])
    np.testing.assert_allclose(isotonic_fit([3.0, 2.0, 1.0]), [2.0, 2.0, 2.0])
    rng = np.random.default_rng(3)
    v = rng.normal(size=200)
    fitted = isotonic_fit(v)
    assert np.all(np.diff(fitted) >= 0)
    # least squares: no monotone perturbation of a pooled block improves the fit
    assert np.sum((fitted - v) ** 2) <= np.sum((np.sort(v) - v) ** 2)


def test_kuleshov_identity_for_uniform_pits():
    n = 1000
    z = stats.norm.ppf((np.arange(n) + 0.5) / n)
    cal = kuleshov_fit(gaussians(np.zeros(n), 1.0), z)
    np.testing.assert_allclose(cal.coverage, cal.levels, atol=1.0 / n)


def test_kuleshov_all_pits_half_gives_step():
    cal = kuleshov_fit(gaussians(np.zeros(50), 1.0), np.zeros(50))
    below = cal.levels < 0.5
    assert np.all(cal.coverage[below] == 0.0) and np.all(cal.coverage[~below] == 1.0)
    pred = GaussianPrediction(3.0, 2.0)
    assert kuleshov_quantile(cal, pred, 0.9) == pytest.approx(pred.quantile(0.5), abs=1e-12)


def test_kuleshov_knots_monotone_with_pinned_endpoints():
    preds, y = synthetic(500, 4, sigma_factor=0.5, bias=0.05)
    cal = kuleshov_fit(preds, y)
    assert np.all(np.diff(cal.coverage) >= 0)
    assert cal.coverage[0] == 0.0 and cal.coverage[-1] == 1.0
    assert cal.levels.size == 101


def test_kuleshov_identity_map_and_symmetry():
    levels = np.linspace(0, 1, 101)
    identity = KuleshovCalibrator(levels, levels.copy())
    pred = GaussianPrediction(0.4, 0.1)
    for p in (0.05, 0.3, 0.5, 0.95):
        assert kuleshov_quantile(identity, pred, p) == pytest.approx(pred.quantile(p), abs=1e-12)
    symmetric = KuleshovCalibrator(levels, 0.5 + 0.5 * np.sign(levels - 0.5) * np.abs(2 * levels - 1) ** 0.7)
    assert kuleshov_quantile(symmetric, pred, 0.5) == pytest.approx(pred.quantile(0.5), abs=1e-12)


def test_kuleshov_clamps_extreme_levels():
    cal = kuleshov_fit(gaussians(np.zeros(50), 1.0), np.zeros(50))
    q = cal.quantile(GaussianPrediction(0.0, 1.0), 1e-9)
    assert np.isfinite(q)


# -- MLE --------------------------------------------------------------------

def numerical_mle(mu, sigma, y):
    def nll(theta):
        a, log_s = theta
        s = np.exp(log_s)
        return np.sum(np.log(s * sigma) + 0.5 * ((y - mu - a) / (s * sigma)) ** 2)

    res = optimize.minimize(nll, [0.0, 0.0], method="BFGS", options={"gtol": 1e-12})
    res = optimize.minimize(nll, res.x, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
    return res.x[0], np.exp(res.x[1])


def test_mle_symmetric_pair():
    cal = mle_fit(gaussians([0.0, 0.0], 1.0), [-1.0, 1.0])
    assert (cal.shift, cal.scale) == (0.0, 1.0)
    a, s = numerical_mle(np.zeros(2), np.ones(2), np.array([-1.0, 1.0]))
    assert a == pytest.approx(0.0, abs=1e-6) and s == pytest.approx(1.0, abs=1e-6)


def test_mle_zero_residual_variance_floors_scale():
    cal = mle_fit(gaussians([0.0, 0.0], 1.0), [1.0, 1.0])
    assert cal.shift == 1.0 and cal.scale == SIGMA_FLOOR


def test_mle_matches_numerical_minimiser():
    rng = np.random.default_rng(5)
    mu = rng.normal(size=300)
    sigma = rng.uniform(0.2, 2.0, 300)
    y = mu + 0.3 + 1.7 * sigma * rng.normal(size=300)
    cal = mle_fit(gaussians(mu, sigma), y)
    a, s = numerical_mle(mu, sigma, y)
    assert cal.shift == pytest.approx(a, abs=1e-6)
    assert cal.scale == pytest.approx(s, abs=1e-6)


def test_mle_consistent_on_calibrated_data():
    preds, y = synthetic(10_000, 6)
    cal = mle_fit(preds, y)
    assert abs(cal.shift) < 0.05 and abs(cal.scale - 1.0) < 0.05


# -- behaviour --------------------------------------------------------------

@pytest.mark.parametrize("name", ["mle", "crude", "kuleshov"])
def test_calibrators_fix_overdispersed_model(name):
    cal_preds, cal_y = synthetic(2000, 7, sigma_factor=2.0)
    test_preds, test_y = synthetic(2000, 8, sigma_factor=2.0)
    cal = fit_calibrator(name, cal_preds, cal_y)
    before = calibration_error(test_preds, test_y)
    after = calibration_error([cal.apply(p) for p in test_preds], test_y)
    assert after <= 0.5 * before


@pytest.mark.parametrize("name", ["crude", "kuleshov"])
def test_no_harm_on_calibrated_model(name):
    cal_preds, cal_y = synthetic(2000, 9)
    test_preds, test_y = synthetic(2000, 10)
    cal = fit_calibrator(name, cal_preds, cal_y)
    before = calibration_error(test_preds, test_y)
    after = calibration_error([cal.apply(p) for p in test_preds], test_y)
    assert after <= before + 2 / np.sqrt(2000)


def test_calibrated_predictions_are_distributions():
    preds, y = synthetic(300, 11, sigma_factor=0.5)
    for name in ("crude", "kuleshov"):
        c = fit_calibrator(name, preds, y).apply(preds[0])
        assert isinstance(c, CalibratedPrediction)
        q = c.quantile(np.array([0.1, 0.5, 0.9]))
        assert np.all(np.diff(q) >= 0)
        assert c.cdf(q[1]) == pytest.approx(0.5, abs=0.02)
        assert c.crps(0.5) >= 0


def test_identity_calibrator_and_registry():
    assert CALIBRATORS == ("none", "mle", "crude", "kuleshov")
    pred = GaussianPrediction(0.1, 0.2)
    assert fit_calibrator("none", [], []).apply(pred) is pred
    with pytest.raises(ValueError):
        fit_calibrator("platt", [pred], [0.0])


def test_calibrator_serialization_round_trip():
    preds, y = synthetic(200, 12, sigma_factor=1.5)
    for name in ("mle", "crude", "kuleshov"):
        cal = fit_calibrator(name, preds, y)
        text = dumps(cal)
        again = loads(text)
        assert dumps(again) == text
        assert again.quantile(preds[0], 0.3) == cal.quantile(preds[0], 0.3)
