"""Post-hoc recalibration of Gaussian predictive distributions.

Three calibrators are fitted on a held-out calibration set:

CRUDE
    Empirical quantiles of the standardised residuals ``(y - mu) / sigma``
    replace the Gaussian quantiles; a constant shift of the mean is chosen
    on a grid to minimise calibration error.
Kuleshov
    An isotonic map from nominal model levels to observed coverage; a
    requested level is mapped back through its generalised inverse.
MLE
    A constant shift and scale of the predicted Gaussians, in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from solarprob.dist import SIGMA_FLOOR, CalibratedPrediction, GaussianPrediction, PredictiveDistribution, _check_p
from solarprob.errors import EmptyCalibrationSet, LengthMismatch
from solarprob.metrics import DEFAULT_LEVELS, gaussian_arrays

KULESHOV_EPS = 1e-4
CALIBRATORS = ("none", "mle", "crude", "kuleshov")


def _prepare(predictions, observations):
    if len(predictions) != len(observations):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(observations)} observations")
    if len(predictions) == 0:
        raise EmptyCalibrationSet("calibration set is empty")
    params = gaussian_arrays(predictions)
    if params is None:
        raise TypeError("calibrators need Gaussian predictions")
    return params[0], params[1], np.asarray(observations, dtype=float)


def pit_values(predictions, observations) -> np.ndarray:
    """Probability integral transform ``cdf(pred_i, y_i)``."""
    if len(predictions) != len(observations):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(observations)} observations")
    y = np.asarray(observations, dtype=float)
    params = gaussian_arrays(predictions)
    if params is not None:
        return ndtr((y - params[0]) / params[1])
    return np.array([p.cdf(v) for p, v in zip(predictions, y)], dtype=float)


class IdentityCalibrator:
    name = "none"

    def quantile(self, pred, p):
        return pred.quantile(p)

    def apply(self, pred):
        return pred


@dataclass(frozen=True, eq=False)
class CrudeCalibrator:
    residuals: np.ndarray  # sorted standardised residuals (y - mu) / sigma
    shift: float = 0.0
    name = "crude"

    def z(self, p) -> np.ndarray:
        return np.quantile(self.residuals, p, method="linear")

    def quantile(self, pred: GaussianPrediction, p):
        return pred.mu + self.shift + pred.sigma * self.z(p)

    def apply(self, pred: GaussianPrediction) -> CalibratedPrediction:
        return CalibratedPrediction(pred, self)

    def to_dict(self) -> dict:
        return {"residuals": self.residuals.tolist(), "shift": self.shift}

    @classmethod
    def from_dict(cls, d: dict) -> "CrudeCalibrator":
        return cls(np.array(d["residuals"], dtype=float), float(d["shift"]))


def crude_fit(predictions, observations, shift_grid_size: int = 101, levels=DEFAULT_LEVELS) -> CrudeCalibrator:
    """Fit CRUDE on a calibration set.

    The shift grid spans ``+-2 * median(sigma) * max|e|``; the shift with
    the lowest calibration error on the calibration set wins, ties going to
    the smallest magnitude.
    """
    mu, sigma, y = _prepare(predictions, observations)
    e = np.sort((y - mu) / sigma)
    half = 2.0 * float(np.median(sigma)) * float(np.max(np.abs(e)))
    if half > 0 and shift_grid_size > 1:
        mid = (shift_grid_size - 1) / 2.0
        grid = half * (np.arange(shift_grid_size) - mid) / mid  # exact zero at the centre
    else:
        grid = np.zeros(1)
    errors = crude_shift_errors(mu, sigma, y, e, grid, levels)
    best = np.flatnonzero(errors <= errors.min() + 1e-12)
    pick = best[np.lexsort((grid[best], np.abs(grid[best])))[0]]
    return CrudeCalibrator(e, float(grid[pick]))


def crude_shift_errors(mu, sigma, y, residuals, shifts, levels=DEFAULT_LEVELS) -> np.ndarray:
    """Calibration error of the CRUDE quantiles for each candidate shift."""
    levels = np.asarray(levels, dtype=float)
    z = np.quantile(residuals, levels, method="linear")
    q = mu[:, None] + sigma[:, None] * z[None, :]
    # y <= q + s  <=>  y - q <= s
    gap = (y[:, None] - q)[:, :, None]
    p_hat = np.mean(gap <= np.asarray(shifts)[None, None, :], axis=0)
    return np.mean(np.abs(p_hat - levels[:, None]), axis=0)


def crude_quantile(cal: CrudeCalibrator, pred: GaussianPrediction, p):
    _check_p(p)
    return cal.quantile(pred, p)


def isotonic_fit(y: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Pool-adjacent-violators: nondecreasing least-squares fit to ``y``."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    values, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        values.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(values) > 1 and values[-2] > values[-1]:
            v2, w2, s2 = values.pop(), weights.pop(), sizes.pop()
            v1, w1, s1 = values.pop(), weights.pop(), sizes.pop()
            values.append((v1 * w1 + v2 * w2) / (w1 + w2))
            weights.append(w1 + w2)
            sizes.append(s1 + s2)
    return np.repeat(values, sizes)


@dataclass(frozen=True, eq=False)
class KuleshovCalibrator:
    levels: np.ndarray  # model levels, 0 ... 1
    coverage: np.ndarray  # fitted observed coverage at each level
    eps: float = KULESHOV_EPS
    name = "kuleshov"

    def recalibrate(self, p_model):
        """Forward map: observed coverage of the model's ``p_model`` quantile."""
        return np.interp(p_model, self.levels, self.coverage)

    def model_level(self, p):
        """Smallest model level whose fitted coverage reaches ``p``."""
        p = np.asarray(p, dtype=float)
        j = np.searchsorted(self.coverage, p, side="left")
        return self.levels[np.minimum(j, self.levels.size - 1)]

    def quantile(self, pred: PredictiveDistribution, p):
        p_model = np.clip(self.model_level(p), self.eps, 1.0 - self.eps)
        return pred.quantile(p_model)

    def apply(self, pred) -> CalibratedPrediction:
        return CalibratedPrediction(pred, self)

    def to_dict(self) -> dict:
        return {"levels": self.levels.tolist(), "coverage": self.coverage.tolist(), "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "KuleshovCalibrator":
        return cls(np.array(d["levels"]), np.array(d["coverage"]), float(d["eps"]))


def kuleshov_fit(predictions, observations, grid_size: int = 101) -> KuleshovCalibrator:
    """Isotonic recalibration map on a uniform grid of model levels."""
    if len(predictions) != len(observations):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(observations)} observations")
    if len(predictions) == 0:
        raise EmptyCalibrationSet("calibration set is empty")
    pit = np.sort(pit_values(predictions, observations))
    levels = np.linspace(0.0, 1.0, grid_size)
    observed = np.searchsorted(pit, levels, side="right") / pit.size
    coverage = isotonic_fit(observed)
    coverage[0], coverage[-1] = 0.0, 1.0
    return KuleshovCalibrator(levels, np.clip(coverage, 0.0, 1.0))


def kuleshov_quantile(cal: KuleshovCalibrator, pred, p):
    _check_p(p)
    return cal.quantile(pred, p)


@dataclass(frozen=True)
class MleCalibrator:
    shift: float
    scale: float
    name = "mle"

    def apply(self, pred: GaussianPrediction) -> GaussianPrediction:
        return GaussianPrediction(pred.mu + self.shift, self.scale * pred.sigma)

    def quantile(self, pred: GaussianPrediction, p):
        return self.apply(pred).quantile(p)

    def to_dict(self) -> dict:
        return {"shift": self.shift, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "MleCalibrator":
        return cls(float(d["shift"]), float(d["scale"]))


def mle_fit(predictions, observations) -> MleCalibrator:
    """Maximum-likelihood shift ``a`` and scale ``s`` for ``N(mu + a, (s sigma)^2)``."""
    mu, sigma, y = _prepare(predictions, observations)
    r = y - mu
    w = 1.0 / (sigma * sigma)
    a = float(np.sum(w * r) / np.sum(w))
    s = float(np.sqrt(np.mean((r - a) ** 2 * w)))
    return MleCalibrator(a, max(s, SIGMA_FLOOR))


def fit_calibrator(name: str, predictions, observations):
    if name == "none":
        return IdentityCalibrator()
    if name == "mle":
        return mle_fit(predictions, observations)
    if name == "crude":
        return crude_fit(predictions, observations)
    if name == "kuleshov":
        return kuleshov_fit(predictions, observations)
    raise ValueError(f"unknown calibrator {name!r}; choose from {CALIBRATORS}")
