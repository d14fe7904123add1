"""Forecast verification: CRPS, calibration error, sharpness, calibration curves."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from solarprob.dist import GaussianPrediction, PredictiveDistribution, gaussian_crps
from solarprob.errors import InvalidLevels, LengthMismatch

DEFAULT_LEVELS = np.round(np.arange(1, 20) * 0.05, 2)
Z95 = float(ndtri(0.95))


@dataclass(frozen=True)
class VerificationRecord:
    mean_crps: float
    calibration_error: float
    sharpness: float
    n: int
    level_curve: tuple  # ((p, p_hat), ...)


def _check_lengths(predictions, observations):
    if len(predictions) != len(observations):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(observations)} observations")


def check_levels(levels) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size == 0:
        raise InvalidLevels("need at least one probability level")
    if np.any((levels <= 0) | (levels >= 1)) or np.any(np.diff(levels) <= 0):
        raise InvalidLevels("levels must be strictly increasing inside (0, 1)")
    return levels


def gaussian_arrays(predictions: Sequence[PredictiveDistribution]):
    """``(mu, sigma)`` arrays when every prediction is Gaussian, else ``None``."""
    if predictions and all(type(p) is GaussianPrediction for p in predictions):
        return (
            np.fromiter((p.mu for p in predictions), float, len(predictions)),
            np.fromiter((p.sigma for p in predictions), float, len(predictions)),
        )
    return None


def quantile_matrix(predictions: Sequence[PredictiveDistribution], levels) -> np.ndarray:
    """``(n_predictions, n_levels)`` array of predicted quantiles."""
    levels = np.asarray(levels, dtype=float)
    params = gaussian_arrays(predictions)
    if params is not None:
        mu, sigma = params
        return mu[:, None] + sigma[:, None] * ndtri(levels)[None, :]
    if not predictions:
        return np.empty((0, levels.size))
    return np.vstack([np.asarray(p.quantile(levels), dtype=float) for p in predictions])


def crps_values(predictions, observations, normalizers=None) -> np.ndarray:
    """Per-prediction CRPS; with ``normalizers`` each prediction is first
    scaled by its normalizer (clearness index to irradiance)."""
    _check_lengths(predictions, observations)
    y = np.asarray(observations, dtype=float)
    if normalizers is not None:
        scale = np.asarray(normalizers, dtype=float)
        _check_lengths(predictions, scale)
        if np.any(scale <= 0):
            raise ValueError("normalizers must be positive")
    else:
        scale = np.ones_like(y)
    params = gaussian_arrays(predictions)
    if params is not None:
        mu, sigma = params
        return gaussian_crps(scale * mu, scale * sigma, y)
    return np.array([p.affine(s, 0.0).crps(v) if s != 1.0 else p.crps(v) for p, s, v in zip(predictions, scale, y)])


def mean_crps(predictions, observations, normalizers=None) -> float:
    if len(predictions) == 0:
        _check_lengths(predictions, observations)
        return float("nan")
    return float(np.mean(crps_values(predictions, observations, normalizers)))


def calibration_curve(predictions, observations, levels=DEFAULT_LEVELS) -> tuple[np.ndarray, np.ndarray]:
    """Nominal levels ``p`` and the observed frequency of ``y <= q_p``."""
    levels = check_levels(levels)
    _check_lengths(predictions, observations)
    y = np.asarray(observations, dtype=float)
    q = quantile_matrix(predictions, levels)
    p_hat = np.mean(y[:, None] <= q, axis=0) if y.size else np.full(levels.size, np.nan)
    return levels, p_hat


def calibration_error(predictions, observations, levels=DEFAULT_LEVELS, kind: str = "absolute") -> float:
    """Mean deviation between nominal and observed coverage over ``levels``.

    ``kind="absolute"`` averages ``|p_hat - p|``; ``kind="squared"`` averages
    the squared deviation.
    """
    levels, p_hat = calibration_curve(predictions, observations, levels)
    dev = p_hat - levels
    if kind == "absolute":
        return float(np.mean(np.abs(dev)))
    if kind == "squared":
        return float(np.mean(dev * dev))
    raise ValueError(f"unknown calibration error kind {kind!r}")


def sharpness(predictions, kind: str = "implied_sigma") -> float:
    """Mean width of the central 90% interval.

    With ``kind="implied_sigma"`` the width is divided by ``2 * z_0.95`` so a
    Gaussian prediction contributes exactly its sigma.
    """
    if len(predictions) == 0:
        return float("nan")
    q = quantile_matrix(predictions, [0.05, 0.95])
    width = np.maximum(q[:, 1] - q[:, 0], 0.0)
    if kind == "implied_sigma":
        params = gaussian_arrays(predictions)
        if params is not None:
            return float(np.mean(params[1]))
        return float(np.mean(width) / (2.0 * Z95))
    if kind == "width":
        return float(np.mean(width))
    raise ValueError(f"unknown sharpness kind {kind!r}")


def verify(predictions_k, observed_k, e_ext, levels=DEFAULT_LEVELS) -> VerificationRecord:
    """CRPS in irradiance space; calibration and sharpness in clearness-index space."""
    observed_k = np.asarray(observed_k, dtype=float)
    e_ext = np.asarray(e_ext, dtype=float)
    levels, p_hat = calibration_curve(predictions_k, observed_k, levels)
    return VerificationRecord(
        mean_crps=mean_crps(predictions_k, observed_k * e_ext, e_ext),
        calibration_error=float(np.mean(np.abs(p_hat - levels))),
        sharpness=sharpness(predictions_k),
        n=len(predictions_k),
        level_curve=tuple(zip(levels.tolist(), p_hat.tolist())),
    )
