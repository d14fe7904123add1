"""Predictive distributions: CDF, quantile, CRPS and affine maps.

Four kinds of predictive distribution are supported:

* :class:`GaussianPrediction` -- output of the boosting model and of the
  maximum-likelihood recalibration.
* :class:`EnsemblePrediction` -- persistence ensembles (empirical CDF).
* :class:`PiecewiseUniformPrediction` -- mixture of uniforms over adjacent
  bins, as produced by the Markov-chain mixture model.
* :class:`CalibratedPrediction` -- a Gaussian wrapped by a post-hoc
  calibrator that only exposes a quantile function.

Every class has vectorised ``cdf``, ``quantile`` and ``crps`` methods; the
module-level functions of the same name validate their arguments and
dispatch to them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Union

import numpy as np
from scipy.special import ndtr, ndtri

from solarprob.errors import InvalidProbability, NonPositiveScale

SIGMA_FLOOR = 1e-6
INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# quantile-decomposition grid for distributions without a closed-form CRPS
CRPS_QUANTILE_LEVELS = np.arange(1, 200) / 200.0


def norm_pdf(z):
    return INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def gaussian_crps(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2) at ``y`` (broadcasts)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = (np.asarray(y, dtype=float) - mu) / sigma
    return sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * norm_pdf(z) - INV_SQRT_PI)


def gaussian_nll(mu, sigma, y):
    z = (np.asarray(y, dtype=float) - mu) / sigma
    return np.log(sigma) + 0.5 * np.square(z) + 0.5 * math.log(2.0 * math.pi)


def _check_p(p):
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise InvalidProbability(f"probability levels must lie in (0, 1), got {p!r}")
    return arr


def _scalar_or_array(values, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


@dataclass(frozen=True)
class GaussianPrediction:
    mu: float
    sigma: float

    def __post_init__(self):
        sigma = float(self.sigma)
        if not (math.isfinite(self.mu) and math.isfinite(sigma)) or sigma <= 0.0:
            raise ValueError(f"invalid Gaussian parameters mu={self.mu!r}, sigma={self.sigma!r}")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", max(sigma, SIGMA_FLOOR))

    def cdf(self, x):
        return _scalar_or_array(ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma), x)

    def quantile(self, p):
        return _scalar_or_array(self.mu + self.sigma * ndtri(np.asarray(p, dtype=float)), p)

    def crps(self, y):
        return _scalar_or_array(gaussian_crps(self.mu, self.sigma, y), y)

    def nll(self, y):
        return _scalar_or_array(gaussian_nll(self.mu, self.sigma, y), y)

    def affine(self, scale: float, shift: float = 0.0) -> "GaussianPrediction":
        return GaussianPrediction(scale * self.mu + shift, scale * self.sigma)


@dataclass(frozen=True, eq=False)
class EnsemblePrediction:
    """Empirical distribution of a finite set of members."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if samples.size == 0:
            raise ValueError("ensemble must have at least one member")
        if not np.all(np.isfinite(samples)):
            raise ValueError("ensemble members must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        return isinstance(other, EnsemblePrediction) and np.array_equal(self.samples, other.samples)

    def cdf(self, x):
        counts = np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right")
        return _scalar_or_array(counts / self.samples.size, x)

    def quantile(self, p):
        # type-7: linear interpolation between order statistics
        return _scalar_or_array(np.quantile(self.samples, np.asarray(p, dtype=float), method="linear"), p)

    def crps(self, y):
        x = self.samples
        n = x.size
        y_arr = np.asarray(y, dtype=float)
        prefix = np.concatenate(([0.0], np.cumsum(x)))
        k = np.searchsorted(x, y_arr, side="right")
        below = k * y_arr - prefix[k]
        above = (prefix[n] - prefix[k]) - (n - k) * y_arr
        abs_err = (below + above) / n
        ranks = 2.0 * np.arange(1, n + 1) - n - 1
        spread = np.dot(ranks, x) / (n * n)
        return _scalar_or_array(np.maximum(abs_err - spread, 0.0), y)

    def affine(self, scale: float, shift: float = 0.0) -> "EnsemblePrediction":
        return EnsemblePrediction(scale * self.samples + shift)


@dataclass(frozen=True, eq=False)
class PiecewiseUniformPrediction:
    """Mixture of uniform densities on the bins ``[edges[i], edges[i+1]]``."""

    edges: np.ndarray
    weights: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).copy()
        weights = np.asarray(self.weights, dtype=float).copy()
        if edges.ndim != 1 or edges.size < 2 or weights.shape != (edges.size - 1,):
            raise ValueError("need N+1 edges for N weights")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("edges must be strictly increasing")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        cum = np.concatenate(([0.0], np.cumsum(weights)))
        cum[-1] = 1.0
        for arr in (edges, weights, cum):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_cum", cum)

    def __eq__(self, other):
        return (
            isinstance(other, PiecewiseUniformPrediction)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.weights, other.weights)
        )

    def cdf(self, x):
        return _scalar_or_array(np.interp(np.asarray(x, dtype=float), self.edges, self._cum, left=0.0, right=1.0), x)

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        cum, edges = self._cum, self.edges
        j = np.clip(np.searchsorted(cum, p_arr, side="left"), 1, edges.size - 1)
        lo_f, hi_f = cum[j - 1], cum[j]
        frac = np.clip((p_arr - lo_f) / (hi_f - lo_f), 0.0, 1.0)
        return _scalar_or_array(edges[j - 1] + frac * (edges[j] - edges[j - 1]), p)

    def _crps_scalar(self, y: float) -> float:
        edges = self.edges
        total = 0.0
        if y < edges[0]:
            total += edges[0] - y
        elif y > edges[-1]:
            total += y - edges[-1]
        pts = np.sort(np.append(edges, np.clip(y, edges[0], edges[-1])))
        f = np.interp(pts, edges, self._cum)
        a, b = pts[:-1], pts[1:]
        c = (a >= y).astype(float)
        fa, fb = f[:-1] - c, f[1:] - c
        total += float(np.sum((b - a) * (fa * fa + fa * fb + fb * fb) / 3.0))
        return total

    def crps(self, y):
        if np.ndim(y) == 0:
            return self._crps_scalar(float(y))
        y_arr = np.asarray(y, dtype=float)
        return np.array([self._crps_scalar(v) for v in y_arr.ravel()]).reshape(y_arr.shape)

    def affine(self, scale: float, shift: float = 0.0) -> "PiecewiseUniformPrediction":
        return PiecewiseUniformPrediction(scale * self.edges + shift, self.weights)


class QuantileCalibrator(Protocol):
    def quantile(self, pred: GaussianPrediction, p): ...


@dataclass(frozen=True)
class CalibratedPrediction:
    """A base Gaussian seen through a calibrator's quantile function.

    ``scale`` and ``shift`` carry any affine map applied afterwards (for
    instance the conversion from clearness index to irradiance).
    """

    base: GaussianPrediction
    calibrator: QuantileCalibrator
    scale: float = 1.0
    shift: float = 0.0

    def quantile(self, p):
        q = self.calibrator.quantile(self.base, np.asarray(p, dtype=float))
        return _scalar_or_array(self.scale * np.asarray(q) + self.shift, p)

    def cdf(self, x, tol: float = 1e-9):
        # monotone bisection on the quantile function
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        lo = np.zeros_like(x_arr)
        hi = np.ones_like(x_arr)
        while np.max(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            below = self.quantile(mid) <= x_arr
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def crps(self, y):
        levels = CRPS_QUANTILE_LEVELS
        q = np.asarray(self.quantile(levels))
        y_arr = np.asarray(y, dtype=float)
        diff = q[None, :] - y_arr.reshape(-1, 1)
        pinball = ((diff > 0) - levels[None, :]) * diff
        # trapezoid over [0, 1] with zero loss at the open endpoints
        out = 2.0 * pinball.sum(axis=1) / (levels.size + 1)
        return float(out[0]) if y_arr.ndim == 0 else out.reshape(y_arr.shape)

    def affine(self, scale: float, shift: float = 0.0) -> "CalibratedPrediction":
        return CalibratedPrediction(self.base, self.calibrator, scale * self.scale, scale * self.shift + shift)


PredictiveDistribution = Union[
    GaussianPrediction, EnsemblePrediction, PiecewiseUniformPrediction, CalibratedPrediction
]


def quantile(dist: PredictiveDistribution, p):
    """Quantile function of ``dist`` at level(s) ``p`` in (0, 1)."""
    _check_p(p)
    return dist.quantile(p)


def cdf(dist: PredictiveDistribution, x):
    return dist.cdf(x)


def crps(dist: PredictiveDistribution, y):
    """Continuous ranked probability score of ``dist`` against ``y``."""
    return dist.crps(y)


def affine(dist: PredictiveDistribution, scale: float, shift: float = 0.0) -> PredictiveDistribution:
    """Distribution of ``scale * X + shift`` for ``X ~ dist``."""
    if not scale > 0:
        raise NonPositiveScale(f"scale must be positive, got {scale!r}")
    return dist.affine(float(scale), float(shift))


def point_mass(value: float) -> EnsemblePrediction:
    return EnsemblePrediction(np.array([value]))
