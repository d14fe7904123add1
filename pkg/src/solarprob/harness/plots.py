"""Deterministic SVG figures: fan chart, calibration curves, CRPS by horizon."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from solarprob.errors import IoFailure  # noqa: E402

FAN_PAIRS = ((0.1, 0.9), (0.2, 0.8), (0.3, 0.7), (0.4, 0.6))

_RC = {
    "svg.hashsalt": "solarprob",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, out_path: str | Path):
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    except OSError as exc:
        raise IoFailure(f"cannot write {out_path}: {exc}") from exc
    finally:
        plt.close(fig)


def fan_bands(quantiles: Mapping[float, Sequence[float]]) -> list[tuple[float, float, np.ndarray, np.ndarray]]:
    """Central intervals ``(p_lo, p_hi, lower, upper)`` from outermost to innermost.

    ``quantiles`` maps a probability level to the predicted quantile series.
    Each band must contain the next inner one.
    """
    out = []
    for lo, hi in FAN_PAIRS:
        lower = np.asarray(quantiles[lo], dtype=float)
        upper = np.asarray(quantiles[hi], dtype=float)
        if np.any(lower > upper + 1e-9):
            raise ValueError(f"quantile {lo} exceeds quantile {hi}")
        out.append((lo, hi, lower, upper))
    return out


def fan_quantiles(predictions) -> dict:
    """Quantile series at 0.1, 0.2, ..., 0.9 for a window of predictions."""
    levels = np.round(np.arange(1, 10) / 10, 1)
    if len(predictions) == 0:
        raise ValueError("empty forecast window")
    q = np.vstack([np.asarray(p.quantile(levels), dtype=float) for p in predictions])
    return {float(p): q[:, j] for j, p in enumerate(levels)}


def emit_fan_chart(times, predictions, observations, out_path, title: str = "") -> Path:
    """Shaded 10-90, 20-80, 30-70 and 40-60% bands, the median and the observations.

    ``predictions`` is either a sequence of predictive distributions in
    irradiance units or a mapping from level to quantile series.
    """
    times = np.asarray(times, dtype="datetime64[m]")
    obs = np.asarray(observations, dtype=float)
    if times.size == 0:
        raise ValueError("empty forecast window")
    quantiles = predictions if isinstance(predictions, Mapping) else fan_quantiles(predictions)
    if any(np.asarray(v).size != times.size for v in quantiles.values()) or obs.size != times.size:
        raise ValueError("times, quantiles and observations must have the same length")
    bands = fan_bands(quantiles)
    # break the lines across night gaps
    gaps = np.flatnonzero(np.diff(times) > np.timedelta64(3, "h")) + 1
    pieces = np.split(np.arange(times.size), gaps)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        x = np.arange(times.size)
        for j, (lo, hi, lower, upper) in enumerate(bands):
            for part in pieces:
                ax.fill_between(
                    x[part], lower[part], upper[part], color="tab:blue", alpha=0.15 + 0.12 * j, linewidth=0,
                    label=f"{int(lo * 100)}-{int(hi * 100)}%" if part is pieces[0] else None,
                )
        median = np.asarray(quantiles[0.5], dtype=float)
        for i, part in enumerate(pieces):
            ax.plot(x[part], median[part], color="tab:blue", lw=1.0, label="median" if i == 0 else None)
            ax.plot(x[part], obs[part], color="black", lw=0.9, label="observed" if i == 0 else None)
        ticks = [p[p.size // 2] for p in pieces]
        ax.set_xticks(ticks)
        ax.set_xticklabels([str(times[t].astype("datetime64[D]")) for t in ticks])  # UTC date at mid-period
        ax.set_ylabel("GHI (W/m$^2$)")
        ax.set_xlabel("daylight samples")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right", ncol=3)
        _save(fig, out_path)
    return Path(out_path)


def emit_calibration_curves(curves: Mapping[str, tuple], out_path, title: str = "") -> Path:
    """Observed against nominal coverage, one line per label, with the diagonal."""
    if not curves:
        raise ValueError("need at least one calibration curve")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        ax.plot([0, 1], [0, 1], color="grey", ls="--", lw=0.8, label="ideal")
        for label, (p, p_hat) in curves.items():
            p, p_hat = np.asarray(p, dtype=float), np.asarray(p_hat, dtype=float)
            if np.any((p_hat < 0) | (p_hat > 1)) or np.any((p <= 0) | (p >= 1)):
                plt.close(fig)
                raise ValueError(f"calibration curve {label!r} has values outside [0, 1]")
            ax.plot(p, p_hat, marker="o", ms=2.5, lw=1.0, label=label)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("nominal level")
        ax.set_ylabel("observed frequency")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
        _save(fig, out_path)
    return Path(out_path)


def emit_crps_by_horizon(series: Mapping[str, tuple], out_path, title: str = "") -> Path:
    """Mean CRPS against horizon; ``series`` maps a label to ``(horizons, mean, std)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        for label, (h, mean, std) in series.items():
            h, mean, std = (np.asarray(v, dtype=float) for v in (h, mean, std))
            ax.errorbar(h, mean, yerr=std, marker="o", ms=3, lw=1.0, capsize=2, label=label)
        ax.set_xlabel("horizon (min)")
        ax.set_ylabel("CRPS (W/m$^2$)")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, out_path)
    return Path(out_path)
