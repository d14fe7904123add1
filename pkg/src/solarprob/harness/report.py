"""Write an evaluation report: CSV tables, manifest and SVG figures.

All floats are written with Python's shortest round-trip repr and nothing
depends on the wall clock, so two runs with the same configuration produce
byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from solarprob import __version__
from solarprob.errors import IoFailure
from solarprob.harness import plots
from solarprob.harness.runner import FAN_LEVELS, EvaluationReport, ResultRow
from solarprob.metrics import DEFAULT_LEVELS

ROW_FIELDS = (
    "station", "resolution", "horizon_min", "model", "calibrator", "repeat",
    "n", "crps_wm2", "calibration_error", "sharpness_k", "curve",
)
CALIBRATOR_COLUMNS = {"none": "None", "mle": "MLE", "crude": "C", "kuleshov": "Kul."}
MODEL_COLUMNS = {"chp": "CH-P", "peen": "PeEn", "mcm": "MCM", "ngboost": "NGB"}
MANIFEST_EXCLUDE = ("out", "jobs")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if v != v else repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def rows_csv(rows: list[ResultRow]) -> str:
    return _csv_text(
        ROW_FIELDS,
        (
            (r.station, r.resolution, r.horizon_min, r.model, r.calibrator, r.repeat, r.n,
             r.crps, r.calibration_error, r.sharpness, ";".join(repr(float(v)) for v in r.curve))
            for r in rows
        ),
    )


def read_rows(path: str | Path) -> list[ResultRow]:
    """Parse a ``rows.csv`` written by :func:`emit_report`."""
    try:
        with open(path, newline="") as fh:
            records = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return [
        ResultRow(
            station=d["station"],
            resolution=d["resolution"],
            horizon_min=int(d["horizon_min"]),
            model=d["model"],
            calibrator=d["calibrator"],
            repeat=int(d["repeat"]),
            n=int(d["n"]),
            crps=float(d["crps_wm2"]),
            calibration_error=float(d["calibration_error"]),
            sharpness=float(d["sharpness_k"]),
            curve=tuple(float(v) for v in d["curve"].split(";")) if d["curve"] else (),
        )
        for d in records
    ]


def _ordered(values, preferred):
    seen = list(dict.fromkeys(values))
    return [v for v in preferred if v in seen] + [v for v in seen if v not in preferred]


def summary_table(rows: list[ResultRow], metric: str = "crps") -> tuple[list, list]:
    """Mean of ``metric`` over repeats and horizons per (station, model) and calibrator."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.station, r.resolution, r.model, r.calibrator)].append(getattr(r, metric))
    calibrators = _ordered([r.calibrator for r in rows], list(CALIBRATOR_COLUMNS))
    header = ["station", "resolution", "model"] + [CALIBRATOR_COLUMNS.get(c, c) for c in calibrators]
    keys = list(dict.fromkeys((r.station, r.resolution, r.model) for r in rows))
    table = []
    for key in keys:
        table.append(list(key) + [float(np.mean(groups[key + (c,)])) if (key + (c,)) in groups else float("nan") for c in calibrators])
    return header, table


def horizon_table(rows: list[ResultRow]) -> tuple[list, list]:
    """Mean and standard deviation of CRPS over repeats at each horizon."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.station, r.resolution, r.model, r.calibrator, r.horizon_min)].append(r.crps)
    header = ["station", "resolution", "model", "calibrator", "horizon_min", "mean_crps_wm2", "std_crps_wm2", "repeats"]
    return header, [list(k) + [float(np.mean(v)), float(np.std(v)), len(v)] for k, v in groups.items()]


def comparison_table(rows: list[ResultRow]) -> tuple[list, list]:
    """Uncalibrated mean CRPS per model and station, with NGB's change relative to MCM in percent."""
    groups = defaultdict(list)
    for r in rows:
        if r.calibrator == "none":
            groups[(r.station, r.resolution, r.model)].append(r.crps)
    models = _ordered([r.model for r in rows], list(MODEL_COLUMNS))
    header = ["station", "resolution"] + [MODEL_COLUMNS.get(m, m) for m in models] + ["delta_pct_vs_MCM"]
    table = []
    for station, res in dict.fromkeys((r.station, r.resolution) for r in rows):
        means = {m: float(np.mean(groups[(station, res, m)])) for m in models if (station, res, m) in groups}
        delta = float("nan")
        if "ngboost" in means and "mcm" in means:
            delta = 100.0 * (means["ngboost"] - means["mcm"]) / means["mcm"]
        table.append([station, res] + [means.get(m, float("nan")) for m in models] + [delta])
    return header, table


def fan_csv(fan: dict) -> str:
    names = [f"q{int(round(100 * p)):02d}" for p in FAN_LEVELS]
    header = ["target_time", "observed_ghi"] + names
    rows = zip(fan["target_time"], fan["observed_ghi"], *(fan["quantiles"][n] for n in names))
    return _csv_text(header, rows)


def read_fan(path: str | Path) -> tuple[np.ndarray, dict, np.ndarray]:
    """``(times, {level: quantiles}, observed)`` from a ``fan.csv``."""
    try:
        with open(path, newline="") as fh:
            records = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    times = np.array([r["target_time"] for r in records], dtype="datetime64[m]")
    obs = np.array([float(r["observed_ghi"]) for r in records])
    quantiles = {p: np.array([float(r[f"q{int(round(100 * p)):02d}"]) for r in records]) for p in FAN_LEVELS}
    return times, quantiles, obs


def calibration_curves(rows: list[ResultRow], station=None, horizon=None, model=None) -> dict:
    """Calibration curve per (model, calibrator), averaged over repeats."""
    station = station or rows[0].station
    horizon = horizon or rows[0].horizon_min
    groups = defaultdict(list)
    for r in rows:
        if r.station == station and r.horizon_min == horizon and (model is None or r.model == model):
            groups[(r.model, r.calibrator)].append(r.curve)
    levels = np.asarray(DEFAULT_LEVELS)
    return {
        f"{MODEL_COLUMNS.get(m, m)} / {CALIBRATOR_COLUMNS.get(c, c)}": (levels, np.mean(np.array(v), axis=0))
        for (m, c), v in groups.items()
    }


def _write(path: Path, text: str) -> str:
    data = text.encode("utf-8")
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def emit_report(report: EvaluationReport, out_dir: str | Path, figures: bool = True) -> dict:
    """Write tables, manifest and figures into ``out_dir``; returns the output hashes."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    rows = report.rows
    if not rows:
        raise ValueError("report has no rows")
    hashes = {"rows.csv": _write(out / "rows.csv", rows_csv(rows))}
    for name, metric in (("summary.csv", "crps"), ("summary_calibration.csv", "calibration_error"), ("summary_sharpness.csv", "sharpness")):
        hashes[name] = _write(out / name, _csv_text(*summary_table(rows, metric)))
    h_header, h_rows = horizon_table(rows)
    hashes["crps_by_horizon.csv"] = _write(out / "crps_by_horizon.csv", _csv_text(h_header, h_rows))
    hashes["comparison.csv"] = _write(out / "comparison.csv", _csv_text(*comparison_table(rows)))
    if report.fan is not None:
        hashes["fan.csv"] = _write(out / "fan.csv", fan_csv(report.fan))

    if figures:
        series = defaultdict(lambda: ([], [], []))
        first = rows[0].station
        for station, _, model, cal, h, mean, std, _ in h_rows:
            if station == first:
                s = series[f"{MODEL_COLUMNS.get(model, model)} / {CALIBRATOR_COLUMNS.get(cal, cal)}"]
                s[0].append(h), s[1].append(mean), s[2].append(std)
        plots.emit_crps_by_horizon(series, out / "crps_by_horizon.svg", title=f"station {first}")
        plots.emit_calibration_curves(
            calibration_curves(rows), out / "calibration_curves.svg", title=f"{first}, {rows[0].horizon_min} min"
        )
        if report.fan is not None:
            times, quantiles, obs = read_fan(out / "fan.csv")
            plots.emit_fan_chart(
                times, quantiles, obs, out / "fan_chart.svg",
                title=f"{MODEL_COLUMNS.get(report.fan['model'], report.fan['model'])}, {report.fan['horizon_min']} min ahead",
            )

    config = {k: v for k, v in report.config.echo().items() if k not in MANIFEST_EXCLUDE}
    manifest = {
        "config": config,
        "config_hash": report.config_hash,
        "seed": report.config.seed,
        "version": __version__,
        "inputs": report.inputs,
        "outputs": hashes,
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return hashes
