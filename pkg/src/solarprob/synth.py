"""Synthetic station data in the SURFRAD daily-file layout.

Used for the bundled sample archive and for tests. Cloud cover follows a
three-regime Markov process (clear, broken, overcast) with day-to-day and
within-day persistence; humidity, temperature, wind and pressure respond
to the smoothed cloudiness so that the met fields carry forecast signal.
"""
from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from solarprob.ingest import MISSING, RecordSeries, render_surfrad_day

CLEAR, BROKEN, OVERCAST = 0, 1, 2

# daily regime transitions (rows: today, cols: tomorrow)
_DAY_TRANSITION = np.array(
    [
        [0.60, 0.30, 0.10],
        [0.30, 0.45, 0.25],
        [0.20, 0.35, 0.45],
    ]
)
_SWITCH_PER_STEP = 0.006


def solar_zenith(times, latitude: float, longitude: float) -> np.ndarray:
    """Approximate solar zenith angle in degrees for UTC ``times``.

    Fourier-series declination and equation of time; accurate to a few
    tenths of a degree, which is ample for synthetic data.
    """
    t = np.asarray(times, dtype="datetime64[m]")
    minutes = (t - t.astype("datetime64[D]")).astype(np.int64)
    doy = (t.astype("datetime64[D]") - t.astype("datetime64[Y]")).astype(np.int64) + 1
    g = 2.0 * np.pi / 365.0 * (doy - 1 + (minutes / 60.0 - 12.0) / 24.0)
    eqtime = 229.18 * (
        0.000075 + 0.001868 * np.cos(g) - 0.032077 * np.sin(g) - 0.014615 * np.cos(2 * g) - 0.040849 * np.sin(2 * g)
    )
    decl = (
        0.006918
        - 0.399912 * np.cos(g)
        + 0.070257 * np.sin(g)
        - 0.006758 * np.cos(2 * g)
        + 0.000907 * np.sin(2 * g)
        - 0.002697 * np.cos(3 * g)
        + 0.00148 * np.sin(3 * g)
    )
    true_solar = minutes + eqtime + 4.0 * longitude
    hour_angle = np.radians(true_solar / 4.0 - 180.0)
    lat = np.radians(latitude)
    cos_z = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)
    return np.degrees(np.arccos(np.clip(cos_z, -1.0, 1.0)))


def _clear_k(zenith: np.ndarray) -> np.ndarray:
    cos_z = np.maximum(np.cos(np.radians(zenith)), 0.07)
    return 0.82 * np.exp(-0.06 * (1.0 / cos_z - 1.0))


def simulate_station(
    start: str,
    n_days: int,
    *,
    latitude: float = 38.9,
    longitude: float = -97.6,
    elevation: float = 400.0,
    station: str = "Synthetic Plains",
    step_minutes: int = 5,
    seed: int = 0,
) -> RecordSeries:
    """Simulate ``n_days`` of observations starting at midnight UTC of ``start``."""
    rng = np.random.default_rng(seed)
    per_day = 1440 // step_minutes
    n = n_days * per_day
    t0 = np.datetime64(start, "D").astype("datetime64[m]")
    times = t0 + step_minutes * np.arange(n)
    zenith = solar_zenith(times, latitude, longitude)

    regime = np.empty(n, dtype=np.int64)
    state = rng.choice(3, p=[0.5, 0.3, 0.2])
    for d in range(n_days):
        if d:
            state = rng.choice(3, p=_DAY_TRANSITION[state])
        for i in range(d * per_day, (d + 1) * per_day):
            if rng.random() < _SWITCH_PER_STEP:
                state = rng.choice(3, p=_DAY_TRANSITION[state])
            regime[i] = state

    k_clear = _clear_k(zenith)
    k = np.empty(n)
    shaded = False
    ar = 0.0
    for i in range(n):
        ar = 0.8 * ar + rng.normal(0.0, 0.6)
        if regime[i] == CLEAR:
            k[i] = k_clear[i] * (1.0 + 0.015 * ar)
        elif regime[i] == BROKEN:
            if rng.random() < 0.3:
                shaded = not shaded
            base = 0.40 if shaded else 1.04
            k[i] = k_clear[i] * (base + 0.06 * ar)
        else:
            k[i] = k_clear[i] * (0.32 + 0.05 * ar)
    k = np.clip(k, 0.02, 1.15)

    cloud = np.where(regime == CLEAR, 0.0, np.where(regime == BROKEN, 0.5, 1.0))
    smooth = np.empty(n)
    acc = cloud[0]
    for i in range(n):
        acc = 0.97 * acc + 0.03 * cloud[i]
        smooth[i] = acc

    e_ext = 1361.0 * (1 + 0.033 * np.cos(2 * np.pi * ((times.astype("datetime64[D]") - times.astype("datetime64[Y]")).astype(np.int64) + 1) / 365.0))
    e_ext = np.maximum(e_ext * np.cos(np.radians(zenith)), 0.0)
    ghi = np.where(e_ext > 0, k * e_ext + rng.normal(0.0, 2.0, n), rng.normal(-1.5, 0.8, n))

    local_hour = ((times - times.astype("datetime64[D]")).astype(np.int64) / 60.0 + longitude / 15.0) % 24.0
    diurnal = np.sin(2 * np.pi * (local_hour - 9.0) / 24.0)
    temp = 22.0 + 7.0 * diurnal - 4.0 * smooth + np.cumsum(rng.normal(0, 0.05, n)) * 0.2 + rng.normal(0, 0.3, n)
    rh = np.clip(45.0 - 15.0 * diurnal + 40.0 * smooth + rng.normal(0, 3.0, n), 5.0, 100.0)
    wind_speed = np.maximum(2.5 + 3.0 * (regime == BROKEN) + 1.5 * smooth + rng.normal(0, 0.8, n), 0.0)
    wind_dir = (200.0 + np.cumsum(rng.normal(0, 2.0, n)) + 40.0 * smooth) % 360.0
    pressure = 965.0 + np.cumsum(rng.normal(0, 0.02, n)) - 6.0 * smooth + rng.normal(0, 0.1, n)

    qc = {name: np.zeros(n, dtype=np.int64) for name in ("ghi", "temp_c", "rh_pct", "wind_speed", "wind_dir_deg", "pressure_mb")}
    values = {
        "ghi": np.round(ghi, 1),
        "temp_c": np.round(temp, 1),
        "rh_pct": np.round(rh, 1),
        "wind_speed": np.round(wind_speed, 1),
        "wind_dir_deg": np.round(wind_dir, 1),
        "pressure_mb": np.round(pressure, 1),
    }
    for name in values:
        bad = rng.random(n) < 0.002
        qc[name][bad] = 2 if name == "ghi" else 1
        values[name][bad] = np.nan

    return RecordSeries(
        station=station,
        latitude=latitude,
        longitude=longitude,
        elevation=elevation,
        times=times,
        zenith_deg=np.round(zenith, 2),
        qc=qc,
        **values,
    )


def split_days(series: RecordSeries) -> list[RecordSeries]:
    days = series.times.astype("datetime64[D]")
    out = []
    for day in np.unique(days):
        m = days == day
        out.append(
            RecordSeries(
                station=series.station,
                latitude=series.latitude,
                longitude=series.longitude,
                elevation=series.elevation,
                times=series.times[m],
                zenith_deg=series.zenith_deg[m],
                ghi=series.ghi[m],
                temp_c=series.temp_c[m],
                rh_pct=series.rh_pct[m],
                wind_speed=series.wind_speed[m],
                wind_dir_deg=series.wind_dir_deg[m],
                pressure_mb=series.pressure_mb[m],
                qc={k: v[m] for k, v in series.qc.items()},
            )
        )
    return out


def write_archive(
    out_dir: str | Path,
    station_id: str = "syn",
    years: tuple[int, ...] = (2016, 2017, 2018),
    month: int = 6,
    n_days: int = 30,
    seed: int = 20200601,
    compress: bool = True,
) -> list[Path]:
    """Write daily files as ``<out_dir>/<station_id>/<year>/<id><yy><jjj>.dat[.gz]``."""
    written = []
    for j, year in enumerate(years):
        series = simulate_station(f"{year:04d}-{month:02d}-01", n_days, seed=seed + 1000 * j)
        year_dir = Path(out_dir) / station_id / str(year)
        year_dir.mkdir(parents=True, exist_ok=True)
        for day in split_days(series):
            stamp = day.times[0].astype(object)
            name = f"{station_id}{year % 100:02d}{stamp.timetuple().tm_yday:03d}.dat"
            raw = render_surfrad_day(day)
            path = year_dir / (name + ".gz" if compress else name)
            path.write_bytes(gzip.compress(raw, mtime=0) if compress else raw)
            written.append(path)
    return written


__all__ = ["MISSING", "simulate_station", "solar_zenith", "split_days", "write_archive"]
