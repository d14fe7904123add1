"""SURFRAD station files, clearness index and supervised datasets.

A SURFRAD daily file has a station-name line, a latitude/longitude/elevation
line, then one whitespace-separated row per observation: year, julian day,
month, day, hour, minute, decimal hour, solar zenith, and twenty
``value qc`` pairs (downwelling solar first, station pressure last).
Missing values are written as -9999.9 and a nonzero qc flag marks a value
as bad.

Data flows as::

    parse_surfrad_day -> RecordSeries -> build_grid -> Grid -> build_dataset
"""
from __future__ import annotations

import csv
import gzip
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from solarprob.errors import EmptyDataset, EmptyFile, MalformedHeader, MisalignedClearSky

MISSING = -9999.9
SOLAR_CONSTANT = 1361.0
K_CAP = 1.2
DAYTIME_THRESHOLD = 5.0
N_LAGS = 5

# (field name, value column, qc column); qc None for zenith
_COLUMNS = (
    ("zenith_deg", 7, None),
    ("ghi", 8, 9),
    ("temp_c", 38, 39),
    ("rh_pct", 40, 41),
    ("wind_speed", 42, 43),
    ("wind_dir_deg", 44, 45),
    ("pressure_mb", 46, 47),
)
_N_TOKENS = 48
QC_FIELDS = tuple(name for name, _, qc in _COLUMNS if qc is not None)
MET_FIELDS = ("temp_c", "rh_pct", "wind_speed", "wind_dir_deg", "pressure_mb")

FEATURE_NAMES = (
    "rh_pct",
    "wind_speed",
    "wind_dir_deg",
    "pressure_mb",
    "tod_sin",
    "tod_cos",
    "zenith_deg",
    "temp_c",
) + tuple(f"ghi_lag{i}" for i in range(N_LAGS))

RESOLUTIONS = {"5min": 5, "hourly": 60}
_RESOLUTION_ALIASES = {"5min": "5min", "intra_hourly": "5min", "intra-hourly": "5min", "hourly": "hourly"}


def normalize_resolution(resolution: str) -> str:
    try:
        return _RESOLUTION_ALIASES[resolution]
    except KeyError:
        raise ValueError(f"unknown resolution {resolution!r}") from None


class RowError(NamedTuple):
    line: int
    message: str


@dataclass(frozen=True)
class Record:
    timestamp: np.datetime64
    zenith_deg: float
    ghi: float
    temp_c: float
    rh_pct: float
    wind_speed: float
    wind_dir_deg: float
    pressure_mb: float
    qc_flags: dict


@dataclass(frozen=True, eq=False)
class RecordSeries:
    """Column-oriented observations from one or more station files.

    Values that are missing or carry a failing qc flag are NaN.
    """

    station: str
    latitude: float
    longitude: float
    elevation: float
    times: np.ndarray  # datetime64[m], strictly increasing
    zenith_deg: np.ndarray
    ghi: np.ndarray
    temp_c: np.ndarray
    rh_pct: np.ndarray
    wind_speed: np.ndarray
    wind_dir_deg: np.ndarray
    pressure_mb: np.ndarray
    qc: dict = field(default_factory=dict)  # field name -> int array
    errors: tuple = ()

    def __len__(self):
        return self.times.size

    def __getitem__(self, i: int) -> Record:
        return Record(
            timestamp=self.times[i],
            zenith_deg=float(self.zenith_deg[i]),
            ghi=float(self.ghi[i]),
            temp_c=float(self.temp_c[i]),
            rh_pct=float(self.rh_pct[i]),
            wind_speed=float(self.wind_speed[i]),
            wind_dir_deg=float(self.wind_dir_deg[i]),
            pressure_mb=float(self.pressure_mb[i]),
            qc_flags={name: int(self.qc[name][i]) for name in QC_FIELDS},
        )

    def __eq__(self, other):
        if not isinstance(other, RecordSeries):
            return NotImplemented
        same_meta = (self.station, self.latitude, self.longitude, self.elevation) == (
            other.station,
            other.latitude,
            other.longitude,
            other.elevation,
        )
        arrays = ("times",) + tuple(name for name, _, _ in _COLUMNS)
        return (
            same_meta
            and all(np.array_equal(getattr(self, a), getattr(other, a), equal_nan=a != "times") for a in arrays)
            and all(np.array_equal(self.qc[n], other.qc[n]) for n in QC_FIELDS)
        )


def _value(token: str) -> float:
    v = float(token)
    return math.nan if v == MISSING else v


def parse_surfrad_day(raw: bytes | str) -> RecordSeries:
    """Parse one SURFRAD daily file (optionally gzip-compressed bytes).

    Rows that fail to parse are skipped and reported in ``errors`` rather
    than aborting the whole file.
    """
    if isinstance(raw, bytes):
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        text = raw.decode("ascii", errors="replace")
    else:
        text = raw
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise EmptyFile("file is empty")
    if len(lines) < 2:
        raise MalformedHeader("missing latitude/longitude line")
    station = lines[0].strip()
    head = lines[1].split()
    try:
        latitude, longitude, elevation = (float(v) for v in head[:3])
    except ValueError:
        raise MalformedHeader(f"unreadable station location line: {lines[1]!r}") from None
    if not station or len(head) < 3:
        raise MalformedHeader("station header is incomplete")

    times: list[np.datetime64] = []
    values = {name: [] for name, _, _ in _COLUMNS}
    flags = {name: [] for name in QC_FIELDS}
    errors: list[RowError] = []
    last = None
    for lineno, line in enumerate(lines[2:], start=3):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < _N_TOKENS:
            errors.append(RowError(lineno, f"expected {_N_TOKENS} fields, found {len(tokens)}"))
            continue
        try:
            year, _, month, day, hour, minute = (int(t) for t in tokens[:6])
            stamp = np.datetime64(f"{year:04d}-{month:02d}-{day:02d}T{hour:02d}:{minute:02d}", "m")
            row = {}
            row_flags = {}
            for name, col, qc_col in _COLUMNS:
                v = _value(tokens[col])
                if qc_col is not None:
                    flag = int(tokens[qc_col])
                    row_flags[name] = flag
                    if flag != 0:
                        v = math.nan
                row[name] = v
        except ValueError as exc:
            errors.append(RowError(lineno, f"unparseable value: {exc}"))
            continue
        if last is not None and stamp <= last:
            errors.append(RowError(lineno, f"timestamp {stamp} not after {last}"))
            continue
        last = stamp
        times.append(stamp)
        for name in values:
            values[name].append(row[name])
        for name in flags:
            flags[name].append(row_flags[name])

    return RecordSeries(
        station=station,
        latitude=latitude,
        longitude=longitude,
        elevation=elevation,
        times=np.array(times, dtype="datetime64[m]"),
        **{name: np.array(v, dtype=float) for name, v in values.items()},
        qc={name: np.array(v, dtype=np.int64) for name, v in flags.items()},
        errors=tuple(errors),
    )


def read_surfrad_file(path: str | Path) -> RecordSeries:
    return parse_surfrad_day(Path(path).read_bytes())


def _fmt(v: float) -> str:
    return f"{MISSING:.1f}" if math.isnan(v) else repr(float(v))


def render_surfrad_day(series: RecordSeries) -> bytes:
    """Write a series back to the SURFRAD column layout.

    Columns the parser does not keep are written as missing with qc 1.
    Values use the shortest round-tripping representation so that
    ``parse_surfrad_day(render_surfrad_day(s)) == s``.
    """
    out = io.StringIO()
    out.write(f" {series.station}\n")
    out.write(f"{series.latitude!r:>8} {series.longitude!r:>8} {series.elevation!r:>6} version 1\n")
    placed = {col: name for name, col, _ in _COLUMNS}
    qc_cols = {qc: name for name, _, qc in _COLUMNS if qc is not None}
    for i, stamp in enumerate(series.times):
        dt = stamp.astype(object)
        jday = dt.timetuple().tm_yday
        tokens = [
            f"{dt.year:4d}",
            f"{jday:3d}",
            f"{dt.month:2d}",
            f"{dt.day:2d}",
            f"{dt.hour:2d}",
            f"{dt.minute:2d}",
            f"{dt.hour + dt.minute / 60:6.3f}",
        ]
        for col in range(7, _N_TOKENS):
            if col in placed:
                tokens.append(f"{_fmt(getattr(series, placed[col])[i]):>7}")
            elif col in qc_cols:
                tokens.append(str(int(series.qc[qc_cols[col]][i])))
            elif col % 2 == 0:
                tokens.append(f"{MISSING:7.1f}")
            else:
                tokens.append("1")
        out.write(" ".join(tokens) + "\n")
    return out.getvalue().encode("ascii")


def concat_series(parts: Iterable[RecordSeries]) -> RecordSeries:
    """Merge several series of one station into a single time-ordered series.

    Duplicate timestamps keep their first occurrence.
    """
    parts = [p for p in parts if len(p)]
    if not parts:
        raise EmptyDataset("no records")
    first = parts[0]
    times = np.concatenate([p.times for p in parts])
    order = np.argsort(times, kind="stable")
    _, keep = np.unique(times[order], return_index=True)
    idx = order[keep]
    cols = {name: np.concatenate([getattr(p, name) for p in parts])[idx] for name, _, _ in _COLUMNS}
    qc = {name: np.concatenate([p.qc[name] for p in parts])[idx] for name in QC_FIELDS}
    return RecordSeries(
        station=first.station,
        latitude=first.latitude,
        longitude=first.longitude,
        elevation=first.elevation,
        times=times[idx],
        qc=qc,
        errors=tuple(e for p in parts for e in p.errors),
        **cols,
    )


class ClearSkySource(Enum):
    COMPUTED = "computed"
    EXTERNAL_CSV = "external_csv"


@dataclass(frozen=True, eq=False)
class ClearSkySeries:
    times: np.ndarray
    e_ext: np.ndarray
    source: ClearSkySource = ClearSkySource.EXTERNAL_CSV

    def __post_init__(self):
        if self.times.shape != self.e_ext.shape:
            raise ValueError("times and e_ext must align")
        if np.any(self.e_ext < 0):
            raise ValueError("e_ext must be nonnegative")


def read_clearsky_csv(source: str | Path | io.TextIOBase) -> ClearSkySeries:
    """Read a ``timestamp,e_ext`` CSV with ISO-8601 UTC timestamps."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            rows = list(csv.DictReader(fh))
    else:
        rows = list(csv.DictReader(source))
    if rows and set(rows[0]) != {"timestamp", "e_ext"}:
        raise ValueError("clear-sky CSV header must be 'timestamp,e_ext'")
    times = np.array([r["timestamp"].rstrip("Z").replace("+00:00", "") for r in rows], dtype="datetime64[m]")
    e_ext = np.array([float(r["e_ext"]) for r in rows])
    order = np.argsort(times, kind="stable")
    return ClearSkySeries(times[order], e_ext[order], ClearSkySource.EXTERNAL_CSV)


def day_of_year(times) -> np.ndarray:
    t = np.asarray(times, dtype="datetime64[m]")
    return (t.astype("datetime64[D]") - t.astype("datetime64[Y]")).astype(np.int64) + 1


def compute_extraterrestrial(timestamp, zenith_deg, solar_constant: float = SOLAR_CONSTANT):
    """Top-of-atmosphere horizontal irradiance in W/m^2.

    ``S_c * (1 + 0.033 cos(2 pi n / 365)) * cos(zenith)``, floored at zero;
    ``n`` is the day of year of ``timestamp``.
    """
    n = day_of_year(timestamp)
    ecc = 1.0 + 0.033 * np.cos(2.0 * np.pi * n / 365.0)
    out = solar_constant * ecc * np.cos(np.radians(np.asarray(zenith_deg, dtype=float)))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def clearness_index(ghi, e_ext, k_cap: float = K_CAP, threshold: float = DAYTIME_THRESHOLD):
    """``clip(ghi / e_ext, 0, k_cap)``; NaN marks night (``e_ext <= threshold``) or missing GHI."""
    ghi = np.asarray(ghi, dtype=float)
    e_ext = np.asarray(e_ext, dtype=float)
    day = e_ext > threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(day, np.clip(ghi / np.where(day, e_ext, 1.0), 0.0, k_cap), np.nan)
    k = np.where(np.isnan(ghi), np.nan, k)
    return float(k) if k.ndim == 0 else k


@dataclass(frozen=True, eq=False)
class Grid:
    """Regular time grid of aggregated observations for one station.

    At 5-minute resolution each slot averages GHI and the normalizer over
    ``(t - 5 min, t]``; hourly slots average over ``(t - 1 h, t]``.
    Meteorological fields are the values at the slot end.
    """

    station: str
    resolution: str
    times: np.ndarray
    ghi: np.ndarray
    e_ext: np.ndarray
    k: np.ndarray
    zenith_deg: np.ndarray
    temp_c: np.ndarray
    rh_pct: np.ndarray
    wind_speed: np.ndarray
    wind_dir_deg: np.ndarray
    pressure_mb: np.ndarray

    @property
    def step_minutes(self) -> int:
        return RESOLUTIONS[self.resolution]

    def __len__(self):
        return self.times.size

    def select(self, mask) -> "Grid":
        names = ("times", "ghi", "e_ext", "k", "zenith_deg") + MET_FIELDS
        return Grid(self.station, self.resolution, **{n: getattr(self, n)[mask] for n in names})

    def years(self) -> np.ndarray:
        return self.times.astype("datetime64[Y]").astype(np.int64) + 1970


def _bin_mean(values: np.ndarray, inverse: np.ndarray, n_bins: int) -> np.ndarray:
    # any missing member makes the whole bin missing
    bad = np.bincount(inverse, weights=np.isnan(values), minlength=n_bins) > 0
    sums = np.bincount(inverse, weights=np.nan_to_num(values), minlength=n_bins)
    counts = np.bincount(inverse, minlength=n_bins)
    out = sums / np.maximum(counts, 1)
    out[bad | (counts == 0)] = np.nan
    return out


def _bin_last(values: np.ndarray, inverse: np.ndarray, n_bins: int) -> np.ndarray:
    out = np.full(n_bins, np.nan)
    out[inverse] = values  # later records overwrite earlier ones
    return out


def build_grid(
    records: RecordSeries | Sequence[RecordSeries],
    clearsky: ClearSkySeries | None = None,
    resolution: str = "5min",
    *,
    k_cap: float = K_CAP,
    threshold: float = DAYTIME_THRESHOLD,
    solar_constant: float = SOLAR_CONSTANT,
) -> Grid:
    """Aggregate raw records onto a gap-free 5-minute or hourly grid."""
    resolution = normalize_resolution(resolution)
    series = records if isinstance(records, RecordSeries) else concat_series(records)
    if len(series) == 0:
        raise EmptyDataset("no records")

    minutes = series.times.astype(np.int64)
    slot = -(-minutes // 5) * 5  # ceil to the 5-minute boundary
    start, stop = slot[0], slot[-1]
    n5 = (stop - start) // 5 + 1
    inverse = (slot - start) // 5
    times5 = (start + 5 * np.arange(n5)).astype("datetime64[m]")

    ghi5 = _bin_mean(series.ghi, inverse, n5)
    if clearsky is None:
        e_rec = compute_extraterrestrial(series.times, series.zenith_deg, solar_constant)
        e5 = _bin_mean(np.atleast_1d(e_rec), inverse, n5)
    else:
        pos = np.searchsorted(clearsky.times, times5)
        pos = np.clip(pos, 0, max(clearsky.times.size - 1, 0))
        if clearsky.times.size == 0 or not np.array_equal(clearsky.times[pos], times5):
            raise MisalignedClearSky("clear-sky series does not cover every 5-minute slot of the records")
        e5 = clearsky.e_ext[pos].astype(float)
    last = {name: _bin_last(getattr(series, name), inverse, n5) for name in ("zenith_deg",) + MET_FIELDS}

    if resolution == "5min":
        times, ghi, e_ext = times5, ghi5, e5
    else:
        # hourly slots end on the hour and cover the twelve 5-minute slots before
        first_hour = -(-times5[0].astype(np.int64) // 60) * 60
        last_hour = times5[-1].astype(np.int64) // 60 * 60
        if last_hour < first_hour:
            raise EmptyDataset("records do not span a full hour")
        hours = np.arange(first_hour, last_hour + 1, 60)
        idx5 = (hours - times5[0].astype(np.int64)) // 5
        offsets = np.arange(-11, 1)
        window = idx5[:, None] + offsets[None, :]
        valid = window >= 0
        safe = np.where(valid, window, 0)
        ghi_w = np.where(valid, ghi5[safe], np.nan)
        e_w = np.where(valid, e5[safe], np.nan)
        times = hours.astype("datetime64[m]")
        ghi = ghi_w.mean(axis=1)
        e_ext = e_w.mean(axis=1)
        last = {name: v[idx5] for name, v in last.items()}

    k = clearness_index(ghi, e_ext, k_cap, threshold)
    return Grid(station=series.station, resolution=resolution, times=times, ghi=ghi, e_ext=e_ext, k=k, **last)


@dataclass(frozen=True, eq=False)
class SupervisedDataset:
    features: np.ndarray
    targets_k: np.ndarray
    targets_e_ext: np.ndarray
    target_ghi: np.ndarray
    issue_times: np.ndarray
    target_times: np.ndarray
    station: str
    resolution: str
    horizon: int  # minutes
    feature_names: tuple = FEATURE_NAMES

    def __len__(self):
        return self.targets_k.size

    @property
    def meta(self) -> tuple:
        return (self.station, self.resolution, self.horizon)

    def subset(self, idx) -> "SupervisedDataset":
        return SupervisedDataset(
            features=self.features[idx],
            targets_k=self.targets_k[idx],
            targets_e_ext=self.targets_e_ext[idx],
            target_ghi=self.target_ghi[idx],
            issue_times=self.issue_times[idx],
            target_times=self.target_times[idx],
            station=self.station,
            resolution=self.resolution,
            horizon=self.horizon,
            feature_names=self.feature_names,
        )

    def to_bytes(self) -> bytes:
        parts = [
            self.features,
            self.targets_k,
            self.targets_e_ext,
            self.target_ghi,
            self.issue_times.astype(np.int64),
            self.target_times.astype(np.int64),
        ]
        head = f"{self.station}|{self.resolution}|{self.horizon}|{self.features.shape}".encode()
        return head + b"".join(np.ascontiguousarray(p).tobytes() for p in parts)


def time_of_day_features(times) -> tuple[np.ndarray, np.ndarray]:
    minutes = np.asarray(times, dtype="datetime64[m]").astype(np.int64) % 1440
    angle = 2.0 * np.pi * minutes / 1440.0
    return np.sin(angle), np.cos(angle)


def build_dataset(
    source: Grid | RecordSeries | Sequence[RecordSeries],
    horizon: int,
    clearsky: ClearSkySeries | None = None,
    resolution: str = "5min",
    *,
    k_cap: float = K_CAP,
    threshold: float = DAYTIME_THRESHOLD,
    solar_constant: float = SOLAR_CONSTANT,
) -> SupervisedDataset:
    """Supervised rows for forecasting ``horizon`` minutes ahead.

    ``source`` is either a prepared :class:`Grid` or raw records, which are
    first aggregated with :func:`build_grid` at ``resolution``.

    Row ``t`` holds the met/time features at ``t`` and GHI at ``t`` and the
    four preceding slots; its target is the clearness index of the slot
    ending at ``t + horizon``. Rows whose target is not daytime or whose
    inputs are missing are dropped.
    """
    if isinstance(source, Grid):
        grid = source
    else:
        grid = build_grid(
            source, clearsky, resolution, k_cap=k_cap, threshold=threshold, solar_constant=solar_constant
        )
    step = grid.step_minutes
    if horizon <= 0 or horizon % step:
        raise ValueError(f"horizon {horizon} min is not a positive multiple of the {step}-min step")
    h = horizon // step
    n = len(grid)
    first = N_LAGS - 1
    issue = np.arange(first, n - h)
    if issue.size == 0:
        raise EmptyDataset("series too short for the requested horizon")
    target = issue + h

    tod_sin, tod_cos = time_of_day_features(grid.times[issue])
    cols = [
        grid.rh_pct[issue],
        grid.wind_speed[issue],
        grid.wind_dir_deg[issue],
        grid.pressure_mb[issue],
        tod_sin,
        tod_cos,
        grid.zenith_deg[issue],
        grid.temp_c[issue],
    ] + [grid.ghi[issue - lag] for lag in range(N_LAGS)]
    X = np.column_stack(cols)

    e_t = grid.e_ext[target]
    k_t = grid.k[target]
    keep = (e_t > threshold) & np.isfinite(k_t) & np.all(np.isfinite(X), axis=1)
    if not np.any(keep):
        raise EmptyDataset(f"no valid daytime rows for horizon {horizon} min")
    k_t = k_t[keep]
    e_t = e_t[keep]
    return SupervisedDataset(
        features=np.ascontiguousarray(X[keep]),
        targets_k=k_t,
        targets_e_ext=e_t,
        target_ghi=k_t * e_t,
        issue_times=grid.times[issue[keep]],
        target_times=grid.times[target[keep]],
        station=grid.station,
        resolution=grid.resolution,
        horizon=horizon,
    )
