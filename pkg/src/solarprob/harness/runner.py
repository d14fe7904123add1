"""Experiment execution: data loading, per-task fitting and evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from solarprob.baselines import ChpModel, McmModel, chp_fit, mcm_fit, peen_members
from solarprob.calibrate import fit_calibrator
from solarprob.dist import EnsemblePrediction
from solarprob.errors import EmptyDataset, MissingData
from solarprob.harness.config import ExperimentConfig
from solarprob.ingest import (
    ClearSkySeries,
    Grid,
    SupervisedDataset,
    build_dataset,
    build_grid,
    concat_series,
    read_clearsky_csv,
    read_surfrad_file,
)
from solarprob.metrics import verify
from solarprob.ngboost import NGBoostConfig, ngboost_fit

log = logging.getLogger(__name__)

FAN_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class ResultRow:
    station: str
    resolution: str
    horizon_min: int
    model: str
    calibrator: str
    repeat: int
    n: int
    crps: float  # W/m^2
    calibration_error: float
    sharpness: float  # clearness-index units
    curve: tuple  # observed frequency at each nominal level

    def sort_key(self, config: ExperimentConfig) -> tuple:
        return (
            config.stations.index(self.station),
            self.horizon_min,
            config.models.index(self.model),
            config.calibrators.index(self.calibrator),
            self.repeat,
        )


@dataclass
class EvaluationReport:
    config: ExperimentConfig
    rows: list
    inputs: dict  # relative data path -> sha256
    fan: dict | None = None  # columns for the fan chart

    @property
    def aggregates(self) -> dict:
        """Mean CRPS over repeats and horizons per (station, resolution, model, calibrator)."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r.station, r.resolution, r.model, r.calibrator), []).append(r.crps)
        return {k: float(np.mean(v)) for k, v in groups.items()}

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.config.echo(), sort_keys=True).encode()).hexdigest()


def stream(seed: int, *parts) -> np.random.Generator:
    """Independent generator keyed by the seed and a tuple of names."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [zlib.crc32(str(p).encode()) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(key))


def station_files(data_dir: str | Path, station: str, year: int) -> list[Path]:
    root = Path(data_dir) / station / str(year)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.name.endswith((".dat", ".dat.gz")))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_grids(config: ExperimentConfig) -> tuple[dict, dict]:
    """``{(station, year): Grid}`` for every configured station and split year,
    plus the hashes of every input file."""
    grids, inputs = {}, {}
    data_dir = Path(config.data_dir)
    for station in config.stations:
        clearsky = _clearsky_for(config, station)
        if clearsky is not None:
            inputs[str(clearsky[1])] = _sha256(clearsky[1])
        for year in (config.train_year, config.cal_year, config.test_year):
            files = station_files(data_dir, station, year)
            if not files:
                raise MissingData(f"no data files for station {station!r} year {year} under {data_dir}")
            for f in files:
                inputs[f.relative_to(data_dir).as_posix()] = _sha256(f)
            records = concat_series(read_surfrad_file(f) for f in files)
            if records.errors:
                log.warning("%s %d: %d malformed rows skipped", station, year, len(records.errors))
            grids[(station, year)] = build_grid(
                records,
                clearsky[0] if clearsky else None,
                config.grid_resolution,
                k_cap=config.k_cap,
                threshold=config.daytime_threshold,
                solar_constant=config.solar_constant,
            )
    return grids, inputs


def _clearsky_for(config: ExperimentConfig, station: str) -> tuple[ClearSkySeries, Path] | None:
    if config.clearsky == "computed":
        return None
    if config.clearsky == "csv":
        path = Path(config.data_dir) / station / "clearsky.csv"
    else:
        path = Path(config.clearsky[4:].replace("{station}", station))
    if not path.is_file():
        raise MissingData(f"clear-sky file {path} not found")
    return read_clearsky_csv(path), path


def _day_segments(grid: Grid) -> list[np.ndarray]:
    days = grid.times.astype("datetime64[D]")
    cuts = np.flatnonzero(days[1:] != days[:-1]) + 1
    return np.split(grid.k, cuts)


def _values_at(grid: Grid, times) -> np.ndarray:
    pos = np.searchsorted(grid.times, times)
    pos = np.clip(pos, 0, len(grid) - 1)
    out = grid.k[pos]
    return np.where(grid.times[pos] == times, out, np.nan)


def _daylight_periods(times, idx) -> list[np.ndarray]:
    """Split row indices into daylight periods (runs without a 3 h gap),
    dropping periods cut short by the start or end of the record."""
    cuts = np.flatnonzero(np.diff(times) > np.timedelta64(3, "h")) + 1
    periods = np.split(np.asarray(idx), cuts)
    sizes = np.array([p.size for p in periods])
    full = [p for p, n in zip(periods, sizes) if n >= 0.5 * np.median(sizes)]
    return full or periods


@dataclass(frozen=True)
class Task:
    station: str
    horizon_min: int
    model: str
    repeat: int
    config: ExperimentConfig
    test: SupervisedDataset
    train: SupervisedDataset | None = None
    cal: SupervisedDataset | None = None
    chp: ChpModel | None = None
    mcm: McmModel | None = None
    current_k: np.ndarray | None = None  # clearness index at each test issue time
    peen: tuple | None = None  # member arrays per test row
    fan: SupervisedDataset | None = None


def plan_tasks(config: ExperimentConfig, grids: dict) -> list[Task]:
    tasks = []
    for station in config.stations:
        train_grid = grids[(station, config.train_year)]
        cal_grid = grids[(station, config.cal_year)]
        test_grid = grids[(station, config.test_year)]
        step = train_grid.step_minutes
        chp = chp_fit(train_grid.times, train_grid.k, slot_minutes=step) if "chp" in config.models else None
        for horizon in config.horizon_minutes:
            try:
                train = build_dataset(train_grid, horizon)
                cal = build_dataset(cal_grid, horizon)
                test = build_dataset(test_grid, horizon)
            except EmptyDataset as exc:
                raise MissingData(f"{station} at {horizon} min: {exc}") from None

            # every model must be able to forecast every evaluated row
            ok = np.ones(len(test), dtype=bool)
            current_k = members = mcm = None
            if chp is not None:
                ok &= chp.has_slot(test.target_times)
            if "mcm" in config.models:
                mcm = mcm_fit(_day_segments(train_grid), config.mcm_states, horizon // step)
                current_k = _values_at(test_grid, test.issue_times)
                ok &= np.isfinite(current_k)
            if "peen" in config.models:
                members = peen_members(test_grid.times, test_grid.k, test.issue_times)
                ok &= np.array([m.size >= config.effective_peen_min_members for m in members], dtype=bool)
            pool = np.flatnonzero(ok)
            if pool.size == 0:
                raise MissingData(f"{station} at {horizon} min: no test rows every model can forecast")

            fan = fan_idx = None
            if horizon == config.effective_fan_horizon and station == config.stations[0]:
                fan_idx = np.concatenate(_daylight_periods(test.target_times[pool], pool)[: config.fan_days])
                fan = test.subset(fan_idx)
            for repeat in range(config.repeats):
                rng = stream(config.seed, "sample", station, horizon, repeat)
                cal_idx = np.sort(rng.choice(len(cal), size=min(config.sample_size, len(cal)), replace=False))
                test_idx = np.sort(rng.choice(pool, size=min(config.sample_size, pool.size), replace=False))
                for model in config.models:
                    want_fan = fan is not None and repeat == 0 and model == config.models[0]
                    idx = np.concatenate([test_idx, fan_idx]) if want_fan else test_idx
                    tasks.append(
                        Task(
                            station=station,
                            horizon_min=horizon,
                            model=model,
                            repeat=repeat,
                            config=config,
                            test=test.subset(idx),
                            train=train if model == "ngboost" else None,
                            cal=cal.subset(cal_idx) if model == "ngboost" else None,
                            chp=chp if model == "chp" else None,
                            mcm=mcm if model == "mcm" else None,
                            current_k=current_k[idx] if model == "mcm" else None,
                            peen=tuple(members[i] for i in idx) if model == "peen" else None,
                            fan=fan if want_fan else None,
                        )
                    )
    return tasks


def _predict(task: Task):
    """Test-set predictions (clearness index) and, for NGBoost, the fitted
    model's calibration-set predictions."""
    cfg = task.config
    if task.model == "ngboost":
        seed = int(stream(cfg.seed, "fit", task.station, task.horizon_min, task.model, task.repeat).integers(2**63))
        model = ngboost_fit(
            task.train,
            NGBoostConfig(
                n_estimators=cfg.n_estimators,
                learning_rate=cfg.learning_rate,
                max_depth=cfg.max_depth,
                min_samples_leaf=cfg.min_samples_leaf,
                minibatch_frac=cfg.effective_minibatch_frac,
                seed=seed,
            ),
        )
        return model.predict(task.test.features), model.predict(task.cal.features)
    if task.model == "chp":
        return [task.chp.forecast(t) for t in task.test.target_times], None
    if task.model == "peen":
        return [EnsemblePrediction(m) for m in task.peen], None
    if task.model == "mcm":
        return [task.mcm.forecast(k) for k in task.current_k], None
    raise ValueError(f"unknown model {task.model!r}")


def run_task(task: Task) -> tuple[list[ResultRow], dict | None]:
    preds, cal_preds = _predict(task)
    n_eval = len(preds) - (len(task.fan) if task.fan is not None else 0)
    eval_preds = preds[:n_eval]
    test = task.test
    y, e = test.targets_k[:n_eval], test.targets_e_ext[:n_eval]
    calibrators = task.config.calibrators if cal_preds is not None else ("none",)
    rows, fan = [], None
    for name in calibrators:
        cal = fit_calibrator(name, cal_preds, task.cal.targets_k) if name != "none" else None
        adjusted = eval_preds if cal is None else [cal.apply(p) for p in eval_preds]
        rec = verify(adjusted, y, e)
        rows.append(
            ResultRow(
                station=task.station,
                resolution=task.config.resolution,
                horizon_min=task.horizon_min,
                model=task.model,
                calibrator=name,
                repeat=task.repeat,
                n=rec.n,
                crps=rec.mean_crps,
                calibration_error=rec.calibration_error,
                sharpness=rec.sharpness,
                curve=tuple(p_hat for _, p_hat in rec.level_curve),
            )
        )
    if task.fan is not None:
        fan_preds = preds[n_eval:]
        levels = np.asarray(FAN_LEVELS)
        q = np.vstack([np.asarray(p.quantile(levels), dtype=float) for p in fan_preds])
        scale = task.fan.targets_e_ext[:, None]
        fan = {
            "model": task.model,
            "horizon_min": task.horizon_min,
            "target_time": [str(t) for t in task.fan.target_times],
            "observed_ghi": task.fan.target_ghi.tolist(),
            "quantiles": {f"q{int(round(100 * p)):02d}": (q[:, j] * scale[:, 0]).tolist() for j, p in enumerate(levels)},
        }
    return rows, fan


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> EvaluationReport:
    """Run every (station, horizon, model, repeat) task and collect the rows.

    Results do not depend on ``jobs``: each task draws from its own keyed
    random stream and rows are sorted canonically before being returned.
    """
    grids, inputs = load_grids(config)
    tasks = plan_tasks(config, grids)
    log.info("running %d tasks with %d worker(s)", len(tasks), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_task, tasks, chunksize=1))
    else:
        results = [run_task(t) for t in tasks]
    rows = [r for task_rows, _ in results for r in task_rows]
    rows.sort(key=lambda r: r.sort_key(config))
    fan = next((f for _, f in results if f is not None), None)
    return EvaluationReport(config=config, rows=rows, inputs=dict(sorted(inputs.items())), fan=fan)
