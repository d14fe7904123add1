"""Command-line interface.

::

    solarprob run --config exp.conf [--stations a,b] [--resolution hourly] [--out DIR] [--seed N] [--jobs N]
    solarprob plot fan --in out/rows.csv --out fan.svg
    solarprob plot calibration --in out/rows.csv --out cal.svg [--station S] [--horizon H] [--model M]
    solarprob validate-data --data-dir DIR
    solarprob synth --out DIR
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from solarprob.errors import SolarProbError
from solarprob.harness.config import CONFIG_KEYS, ExperimentConfig, default_data_dir

log = logging.getLogger("solarprob")


def _add_config_flags(p: argparse.ArgumentParser):
    for key in CONFIG_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solarprob", description="Probabilistic solar irradiance forecasting experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write the report")
    run.add_argument("--config", type=Path, help="key = value config file")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("--no-figures", action="store_true", help="skip the SVG figures")
    _add_config_flags(run)

    plot = sub.add_parser("plot", help="render a figure from a finished run")
    plot.add_argument("kind", choices=("fan", "calibration"))
    plot.add_argument("--in", dest="rows", type=Path, required=True, help="rows.csv of a finished run")
    plot.add_argument("--out", type=Path, required=True, help="SVG path")
    plot.add_argument("--station")
    plot.add_argument("--horizon", type=int, help="horizon in minutes")
    plot.add_argument("--model")

    val = sub.add_parser("validate-data", help="parse every daily file and report malformed rows")
    val.add_argument("--data-dir", type=Path, default=None)

    syn = sub.add_parser("synth", help="write a synthetic archive in the daily-file format")
    syn.add_argument("--out", type=Path, required=True)
    syn.add_argument("--station", default="syn")
    syn.add_argument("--years", default="2016,2017,2018")
    syn.add_argument("--days", type=int, default=30)
    syn.add_argument("--seed", type=int, default=20200601)
    return parser


def _cmd_run(args) -> int:
    from solarprob.harness.report import emit_report
    from solarprob.harness.runner import run_experiment

    overrides = {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k) is not None}
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config, overrides)
    else:
        config = ExperimentConfig.from_mapping(overrides)
    if args.jobs < 1:
        raise SystemExit("--jobs must be at least 1")
    report = run_experiment(config, jobs=args.jobs)
    emit_report(report, args.out, figures=not args.no_figures)
    print(f"{len(report.rows)} rows written to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    from solarprob.harness import plots
    from solarprob.harness.report import calibration_curves, read_fan, read_rows

    if args.kind == "fan":
        times, quantiles, obs = read_fan(args.rows.parent / "fan.csv")
        plots.emit_fan_chart(times, quantiles, obs, args.out)
    else:
        rows = read_rows(args.rows)
        if not rows:
            raise SystemExit(f"{args.rows} has no rows")
        curves = calibration_curves(rows, args.station, args.horizon, args.model)
        if not curves:
            raise SystemExit("no rows match the requested station/horizon/model")
        plots.emit_calibration_curves(curves, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_validate(args) -> int:
    from solarprob.ingest import read_surfrad_file

    root = Path(args.data_dir or default_data_dir())
    files = sorted(p for p in root.rglob("*") if p.name.endswith((".dat", ".dat.gz")))
    if not files:
        print(f"no daily files under {root}")
        return 1
    bad = 0
    for path in files:
        try:
            series = read_surfrad_file(path)
        except SolarProbError as exc:
            print(f"{path}: {type(exc).__name__}: {exc}")
            bad += 1
            continue
        for err in series.errors:
            print(f"{path}:{err.line}: {err.message}")
        bad += bool(series.errors)
    print(f"{len(files)} files checked, {bad} with problems")
    return 1 if bad else 0


def _cmd_synth(args) -> int:
    from solarprob.synth import write_archive

    years = tuple(int(y) for y in args.years.split(","))
    paths = write_archive(args.out, args.station, years, n_days=args.days, seed=args.seed)
    print(f"wrote {len(paths)} files under {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "plot": _cmd_plot, "validate-data": _cmd_validate, "synth": _cmd_synth}
    try:
        return handlers[args.command](args)
    except SolarProbError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
