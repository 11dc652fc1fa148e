"""Command-line interface.

Exit codes: 0 success, 2 input/config error, 3 runtime/training error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import aqi as aqimod
from . import baseline, narx
from .config import AppConfig, load_config, parse_ratios
from .dataset import ParseStats, parse_csv, split, summarize
from .errors import (ConfigurationError, FormatError, InsufficientDataError, NarxAqiError,
                     SchemaError, TrainingError)
from .evalpipe import (AQI_FIELD, Algorithm, Approach, compare, fit_predict, prepare_site,
                       write_reports)
from .util import atomic_write_text

log = logging.getLogger("narxaqi")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
INPUT_ERRORS = (FormatError, SchemaError, ConfigurationError, InsufficientDataError, OSError)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--breakpoints", type=Path, help="YAML breakpoint table")
    p.add_argument("--ratios", help="train,validation,test shares, e.g. 0.7,0.15,0.15")
    p.add_argument("--runs", type=int, help="number of repeated runs")
    p.add_argument("--algorithm", choices=["narx", "lr"])
    p.add_argument("--approach", choices=["aqipredict", "pollutant2aqi"])
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--hidden", help="hidden layer sizes, e.g. 10 or 8,4")
    p.add_argument("--site", help="site id to select from the CSV")
    p.add_argument("--strict", action="store_true", help="reject unknown CSV columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="narxaqi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="five-number summaries and missing rates")
    p.add_argument("csv", type=Path)
    _common(p)

    p = sub.add_parser("compute-aqi", help="row-wise AQI, dominant pollutant and band")
    p.add_argument("csv", type=Path)
    _common(p)

    p = sub.add_parser("train", help="train and save model(s) for one site")
    p.add_argument("csv", type=Path)
    _common(p)

    p = sub.add_parser("evaluate", help="repeated-run evaluation of one approach/algorithm")
    p.add_argument("csv", type=Path)
    _common(p)

    p = sub.add_parser("compare", help="full site x approach x algorithm grid")
    p.add_argument("csv", type=Path, nargs="+")
    _common(p)
    return parser


def resolve_config(args) -> AppConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.breakpoints is not None:
        cfg.breakpoints = args.breakpoints
    if args.runs is not None:
        cfg.run_count = args.runs
    if args.max_epochs is not None:
        cfg.train = replace(cfg.train, max_epochs=args.max_epochs)
    if args.hidden:
        try:
            cfg.hidden = tuple(int(h) for h in args.hidden.split(","))
        except ValueError:
            raise ConfigurationError(f"bad --hidden {args.hidden!r}") from None
    if args.ratios:
        r = parse_ratios(args.ratios)
        if args.algorithm in (None, "narx"):
            cfg.narx_ratios = r
        if args.algorithm in (None, "lr"):
            cfg.lr_ratios = r
    return cfg.validate()


def _read(path: Path, cfg: AppConfig, strict: bool, site: Optional[str] = None):
    if not path.is_file():
        raise FormatError(f"cannot read {path}")
    stats = ParseStats()
    records = parse_csv(path, cfg.schema, strict=strict, stats=stats)
    if site is not None:
        records = [r for r in records if r.site_id == site]
    return records


def _by_site(records) -> dict:
    out = {}
    for r in records:
        out.setdefault(r.site_id, []).append(r)
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_summarize(args, cfg: AppConfig) -> int:
    records = _read(args.csv, cfg, args.strict, args.site)
    if not records:
        log.warning("%s: no data rows", args.csv)
    summary = summarize(records)
    rows = [[s.name, s.total, s.missing, _fmt(s.missing_rate), _fmt(s.min), _fmt(s.q1),
             _fmt(s.median), _fmt(s.q3), _fmt(s.max), _fmt(s.lower_whisker),
             _fmt(s.upper_whisker), s.low_outliers, s.high_outliers]
            for s in summary.values()]
    path = cfg.out / "summary.csv"
    atomic_write_text(path, _csv_text(
        ["field", "count", "missing", "missing_rate", "min", "q1", "median", "q3", "max",
         "lower_whisker", "upper_whisker", "low_outliers", "high_outliers"], rows))
    print(f"wrote {path} ({len(rows)} fields)")
    return EXIT_OK


def cmd_compute_aqi(args, cfg: AppConfig) -> int:
    table = aqimod.load_breakpoints(cfg.breakpoints)
    records = _read(args.csv, cfg, args.strict, args.site)
    kinds = aqimod.ordered_kinds(
        {k for r in records for k in r.pollutants if k in table})
    if cfg.pollutants is not None:
        kinds = tuple(k for k in kinds if k in cfg.pollutants)
    if not kinds:
        raise FormatError(f"{args.csv}: no pollutant columns known to the breakpoint table")
    rows, results = [], []
    for r in records:
        conc = {k: r.pollutants.get(k) for k in kinds}
        conc = {k: v for k, v in conc.items() if v is not None and v >= 0}
        if not conc:
            continue
        res = aqimod.aqi(conc, table)
        results.append(res)
        rows.append([r.timestamp.isoformat(), r.site_id, res.aqi, res.dominant,
                     aqimod.band(res.aqi).label,
                     *(res.per_pollutant_iaqi.get(k, "") for k in kinds)])
    if not results:
        raise InsufficientDataError(f"{args.csv}: no row has a usable pollutant value")
    path = cfg.out / "aqi.csv"
    atomic_write_text(path, _csv_text(
        ["timestamp", "site", "aqi", "dominant", "band", *(f"iaqi_{k}" for k in kinds)], rows))
    rates = [[k, _fmt(aqimod.dominant_rate(results, k))] for k in kinds]
    atomic_write_text(cfg.out / "dominating_rate.csv",
                      _csv_text(["pollutant", "dominating_rate"], rates))
    print(f"wrote {path} ({len(rows)} rows)")
    print("pollutant  dominating rate (%)")
    for k, v in rates:
        print(f"{k:<10} {float(v):6.2f}")
    return EXIT_OK


def _approach(args) -> Approach:
    return Approach.POLLUTANT2AQI if args.approach == "pollutant2aqi" else Approach.AQIPREDICT


def _algorithm(args) -> Algorithm:
    return Algorithm.LR if args.algorithm == "lr" else Algorithm.NARX


def _single_site(records, site):
    sites = _by_site(records)
    if not sites:
        raise InsufficientDataError("no records" + (f" for site {site}" if site else ""))
    if len(sites) > 1:
        raise ConfigurationError(f"CSV holds several sites {sorted(sites)}; pass --site")
    return next(iter(sites.items()))


def cmd_train(args, cfg: AppConfig) -> int:
    table = aqimod.load_breakpoints(cfg.breakpoints)
    site_id, records = _single_site(_read(args.csv, cfg, args.strict, args.site), args.site)
    ecfg = cfg.eval_config()
    site = prepare_site(records, table, ecfg)
    approach, algorithm = _approach(args), _algorithm(args)
    targets = [AQI_FIELD] if approach is Approach.AQIPREDICT else list(site.pollutants)
    out = cfg.out
    status = EXIT_OK
    for target in targets:
        frame = site.frame(target, ecfg.d)
        idx = split(len(frame), ecfg.ratios(algorithm), cfg.seed)
        stem = target.replace(".", "")
        try:
            fit = fit_predict(algorithm, frame, idx, cfg.seed, ecfg)
        except TrainingError as exc:
            if exc.trace is not None:
                atomic_write_text(out / f"trace_{stem}.csv", exc.trace.to_csv())
            log.error("training %s failed at epoch %s: %s", target, exc.epoch, exc)
            status = EXIT_RUNTIME
            continue
        if algorithm is Algorithm.NARX:
            narx.save_model(fit.model, out / f"model_{stem}.json")
            atomic_write_text(out / f"trace_{stem}.csv", fit.trace.to_csv())
            print(f"{site_id} {target}: {fit.trace.accepted} accepted epochs, "
                  f"stop={fit.trace.stop_reason}")
        else:
            baseline.save_model(fit.model, out / f"model_{stem}.json")
            print(f"{site_id} {target}: linear model saved")
    return status


def _run_grid(args, cfg: AppConfig, paths, approaches, algorithms) -> int:
    table = aqimod.load_breakpoints(cfg.breakpoints)
    by_site = {}
    for path in paths:
        for site_id, recs in _by_site(_read(path, cfg, args.strict, args.site)).items():
            by_site.setdefault(site_id, []).extend(recs)
    if not by_site:
        raise InsufficientDataError("no records in the given CSV files")
    ecfg = cfg.eval_config()
    comp = compare(by_site, table, ecfg, run_count=cfg.run_count, seed=cfg.seed,
                   approaches=approaches, algorithms=algorithms)
    written = write_reports(comp, cfg.out, ecfg)
    for row in comp.rows:
        if row.status != "ok":
            log.warning("%s %s %s: %s", row.site, row.approach.value, row.algorithm.value,
                        row.status)
    for line in comp.recommendation_lines():
        print(line)
    print(f"wrote {written['csv']}")
    return EXIT_OK if any(r.status == "ok" for r in comp.rows) else EXIT_RUNTIME


def cmd_evaluate(args, cfg: AppConfig) -> int:
    return _run_grid(args, cfg, [args.csv], [_approach(args)], [_algorithm(args)])


def cmd_compare(args, cfg: AppConfig) -> int:
    approaches = [_approach(args)] if args.approach else list(Approach)
    algorithms = [_algorithm(args)] if args.algorithm else list(Algorithm)
    return _run_grid(args, cfg, args.csv, approaches, algorithms)


COMMANDS = {
    "summarize": cmd_summarize,
    "compute-aqi": cmd_compute_aqi,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NarxAqiError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
