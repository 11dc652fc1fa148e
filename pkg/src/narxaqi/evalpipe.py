"""Experiment harness: AQIPredict and Pollutant2AQI branches, repeated runs, metrics.

AQIPredict computes the historical AQI from actual concentrations and learns
AQI(t) from meteorology(t) and AQI(t-1). Pollutant2AQI learns one model per
pollutant from meteorology(t) and that pollutant at t-1, then feeds the
predicted concentrations into the AQI calculator. Both branches are scored
against the AQI computed from actual test-set concentrations.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import aqi as aqimod
from .aqi import BreakpointTable, clamp_aqi, ordered_kinds
from .baseline import fit_lr, predict_lr
from .dataset import (METEO_FEATURES, CleanReport, ObservationRecord, SplitIndices,
                      SupervisedFrame, build_frame, clean, fit_normalization, split,
                      with_derived)
from .errors import InsufficientDataError, NarxAqiError
from .lm import TrainConfig, train
from .narx import NarxTopology, init_weights, predict_series
from .util import atomic_write_text

AQI_FIELD = "AQI"


class Approach(str, enum.Enum):
    AQIPREDICT = "AQIPredict"
    POLLUTANT2AQI = "Pollutant2AQI"


class Algorithm(str, enum.Enum):
    NARX = "NARX"
    LR = "LR"


# ---------------------------------------------------------------- metrics

def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise ValueError("metrics need at least one pair")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return math.sqrt(float(np.mean((yhat - y) ** 2)))


class UndefinedMetricError(ValueError):
    pass


def mape(y, yhat, eps: float = 1e-9) -> tuple[float, int]:
    """Mean absolute percentage error and the number of excluded pairs.

    Pairs whose actual value satisfies ``|y| < eps`` are skipped.
    """
    y, yhat = _pair(y, yhat)
    keep = np.abs(y) >= eps
    excluded = int(np.sum(~keep))
    if not keep.any():
        raise UndefinedMetricError("every actual value is ~0; MAPE undefined")
    return 100.0 * float(np.mean(np.abs((y[keep] - yhat[keep]) / y[keep]))), excluded


def band_accuracy(y_aqi, yhat_aqi) -> float:
    """Percentage of predictions in the same AQI band as the truth.

    Values are clamped to [0, 500] and rounded half up before banding.
    """
    y, yhat = _pair(y_aqi, yhat_aqi)
    hits = sum(aqimod.band(clamp_aqi(a)) is aqimod.band(clamp_aqi(b)) for a, b in zip(y, yhat))
    return 100.0 * hits / len(y)


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class EvalConfig:
    train: TrainConfig = TrainConfig()
    hidden: tuple[int, ...] = (10,)
    activation: str = "tanh"
    narx_ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    lr_ratios: tuple[float, float, float] = (0.75, 0.0, 0.15)
    d: int = 1
    # None: every meteorological feature / table pollutant observed at the site
    meteo: Optional[tuple[str, ...]] = None
    pollutants: Optional[tuple[str, ...]] = None
    mape_eps: float = 1e-9

    def ratios(self, algorithm: Algorithm) -> tuple[float, float, float]:
        return self.narx_ratios if Algorithm(algorithm) is Algorithm.NARX else self.lr_ratios


@dataclass(frozen=True)
class RunSpec:
    site_id: str
    approach: Approach
    algorithm: Algorithm
    run_count: int = 10
    ratios: Optional[tuple[float, float, float]] = None  # None: per-algorithm default
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "approach", Approach(self.approach))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.run_count < 1:
            raise ValueError("run_count must be >= 1")

    def run_seed(self, run: int) -> int:
        return self.seed + run


# ---------------------------------------------------------------- site preparation

@dataclass
class SiteData:
    """Cleaned records of one site with the historical AQI attached."""

    records: list[ObservationRecord]
    meteo: tuple[str, ...]
    pollutants: tuple[str, ...]
    aqi_results: list[aqimod.AqiResult]
    clean_report: CleanReport

    def frame(self, target: str, d: int = 1) -> SupervisedFrame:
        return build_frame(self.records, target, self.meteo, d=d)

    @property
    def dominant(self) -> Optional[str]:
        if not self.aqi_results:
            return None
        counts = Counter(r.dominant for r in self.aqi_results)
        return max(ordered_kinds(counts), key=lambda k: counts[k])


def _observed(records, names) -> tuple[str, ...]:
    return tuple(n for n in names if any(r.value(n) is not None for r in records))


def prepare_site(records: Sequence[ObservationRecord], table: BreakpointTable,
                 config: EvalConfig = EvalConfig()) -> SiteData:
    meteo = config.meteo if config.meteo is not None else _observed(records, METEO_FEATURES)
    if config.pollutants is not None:
        pollutants = ordered_kinds(config.pollutants)
    else:
        pollutants = _observed(records, table.kinds)
    if not pollutants:
        raise InsufficientDataError("site reports no pollutant in the breakpoint table")
    report = CleanReport()
    kept = clean(records, (*meteo, *pollutants), report)
    if len(kept) < 2:
        raise InsufficientDataError(f"only {len(kept)} rows survive cleaning")
    results = [aqimod.aqi({p: r.pollutants[p] for p in pollutants}, table) for r in kept]
    kept = with_derived(kept, AQI_FIELD, [float(r.aqi) for r in results])
    return SiteData(kept, tuple(meteo), tuple(pollutants), results, report)


# ---------------------------------------------------------------- fitting

@dataclass
class FitOutcome:
    predictions: np.ndarray  # on the test rows, original units
    model: object = None
    trace: object = None


FitPredict = Callable[[Algorithm, SupervisedFrame, SplitIndices, int, EvalConfig], FitOutcome]


def fit_predict(algorithm: Algorithm, frame: SupervisedFrame, idx: SplitIndices, seed: int,
                config: EvalConfig) -> FitOutcome:
    """Train ``algorithm`` on the train rows and predict the test rows."""
    train_f = frame.subset(idx.train)
    test_f = frame.subset(idx.test)
    if Algorithm(algorithm) is Algorithm.LR:
        model = fit_lr(train_f)
        return FitOutcome(predict_lr(model, test_f), model)
    # normalization fitted on training rows only
    norm = fit_normalization(train_f)
    topo = NarxTopology(frame.n_features, config.hidden, config.d, config.activation)
    net = init_weights(topo, seed, norm, frame.feature_names, frame.target_name)
    val_f = frame.subset(idx.validation) if len(idx.validation) else None
    net, trace = train(net, train_f, val_f, config.train)
    return FitOutcome(predict_series(net, test_f), net, trace)


# ---------------------------------------------------------------- reports

@dataclass
class RunResult:
    run: int
    seed: int
    rmse: float
    mape: float
    band_accuracy: float
    mape_excluded: int
    test_size: int
    pollutant_mape: dict = field(default_factory=dict)
    # test-row arrays, kept in memory only
    timestamps: tuple = field(default=(), repr=False)
    actual_aqi: np.ndarray = field(default=None, repr=False)
    predicted_aqi: np.ndarray = field(default=None, repr=False)
    pollutant_predictions: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "run": self.run, "seed": self.seed, "rmse": self.rmse, "mape": self.mape,
            "band_accuracy": self.band_accuracy, "mape_excluded": self.mape_excluded,
            "test_size": self.test_size, "pollutant_mape": dict(self.pollutant_mape),
        }


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else math.nan


@dataclass
class EvalReport:
    spec: RunSpec
    runs: list[RunResult]
    metadata: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict[str, float]:
        return {m: _mean(getattr(r, m) for r in self.runs)
                for m in ("rmse", "mape", "band_accuracy")}

    @property
    def mape_excluded_count(self) -> int:
        return sum(r.mape_excluded for r in self.runs)

    @property
    def pollutant_mape(self) -> dict[str, float]:
        kinds = ordered_kinds({k for r in self.runs for k in r.pollutant_mape})
        return {k: _mean(r.pollutant_mape[k] for r in self.runs if k in r.pollutant_mape)
                for k in kinds}

    def to_dict(self) -> dict:
        s = self.spec
        return {
            "spec": {"site_id": s.site_id, "approach": s.approach.value,
                     "algorithm": s.algorithm.value, "run_count": s.run_count,
                     "ratios": list(s.ratios) if s.ratios else None, "seed": s.seed},
            "aggregate": self.aggregate,
            "mape_excluded_count": self.mape_excluded_count,
            "pollutant_mape": self.pollutant_mape,
            "runs": [r.to_dict() for r in self.runs],
            "metadata": self.metadata,
        }


def _safe_mape(y, yhat, eps) -> tuple[float, int]:
    try:
        return mape(y, yhat, eps)
    except UndefinedMetricError:
        return math.nan, len(y)


def _score(run, seed, ts, actual, predicted, eps, **extra) -> RunResult:
    m, excl = _safe_mape(actual, predicted, eps)
    return RunResult(run=run, seed=seed, rmse=rmse(actual, predicted), mape=m,
                     band_accuracy=band_accuracy(actual, predicted), mape_excluded=excl,
                     test_size=len(actual), timestamps=ts, actual_aqi=actual,
                     predicted_aqi=predicted, **extra)


def _site(records, table, config) -> SiteData:
    return records if isinstance(records, SiteData) else prepare_site(records, table, config)


def _metadata(site: SiteData, spec: RunSpec, config: EvalConfig, frame: SupervisedFrame) -> dict:
    rep = site.clean_report
    return {
        "meteo": list(site.meteo), "pollutants": list(site.pollutants),
        "rows_clean": len(site.records), "rows_frame": len(frame),
        "rows_removed_missing": rep.missing, "rows_removed_negative": rep.negative,
        "rows_removed_duplicate": rep.duplicates,
        "ratios": list(spec.ratios or config.ratios(spec.algorithm)),
        "hidden": list(config.hidden), "dominant": site.dominant,
    }


def run_aqipredict(records, spec: RunSpec, table: BreakpointTable,
                   config: EvalConfig = EvalConfig(),
                   fitter: FitPredict = fit_predict) -> EvalReport:
    site = _site(records, table, config)
    frame = site.frame(AQI_FIELD, config.d)
    ratios = spec.ratios or config.ratios(spec.algorithm)
    runs = []
    for r in range(spec.run_count):
        seed = spec.run_seed(r)
        idx = split(len(frame), ratios, seed)
        out = fitter(spec.algorithm, frame, idx, seed, config)
        actual = frame.targets[idx.test]
        ts = tuple(frame.timestamps[i] for i in idx.test)
        runs.append(_score(r, seed, ts, actual, np.asarray(out.predictions, dtype=float),
                           config.mape_eps))
    return EvalReport(spec, runs, _metadata(site, spec, config, frame))


def compose_aqi(predictions: Mapping[str, np.ndarray], table: BreakpointTable) -> np.ndarray:
    """Row-wise AQI of predicted concentrations (negatives clamped to 0)."""
    kinds = ordered_kinds(predictions)
    n = len(next(iter(predictions.values()))) if predictions else 0
    out = np.empty(n)
    for i in range(n):
        conc = {k: max(float(predictions[k][i]), 0.0) for k in kinds}
        out[i] = aqimod.aqi(conc, table).aqi
    return out


def run_pollutant2aqi(records, spec: RunSpec, table: BreakpointTable,
                      config: EvalConfig = EvalConfig(),
                      fitter: FitPredict = fit_predict) -> EvalReport:
    site = _site(records, table, config)
    aqi_frame = site.frame(AQI_FIELD, config.d)
    frames = {p: site.frame(p, config.d) for p in site.pollutants}
    for p, f in frames.items():
        if f.timestamps != aqi_frame.timestamps:
            raise AssertionError(f"frame rows for {p} do not align with the AQI frame")
    ratios = spec.ratios or config.ratios(spec.algorithm)
    runs = []
    for r in range(spec.run_count):
        seed = spec.run_seed(r)
        idx = split(len(aqi_frame), ratios, seed)
        preds, pmape = {}, {}
        for p, f in frames.items():
            out = fitter(spec.algorithm, f, idx, seed, config)
            preds[p] = np.asarray(out.predictions, dtype=float)
            pmape[p] = _safe_mape(f.targets[idx.test], preds[p], config.mape_eps)[0]
        predicted = compose_aqi(preds, table)
        actual = aqi_frame.targets[idx.test]
        ts = tuple(aqi_frame.timestamps[i] for i in idx.test)
        runs.append(_score(r, seed, ts, actual, predicted, config.mape_eps,
                           pollutant_mape=pmape, pollutant_predictions=preds))
    return EvalReport(spec, runs, _metadata(site, spec, config, aqi_frame))


RUNNERS = {Approach.AQIPREDICT: run_aqipredict, Approach.POLLUTANT2AQI: run_pollutant2aqi}


def evaluate(records, spec: RunSpec, table: BreakpointTable,
             config: EvalConfig = EvalConfig(), fitter: FitPredict = fit_predict) -> EvalReport:
    return RUNNERS[Approach(spec.approach)](records, spec, table, config, fitter)


# ---------------------------------------------------------------- comparison

METRICS = ("rmse", "mape", "band_accuracy")
HIGHER_IS_BETTER = {"rmse": False, "mape": False, "band_accuracy": True}


@dataclass
class ComparisonRow:
    site: str
    approach: Approach
    algorithm: Algorithm
    rmse: float = math.nan
    mape: float = math.nan
    band_accuracy: float = math.nan
    mape_excluded: int = 0
    status: str = "ok"
    ranks: dict = field(default_factory=dict)

    def best(self, metric: str) -> bool:
        return self.ranks.get(metric) == 1


@dataclass
class Comparison:
    rows: list[ComparisonRow]
    reports: dict  # (site, approach, algorithm) -> EvalReport
    dominant: dict  # site -> dominant pollutant

    def site_rows(self, site: str) -> list[ComparisonRow]:
        return [r for r in self.rows if r.site == site]

    def recommendation(self, site: str) -> Optional[ComparisonRow]:
        """Row winning most metrics at ``site``; ties go to the better RMSE rank."""
        ok = [r for r in self.site_rows(site) if r.status == "ok"]
        if not ok:
            return None
        return min(ok, key=lambda r: (-sum(r.best(m) for m in METRICS),
                                      r.ranks.get("rmse", math.inf)))

    def recommendation_lines(self) -> list[str]:
        lines = []
        for site in dict.fromkeys(r.site for r in self.rows):
            rec = self.recommendation(site)
            if rec is None:
                lines.append(f"{site}: no successful runs")
                continue
            lines.append(f"{site}: recommend {rec.approach.value} {rec.algorithm.value}"
                         f" (dominant pollutant {self.dominant.get(site)})")
        return lines


def _rank(rows: list[ComparisonRow]) -> None:
    # rows arrive in approach-then-algorithm order, which breaks ties
    for metric in METRICS:
        scored = [r for r in rows if r.status == "ok" and math.isfinite(getattr(r, metric))]
        sign = -1.0 if HIGHER_IS_BETTER[metric] else 1.0
        ordered = sorted(enumerate(scored), key=lambda ir: (sign * getattr(ir[1], metric), ir[0]))
        for rank, (_, row) in enumerate(ordered, start=1):
            row.ranks[metric] = rank


def compare(records_by_site: Mapping[str, Sequence[ObservationRecord]], table: BreakpointTable,
            config: EvalConfig = EvalConfig(), run_count: int = 10, seed: int = 0,
            approaches: Sequence[Approach] = tuple(Approach),
            algorithms: Sequence[Algorithm] = tuple(Algorithm),
            fitter: FitPredict = fit_predict) -> Comparison:
    """Full site x approach x algorithm grid; failures become marked cells."""
    if not records_by_site:
        raise ValueError("compare() needs at least one site")
    rows, reports, dominant = [], {}, {}
    for site_id, records in records_by_site.items():
        try:
            site = prepare_site(records, table, config)
            dominant[site_id] = site.dominant
        except (NarxAqiError, ValueError) as exc:
            site, err = None, exc
        site_rows = []
        for approach in approaches:
            for algorithm in algorithms:
                row = ComparisonRow(site_id, Approach(approach), Algorithm(algorithm))
                if site is None:
                    row.status = f"error: {err}"
                else:
                    spec = RunSpec(site_id, approach, algorithm, run_count, None, seed)
                    try:
                        rep = evaluate(site, spec, table, config, fitter)
                    except (NarxAqiError, ValueError, ArithmeticError) as exc:
                        row.status = f"error: {exc}"
                    else:
                        reports[(site_id, row.approach, row.algorithm)] = rep
                        agg = rep.aggregate
                        row.rmse, row.mape, row.band_accuracy = (agg[m] for m in METRICS)
                        row.mape_excluded = rep.mape_excluded_count
                site_rows.append(row)
        _rank(site_rows)
        rows.extend(site_rows)
    return Comparison(rows, reports, dominant)


# ---------------------------------------------------------------- output files

def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and not math.isfinite(x)) else repr(float(x))


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def report_csv(comparison: Comparison) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["site", "approach", "algorithm", "rmse", "mape", "band_accuracy",
                 "mape_excluded", "rank_rmse", "rank_mape", "rank_band_accuracy",
                 "best_rmse", "best_mape", "best_band_accuracy", "status"])
    for r in comparison.rows:
        wr.writerow([r.site, r.approach.value, r.algorithm.value, _num(r.rmse), _num(r.mape),
                     _num(r.band_accuracy), r.mape_excluded,
                     *(r.ranks.get(m, "") for m in METRICS),
                     *(int(r.best(m)) for m in METRICS), r.status])
    return buf.getvalue()


def pollutants_csv(comparison: Comparison) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["site", "algorithm", "pollutant", "mape"])
    for (site, approach, algorithm), rep in comparison.reports.items():
        if approach is not Approach.POLLUTANT2AQI:
            continue
        for kind, value in rep.pollutant_mape.items():
            wr.writerow([site, algorithm.value, kind, _num(value)])
    return buf.getvalue()


def report_json(comparison: Comparison, config: Optional[EvalConfig] = None) -> str:
    doc = {
        "config": _jsonable(asdict(config)) if config is not None else None,
        "comparison": [
            {"site": r.site, "approach": r.approach.value, "algorithm": r.algorithm.value,
             "rmse": r.rmse, "mape": r.mape, "band_accuracy": r.band_accuracy,
             "mape_excluded": r.mape_excluded, "ranks": r.ranks, "status": r.status}
            for r in comparison.rows
        ],
        "reports": [rep.to_dict() for rep in comparison.reports.values()],
        "recommendations": comparison.recommendation_lines(),
    }
    return json.dumps(_jsonable(doc), indent=1) + "\n"


def write_reports(comparison: Comparison, out_dir: str | Path,
                  config: Optional[EvalConfig] = None) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {"json": out / "report.json", "csv": out / "report.csv",
             "pollutants": out / "pollutants.csv"}
    atomic_write_text(paths["json"], report_json(comparison, config))
    atomic_write_text(paths["csv"], report_csv(comparison))
    atomic_write_text(paths["pollutants"], pollutants_csv(comparison))
    return paths
