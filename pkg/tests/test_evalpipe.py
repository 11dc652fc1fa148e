import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from narxaqi import aqi as aqimod
from narxaqi.dataset import lag_name, split
from narxaqi.evalpipe import (Algorithm, Approach, EvalConfig, FitOutcome, RunSpec,
                              UndefinedMetricError, band_accuracy, compare, compose_aqi,
                              evaluate, fit_predict, mape, pollutants_csv, prepare_site,
                              report_csv, report_json, rmse, run_aqipredict, run_pollutant2aqi)
from narxaqi.lm import TrainConfig
from narxaqi.synthetic import records_from_series, simulate_narx, synthetic_site

FAST = EvalConfig(train=TrainConfig(max_epochs=30), hidden=(3,))


def perfect(algorithm, frame, idx, seed, config):
    return FitOutcome(frame.targets[idx.test].copy())


def _site(n=160, seed=0, pollutants=None):
    return synthetic_site(n, seed, pollutants or {"NO2": "narx", "PM10": "linear"},
                          meteo=("temperature", "wind_speed"))


# ---------------------------------------------------------------- metrics

def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5), abs=1e-12)


def test_rmse_fixed_four_vector():
    y, yhat = [1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 1.0, 4.0]
    assert rmse(y, yhat) == pytest.approx(math.sqrt(5 / 4), abs=1e-12)


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=20),
       st.randoms())
def test_rmse_pair_permutation(pairs, rnd):
    y, yhat = map(list, zip(*pairs))
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    y2, yhat2 = map(list, zip(*shuffled))
    assert rmse(y, yhat) == pytest.approx(rmse(y2, yhat2), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("y, yhat", [([1.0], [1.0, 2.0]), ([], [])])
def test_metric_argument_errors(y, yhat):
    for fn in (rmse, mape, band_accuracy):
        with pytest.raises(ValueError):
            fn(y, yhat)


def test_mape_examples():
    assert mape([5.0, 6.0], [5.0, 6.0]) == (0.0, 0)
    value, excluded = mape([100.0, 200.0], [110.0, 180.0])
    assert value == pytest.approx(10.0, abs=1e-12) and excluded == 0
    assert mape([0.0, 100.0], [5.0, 100.0]) == (0.0, 1)


def test_mape_fixed_four_vector():
    value, excluded = mape([100.0, 50.0, 0.0, 20.0], [90.0, 60.0, 3.0, 20.0])
    assert value == pytest.approx((10 + 20 + 0) / 3, abs=1e-12) and excluded == 1


def test_mape_undefined():
    with pytest.raises(UndefinedMetricError):
        mape([0.0, 1e-12], [1.0, 1.0])


def test_band_accuracy_examples():
    assert band_accuracy([10, 60, 150, 250], [10, 60, 150, 250]) == 100.0
    assert band_accuracy([10, 60, 150, 250], [40, 99, 199, 301]) == pytest.approx(75.0, abs=1e-12)
    assert band_accuracy([0, 12, 50, 33], [49, 0, 1, 50.4]) == 100.0


def test_band_accuracy_clamps_predictions():
    assert band_accuracy([0, 500], [-20.0, 730.0]) == 100.0
    assert band_accuracy([50], [50.5]) == 0.0


band_edges = st.sampled_from(list(aqimod.AqiBand))


@given(st.lists(st.tuples(st.integers(0, 500), band_edges, st.floats(0, 1), st.floats(0, 1)),
                min_size=1, max_size=30))
def test_band_accuracy_sub_boundary_invariance(rows):
    y = [r[0] for r in rows]
    before = [b.lo + u * (b.hi - b.lo) for _, b, u, _ in rows]
    after = [b.lo + v * (b.hi - b.lo) for _, b, _, v in rows]
    assert band_accuracy(y, before) == band_accuracy(y, after)


# ---------------------------------------------------------------- AQIPredict

def _constant_site(n=60):
    cols = {"temperature": np.sin(np.arange(n) / 5.0), "NO2": np.full(n, 40.0)}
    return records_from_series(cols, "flat", ("NO2",))


@pytest.mark.filterwarnings("ignore::narxaqi.baseline.RankDeficientWarning")
def test_constant_aqi_series_lr(epa):
    rep = run_aqipredict(_constant_site(), RunSpec("flat", Approach.AQIPREDICT, Algorithm.LR,
                                                   run_count=3), epa)
    assert rep.aggregate["rmse"] == pytest.approx(0.0, abs=1e-9)
    assert rep.aggregate["band_accuracy"] == 100.0


def test_known_aqi_dynamic_narx_band_accuracy(epa):
    s = simulate_narx(501, seed=2, noise=0.01, offset=1.5)
    cols = {"temperature": s.x, "PM10": s.y * 60.0}
    recs = records_from_series(cols, "gen", ("PM10",))
    cfg = EvalConfig(hidden=(3,), meteo=("temperature",))
    rep = run_aqipredict(recs, RunSpec("gen", "AQIPredict", "NARX", run_count=2), epa, cfg)
    assert rep.aggregate["band_accuracy"] >= 90.0


def test_report_deterministic(epa):
    spec = RunSpec("s", Approach.AQIPREDICT, Algorithm.NARX, run_count=3, seed=5)
    a = run_aqipredict(_site(), spec, epa, FAST).to_dict()
    b = run_aqipredict(_site(), spec, epa, FAST).to_dict()
    assert json.dumps(a, default=str) == json.dumps(b, default=str)


def test_aggregate_is_mean_of_runs(epa):
    rep = run_aqipredict(_site(), RunSpec("s", "AQIPredict", "NARX", run_count=4), epa, FAST)
    for m, v in rep.aggregate.items():
        assert abs(v - sum(getattr(r, m) for r in rep.runs) / 4) <= 1e-12
    assert all(0 <= r.band_accuracy <= 100 for r in rep.runs)
    assert [r.seed for r in rep.runs] == [0, 1, 2, 3]


def test_perfect_fitter_aqipredict(epa):
    rep = run_aqipredict(_site(), RunSpec("s", "AQIPredict", "LR", run_count=2), epa,
                         fitter=perfect)
    assert rep.aggregate["rmse"] == 0.0 and rep.aggregate["band_accuracy"] == 100.0


# ---------------------------------------------------------------- Pollutant2AQI

def test_perfect_pollutant_predictors(epa):
    rep = run_pollutant2aqi(_site(), RunSpec("s", "Pollutant2AQI", "NARX", run_count=3), epa,
                            fitter=perfect)
    assert rep.aggregate["rmse"] == 0.0 and rep.aggregate["band_accuracy"] == 100.0
    assert rep.pollutant_mape == {"NO2": 0.0, "PM10": 0.0}


def test_single_pollutant_reduces_to_iaqi(epa):
    recs = _site(pollutants={"PM10": "linear"})
    rep = run_pollutant2aqi(recs, RunSpec("s", "Pollutant2AQI", "LR", run_count=2), epa)
    for run in rep.runs:
        pm = run.pollutant_predictions["PM10"]
        expect = [aqimod.iaqi(aqimod.truncate_concentration(max(v, 0.0), "PM10", epa),
                              "PM10", epa) for v in pm]
        assert run.predicted_aqi.tolist() == expect


def test_composition_matches_independent_recompute(epa):
    from oracles import brute_force_aqi
    rep = run_pollutant2aqi(_site(), RunSpec("s", "Pollutant2AQI", "NARX", run_count=2), epa,
                            FAST)
    for run in rep.runs:
        assert set(run.pollutant_mape) == {"NO2", "PM10"}
        preds = run.pollutant_predictions
        for i, got in enumerate(run.predicted_aqi):
            conc = {k: max(float(v[i]), 0.0) for k, v in preds.items()}
            assert got == brute_force_aqi(conc, epa)[0]
        assert np.array_equal(run.predicted_aqi, compose_aqi(preds, epa))


def test_actual_aqi_comes_from_actual_concentrations(epa):
    site = prepare_site(_site(), epa)
    rep = run_pollutant2aqi(site, RunSpec("s", "Pollutant2AQI", "LR", run_count=1), epa)
    by_ts = {r.timestamp: r for r in site.records}
    for ts, a in zip(rep.runs[0].timestamps, rep.runs[0].actual_aqi):
        rec = by_ts[ts]
        assert a == aqimod.aqi({k: rec.pollutants[k] for k in site.pollutants}, epa).aqi


def test_test_rows_identical_across_algorithms(epa):
    site = prepare_site(_site(), epa)
    for approach in Approach:
        reps = [evaluate(site, RunSpec("s", approach, alg, run_count=3, seed=9), epa, FAST)
                for alg in Algorithm]
        for ra, rb in zip(reps[0].runs, reps[1].runs):
            assert ra.timestamps == rb.timestamps and np.array_equal(ra.actual_aqi, rb.actual_aqi)


@pytest.mark.parametrize("alg", list(Algorithm))
def test_metrics_invariant_to_target_affine_map(alg, epa):
    site = prepare_site(_site(seed=3), epa)
    frame = site.frame("NO2")
    a, b = 3.7, -12.0
    lag = frame.feature_names.index(lag_name("NO2", 1))
    X = frame.inputs.copy()
    X[:, lag] = a * X[:, lag] + b
    scaled = replace(frame, inputs=X, targets=a * frame.targets + b)
    idx = split(len(frame), FAST.ratios(alg), 0)
    p = fit_predict(alg, frame, idx, 0, FAST).predictions
    q = (fit_predict(alg, scaled, idx, 0, FAST).predictions - b) / a
    y = frame.targets[idx.test]
    assert rmse(y, q) == pytest.approx(rmse(y, p), rel=1e-9, abs=1e-9)
    assert mape(y, q)[0] == pytest.approx(mape(y, p)[0], rel=1e-9, abs=1e-9)
    assert band_accuracy(y, q) == band_accuracy(y, p)


def test_frames_shorter_than_two_rows(epa):
    from narxaqi.errors import InsufficientDataError
    with pytest.raises(InsufficientDataError):
        run_aqipredict(_site(n=1), RunSpec("s", "AQIPredict", "LR"), epa)


# ---------------------------------------------------------------- compare

def test_compare_shape_and_flags(epa):
    sites = {"a": _site(seed=1), "b": _site(seed=2)}
    comp = compare(sites, epa, FAST, run_count=2)
    assert len(comp.rows) == 8
    for site in sites:
        rows = comp.site_rows(site)
        for m in ("rmse", "mape", "band_accuracy"):
            assert sum(r.best(m) for r in rows) == 1
            assert sorted(r.ranks[m] for r in rows) == [1, 2, 3, 4]
    lines = report_csv(comp).splitlines()
    assert len(lines) == 9
    assert pollutants_csv(comp).splitlines()[0] == "site,algorithm,pollutant,mape"
    assert json.loads(report_json(comp, FAST))["comparison"][0]["site"] == "a"


@pytest.mark.filterwarnings("ignore::narxaqi.baseline.RankDeficientWarning")
def test_compare_constant_site_lr_first_or_tied(epa):
    comp = compare({"flat": _constant_site(80)}, epa, FAST, run_count=2)
    rows = comp.site_rows("flat")
    for m in ("rmse", "band_accuracy"):
        best = [r for r in rows if r.best(m)][0]
        lr = [r for r in rows if r.algorithm is Algorithm.LR]
        assert any(math.isclose(getattr(r, m), getattr(best, m), abs_tol=1e-9) for r in lr)


def test_compare_ties_follow_approach_order(epa):
    comp = compare({"s": _site()}, epa, run_count=1, fitter=perfect)
    best = [r for r in comp.rows if r.best("rmse")]
    assert (best[0].approach, best[0].algorithm) == (Approach.AQIPREDICT, Algorithm.NARX)


def test_compare_marks_failed_cells(epa):
    def flaky(algorithm, frame, idx, seed, config):
        if algorithm is Algorithm.LR:
            raise ArithmeticError("boom")
        return perfect(algorithm, frame, idx, seed, config)

    comp = compare({"ok": _site(), "empty": _site(n=1)}, epa, run_count=1, fitter=flaky)
    assert len(comp.rows) == 8
    statuses = {(r.site, r.algorithm): r.status for r in comp.rows}
    assert statuses[("ok", Algorithm.NARX)] == "ok"
    assert statuses[("ok", Algorithm.LR)].startswith("error")
    assert all(r.status.startswith("error") for r in comp.site_rows("empty"))
    assert "empty: no successful runs" in comp.recommendation_lines()
    assert ",error" in report_csv(comp)


def test_compare_needs_sites(epa):
    with pytest.raises(ValueError):
        compare({}, epa)
