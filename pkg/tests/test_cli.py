import csv
import json
import subprocess
import sys
from datetime import datetime, timedelta

import numpy as np
import pytest

from narxaqi import baseline
from narxaqi.cli import main
from narxaqi.config import EXAMPLE, load_config
from narxaqi.synthetic import synthetic_site, write_site_csv

T0 = datetime(2015, 3, 1)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
    return path


def _hours(n):
    return [(T0 + timedelta(hours=t)).isoformat(timespec="minutes") for t in range(n)]


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def site_csv(tmp_path):
    return write_site_csv(synthetic_site(120, 0, {"NO2": "narx", "PM10": "linear"},
                                         meteo=("temperature", "wind_speed")),
                          tmp_path / "site.csv")


# ---------------------------------------------------------------- exit codes

def test_missing_file_exit_2(tmp_path, capsys):
    assert main(["summarize", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, site_csv):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("split:\n  narx: [0.9, 0.9, 0.1]\n")
    assert main(["summarize", str(site_csv), "--config", str(cfg)]) == 2
    assert main(["train", str(site_csv), "--ratios", "1,2", "--out", str(tmp_path)]) == 2


def test_missing_header_exit_2(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert main(["compute-aqi", str(p), "--out", str(tmp_path / "o")]) == 2


def test_divergence_exit_3_with_trace(tmp_path):
    n = 60
    rows = [[ts, "s", repr((-1.0) ** t * 1e308), repr(20.0 + t % 7)]
            for t, ts in enumerate(_hours(n))]
    path = _write(tmp_path / "div.csv", ["timestamp", "site", "temperature", "no2"], rows)
    out = tmp_path / "out"
    res = subprocess.run([sys.executable, "-m", "narxaqi.cli", "train", str(path),
                          "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 3
    assert (out / "trace_AQI.csv").read_text().startswith("epoch,E,grad_norm,mu,val_E")


def test_example_config_loads(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(EXAMPLE)
    cfg = load_config(p)
    assert cfg.hidden == (10,) and cfg.lr_ratios == (0.75, 0.0, 0.15)


# ---------------------------------------------------------------- summarize

def test_summarize_rows_and_missing_rate(tmp_path, capsys):
    n = 50
    rows = [[ts, "s", repr(5.0 + t % 3), "" if t < 7 else repr(30.0 + t)]
            for t, ts in enumerate(_hours(n))]
    path = _write(tmp_path / "m.csv", ["timestamp", "site", "temperature", "no2"], rows)
    assert main(["summarize", str(path), "--out", str(tmp_path / "o")]) == 0
    summary = {r["field"]: r for r in _read_csv(tmp_path / "o" / "summary.csv")}
    assert set(summary) == {"temperature", "NO2"}
    assert float(summary["NO2"]["missing_rate"]) == 14.0
    assert float(summary["temperature"]["missing_rate"]) == 0.0


def test_summarize_empty_file(tmp_path, caplog):
    path = _write(tmp_path / "e.csv", ["timestamp", "site", "no2"], [])
    assert main(["summarize", str(path), "--out", str(tmp_path / "o")]) == 0
    assert _read_csv(tmp_path / "o" / "summary.csv") == []
    assert "no data rows" in caplog.text


# ---------------------------------------------------------------- compute-aqi

def test_single_pollutant_dominates(tmp_path, capsys):
    rows = [[ts, "s", repr(10.0 + t)] for t, ts in enumerate(_hours(10))]
    path = _write(tmp_path / "p.csv", ["timestamp", "site", "pm10"], rows)
    assert main(["compute-aqi", str(path), "--out", str(tmp_path / "o")]) == 0
    rates = _read_csv(tmp_path / "o" / "dominating_rate.csv")
    assert rates == [{"pollutant": "PM10", "dominating_rate": "100.0"}]
    assert "PM10" in capsys.readouterr().out


def test_all_zero_concentrations(tmp_path):
    rows = [[ts, "s", "0", "0", "0"] for ts in _hours(5)]
    path = _write(tmp_path / "z.csv", ["timestamp", "site", "no2", "pm10", "o3"], rows)
    assert main(["compute-aqi", str(path), "--out", str(tmp_path / "o")]) == 0
    out = _read_csv(tmp_path / "o" / "aqi.csv")
    assert len(out) == 5 and all(r["aqi"] == "0" and r["band"] == "Good" for r in out)


def test_mixed_rates_sum_to_100(tmp_path):
    # hand tally: NO2 dominates rows 0-3, PM10 rows 4-8, the tie in row 9 goes to NO2
    no2 = [200, 150, 120, 100, 10, 10, 10, 10, 10, 100]
    pm10 = [10, 10, 10, 10, 200, 180, 160, 140, 120, 100]
    rows = [[ts, "s", repr(a * 1.88), repr(float(b))] for ts, a, b in zip(_hours(10), no2, pm10)]
    path = _write(tmp_path / "x.csv", ["timestamp", "site", "no2", "pm10"], rows)
    assert main(["compute-aqi", str(path), "--out", str(tmp_path / "o")]) == 0
    out = _read_csv(tmp_path / "o" / "aqi.csv")
    rates = {r["pollutant"]: float(r["dominating_rate"])
             for r in _read_csv(tmp_path / "o" / "dominating_rate.csv")}
    assert sum(rates.values()) == pytest.approx(100.0)
    tally = [r["dominant"] for r in out]
    assert rates["NO2"] == 100.0 * tally.count("NO2") / 10
    assert tally[9] == "NO2"


def test_compute_aqi_no_pollutant_columns(tmp_path):
    path = _write(tmp_path / "n.csv", ["timestamp", "site", "temperature"],
                  [[ts, "s", "5"] for ts in _hours(4)])
    assert main(["compute-aqi", str(path), "--out", str(tmp_path / "o")]) == 2


# ---------------------------------------------------------------- train

def test_train_lr_round_trip(tmp_path):
    n = 30
    rng = np.random.default_rng(0)
    temp = rng.normal(size=n)
    pm = np.empty(n)
    pm[0] = 20.0
    for t in range(1, n):
        pm[t] = 0.5 * pm[t - 1] + 3.0 * temp[t] + 15.0
    rows = [[ts, "s", repr(float(a)), repr(float(b))]
            for ts, a, b in zip(_hours(n), temp, pm)]
    path = _write(tmp_path / "lin.csv", ["timestamp", "site", "temperature", "pm10"], rows)
    out = tmp_path / "o"
    assert main(["train", str(path), "--algorithm", "lr", "--approach", "pollutant2aqi",
                 "--out", str(out)]) == 0
    model = baseline.load_model(out / "model_PM10.json")
    X = np.column_stack([temp[1:], pm[:-1]])
    assert np.max(np.abs(baseline.predict_lr(model, X) - pm[1:])) <= 1e-10


def test_train_max_epochs_one(tmp_path, site_csv):
    out = tmp_path / "o"
    assert main(["train", str(site_csv), "--max-epochs", "1", "--out", str(out)]) == 0
    lines = (out / "trace_AQI.csv").read_text().splitlines()
    assert len(lines) - 1 <= 1


def test_train_byte_identical(tmp_path, site_csv):
    for name in ("a", "b"):
        assert main(["train", str(site_csv), "--approach", "pollutant2aqi", "--seed", "3",
                     "--hidden", "4", "--out", str(tmp_path / name)]) == 0
    for f in ("model_NO2.json", "model_PM10.json", "trace_NO2.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_outputs_stay_under_out_dir(tmp_path, site_csv):
    before = set(tmp_path.iterdir())
    assert main(["train", str(site_csv), "--out", str(tmp_path / "o")]) == 0
    assert set(tmp_path.iterdir()) - before == {tmp_path / "o"}


# ---------------------------------------------------------------- compare

@pytest.fixture
def two_sites(tmp_path):
    paths = []
    for i in range(2):
        recs = synthetic_site(150, i, {"NO2": "narx", "PM10": "linear"},
                              meteo=("temperature", "wind_speed"), site_id=f"site{i}")
        paths.append(str(write_site_csv(recs, tmp_path / f"s{i}.csv")))
    return paths


def test_compare_shape_and_determinism(tmp_path, two_sites):
    args = ["compare", *two_sites, "--runs", "2", "--hidden", "4", "--max-epochs", "50"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / "a" / "report.csv"), (tmp_path / "b" / "report.csv")
    assert a.read_bytes() == b.read_bytes()
    assert len(_read_csv(a)) == 2 * 2 * 2
    doc = json.loads((tmp_path / "a" / "report.json").read_text())
    assert len(doc["reports"]) == 8
    assert (tmp_path / "a" / "pollutants.csv").exists()


def test_evaluate_single_cell(tmp_path, site_csv, capsys):
    assert main(["evaluate", str(site_csv), "--algorithm", "lr", "--runs", "2",
                 "--out", str(tmp_path / "o")]) == 0
    rows = _read_csv(tmp_path / "o" / "report.csv")
    assert [(r["approach"], r["algorithm"]) for r in rows] == [("AQIPredict", "LR")]
    assert "recommend AQIPredict LR" in capsys.readouterr().out


def test_linear_pm10_site_recommends_lr(tmp_path, capsys):
    paths = []
    for i in range(2):
        recs = synthetic_site(400, i, {"PM10": "linear"}, meteo=("temperature", "wind_speed"),
                              site_id=f"pm{i}")
        paths.append(str(write_site_csv(recs, tmp_path / f"pm{i}.csv")))
    assert main(["compare", *paths, "--runs", "5", "--out", str(tmp_path / "o")]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if "recommend" in l]
    assert len(lines) == 2
    assert all(" LR (dominant pollutant PM10)" in l for l in lines)


def test_compare_all_sites_fail_exit_3(tmp_path):
    path = _write(tmp_path / "t.csv", ["timestamp", "site", "no2"],
                  [[_hours(1)[0], "s", "5"]])
    assert main(["compare", str(path), "--out", str(tmp_path / "o")]) == 3
