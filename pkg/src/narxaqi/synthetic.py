"""Synthetic site generators with known dynamics (ground truth for tests)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import METEO_FEATURES, CsvSchema, NormalizationParams, ObservationRecord
from .narx import NarxNetwork, NarxTopology, forward_batch

START = datetime(2015, 1, 1)


def meteo_series(n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Plausible hourly meteorology with a diurnal cycle."""
    t = np.arange(n)
    day = np.sin(2 * np.pi * t / 24.0)
    return {
        "temperature": 8.0 + 4.0 * day + rng.normal(0, 1.0, n),
        "wind_speed": np.abs(1.5 + 0.5 * np.cos(2 * np.pi * t / 50.0) + rng.normal(0, 0.4, n)),
        "wind_direction": (200.0 + 40.0 * rng.standard_normal(n)) % 360.0,
        "rainfall": np.where(rng.random(n) < 0.1, rng.integers(1, 5, n), 0).astype(float),
        "humidity": np.clip(75.0 - 10.0 * day + rng.normal(0, 5.0, n), 0, 100),
        "solar_radiation": np.clip(300.0 * day, 0, None) + rng.random(n),
        "pressure": 1012.0 + np.cumsum(rng.normal(0, 0.2, n)),
    }


def generator_net(seed: int = 7, hidden: int = 3, offset: float = 0.0) -> NarxNetwork:
    """A fixed 2-input (exogenous, lagged) x ``hidden`` x 1 tanh NARX.

    Weights on the lagged input are kept small so the recursion is a
    contraction and the simulated series stays bounded; ``offset`` is the
    output bias.
    """
    rng = np.random.default_rng(seed)
    topo = NarxTopology(2, (hidden,))
    W1 = np.column_stack([rng.uniform(0.8, 1.5, hidden) * rng.choice([-1, 1], hidden),
                          rng.uniform(-0.6, 0.6, hidden)])
    b1 = rng.uniform(-0.3, 0.3, hidden)
    W2 = rng.uniform(0.3, 0.6, hidden) * np.sign(W1[:, 0])
    b2 = np.array([offset])
    w = np.concatenate([W1.ravel(), b1, W2, b2])
    return NarxNetwork(topo, w, NormalizationParams.identity(2))


@dataclass
class NarxSeries:
    x: np.ndarray  # exogenous input
    y: np.ndarray  # process output (noise included)
    net: NarxNetwork
    noise: float


def simulate_narx(n: int, seed: int = 0, noise: float = 0.01, hidden: int = 3,
                  offset: float = 0.0, net: Optional[NarxNetwork] = None) -> NarxSeries:
    """y(t) = f(x(t), y(t-1)) + N(0, noise^2) for a known network f."""
    rng = np.random.default_rng(seed)
    net = net or generator_net(hidden=hidden, offset=offset)
    x = np.sin(2 * np.pi * np.arange(n) / 24.0) + 0.5 * rng.standard_normal(n)
    y = np.empty(n)
    prev = offset
    for t in range(n):
        out, _ = forward_batch(net.topology, net.w, np.array([[x[t], prev]]))
        y[t] = out[0] + noise * rng.standard_normal()
        prev = y[t]
    return NarxSeries(x, y, net, noise)


def records_from_series(columns: Mapping[str, Sequence[float]], site_id: str = "synthetic",
                        pollutants: Sequence[str] = (), start: datetime = START,
                        drop: Sequence[int] = ()) -> list[ObservationRecord]:
    """Hourly records; names in ``pollutants`` go to the pollutant map."""
    n = len(next(iter(columns.values())))
    dropped = set(drop)
    out = []
    for t in range(n):
        if t in dropped:
            continue
        meteo = {k: float(v[t]) for k, v in columns.items() if k not in pollutants}
        polls = {k: float(columns[k][t]) for k in pollutants}
        out.append(ObservationRecord(start + timedelta(hours=t), site_id, meteo, polls))
    return out


def synthetic_site(n: int, seed: int, pollutants: Mapping[str, str] | Sequence[str] = ("NO2",),
                   meteo: Sequence[str] = ("temperature", "wind_speed", "wind_direction"),
                   site_id: str = "synthetic", missing_rate: float = 0.0,
                   noise: float = 0.05) -> list[ObservationRecord]:
    """A site whose pollutants follow known dynamics driven by meteorology.

    ``pollutants`` may map kind -> "narx" | "linear"; linear kinds follow an
    AR(1)-plus-exogenous process (the linear model is the true process).
    """
    rng = np.random.default_rng(seed)
    if not isinstance(pollutants, Mapping):
        pollutants = {p: "narx" for p in pollutants}
    met = meteo_series(n, rng)
    met = {k: met[k] for k in meteo}
    temp = (met["temperature"] - 8.0) / 4.0 if "temperature" in met else rng.standard_normal(n)
    wind = met.get("wind_speed", np.full(n, 1.5))
    scale = {"NO2": 40.0, "PM10": 30.0, "O3": 60.0, "PM2.5": 15.0, "CO": 400.0, "SO2": 10.0}
    cols: dict[str, np.ndarray] = dict(met)
    for i, (kind, dyn) in enumerate(pollutants.items()):
        c = np.empty(n)
        prev = 0.5
        gen = generator_net(seed=11 + i)
        for t in range(n):
            if dyn == "linear":
                v = 0.6 * prev + 0.25 * temp[t] - 0.1 * wind[t] + 0.5
            else:
                out, _ = forward_batch(gen.topology, gen.w, np.array([[temp[t], prev - 1.0]]))
                v = 1.0 + out[0]
            v += noise * rng.standard_normal()
            prev = v
            c[t] = v
        cols[kind] = np.clip(c, 0.0, None) * scale.get(kind, 20.0)
    records = records_from_series(cols, site_id, tuple(pollutants))
    if missing_rate > 0:
        keep = rng.random(len(records)) >= missing_rate
        field = next(iter(pollutants))
        records = [r if k else ObservationRecord(r.timestamp, r.site_id, r.meteo,
                                                 {**r.pollutants, field: None})
                   for r, k in zip(records, keep)]
    return records


def write_site_csv(records: Sequence[ObservationRecord], path: str | Path,
                   schema: CsvSchema = CsvSchema()) -> Path:
    """Write records in the default LondonAir-style column layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meteo = [f for f in METEO_FEATURES if any(f in r.meteo for r in records)]
    polls = [k for k in schema.pollutants if any(k in r.pollutants for r in records)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([schema.timestamp, schema.site, *(schema.meteo[f] for f in meteo),
                     *(schema.pollutants[k] for k in polls)])
        for r in records:
            vals = [r.meteo.get(f) for f in meteo] + [r.pollutants.get(k) for k in polls]
            wr.writerow([r.timestamp.isoformat(timespec="minutes"), r.site_id,
                         *("" if v is None else repr(v) for v in vals)])
    return path
