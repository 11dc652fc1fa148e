"""Write a suite of synthetic LondonAir-style site CSVs with known dynamics.

Even sites pair a nonlinear NO2 process with a linear PM10 one; odd sites
carry only the linear PM10 process, where LR is the true model.

    python3 scripts/make_synthetic_sites.py --out data/synthetic --sites 4
"""

import argparse
from pathlib import Path

from narxaqi.synthetic import synthetic_site, write_site_csv

KINDS = {
    "nonlinear": {"NO2": "narx", "PM10": "linear"},
    "linear": {"PM10": "linear"},
}


def make_suite(out: Path, sites: int, rows: int, seed: int, missing_rate: float) -> list[Path]:
    paths = []
    for i in range(sites):
        kind = "nonlinear" if i % 2 == 0 else "linear"
        site_id = f"{kind}{i}"
        recs = synthetic_site(rows, seed + i, KINDS[kind],
                              meteo=("temperature", "wind_speed", "humidity"),
                              site_id=site_id, missing_rate=missing_rate)
        paths.append(write_site_csv(recs, out / f"{site_id}.csv"))
    return paths


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("data/synthetic"))
    p.add_argument("--sites", type=int, default=4)
    p.add_argument("--rows", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-rate", type=float, default=0.02)
    args = p.parse_args()
    for path in make_suite(args.out, args.sites, args.rows, args.seed, args.missing_rate):
        print(path)


if __name__ == "__main__":
    main()
