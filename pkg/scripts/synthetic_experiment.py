"""Full comparison grid on a freshly generated synthetic suite.

Generates the sites, runs ``narxaqi compare`` over both approaches and both
algorithms, then prints the aggregate table and per-pollutant MAPE.

    python3 scripts/synthetic_experiment.py --runs 10 --out out/synthetic
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from make_synthetic_sites import make_suite  # noqa: E402
from narxaqi.cli import main as cli_main  # noqa: E402


def _table(path: Path, columns: list[str]) -> None:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    print("  ".join(f"{c:>14}" for c in columns))
    for r in rows:
        cells = []
        for c in columns:
            v = r[c]
            try:
                v = f"{float(v):.3f}"
            except ValueError:
                pass
            cells.append(f"{v:>14}")
        print("  ".join(cells))


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("out/synthetic"))
    p.add_argument("--sites", type=int, default=4)
    p.add_argument("--rows", type=int, default=800)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path)
    args = p.parse_args()

    paths = make_suite(args.out / "data", args.sites, args.rows, args.seed, 0.02)
    argv = ["compare", *map(str, paths), "--runs", str(args.runs), "--seed", str(args.seed),
            "--out", str(args.out / "report")]
    if args.config:
        argv += ["--config", str(args.config)]
    status = cli_main(argv)
    if status != 0:
        return status
    print()
    _table(args.out / "report" / "report.csv",
           ["site", "approach", "algorithm", "rmse", "mape", "band_accuracy"])
    print()
    _table(args.out / "report" / "pollutants.csv", ["site", "algorithm", "pollutant", "mape"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
