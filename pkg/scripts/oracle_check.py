"""Compare the hybrid scheme with the grid oracle on a few two-relay configs."""
import argparse
import sys

from _common import read_rows, run_cli

CASES = {
    "symmetric": ([10, 10], [2, 2]),
    "asymmetric": ([0, 10], [2, 2]),
    "cf-favored": ([10, 10], [8, 8]),
    "df-favored": ([0, 10], [0.5, 4]),
    "mixed": ([3, 15], [1.5, 4]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid-points", type=int, default=50)
    args = ap.parse_args()
    worst = 0
    print(f"{'case':>12}{'oracle':>10}{'hybrid':>10}{'gap':>11}")
    for name, (gains, backhaul) in CASES.items():
        config = {"gains_db": gains, "power_db": 0, "backhaul": backhaul}
        code, out = run_cli("oracle", config, f"oracle_{name}", ["--grid-points", str(args.grid_points)])
        row = read_rows(out)[0]
        print(f"{name:>12}{float(row['oracle_rate']):10.4f}{float(row['hybrid_rate']):10.4f}"
              f"{float(row['gap']):+11.2e}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
