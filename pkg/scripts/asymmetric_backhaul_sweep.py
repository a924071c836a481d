"""Sum-rate vs common backhaul C with a weak and a strong relay (0 dB and 10 dB)."""
import argparse
import sys

from _common import print_sweep_table, run_cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=21)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    config = {
        "gains_db": [0, 10], "power_db": 0, "backhaul": [0, 0], "seed": args.seed,
        "schemes": ["hybrid", "cf", "df-ml", "df-sl", "cutset"],
        "sweep": {"parameter": "backhaul_all", "from": 0, "to": 10, "steps": args.steps},
    }
    code, out = run_cli("sweep", config, "asymmetric_backhaul_sweep")
    print_sweep_table(out, "C")
    print(f"wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
