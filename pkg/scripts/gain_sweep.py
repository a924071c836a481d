"""Sum-rate vs the second relay's gain (0 to 20 dB), first relay at 0 dB, C = (2, 2).

DF-SL saturates at C_2 = 2 once the strong relay alone can carry it.
"""
import argparse
import sys

from _common import print_sweep_table, run_cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=11)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    config = {
        "gains_db": [0, 0], "power_db": 0, "backhaul": [2, 2], "seed": args.seed,
        "schemes": ["hybrid", "cf", "df-ml", "df-sl", "cutset"],
        "sweep": {"parameter": "gain_index_2", "from": 0, "to": 20, "steps": args.steps},
    }
    code, out = run_cli("sweep", config, "gain_sweep")
    print_sweep_table(out, "g2 [dB]")
    print(f"wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
