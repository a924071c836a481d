"""Shared helpers: write a JSON config, run the CLI on it, print a rate table."""
import csv
import io
import json
import sys
import tempfile
from collections import defaultdict
from pathlib import Path

from relayopt import cli

RESULTS = Path(__file__).resolve().parent.parent / "results"


def run_cli(command, config, name, extra=()):
    RESULTS.mkdir(exist_ok=True)
    out = RESULTS / f"{name}.csv"
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / f"{name}.json"
        path.write_text(json.dumps(config, indent=2))
        code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    if code != 0:
        print(f"{name}: relayopt exited with {code}", file=sys.stderr)
    return code, out


def read_rows(path):
    body = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def print_sweep_table(path, label):
    table = defaultdict(dict)
    schemes = []
    for row in read_rows(path):
        table[row["sweep_value"]][row["scheme"]] = float(row["sum_rate"])
        if row["scheme"] not in schemes:
            schemes.append(row["scheme"])
    print(f"{label:>10}" + "".join(f"{s:>10}" for s in schemes))
    for value, rates in table.items():
        print(f"{value:>10}" + "".join(f"{rates[s]:10.4f}" for s in schemes))
