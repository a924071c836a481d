"""Command-line runner: ``relayopt solve|sweep|oracle --config cfg.json``.

Configs are JSON with gains and power in dB and backhaul in bits per channel
use; results are CSV headed by a ``# relayopt-csv v1`` comment line.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .homotopy import HomotopyOptions
from .model import NetworkConfig, RelayOptError, TooManyRelays
from .oracle import GridSpec, GridTooLarge, oracle_search
from .schemes import SCHEMES, solve_df_ml, solve_hybrid, solve_scheme

CSV_HEADER = "# relayopt-csv v1"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_RESOURCE = 0, 2, 3, 4
ORACLE_TOL = 0.02
MAX_ORACLE_RELAYS = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int

    @property
    def values(self):
        return np.linspace(self.start, self.stop, self.steps)

    def gain_index(self):
        """0-based relay index for ``gain_index_k`` sweeps, else ``None``."""
        if self.parameter == "backhaul_all":
            return None
        return int(self.parameter.rsplit("_", 1)[1]) - 1


@dataclass(frozen=True)
class ExperimentConfig:
    gains_db: tuple
    power_db: float
    backhaul: tuple
    schemes: tuple = SCHEMES
    sweep: SweepSpec | None = None
    seed: int = 0
    out: str | None = None

    @property
    def num_relays(self):
        return len(self.gains_db)

    def network(self, sweep_value=None):
        gains = list(self.gains_db)
        backhaul = list(self.backhaul)
        if sweep_value is not None:
            k = self.sweep.gain_index()
            if k is None:
                backhaul = [float(sweep_value)] * len(backhaul)
            else:
                gains[k] = float(sweep_value)
        return NetworkConfig.from_db(gains, backhaul, self.power_db)


def _vector(raw, key):
    val = raw[key]
    if isinstance(val, (int, float)):
        val = [val]
    if not isinstance(val, list) or not val or not all(isinstance(x, (int, float)) for x in val):
        raise ConfigError(f"{key} must be a non-empty list of numbers")
    return tuple(float(x) for x in val)


def _sweep(raw, m):
    if not isinstance(raw, dict):
        raise ConfigError("sweep must be an object")
    try:
        parameter = str(raw["parameter"])
        spec = SweepSpec(parameter, float(raw["from"]), float(raw["to"]), int(raw["steps"]))
    except KeyError as exc:
        raise ConfigError(f"sweep is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sweep block: {exc}") from None
    if spec.steps < 2:
        raise ConfigError("sweep needs at least 2 steps")
    if parameter != "backhaul_all":
        prefix, _, idx = parameter.rpartition("_")
        if prefix != "gain_index" or not idx.isdigit() or not 1 <= int(idx) <= m:
            raise ConfigError(f"sweep parameter must be backhaul_all or gain_index_k with 1 <= k <= {m}, "
                              f"got {parameter!r}")
    elif spec.start < 0 or spec.stop < 0:
        raise ConfigError("backhaul sweep values must be non-negative")
    return spec


def parse_config(raw):
    """Validate a decoded JSON object into an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        gains = _vector(raw, "gains_db")
        backhaul = _vector(raw, "backhaul")
        power = float(raw.get("power_db", 0.0))
    except KeyError as exc:
        raise ConfigError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if len(gains) != len(backhaul):
        raise ConfigError("gains_db and backhaul must have the same length")
    if any(c < 0 for c in backhaul):
        raise ConfigError("backhaul capacities must be non-negative")
    if not all(np.isfinite(gains)) or not np.isfinite(power) or not all(np.isfinite(backhaul)):
        raise ConfigError("non-finite numbers in config")
    schemes = raw.get("schemes", list(SCHEMES))
    if isinstance(schemes, str):
        schemes = [schemes]
    if not isinstance(schemes, list) or not schemes:
        raise ConfigError("schemes must be a non-empty list")
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise ConfigError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
    sweep = _sweep(raw["sweep"], len(gains)) if raw.get("sweep") is not None else None
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a path string")
    exp = ExperimentConfig(gains, power, backhaul, tuple(schemes), sweep, seed, out)
    try:
        exp.network()
        for value in (sweep.start, sweep.stop) if sweep else ():
            exp.network(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return exp


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(raw)


def fmt(x):
    return f"{float(x):.10g}"


class CsvOut:
    """CSV writer that flushes every row so partial output survives a failure."""

    def __init__(self, fh):
        self.fh = fh
        fh.write(CSV_HEADER + "\n")
        self.writer = csv.writer(fh, lineterminator="\n")

    def comment(self, text):
        self.fh.write(f"# {text}\n")

    def row(self, values):
        self.writer.writerow(values)
        self.fh.flush()


def solve_header(m):
    return (["scheme", "sum_rate"]
            + [f"R_{k + 1}" for k in range(m + 1)]
            + [f"beta_{i + 1}" for i in range(m)]
            + [f"C_DF_{i + 1}" for i in range(m)]
            + ["permutation", "iterations", "wall_time"])


def solution_row(cfg, sol, wall):
    """CSV row; per-relay columns and the order use the config's relay numbering."""
    m = cfg.num_relays
    alloc = sol.allocation
    if alloc is None:
        rates, beta, df = [""] * (m + 1), [""] * m, [""] * m
    else:
        rates = [fmt(r) for r in alloc.layer_rates]
        beta, df = [""] * m, [""] * m
        for i, orig in enumerate(cfg.order):
            beta[orig] = fmt(alloc.beta[i])
            df[orig] = fmt(alloc.df_split[i])
    perm = ""
    if sol.permutation is not None and alloc is not None:
        perm = "-".join(str(int(cfg.order[i]) + 1) for i in sol.permutation.order)
    return [sol.scheme, fmt(sol.sum_rate)] + rates + beta + df + [perm, sol.iterations, f"{wall:.3f}"]


def _run_schemes(cfg, schemes, opts):
    """Yield ``(scheme, solution, seconds)`` in request order; DF-ML is shared with hybrid."""
    cache = {}
    for scheme in schemes:
        t0 = time.perf_counter()
        if scheme == "df-ml" or (scheme == "hybrid" and "df-ml" in schemes):
            if "df-ml" not in cache:
                cache["df-ml"] = solve_df_ml(cfg, opts)
        if scheme == "df-ml":
            sol = cache["df-ml"]
        else:
            sol = solve_scheme(cfg, scheme, opts, df_ml=cache.get("df-ml"))
        yield scheme, sol, time.perf_counter() - t0


def cmd_solve(exp, out, opts, args):
    cfg = exp.network()
    w = CsvOut(out)
    w.row(solve_header(cfg.num_relays))
    for _, sol, wall in _run_schemes(cfg, exp.schemes, opts):
        w.row(solution_row(cfg, sol, wall))
    return EXIT_OK


def cmd_sweep(exp, out, opts, args):
    if exp.sweep is None:
        raise ConfigError("sweep command needs a sweep block in the config")
    w = CsvOut(out)
    w.comment(f"sweep {exp.sweep.parameter}")
    w.row(["sweep_value", "scheme", "sum_rate"])
    for value in exp.sweep.values:
        cfg = exp.network(value)
        for scheme, sol, _ in _run_schemes(cfg, exp.schemes, opts):
            w.row([fmt(value), scheme, fmt(sol.sum_rate)])
    return EXIT_OK


def cmd_oracle(exp, out, opts, args):
    cfg = exp.network()
    if cfg.num_relays > MAX_ORACLE_RELAYS:
        raise GridTooLarge(f"oracle supports at most {MAX_ORACLE_RELAYS} relays")
    spec = GridSpec(args.grid_points)
    spec.check(cfg.num_relays)
    oracle = oracle_search(cfg, spec)
    hybrid = solve_hybrid(cfg, opts)
    gap = hybrid.sum_rate - oracle.sum_rate
    w = CsvOut(out)
    w.comment(f"grid_points {spec.points_per_dimension} tolerance {ORACLE_TOL}")
    w.row(["oracle_rate", "hybrid_rate", "gap"])
    w.row([fmt(oracle.sum_rate), fmt(hybrid.sum_rate), fmt(gap)])
    return EXIT_OK if gap >= -ORACLE_TOL else EXIT_SOLVER


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "oracle": cmd_oracle}


def build_parser():
    parser = argparse.ArgumentParser(prog="relayopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "one row per scheme with the full allocation"),
                           ("sweep", "sum-rate of every scheme along the sweep"),
                           ("oracle", "grid oracle against the hybrid scheme")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="CSV output path (default: config 'out', else stdout)")
        p.add_argument("--grid-points", type=int, default=50,
                       help="oracle subdivisions per grid axis (default 50)")
        p.add_argument("--seed", type=int, help="override the config seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        exp = load_config(args.config)
        if args.grid_points < 2:
            raise ConfigError("--grid-points must be at least 2")
    except ConfigError as exc:
        print(f"relayopt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = exp.seed if args.seed is None else args.seed
    exp = replace(exp, seed=seed)
    opts = HomotopyOptions(seed=seed)
    path = args.out or exp.out
    out = open(path, "w") if path else sys.stdout
    try:
        return COMMANDS[args.command](exp, out, opts, args)
    except ConfigError as exc:
        print(f"relayopt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridTooLarge, TooManyRelays) as exc:
        print(f"relayopt: resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (RelayOptError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _solver_failure(exc)
    finally:
        if out is not sys.stdout:
            out.close()


def _solver_failure(exc):
    print(f"relayopt: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
