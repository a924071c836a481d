import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from relayopt import cli
from relayopt.model import RelayOptError

FIG = {"gains_db": [10, 10], "power_db": 0, "backhaul": [2, 2]}


def write_config(tmp_path, name="cfg.json", **fields):
    path = tmp_path / name
    path.write_text(json.dumps(fields))
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_csv(text):
    lines = text.splitlines()
    assert lines[0] == "# relayopt-csv v1"
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


# -- solve -------------------------------------------------------------------

def test_solve_cf_row(tmp_path, capsys):
    path = write_config(tmp_path, **FIG, schemes=["cf"])
    code, out, _ = run(["solve", "--config", path], capsys)
    assert code == 0
    rows = parse_csv(out)
    assert len(rows) == 1
    row = rows[0]
    assert row["scheme"] == "cf"
    assert float(row["sum_rate"]) == pytest.approx(np.log2(7.32007), abs=1e-6)
    assert float(row["beta_1"]) == pytest.approx(3 / 14, abs=1e-9)
    assert float(row["C_DF_1"]) == 0.0
    assert float(row["R_3"]) == pytest.approx(float(row["sum_rate"]))
    assert row["permutation"] == "1-2"
    assert list(row)[:2] == ["scheme", "sum_rate"] and list(row)[-3:] == ["permutation", "iterations", "wall_time"]


@pytest.mark.parametrize("scheme,rate", [("cutset", 3.0), ("df-sl", 2.0)])
def test_solve_closed_forms(tmp_path, capsys, scheme, rate):
    path = write_config(tmp_path, gains_db=[0, 10], power_db=0, backhaul=[2, 2], schemes=[scheme])
    code, out, _ = run(["solve", "--config", path], capsys)
    assert code == 0
    assert float(parse_csv(out)[0]["sum_rate"]) == pytest.approx(rate, abs=1e-9)


def test_solve_reports_in_config_relay_numbering(tmp_path, capsys):
    # relay 1 is the stronger one here, so sorted order differs from config order
    path = write_config(tmp_path, gains_db=[10, 0], power_db=0, backhaul=[2, 3], schemes=["df-sl", "cf"])
    code, out, _ = run(["solve", "--config", path], capsys)
    rows = {r["scheme"]: r for r in parse_csv(out)}
    assert float(rows["df-sl"]["C_DF_1"]) == 2.0 and float(rows["df-sl"]["C_DF_2"]) == 3.0
    assert rows["cf"]["permutation"] in ("1-2", "2-1")


def test_solve_all_schemes_below_cutset_and_stable(tmp_path, capsys):
    path = write_config(tmp_path, gains_db=[10], power_db=0, backhaul=[1.5])
    outs = []
    for _ in range(2):
        code, out, _ = run(["solve", "--config", path], capsys)
        assert code == 0
        outs.append(out)
    rows = parse_csv(outs[0])
    assert [r["scheme"] for r in rows] == list(cli.SCHEMES)
    cut = float(rows[-1]["sum_rate"])
    assert all(float(r["sum_rate"]) <= cut + 1e-6 for r in rows)
    strip = lambda text: [ln.rsplit(",", 1)[0] for ln in text.splitlines()]
    assert strip(outs[0]) == strip(outs[1])


def test_out_path_and_seed_override(tmp_path, capsys):
    out_file = tmp_path / "res.csv"
    path = write_config(tmp_path, **FIG, schemes=["cf"], seed=3, out=str(out_file))
    code, out, _ = run(["solve", "--config", path, "--seed", "5"], capsys)
    assert code == 0 and out == ""
    assert out_file.read_text().startswith("# relayopt-csv v1\n")
    other = tmp_path / "other.csv"
    code, _, _ = run(["solve", "--config", path, "--out", str(other)], capsys)
    assert code == 0 and other.exists()


# -- sweep -------------------------------------------------------------------

def test_sweep_rows_and_byte_stability(tmp_path, capsys):
    cfg = dict(FIG, schemes=["cf", "df-sl", "cutset"],
               sweep={"parameter": "backhaul_all", "from": 0, "to": 4, "steps": 5})
    path = write_config(tmp_path, **cfg)
    code, out1, _ = run(["sweep", "--config", path], capsys)
    code2, out2, _ = run(["sweep", "--config", path], capsys)
    assert code == code2 == 0
    assert out1 == out2
    assert out1.splitlines()[1] == "# sweep backhaul_all"
    rows = parse_csv(out1)
    assert len(rows) == 15
    assert [r["sweep_value"] for r in rows[::3]] == ["0", "1", "2", "3", "4"]
    for k in range(0, 15, 3):
        cut = float(rows[k + 2]["sum_rate"])
        assert float(rows[k]["sum_rate"]) <= cut + 1e-6
        assert float(rows[k + 1]["sum_rate"]) <= cut + 1e-6


def test_gain_sweep_df_sl_plateau(tmp_path, capsys):
    cfg = dict(FIG, gains_db=[0, 10], schemes=["df-sl"],
               sweep={"parameter": "gain_index_2", "from": 0, "to": 20, "steps": 5})
    code, out, _ = run(["sweep", "--config", write_config(tmp_path, **cfg)], capsys)
    assert code == 0
    rates = [float(r["sum_rate"]) for r in parse_csv(out)]
    assert rates[-1] == pytest.approx(2.0) and rates[-2] == pytest.approx(2.0)


def test_sweep_needs_sweep_block(tmp_path, capsys):
    code, _, err = run(["sweep", "--config", write_config(tmp_path, **FIG)], capsys)
    assert code == 2 and "sweep" in err


# -- oracle ------------------------------------------------------------------

def test_oracle_single_relay(tmp_path, capsys):
    path = write_config(tmp_path, gains_db=[10], power_db=0, backhaul=[2])
    code, out, _ = run(["oracle", "--config", path, "--grid-points", "100"], capsys)
    assert code == 0
    row = parse_csv(out)[0]
    assert float(row["gap"]) >= -0.01
    assert "# grid_points 100 tolerance 0.02" in out


def test_oracle_zero_backhaul(tmp_path, capsys):
    path = write_config(tmp_path, gains_db=[10, 10], power_db=0, backhaul=[0, 0])
    code, out, _ = run(["oracle", "--config", path, "--grid-points", "10"], capsys)
    row = parse_csv(out)[0]
    assert code == 0
    assert float(row["oracle_rate"]) == 0 and float(row["hybrid_rate"]) == pytest.approx(0, abs=1e-9)
    assert float(row["gap"]) == pytest.approx(0, abs=1e-9)


def test_oracle_symmetric_pair(tmp_path, capsys):
    code, out, _ = run(["oracle", "--config", write_config(tmp_path, **FIG)], capsys)
    assert code == 0
    assert float(parse_csv(out)[0]["gap"]) >= -0.02


def test_oracle_gap_failure_is_solver_exit(tmp_path, capsys, monkeypatch):
    real = cli.oracle_search

    def inflated(cfg, spec):
        sol = real(cfg, spec)
        return type(sol)("oracle", sol.sum_rate + 1.0)

    monkeypatch.setattr(cli, "oracle_search", inflated)
    path = write_config(tmp_path, gains_db=[10], power_db=0, backhaul=[2])
    code, out, _ = run(["oracle", "--config", path, "--grid-points", "10"], capsys)
    assert code == 3
    assert float(parse_csv(out)[0]["gap"]) < -0.02


# -- exit codes ----------------------------------------------------------------

@pytest.mark.parametrize("fields", [
    {"gains_db": [10, 10], "backhaul": [2]},
    {"gains_db": [10], "backhaul": [-1]},
    {"backhaul": [2]},
    {"gains_db": [10], "backhaul": [2], "schemes": ["amplify"]},
    {"gains_db": [10], "backhaul": [2], "sweep": {"parameter": "gain_index_3", "from": 0, "to": 1, "steps": 3}},
    {"gains_db": [10], "backhaul": [2], "sweep": {"parameter": "backhaul_all", "from": 0, "to": 1, "steps": 1}},
    {"gains_db": [10], "backhaul": [2], "sweep": {"parameter": "backhaul_all", "from": -1, "to": 1, "steps": 3}},
    {"gains_db": [10], "backhaul": [2], "seed": "x"},
    {"gains_db": ["a"], "backhaul": [2]},
])
def test_config_errors_exit_2(tmp_path, capsys, fields):
    code, out, err = run(["solve", "--config", write_config(tmp_path, **fields)], capsys)
    assert code == 2 and "config error" in err


def test_unreadable_and_malformed_configs(tmp_path, capsys):
    assert run(["solve", "--config", str(tmp_path / "missing.json")], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["solve", "--config", str(bad)], capsys)[0] == 2
    assert run(["oracle", "--config", write_config(tmp_path, **FIG), "--grid-points", "1"], capsys)[0] == 2


def test_resource_guards_exit_4(tmp_path, capsys):
    path = write_config(tmp_path, **FIG)
    code, _, err = run(["oracle", "--config", path, "--grid-points", "200"], capsys)
    assert code == 4 and "resource guard" in err
    big = write_config(tmp_path, "big.json", gains_db=list(range(9)), backhaul=[1] * 9, schemes=["hybrid"])
    assert run(["solve", "--config", big], capsys)[0] == 4
    four = write_config(tmp_path, "four.json", gains_db=[1, 2, 3, 4], backhaul=[1] * 4)
    assert run(["oracle", "--config", four, "--grid-points", "2"], capsys)[0] == 4


def test_solver_failure_exit_3_keeps_partial_rows(tmp_path, capsys, monkeypatch):
    real = cli.solve_scheme

    def flaky(cfg, scheme, *args, **kwargs):
        if scheme == "cf":
            raise RelayOptError("boom")
        return real(cfg, scheme, *args, **kwargs)

    monkeypatch.setattr(cli, "solve_scheme", flaky)
    out_file = tmp_path / "partial.csv"
    path = write_config(tmp_path, **FIG, schemes=["cutset", "cf"])
    code, _, err = run(["solve", "--config", path, "--out", str(out_file)], capsys)
    assert code == 3 and "boom" in err
    rows = parse_csv(out_file.read_text())
    assert [r["scheme"] for r in rows] == ["cutset"]


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path, **FIG, schemes=["cutset"])
    res = subprocess.run([sys.executable, "-m", "relayopt.cli", "solve", "--config", path],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("# relayopt-csv v1")
