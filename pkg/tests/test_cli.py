import csv

import numpy as np
import pytest

from fairfed.cli import ExperimentPlan, main, read_config, run_rows, summarize, summary_path
from fairfed.core import InvalidConfig
from fairfed.datagen import CsvSchema, load_csv


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


ARGS = ["--alpha", "0.05,0.3", "--eps", "2", "--n", "600", "--reps", "2", "--seed", "3",
        "--test-n", "500", "--h", "0.2"]


def test_sweep_deterministic(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["cdp", *ARGS, "--out", str(out1)]) == 0
    assert main(["cdp", *ARGS, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    rows = _read(out1)
    assert list(rows[0]) == ["mode", "S", "N", "eps", "delta", "alpha", "rep", "seed",
                             "error", "empirical_dd", "tau", "flags"]
    assert len(rows) == 4 and float(rows[0]["delta"]) == pytest.approx(300.0**-2)


def test_summary_means_match_rows(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["sweep", "--mode", "cdp,fdp", *ARGS, "--out", str(out)]) == 0
    rows, summ = _read(out), _read(summary_path(out))
    assert len(summ) == 4
    for s in summ:
        sel = [float(r["error"]) for r in rows if r["mode"] == s["mode"] and r["alpha"] == s["alpha"]]
        assert float(s["error_mean"]) == pytest.approx(np.mean(sel), abs=1e-12)
        assert float(s["error_lo"]) <= float(s["error_mean"]) <= float(s["error_hi"])


def test_parallel_matches_serial(monkeypatch):
    plan = ExperimentPlan(modes=("fdp",), alphas=(0.1,), eps=(1.0,), n=(400,), sites=(2,),
                          reps=2, seed=1, test_n=300, fed={"h": 0.2})
    serial = run_rows(plan)
    monkeypatch.setenv("FAIRFED_THREADS", "2")
    assert run_rows(plan) == serial
    assert summarize(serial)[0]["reps"] == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nalpha = 0.2, 0.4\nreps = 1\nn = 500\n"
                   "[privacy]\neps = 1.5\n[federation]\nrho_star = 0.05\nh = 0.2\ncross_fit = no\n")
    settings = read_config(cfg)
    assert settings["alphas"] == (0.2, 0.4) and settings["fed"]["cross_fit"] is False
    out = tmp_path / "o.csv"
    assert main(["fdp", "--config", str(cfg), "--alpha", "0.3", "--test-n", "300",
                 "--out", str(out)]) == 0
    rows = _read(out)
    assert {r["alpha"] for r in rows} == {"0.3"} and rows[0]["eps"] == "1.5"


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[federation]\nnot_a_key = 1\n")
    assert main(["cdp", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["cdp", "--sites", "2", "--out", str(tmp_path / "x.csv")]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["nope"])


def test_plan_validation():
    with pytest.raises(InvalidConfig):
        ExperimentPlan(reps=0).validate()
    with pytest.raises(InvalidConfig):
        ExperimentPlan(eps=(-1.0,)).validate()


def test_gen_and_tabular_run(tmp_path):
    data, schema = tmp_path / "d.csv", tmp_path / "d.ini"
    assert main(["gen", "--n", "800", "--seed", "2", "--out", str(data), "--schema", str(schema)]) == 0
    assert len(load_csv(data, CsvSchema.default(2))) == 800
    out = tmp_path / "t.csv"
    assert main(["cdp", "--data", str(data), "--schema", str(schema), "--n", "600", "--alpha", "0.2",
                 "--h", "0.2", "--out", str(out)]) == 0
    assert len(_read(out)) == 1


def test_oracle_command(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["oracle", "--alpha", "0.01,0.5", "--mc-n", "100000", "--out", str(out)]) == 0
    rows = _read(out)
    assert len(rows) == 2 and float(rows[1]["tau_star"]) == 0.0
    assert float(rows[0]["bayes_risk"]) == pytest.approx(0.1383, abs=0.004)
