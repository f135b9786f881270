import json
import subprocess
import sys

import numpy as np
import pytest

from orars.cli import main
from orars.core import Dataset
from orars.io import write_csv

FAST_CONF = "grnn_grid = fixed\nhidden_units = 8\ngrnn_epochs = 10\norars_epochs = 1\nk = 3\n"


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture
def fast_conf(tmp_path):
    p = tmp_path / "fast.conf"
    p.write_text(FAST_CONF)
    return str(p)


@pytest.fixture
def data_csv(tmp_path):
    r = np.random.default_rng(0)
    X = r.uniform(0, 1, size=(40, 2))
    p = tmp_path / "train.csv"
    write_csv(Dataset("t", X, X[:, 0] + X[:, 1]), p)
    return str(p)


def test_simulate_outputs_and_determinism(tmp_path):
    args = ["simulate", "--M", "20", "--C", "300", "--repeats", "3", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = files(tmp_path / "a")
    assert set(a) == {"simulation.csv", "summary.json", "config.json"}
    assert a == files(tmp_path / "b")
    summary = json.loads(a["summary.json"])
    assert summary["analytic"]["mae_reg_analytic"] == 10.0
    assert len(a["simulation.csv"].decode().splitlines()) == 4


def test_simulate_out_of_domain_side_values(tmp_path):
    assert main(["simulate", "--M", "70", "--C", "100", "--repeats", "2", "--seed", "0",
                 "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["analytic"]["xi_analytic"] is None


def test_missing_flag_exits_1(tmp_path, capsys):
    assert main(["simulate", "--C", "100", "--out", str(tmp_path)]) == 1
    assert "--M" in capsys.readouterr().err


def test_invalid_value_exits_1(tmp_path):
    assert main(["simulate", "--M", "5", "--C", "1", "--seed", "0", "--out", str(tmp_path)]) == 1


def test_seed_drawn_when_absent(tmp_path, capsys):
    assert main(["simulate", "--M", "5", "--C", "50", "--repeats", "1", "--out", str(tmp_path)]) == 0
    assert "using seed" in capsys.readouterr().err
    assert "seed" in json.loads((tmp_path / "config.json").read_text())


def test_grid_command(tmp_path):
    out = tmp_path / "g"
    assert main(["grid", "--C-values", "100", "200", "--M-values", "1", "5", "--repeats", "2",
                 "--seed", "1", "--out", str(out)]) == 0
    assert (out / "gain_grid.csv").read_text().splitlines()[0] == "C\\M,1,5"
    assert json.loads((out / "gain_grid.json").read_text())["seed"] == 1


def test_verify_analytic(tmp_path):
    assert main(["verify-analytic", "--M", "10", "50", "60", "--trials", "200000", "--C", "500",
                 "--repeats", "2", "--tolerance", "0.01", "--seed", "0", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "verify.csv").read_text()
    assert text.count("\n") == 4
    assert "out-of-domain" in text


def test_verify_analytic_fails_on_tight_tolerance(tmp_path):
    assert main(["verify-analytic", "--M", "25", "--trials", "1000", "--C", "100", "--repeats", "1",
                 "--tolerance", "1e-9", "--seed", "0", "--out", str(tmp_path)]) == 2


def test_compare_synth_deterministic(tmp_path, fast_conf):
    base = ["compare", "--synth", "monotone_noisy", "--n", "40", "--seed", "3", "--config", fast_conf]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b")]) == 0
    a = files(tmp_path / "a")
    assert {"comparison.txt", "comparison.csv", "comparison.json", "folds.csv", "config.json"} <= set(a)
    assert a == files(tmp_path / "b")
    report = json.loads(a["comparison.json"])
    assert set(report["methods"]) == {"grnn", "sorars", "orars"}


def test_compare_single_method(tmp_path, fast_conf, data_csv):
    assert main(["compare", "--data", data_csv, "--method", "orars", "--seed", "0", "--config", fast_conf,
                 "--out", str(tmp_path)]) == 0
    assert set(json.loads((tmp_path / "comparison.json").read_text())["methods"]) == {"orars"}


def test_compare_needs_data(tmp_path):
    assert main(["compare", "--seed", "0", "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("method", ["grnn", "sorars", "orars"])
def test_train_then_predict(tmp_path, fast_conf, data_csv, method):
    ck = tmp_path / "m.npz"
    assert main(["train", "--data", data_csv, "--method", method, "--seed", "2", "--config", fast_conf,
                 "--checkpoint", str(ck), "--out", str(tmp_path / "t")]) == 0
    assert main(["predict", "--data", data_csv, "--checkpoint", str(ck), "--out", str(tmp_path / "p")]) == 0
    trained = (tmp_path / "t" / "train_predictions.csv").read_bytes()
    predicted = (tmp_path / "p" / "predictions.csv").read_bytes()
    assert trained == predicted


def test_train_deterministic(tmp_path, fast_conf, data_csv):
    for name in ("a", "b"):
        assert main(["train", "--data", data_csv, "--method", "grnn", "--seed", "2", "--config", fast_conf,
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "model.npz").read_bytes() == (tmp_path / "b" / "model.npz").read_bytes()


def test_predict_dimension_mismatch(tmp_path, fast_conf, data_csv):
    ck = tmp_path / "m.npz"
    assert main(["train", "--data", data_csv, "--method", "grnn", "--seed", "0", "--config", fast_conf,
                 "--checkpoint", str(ck), "--out", str(tmp_path / "t")]) == 0
    other = tmp_path / "three.csv"
    write_csv(Dataset("o", np.ones((3, 3)), [1.0, 2.0, 3.0]), other)
    assert main(["predict", "--data", str(other), "--checkpoint", str(ck), "--out", str(tmp_path / "p")]) == 1


def test_bad_data_file_exits_1(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nx,3\n")
    assert main(["compare", "--data", str(bad), "--seed", "0", "--out", str(tmp_path / "o")]) == 1


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "orars.cli", "simulate", "--M", "5", "--C", "50",
                           "--repeats", "1", "--seed", "0", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "MAE_gain" in proc.stdout
