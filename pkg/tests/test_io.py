import numpy as np
import pytest

from orars.core import Dataset
from orars.exceptions import DatasetParseError, InvalidConfigError
from orars.io import DatasetFileSpec, load_config, load_csv, parse_flat, synth_dataset, write_csv


def test_load_csv_with_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,score\n1,2,3\n4,5,6\n")
    ds = load_csv(p)
    assert ds.feature_names == ("a", "b")
    np.testing.assert_array_equal(ds.X, [[1, 2], [4, 5]])
    np.testing.assert_array_equal(ds.y, [3, 6])
    assert ds.name == "d"


def test_load_csv_target_column_and_delimiter(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("9\t1\t2\n8\t3\t4\n")
    ds = load_csv(DatasetFileSpec(str(p), delimiter="\t", target_column=0))
    np.testing.assert_array_equal(ds.y, [9, 8])
    np.testing.assert_array_equal(ds.X, [[1, 2], [3, 4]])


@pytest.mark.parametrize(
    "text, fragment",
    [("a,y\n1,2\n3,\n", "row 3"), ("a,y\n1,2\nx,4\n", "row 3"), ("1,2\n3,4,5\n", "row 2"), ("", "empty")],
)
def test_load_csv_errors_name_row(tmp_path, text, fragment):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DatasetParseError, match=fragment):
        load_csv(p)


def test_csv_round_trip(tmp_path, rng):
    ds = Dataset("r", rng.normal(size=(6, 3)), rng.normal(size=6))
    p = tmp_path / "r.csv"
    write_csv(ds, p)
    back = load_csv(p)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)


def test_synth_determinism_and_kinds():
    a = synth_dataset("linear", n=50, dims=3, seed=2)
    b = synth_dataset("linear", n=50, dims=3, seed=2)
    np.testing.assert_array_equal(a.dataset.X, b.dataset.X)
    np.testing.assert_array_equal(a.dataset.y, b.dataset.y)
    noiseless = synth_dataset("linear", n=20, dims=2, noise=0.0, seed=1)
    np.testing.assert_allclose(noiseless.dataset.X @ noiseless.coef + noiseless.intercept, noiseless.dataset.y)
    assert np.all(synth_dataset("constant", n=5, constant=2.5).dataset.y == 2.5)
    with pytest.raises(InvalidConfigError):
        synth_dataset("spiral")


def test_parse_flat():
    assert parse_flat("a = 1  # c\n\n# x\nb=two\n") == {"a": "1", "b": "two"}
    with pytest.raises(InvalidConfigError):
        parse_flat("novalue\n")


def test_config_layers(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("k = 3\nseed = 5\nlearning_rate = 0.01\n")
    spec = load_config(p, environ={})
    assert (spec.k, spec.seed, spec.learning_rate) == (3, 5, 0.01)
    assert spec.dev_fraction == 0.1
    spec = load_config(p, environ={"ORARS_SEED": "9", "ORARS_K": "4"}, overrides={"k": 7})
    assert (spec.k, spec.seed) == (7, 9)
    sim = load_config(None, kind="simulation", environ={"ORARS_M": "12.5"})
    assert sim.M == 12.5 and sim.C == 1000


@pytest.mark.parametrize("text", ["k = 0\n", "bogus = 1\n", "k = three\n"])
def test_config_errors(tmp_path, text):
    p = tmp_path / "c.conf"
    p.write_text(text)
    with pytest.raises(InvalidConfigError):
        load_config(p, environ={})
