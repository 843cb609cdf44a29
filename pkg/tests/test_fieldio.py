"""Field containers and their file layouts."""

import csv

import numpy as np
import pytest

from spdelab.fieldio import Field, read_binary, write_binary, write_csv, write_json


def _field(n=3, d=1):
    rng = np.random.default_rng(0)
    axes = tuple(np.linspace(-1, 1, 5) for _ in range(d))
    times = np.linspace(0, 1, 4)
    vals = rng.normal(size=(n, 4) + (5,) * d)
    return Field(times, axes, vals, seed=2 ** 63 + 5)


@pytest.mark.parametrize("d", [1, 2])
def test_binary_round_trip(tmp_path, d):
    f = _field(d=d)
    write_binary(tmp_path / "f.bin", f)
    g = read_binary(tmp_path / "f.bin")
    assert g.seed == f.seed
    assert np.array_equal(g.times, f.times)
    assert all(np.array_equal(a, b) for a, b in zip(g.axes, f.axes))
    assert np.array_equal(g.values, f.values)


def test_binary_single_sample_gets_sample_axis(tmp_path):
    f = _field()
    single = Field(f.times, f.axes, f.values[0])
    assert single.n_samples == 1
    write_binary(tmp_path / "s.bin", single)
    assert read_binary(tmp_path / "s.bin").values.shape == (1, 4, 5)


def test_binary_rejects_foreign_file(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ValueError):
        read_binary(tmp_path / "x.bin")


def test_csv_round_trip(tmp_path):
    f = _field()
    write_csv(tmp_path / "f.csv", f, sample=1)
    with open(tmp_path / "f.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "value"]
    body = np.array(rows[1:], dtype=float)
    assert body.shape == (20, 3)
    assert np.array_equal(body[:, 2].reshape(4, 5), f.values[1])
    assert np.array_equal(body[::5, 0], f.times)


def test_restrict():
    f = _field(d=2)
    g = f.restrict(0.5)
    assert [len(a) for a in g.axes] == [3, 3]
    assert np.array_equal(g.values, f.values[:, :, 1:4, 1:4])
    assert g.grid_shape == (4, 3, 3)


def test_json_handles_numpy(tmp_path):
    write_json(tmp_path / "r.json", {"a": np.arange(3), "b": np.float64(0.5), "c": np.bool_(True)})
    assert (tmp_path / "r.json").read_text().count("\n") > 1
