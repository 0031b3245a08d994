import math

import numpy as np
import pytest

from fairfed.core import Dataset, RngStream
from fairfed.datagen import (
    CsvSchema,
    DegenerateRange,
    ParseError,
    SizeMismatch,
    SyntheticSpec,
    UnknownColumn,
    derive_ranges,
    gen_synthetic,
    load_csv,
    load_schema,
    partition_sites,
    write_csv,
    write_schema,
)


def test_generator_moments(spec):
    data = gen_synthetic(spec, 100_000, RngStream(0))
    assert data.a.mean() == pytest.approx(0.3, abs=0.005)
    assert data.x[data.a == 1, 0].mean() == pytest.approx(4 / 6, abs=0.005)
    assert data.x[data.a == 0, 0].mean() == pytest.approx(4.5 / 6.5, abs=0.005)
    assert spec.eta([[0.5, 0.5]], [1])[0] == pytest.approx(0.5 + math.atan(-0.3) / math.pi)
    assert spec.eta([[0.5, 0.5]], [1])[0] == pytest.approx(0.40723, abs=1e-5)


def test_generator_reproducible(spec):
    a = spec.sample(50, RngStream(9))
    b = spec.sample(50, RngStream(9))
    for f in ("x", "a", "y"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_partition_sizes(synth):
    data = synth(7200)
    assert [s.N for s in partition_sites(data, 3, rng=RngStream(0))] == [2400] * 3
    assert [s.N for s in partition_sites(synth(7), 3)] == [3, 2, 2]
    one = partition_sites(data, 1)[0].data
    np.testing.assert_array_equal(one.x, data.x)
    with pytest.raises(SizeMismatch):
        partition_sites(synth(7), 2, sizes=[3, 3])


def test_partition_preserves_multiset(synth):
    data = synth(101)
    parts = partition_sites(data, 4, sizes=[10, 41, 0, 50], rng=RngStream(2))
    merged = Dataset.concat([p.data for p in parts])
    key = lambda d: sorted(map(tuple, np.column_stack([d.x, d.a, d.y]).tolist()))
    assert key(merged) == key(data)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_rescales(tmp_path):
    f = _write(tmp_path / "d.csv", "age,sex,y\n0,M,1\n100,F,0\n25,F,1\n")
    schema = CsvSchema(("age",), ((0.0, 100.0),), "sex", "F")
    data = load_csv(f, schema)
    assert data.x[:, 0].tolist() == [0.0, 1.0, 0.25]
    assert data.a.tolist() == [0, 1, 1] and data.y.tolist() == [1, 0, 1]
    with pytest.raises(UnknownColumn):
        load_csv(f, CsvSchema(("age",), ((0.0, 100.0),), "race"))
    assert derive_ranges(f, ["age"]) == ((0.0, 100.0),)


def test_csv_errors(tmp_path):
    with pytest.raises(DegenerateRange):
        CsvSchema(("a1",), ((1.0, 1.0),), "s")
    f = _write(tmp_path / "bad.csv", "x1,a,y\noops,1,0\n")
    with pytest.raises(ParseError):
        load_csv(f, CsvSchema.default(1))
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path / "empty.csv", ""), CsvSchema.default(1))


def test_csv_round_trip(tmp_path, synth):
    data = synth(300, seed=4)
    schema = CsvSchema(("u", "v"), ((-3.0, 7.5), (10.0, 20.0)), "grp", "yes", "label", "1")
    write_csv(tmp_path / "r.csv", data, schema)
    write_schema(tmp_path / "r.ini", schema)
    back = load_csv(tmp_path / "r.csv", load_schema(tmp_path / "r.ini"))
    np.testing.assert_allclose(back.x, data.x, atol=1e-9)
    np.testing.assert_array_equal(back.a, data.a)
    np.testing.assert_array_equal(back.y, data.y)


def test_schema_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_schema(_write(tmp_path / "s.ini", "[features]\nx = 1\n"))
    with pytest.raises(ParseError):
        load_schema(tmp_path / "missing.ini")
