"""Synthetic data, site partitioning and CSV ingestion."""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fairfed.core import Dataset, FairFedError, SiteDataset, as_generator


class SizeMismatch(FairFedError, ValueError):
    pass


class ParseError(FairFedError, ValueError):
    pass


class UnknownColumn(FairFedError, KeyError):
    pass


class DegenerateRange(FairFedError, ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-feature generator: A ~ Bernoulli(pi1), X1 | A ~ Beta, X2 ~ U(0, 1),
    eta_a(x) = 1/2 + arctan(slope (x1 + x2 - 1) - shift (2a - 1)) / pi.
    """

    pi1: float = 0.3
    beta_params: tuple = ((4.5, 2.0), (4.0, 2.0))  # indexed by a
    slope: float = 12.0
    shift: float = 0.3
    d: int = 2

    def __post_init__(self):
        if not (0.0 < self.pi1 < 1.0):
            raise ValueError("pi1 must lie in (0, 1)")
        if self.d != 2:
            raise ValueError("the synthetic generator is two-dimensional")

    def eta(self, x, a) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        a = np.asarray(a, dtype=np.float64)
        arg = self.slope * (x[:, 0] + x[:, 1] - 1.0) - self.shift * (2.0 * a - 1.0)
        return 0.5 + np.arctan(arg) / np.pi

    def sample(self, n: int, rng) -> Dataset:
        if n < 1:
            raise ValueError("n must be >= 1")
        gen = as_generator(rng)
        a = (gen.random(n) < self.pi1).astype(np.int8)
        (s0, t0), (s1, t1) = self.beta_params
        x1 = np.where(a == 1, gen.beta(s1, t1, n), gen.beta(s0, t0, n))
        x2 = gen.random(n)
        x = np.column_stack([x1, x2])
        y = (gen.random(n) < self.eta(x, a)).astype(np.int8)
        return Dataset(x, a, y)


def gen_synthetic(spec: SyntheticSpec, n: int, rng) -> Dataset:
    return spec.sample(n, rng)


def partition_sites(data: Dataset, S: int, sizes: Sequence[int] | None = None,
                    rng=None) -> list[SiteDataset]:
    """Shuffle and cut into S disjoint sites; equal sizes with the remainder going to early sites."""
    n = len(data)
    if S < 1:
        raise ValueError("S must be >= 1")
    if sizes is None:
        base, extra = divmod(n, S)
        sizes = [base + (1 if s < extra else 0) for s in range(S)]
    elif len(sizes) != S or sum(sizes) != n or min(sizes) < 0:
        raise SizeMismatch(f"sizes {list(sizes)} do not partition {n} records into {S} sites")
    order = np.arange(n) if rng is None else as_generator(rng).permutation(n)
    cuts = np.cumsum([0, *sizes])
    return [SiteDataset(s, data.subset(np.sort(order[cuts[s]:cuts[s + 1]]))) for s in range(S)]


# ---------------------------------------------------------------- CSV

@dataclass(frozen=True)
class CsvSchema:
    """Column roles and the fixed ranges that map features onto [0, 1]."""

    feature_columns: tuple[str, ...]
    feature_ranges: tuple[tuple[float, float], ...]
    sensitive_column: str
    sensitive_positive: str = "1"
    label_column: str = "y"
    label_positive: str = "1"

    def __post_init__(self):
        cols = [*self.feature_columns, self.sensitive_column, self.label_column]
        if len(set(cols)) != len(cols):
            raise ValueError("schema columns must be distinct")
        if len(self.feature_ranges) != len(self.feature_columns):
            raise ValueError("one range per feature column is required")
        for name, (lo, hi) in zip(self.feature_columns, self.feature_ranges):
            if not hi > lo:
                raise DegenerateRange(f"column {name!r} has range [{lo}, {hi}]")

    @classmethod
    def default(cls, d: int) -> "CsvSchema":
        return cls(tuple(f"x{i + 1}" for i in range(d)), ((0.0, 1.0),) * d, "a")


def load_schema(path) -> CsvSchema:
    """Read a schema file with [features], [sensitive] and [label] sections.

    [features] maps each column to ``min, max``; [sensitive] and [label] hold
    ``column`` and ``positive`` keys.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise ParseError(f"cannot read schema {path}")
    try:
        feats = cp["features"]
        names, ranges = [], []
        for name, spec in feats.items():
            lo, hi = (float(v) for v in spec.split(","))
            names.append(name)
            ranges.append((lo, hi))
        return CsvSchema(tuple(names), tuple(ranges),
                         cp["sensitive"]["column"], cp["sensitive"].get("positive", "1"),
                         cp["label"]["column"], cp["label"].get("positive", "1"))
    except (KeyError, ValueError) as exc:
        if isinstance(exc, DegenerateRange):
            raise
        raise ParseError(f"malformed schema {path}: {exc}") from exc


def write_schema(path, schema: CsvSchema) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["features"] = {n: f"{lo!r}, {hi!r}" for n, (lo, hi) in
                      zip(schema.feature_columns, schema.feature_ranges)}
    cp["sensitive"] = {"column": schema.sensitive_column, "positive": schema.sensitive_positive}
    cp["label"] = {"column": schema.label_column, "positive": schema.label_positive}
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path} has no header row")
        return list(reader.fieldnames), list(reader)


def derive_ranges(path, columns: Sequence[str]) -> tuple[tuple[float, float], ...]:
    """Observed (min, max) of each column; use once to build a schema, then keep it fixed."""
    header, rows = _read_rows(path)
    out = []
    for c in columns:
        if c not in header:
            raise UnknownColumn(c)
        try:
            vals = [float(r[c]) for r in rows]
        except ValueError as exc:
            raise ParseError(f"non-numeric value in column {c!r}") from exc
        out.append((min(vals), max(vals)))
    return tuple(out)


def _matches(value: str, positive: str) -> bool:
    value = value.strip()
    if value == positive:
        return True
    try:
        return float(value) == float(positive)
    except ValueError:
        return False


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read records, min-max rescale features by the schema ranges, map a and y to bits.

    Values outside a schema range land outside [0, 1]; validation decides
    whether to clamp or reject them.
    """
    header, rows = _read_rows(path)
    for c in (*schema.feature_columns, schema.sensitive_column, schema.label_column):
        if c not in header:
            raise UnknownColumn(c)
    if not rows:
        return Dataset(np.zeros((0, len(schema.feature_columns))), np.zeros(0), np.zeros(0))
    x = np.empty((len(rows), len(schema.feature_columns)))
    try:
        for j, (c, (lo, hi)) in enumerate(zip(schema.feature_columns, schema.feature_ranges)):
            x[:, j] = [(float(r[c]) - lo) / (hi - lo) for r in rows]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad feature value in {path}: {exc}") from exc
    a = [1 if _matches(r[schema.sensitive_column], schema.sensitive_positive) else 0 for r in rows]
    y = [1 if _matches(r[schema.label_column], schema.label_positive) else 0 for r in rows]
    return Dataset(x, a, y)


def write_csv(path, data: Dataset, schema: CsvSchema | None = None) -> None:
    """Write records, mapping [0, 1] features back through the schema ranges."""
    schema = schema or CsvSchema.default(data.d)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*schema.feature_columns, schema.sensitive_column, schema.label_column])
        for xi, ai, yi in zip(data.x, data.a, data.y):
            feats = [repr(float(lo + v * (hi - lo))) for v, (lo, hi) in zip(xi, schema.feature_ranges)]
            w.writerow([*feats, schema.sensitive_positive if ai else "0",
                        schema.label_positive if yi else "0"])

