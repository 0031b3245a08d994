"""Domain types, configuration, dataset validation and RNG stream derivation."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class FairFedError(Exception):
    """Base class for all package errors."""


class EmptyDataset(FairFedError):
    pass


class OutOfDomain(FairFedError):
    pass


class MissingGroup(FairFedError):
    pass


class InvalidConfig(FairFedError, ValueError):
    pass


# Non-fatal conditions are reported as flag strings collected on results.
FLAG_DEGENERATE_DENSITY = "DegenerateDensity"
FLAG_CLAMPED_ETA = "ClampedEta"
FLAG_CLAMPED_PI = "ClampedPi"
FLAG_INFEASIBLE_BAND = "InfeasibleBand"
FLAG_INFEASIBLE_JUMP = "InfeasibleJump"
FLAG_NONPOSITIVE_COUNT = "NonPositiveCount"
FLAG_MONOTONE_NULL = "MonotoneNull"


class LabeledRecord(NamedTuple):
    x: tuple
    a: int
    y: int


@dataclass(frozen=True)
class Dataset:
    """Column-stored records: features ``x`` (n, d) in [0, 1], bits ``a`` and ``y``."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        a =np.asarray(self.a, dtype=np.int8).ravel()
        y = np.asarray(self.y, dtype=np.int8).ravel()
        if not (x.shape[0] == a.shape[0] == y.shape[0]):
            raise ValueError("x, a and y must have the same number of rows")
        for arr in (x, a, y):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_records(cls, records: Iterable[LabeledRecord]) -> "Dataset":
        records = list(records)
        if not records:
            return cls(np.zeros((0, 0)), np.zeros(0), np.zeros(0))
        return cls(
            np.array([r.x for r in records], dtype=np.float64),
            np.array([r.a for r in records]),
            np.array([r.y for r in records]),
        )

    def __len__(self) -> int:
        return int(self.a.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def records(self) -> list[LabeledRecord]:
        return [LabeledRecord(tuple(xi), int(ai), int(yi))
                for xi, ai, yi in zip(self.x, self.a, self.y)]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.a[idx], self.y[idx])

    def group(self, a: int) -> "Dataset":
        return self.subset(self.a == a)

    def cell_counts(self) -> dict[tuple[int, int], int]:
        return {(a, y): int(np.sum((self.a == a) & (self.y == y)))
                for a in (0, 1) for y in (0, 1)}

    def group_counts(self) -> tuple[int, int]:
        n1 = int(np.sum(self.a == 1))
        return len(self) - n1, n1

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        return Dataset(np.concatenate([p.x for p in parts]),
                       np.concatenate([p.a for p in parts]),
                       np.concatenate([p.y for p in parts]))


def validate_dataset(records, policy: str = "reject") -> Dataset:
    """Check the [0, 1]^d domain and binary bits; clamp or reject features.

    Raises EmptyDataset, OutOfDomain (reject policy) or MissingGroup when a
    sensitive group has no records.
    """
    if policy not in ("reject", "clamp"):
        raise ValueError(f"unknown policy {policy!r}")
    data = records if isinstance(records, Dataset) else Dataset.from_records(records)
    if len(data) == 0:
        raise EmptyDataset("no records")
    for name, bits in (("a", data.a), ("y", data.y)):
        if not np.all((bits == 0) | (bits == 1)):
            raise OutOfDomain(f"{name} must be 0 or 1")
    x = data.x
    if not np.all(np.isfinite(x)):
        raise OutOfDomain("non-finite feature value")
    outside = (x < 0.0) | (x > 1.0)
    if outside.any():
        if policy == "reject":
            row = int(np.argmax(outside.any(axis=1)))
            raise OutOfDomain(f"record {row} has a feature outside [0, 1]")
        data = Dataset(np.clip(x, 0.0, 1.0), data.a, data.y)
    n0, n1 = data.group_counts()
    if n0 == 0 or n1 == 0:
        raise MissingGroup(f"sensitive group {0 if n0 == 0 else 1} has no records")
    return data


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise InvalidConfig(f"delta must lie in (0, 1), got {self.delta}")


def default_delta(n: int) -> float:
    """The experiments' leakage choice delta = (n/2)^-2."""
    return (n / 2.0) ** -2


def _check_weights(name, w):
    if w is None:
        return None
    w = tuple(float(v) for v in w)
    if any(v < 0 for v in w) or not math.isclose(sum(w), 1.0, rel_tol=0, abs_tol=1e-9):
        raise InvalidConfig(f"{name} must be nonnegative and sum to 1")
    return w


@dataclass(frozen=True)
class FederationConfig:
    """Tuning constants for one FDP-Fair / CDP-Fair fit.

    ``nu``, ``mu``, ``h`` and ``M`` may be left as None; the pipeline then
    derives them (effective weights, cross-validated bandwidth, depth rule).
    ``noise=False`` turns every mechanism off, which is only meant for tests.
    """

    budgets: tuple[PrivacyBudget, ...]
    alpha: float = 0.1
    nu: tuple[float, ...] | None = None
    mu: tuple[float, ...] | None = None
    h: float | None = None
    M: int | None = None
    rho_star: float = 0.03
    C_omega: float = 0.1
    eta_tol: float = 0.05
    k_eigen: int = 35
    grid_resolution: int = 30
    noise: bool = True
    private_pi: bool = True
    cross_fit: bool = True
    monotone: str = "relaxed"
    cv_folds: int = 3
    cv_candidates: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2, 0.3, 0.4)

    def __post_init__(self):
        budgets = tuple(self.budgets)
        if not budgets:
            raise InvalidConfig("at least one site budget is required")
        object.__setattr__(self, "budgets", budgets)
        nu = _check_weights("nu", self.nu)
        mu = _check_weights("mu", self.mu)
        for name, w in (("nu", nu), ("mu", mu)):
            if w is not None and len(w) != len(budgets):
                raise InvalidConfig(f"{name} needs one weight per site")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "mu", mu)
        if self.alpha < 0:
            raise InvalidConfig("alpha must be >= 0")
        if self.h is not None and not (0.0 < self.h < 1.0):
            raise InvalidConfig("h must lie in (0, 1)")
        if self.M is not None and self.M < 1:
            raise InvalidConfig("M must be >= 1")
        if self.rho_star <= 0:
            raise InvalidConfig("rho_star must be positive")
        if self.C_omega < 0 or not (0.0 < self.eta_tol < 1.0):
            raise InvalidConfig("C_omega must be >= 0 and eta_tol in (0, 1)")
        if self.k_eigen < 1 or self.grid_resolution < 2:
            raise InvalidConfig("k_eigen >= 1 and grid_resolution >= 2 required")
        if self.monotone not in ("relaxed", "strict"):
            raise InvalidConfig("monotone must be 'relaxed' or 'strict'")

    @property
    def S(self) -> int:
        return len(self.budgets)

    @classmethod
    def homogeneous(cls, S: int, epsilon: float, delta: float, **kw) -> "FederationConfig":
        return cls(budgets=(PrivacyBudget(epsilon, delta),) * S, **kw)


def _tag(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("lineage integers must be nonnegative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream named by ``(master_seed, lineage)``.

    Children are derived by extending the lineage, so sites, mechanisms and
    replicates draw from independent streams regardless of call order.
    """

    master_seed: int
    lineage: tuple[int, ...] = field(default=())

    def child(self, *keys) -> "RngStream":
        return RngStream(self.master_seed, self.lineage + tuple(_tag(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed & (2**64 - 1), spawn_key=self.lineage)
        return np.random.Generator(np.random.PCG64(seq))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class SiteDataset:
    site_id: int
    data: Dataset

    @property
    def N(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class SplitSite:
    """One site after the train/calibration split."""

    site_id: int
    train: Dataset
    calib: Dataset

    @property
    def n_train(self) -> int:
        return len(self.train)

    @property
    def n_calib(self) -> int:
        return len(self.calib)

    def swapped(self) -> "SplitSite":
        return SplitSite(self.site_id, self.calib, self.train)


def split_site(site: SiteDataset, rng, rule: str = "ceil") -> SplitSite:
    """Random permutation split with ceil(N/2) (``rule='ceil'``) or floor(N/2) training rows."""
    n = site.N
    n_train = math.ceil(n / 2) if rule == "ceil" else n // 2
    perm = as_generator(rng).permutation(n)
    return SplitSite(site.site_id, site.data.subset(np.sort(perm[:n_train])),
                     site.data.subset(np.sort(perm[n_train:])))
