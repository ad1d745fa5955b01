"""Case-control study data: ingestion, validation, standardization and priors."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

LABEL_TOKENS = {"elective": 0, "emergent": 1, "0": 0, "1": 1}
DEFAULT_LABEL_COLUMN = "group"

# Hospital counts per year, (elective, emergent).
YEARLY_COUNTS = {
    2005: (131, 20),
    2006: (138, 15),
    2007: (141, 16),
    2008: (114, 18),
    2009: (125, 15),
}
YEARLY_TOTAL = (649, 84)

_CATALOG = (
    ("1-dimensional", (
        ("Dmax", "Maximum diameter"),
        ("Dneckp", "Distal neck diameter"),
        ("Dneckd", "Proximal neck diameter"),
        ("H", "Height of AAA"),
        ("L", "Length of AAA centerline"),
        ("Hneck", "Height of neck"),
        ("Lneck", "Length of neck centerline"),
        ("Hb", "Bulge Height"),
        ("dc", "Centroid distance of Dmax"),
        ("maxCompact", "Maximum Compactness"),
        ("minCompact", "Minimum Compactness"),
        ("aveCompact", "Average Compactness"),
    )),
    ("2-dimensional", (
        ("DHr", "Diameter-Height ratio"),
        ("DDr", "Diameter-Diameter ratio"),
        ("Hr", "Height ratio"),
        ("BL", "Bulge location"),
        ("beta", "Asymmetry"),
        ("T", "Tortuosity"),
    )),
    ("3-dimensional", (
        ("Vcm3", "AAA Volume"),
        ("Scm2", "AAA Surface Area"),
        ("VILT", "Intraluminal thrombus volume"),
        ("gamma", "AAA sac to ILT volume ratio"),
        ("IPR", "Isoperimetric Ratio"),
        ("NFI", "Non-fusiform Index"),
    )),
    ("wall thickness", (
        ("twmax", "Maximum wall thickness"),
        ("twmin", "Minimum wall thickness"),
        ("avetw", "Average wall thickness"),
        ("Dmaxtw", "Maximum wall thickness at Dmax"),
    )),
)


class StudyFormatError(ValueError):
    """Raised when a study file or matrix fails validation."""


@dataclass(frozen=True)
class FeatureInfo:
    name: str
    description: str
    group: str


def feature_catalog() -> list[FeatureInfo]:
    """Return the 28 canonical geometric covariates in catalog order."""
    return [FeatureInfo(name, desc, group) for group, items in _CATALOG for name, desc in items]


def canonical_feature_names() -> list[str]:
    return [f.name for f in feature_catalog()]


@dataclass(frozen=True)
class CostSpec:
    """Misclassification losses.

    ``l0`` is the loss for calling an elective patient emergent, ``l1`` the
    loss for calling an emergent patient elective.
    """

    l0: float = 1.0
    l1: float = 7.72

    def __post_init__(self):
        if not (self.l0 > 0 and self.l1 > 0) or not (math.isfinite(self.l0) and math.isfinite(self.l1)):
            raise ValueError(f"losses must be positive and finite, got l0={self.l0}, l1={self.l1}")


@dataclass(frozen=True)
class PriorSpec:
    """Target-population class probabilities."""

    p1: float = 84 / 733

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise ValueError(f"p1 must lie strictly inside (0, 1), got {self.p1}")

    @property
    def p0(self) -> float:
        return 1.0 - self.p1


@dataclass(frozen=True)
class ScalingParams:
    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).copy()
        sd = np.asarray(self.sd, dtype=float).copy()
        if mean.shape != sd.shape or mean.ndim != 1:
            raise ValueError("mean and sd must be 1-d arrays of equal length")
        if np.any(~(sd > 0)):
            raise ValueError("every standard deviation must be positive")
        mean.setflags(write=False)
        sd.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @classmethod
    def identity(cls, p: int) -> "ScalingParams":
        return cls(np.zeros(p), np.ones(p))

    def __len__(self):
        return len(self.mean)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.sd

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.sd + self.mean

    def subset(self, columns: Sequence[int]) -> "ScalingParams":
        idx = list(columns)
        return ScalingParams(self.mean[idx], self.sd[idx])

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}


@dataclass(frozen=True)
class Study:
    """A case-control sample.

    Labels are 0 for elective and 1 for emergent. Arrays are copied and
    frozen on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(self.labels), 0)
        if x.ndim != 2:
            raise StudyFormatError("features must be a 2-d matrix")
        y_raw = np.asarray(self.labels)
        if y_raw.ndim != 1 or len(y_raw) != x.shape[0]:
            raise StudyFormatError(
                f"labels must be a vector of length {x.shape[0]}, got shape {y_raw.shape}")
        if not np.all((y_raw == 0) | (y_raw == 1)):
            raise StudyFormatError("every label must be 0 or 1")
        y = y_raw.astype(np.int64)
        names = tuple(self.feature_names) if self.feature_names else tuple(
            f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise StudyFormatError(f"{len(names)} feature names for {x.shape[1]} columns")
        if len(set(names)) != len(names):
            raise StudyFormatError("feature names must be unique")
        if not np.all(np.isfinite(x)):
            i, j = map(int, np.argwhere(~np.isfinite(x))[0])
            raise StudyFormatError(f"non-finite value at row {i}, column {names[j]!r}")
        n1 = int(y.sum())
        if n1 == 0 or n1 == len(y):
            raise StudyFormatError("both classes must be present")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n1(self) -> int:
        return int(self.labels.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def sample_prior(self) -> float:
        return self.n1 / self.n

    def take(self, rows) -> "Study":
        rows = np.asarray(rows)
        return Study(self.features[rows], self.labels[rows], self.feature_names)

    def select(self, columns: Sequence[int]) -> "Study":
        idx = list(columns)
        return Study(self.features[:, idx], self.labels, tuple(self.feature_names[j] for j in idx))

    def with_features(self, features, feature_names=None) -> "Study":
        return Study(features, self.labels, feature_names or ())

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.feature_names.index(name)]


def _parse_label(token: str, row: int) -> int:
    key = token.strip().lower()
    if key not in LABEL_TOKENS:
        raise StudyFormatError(f"row {row}: unknown label token {token!r}")
    return LABEL_TOKENS[key]


def load_study(path: str | os.PathLike, label_column: str = DEFAULT_LABEL_COLUMN) -> Study:
    """Read a comma-separated study file with a header row.

    Rows are numbered from 1 (the first data line) in error messages.
    Constant columns are rejected because they cannot be standardized.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise StudyFormatError(f"{path}: empty file") from None
        if any(h == "" for h in header):
            raise StudyFormatError(f"{path}: missing header name")
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise StudyFormatError(f"{path}: duplicate header names {dupes}")
        if label_column not in header:
            raise StudyFormatError(f"{path}: label column {label_column!r} not found")
        li = header.index(label_column)
        names = [h for k, h in enumerate(header) if k != li]
        rows, labels = [], []
        for r, cells in enumerate(reader, start=1):
            if not cells or all(c.strip() == "" for c in cells):
                continue
            if len(cells) != len(header):
                raise StudyFormatError(f"{path}: row {r} has {len(cells)} cells, expected {len(header)}")
            labels.append(_parse_label(cells[li], r))
            values = []
            for k, cell in enumerate(cells):
                if k == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise StudyFormatError(
                        f"{path}: row {r}, column {header[k]!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise StudyFormatError(f"{path}: row {r}, column {header[k]!r}: non-finite value {cell!r}")
                values.append(v)
            rows.append(values)
    x = np.array(rows, dtype=float).reshape(len(rows), len(names))
    for j, name in enumerate(names):
        if len(rows) and np.all(x[:, j] == x[0, j]):
            raise StudyFormatError(f"{path}: constant column {name!r}")
    return Study(x, np.array(labels, dtype=np.int64), tuple(names))


def write_study(study: Study, path: str | os.PathLike, label_column: str = DEFAULT_LABEL_COLUMN,
                label_tokens: bool = True) -> None:
    """Write ``study`` in the format read by :func:`load_study`.

    Values are written with ``repr`` so they reload bit-for-bit.
    """
    tokens = ("elective", "emergent") if label_tokens else ("0", "1")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(study.feature_names) + [label_column])
        for row, y in zip(study.features, study.labels):
            w.writerow([repr(float(v)) for v in row] + [tokens[int(y)]])


def standardize(study: Study) -> tuple[Study, ScalingParams]:
    """Center each column and scale to unit sample standard deviation (ddof=1)."""
    x = study.features
    if study.n < 2:
        raise StudyFormatError("standardization needs at least two rows")
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    bad = [study.feature_names[j] for j in np.flatnonzero(~(sd > 0))]
    if bad:
        raise StudyFormatError(f"constant column(s) cannot be standardized: {bad}")
    params = ScalingParams(mean, sd)
    return study.with_features(params.transform(x), study.feature_names), params


def unstandardize(study: Study, params: ScalingParams) -> Study:
    return study.with_features(params.inverse(study.features), study.feature_names)


def estimate_priors(counts: Iterable[tuple[float, float]] | dict) -> PriorSpec:
    """Pool ``(elective, emergent)`` counts over strata into a population prior."""
    pairs = list(counts.values()) if isinstance(counts, dict) else list(counts)
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if np.any(arr < 0):
        raise ValueError("counts must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("counts are all zero")
    return PriorSpec(float(arr[:, 1].sum() / total))
