"""Univariate screening and descriptive summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb
from scipy.stats import norm, rankdata

from .dataset import Study
from .optim import LogisticModel

EXACT_MAX_N = 12


@dataclass(frozen=True)
class MwuResult:
    """Mann-Whitney test result.

    ``U`` counts pairs in which the class-1 value exceeds the class-0 value,
    ties counting one half, so ``U / (n0 * n1)`` is the AUC of the values
    used as scores for class 1.
    """

    U: float
    p: float
    method: str
    tie_corrected: bool
    n0: int
    n1: int


@lru_cache(maxsize=None)
def _u_counts(m: int, n: int) -> tuple[int, ...]:
    """Number of rank arrangements giving each U in 0..m*n.

    ``m`` is the size of the sample whose exceedances are counted. Uses
    f(u; m, n) = f(u - n; m - 1, n) + f(u; m, n - 1): the largest pooled
    value belongs either to the counted sample (adding n) or not.
    """
    if m == 0 or n == 0:
        return (1,)
    a = _u_counts(m - 1, n)
    b = _u_counts(m, n - 1)
    out = [0] * (m * n + 1)
    for u, c in enumerate(a):
        out[u + n] += c
    for u, c in enumerate(b):
        out[u] += c
    return tuple(out)


def exact_p_value(u: float, n0: int, n1: int) -> float:
    """Two-sided exact p-value for an untied U statistic."""
    counts = _u_counts(n1, n0)
    total = sum(counts)
    k = int(round(u))
    lower = sum(counts[: k + 1])
    upper = sum(counts[k:])
    return min(1.0, 2 * min(lower, upper) / total)


def mann_whitney(sample0, sample1) -> MwuResult:
    """Two-sided Mann-Whitney U test of ``sample1`` against ``sample0``.

    Exact enumeration is used for untied data with ``n0 + n1 <= 12``;
    otherwise the normal approximation with tie and continuity
    corrections.
    """
    x0 = np.asarray(sample0, dtype=float).ravel()
    x1 = np.asarray(sample1, dtype=float).ravel()
    n0, n1 = len(x0), len(x1)
    if n0 == 0 or n1 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([x0, x1])
    ranks = rankdata(pooled)
    u = float(ranks[n0:].sum() - n1 * (n1 + 1) / 2.0)
    n = n0 + n1
    _, tie_sizes = np.unique(pooled, return_counts=True)
    tied = bool(np.any(tie_sizes > 1))
    if not tied and n <= EXACT_MAX_N:
        return MwuResult(u, exact_p_value(u, n0, n1), "exact", False, n0, n1)
    mu = n0 * n1 / 2.0
    tie_term = float(np.sum(tie_sizes ** 3 - tie_sizes)) / (n * (n - 1)) if n > 1 else 0.0
    var = n0 * n1 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return MwuResult(u, 1.0, "normal-approximation", tied, n0, n1)
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, 2.0 * float(norm.sf(z)))
    return MwuResult(u, p, "normal-approximation", tied, n0, n1)


@dataclass(frozen=True)
class ScreenRow:
    feature: str
    index: int
    U: float
    p: float
    method: str


@dataclass(frozen=True)
class Screening:
    rows: tuple[ScreenRow, ...]

    def top(self, m: int = 16) -> tuple[ScreenRow, ...]:
        return self.rows[:m]

    @property
    def names(self) -> list[str]:
        return [r.feature for r in self.rows]

    def to_csv_rows(self):
        yield ("feature", "U", "p", "method")
        for r in self.rows:
            yield (r.feature, repr(r.U), repr(r.p), r.method)


def screen_features(study: Study) -> Screening:
    """Mann-Whitney test per covariate, ascending p (stable on ties)."""
    y = study.labels
    rows = []
    for j, name in enumerate(study.feature_names):
        col = study.features[:, j]
        r = mann_whitney(col[y == 0], col[y == 1])
        rows.append(ScreenRow(name, j, r.U, r.p, r.method))
    rows.sort(key=lambda r: r.p)
    return Screening(tuple(rows))


# --------------------------------------------------------------------------
# Violin data


@dataclass(frozen=True)
class ViolinData:
    group: int
    n: int
    grid: np.ndarray | None
    density: np.ndarray | None
    bandwidth: float | None
    quartiles: tuple[float, float, float]
    minimum: float
    maximum: float
    degenerate: bool = False


def silverman_bandwidth(values) -> float:
    v = np.asarray(values, dtype=float)
    sd = float(np.std(v, ddof=1))
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * len(v) ** (-0.2)


def gaussian_kde(values, grid, bandwidth: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    u = (np.asarray(grid, dtype=float)[:, None] - v[None, :]) / bandwidth
    return np.exp(-0.5 * u ** 2).sum(axis=1) / (len(v) * bandwidth * math.sqrt(2 * math.pi))


def violin_group(values, group: int = 0, grid_size: int = 200) -> ViolinData:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError(f"group {group} is empty")
    q = tuple(float(x) for x in np.percentile(v, [25, 50, 75]))
    lo, hi = float(v.min()), float(v.max())
    if len(np.unique(v)) < 2:
        return ViolinData(group, len(v), None, None, None, q, lo, hi, degenerate=True)
    h = silverman_bandwidth(v)
    grid = np.linspace(lo - 3 * h, hi + 3 * h, grid_size)
    return ViolinData(group, len(v), grid, gaussian_kde(v, grid, h), h, q, lo, hi)


def violin_data(values, labels, grid_size: int = 200) -> dict[int, ViolinData]:
    """Per-group density trace and quartiles of one covariate.

    Gaussian kernel, Silverman bandwidth, grid spanning the data range
    extended by three bandwidths on each side.
    """
    v = np.asarray(values, dtype=float)
    y = np.asarray(labels)
    return {g: violin_group(v[y == g], g, grid_size) for g in (0, 1)}


# --------------------------------------------------------------------------
# Coefficient importance


@dataclass(frozen=True)
class Importance:
    feature: str
    index: int
    magnitude: float
    direction: str  # "increasing" or "decreasing" chance of emergent


def standardized_importance(model: LogisticModel) -> list[Importance]:
    """Nonzero standardized slopes ranked by magnitude (ties by feature index)."""
    out = [
        Importance(name, j, abs(float(b)), "increasing" if b > 0 else "decreasing")
        for j, (name, b) in enumerate(zip(model.feature_names, model.coefficients))
        if b != 0.0
    ]
    out.sort(key=lambda r: (-r.magnitude, r.index))
    return out


def perfect_separation_p(n0: int, n1: int) -> float:
    """Exact two-sided p-value when the groups do not overlap."""
    return min(1.0, 2.0 / comb(n0 + n1, n1, exact=True))
