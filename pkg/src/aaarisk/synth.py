"""Synthetic populations with known posteriors and case-control sampling.

Features are independent standard normals and the population posterior is
logistic, so a logistic fit to a case-control sample is well specified and
its prior-shift correction can be checked against the exact truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import PriorSpec, Study, canonical_feature_names, standardize
from .optim import fit_logistic_mle
from .rng import derive_rng
from .shift import correct_posterior, shift_factor

CHUNK = 8192


@dataclass(frozen=True)
class PopulationSpec:
    intercept: float
    coefficients: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(b) for b in self.coefficients))
        if len(self.coefficients) < 1:
            raise ValueError("need at least one coefficient")

    @property
    def p(self) -> int:
        return len(self.coefficients)

    def feature_names(self) -> tuple[str, ...]:
        if self.p == 28:
            return tuple(canonical_feature_names())
        return tuple(f"x{j + 1}" for j in range(self.p))


# prevalence close to 0.10
DEFAULT_SPEC = PopulationSpec(intercept=-2.85, coefficients=(1.0, -0.8, 0.5), seed=0)


@dataclass(frozen=True)
class Population:
    spec: PopulationSpec
    features: np.ndarray
    labels: np.ndarray

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def posteriors(self) -> np.ndarray:
        return oracle_posterior(self.spec, self.features)

    @property
    def p1(self) -> float:
        """Average true posterior over the realized population."""
        return float(self.posteriors.mean())

    @property
    def class1_fraction(self) -> float:
        return float(self.labels.mean())


def oracle_posterior(spec: PopulationSpec, x) -> np.ndarray:
    """True ``P(Y=1|x) = sigmoid(b0 + b^T x)``."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != spec.p:
        raise ValueError(f"expected {spec.p} features, got {arr.shape[1]}")
    out = expit(spec.intercept + arr @ np.asarray(spec.coefficients))
    return out[0] if single else out


def generate_population(spec: PopulationSpec, N: int, stream: str = "population") -> Population:
    """Draw ``N`` labelled individuals.

    Generation proceeds in fixed chunks, each from a stream keyed by
    (seed, stream, chunk index); ``stream`` separates independent draws
    from the same law (e.g. a fresh test population). A population of size
    ``N`` is the first ``N`` rows of any larger one with the same spec.
    """
    if N < 1:
        raise ValueError("N must be positive")
    xs, ys = [], []
    for c, start in enumerate(range(0, N, CHUNK)):
        m = min(CHUNK, N - start)
        rng = derive_rng(spec.seed, stream, c)
        # full chunks are always drawn so a population is a prefix of any larger one
        x = rng.standard_normal((CHUNK, spec.p))
        y = (rng.random(CHUNK) < oracle_posterior(spec, x)).astype(np.int64)
        xs.append(x[:m])
        ys.append(y[:m])
    return Population(spec, np.vstack(xs), np.concatenate(ys))


def draw_case_control(population: Population, n0: int, n1: int, seed: int = 0) -> Study:
    """Sample ``n0`` controls and ``n1`` cases without replacement.

    Rows are returned class 0 first, then class 1.
    """
    idx0 = np.flatnonzero(population.labels == 0)
    idx1 = np.flatnonzero(population.labels == 1)
    if len(idx0) < n0 or len(idx1) < n1:
        raise ValueError(f"population has {len(idx0)} class-0 and {len(idx1)} class-1 members; "
                         f"requested {n0} and {n1}")
    rng = derive_rng(seed, "case-control")
    rows = np.concatenate([rng.choice(idx0, n0, replace=False), rng.choice(idx1, n1, replace=False)])
    return Study(population.features[rows], population.labels[rows], population.spec.feature_names())


@dataclass(frozen=True)
class ShiftCheck:
    p1: float
    a: float
    mae_corrected: float
    mae_uncorrected: float
    bias_corrected: float
    bias_uncorrected: float
    n_test: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def shift_check(spec: PopulationSpec, N: int = 100_000, n0: int = 500, n1: int = 500,
                n_test: int = 10_000, seed: int = 0) -> ShiftCheck:
    """Fit on a case-control sample and compare posteriors with the truth.

    The logistic model is fit on the standardized sample; its scores are
    then corrected with the shift factor built from the realized
    population prior and evaluated on a fresh population draw.
    """
    pop = generate_population(spec, N)
    study = draw_case_control(pop, n0, n1, seed)
    _, scaling = standardize(study)
    model = fit_logistic_mle(study, scaling=scaling)
    p1 = pop.p1
    a = shift_factor(study.sample_prior, PriorSpec(p1))
    test = generate_population(spec, n_test, stream="test")
    truth = test.posteriors
    q = model.predict_scores(test.features)
    corrected = correct_posterior(q, a)
    return ShiftCheck(
        p1=p1, a=a,
        mae_corrected=float(np.mean(np.abs(corrected - truth))),
        mae_uncorrected=float(np.mean(np.abs(q - truth))),
        bias_corrected=float(np.mean(corrected - truth)),
        bias_uncorrected=float(np.mean(q - truth)),
        n_test=n_test,
    )
