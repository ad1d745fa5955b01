"""Model pipelines built on the logistic solvers.

Six supervised pipelines are provided (see :data:`PIPELINE_KINDS`):

========  ==============================================================
Sparse    L1 logistic regression, penalty chosen by inner cross-validation
SparseL   ML refit on the Sparse support
PC        ML on the leading principal components
AIC       bidirectional stepwise selection minimizing AIC
BIC       same, minimizing BIC
AICPC     stepwise AIC over the principal components
========  ==============================================================

Every pipeline refits all of its steps (standardization, PCA, penalty and
subset selection) on whatever study it is given, so wrapping one in
cross-validation never leaks held-out rows into training.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import CostSpec, PriorSpec, ScalingParams, Study, standardize
from .optim import (
    FitError,
    LogisticModel,
    SeparationError,
    fit_logistic_l1,
    fit_logistic_mle,
    l1_path,
    lambda_grid,
    lambda_max,
    log_likelihood,
)
from .rng import derive_rng

PIPELINE_KINDS = ("Sparse", "SparseL", "PC", "AIC", "BIC", "AICPC")


# --------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PcaBasis:
    loadings: np.ndarray  # p x k, orthonormal columns
    explained_variance: np.ndarray
    center: np.ndarray
    total_variance: float

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    @property
    def explained_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) @ self.loadings

    def reconstruct(self, scores) -> np.ndarray:
        return np.asarray(scores, dtype=float) @ self.loadings.T + self.center


def pca_fit(features, k: int) -> PcaBasis:
    """Principal axes of ``features`` (centered, not rescaled).

    Pass standardized features to get components of the correlation
    matrix. Each loading vector is signed so its largest-magnitude entry
    is positive.
    """
    x = np.asarray(features, dtype=float)
    n, p = x.shape
    if not 1 <= k <= min(n - 1, p):
        raise ValueError(f"k={k} must satisfy 1 <= k <= min(n-1, p) = {min(n - 1, p)}")
    center = x.mean(axis=0)
    xc = x - center
    total = float(np.sum(xc ** 2) / (n - 1))
    if total <= 0:
        raise ValueError("zero-variance input")
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    loadings = vt[:k].T.copy()
    for j in range(k):
        i = int(np.argmax(np.abs(loadings[:, j])))
        if loadings[i, j] < 0:
            loadings[:, j] *= -1
    var = s[:k] ** 2 / (n - 1)
    return PcaBasis(loadings, var, center, total)


# --------------------------------------------------------------------------
# Stepwise selection


def information_criterion(loglik: float, d: int, n: int, criterion: str) -> float:
    """``-2 loglik + penalty * d`` with penalty 2 (AIC) or log n (BIC)."""
    c = criterion.upper()
    if c == "AIC":
        return -2.0 * loglik + 2.0 * d
    if c == "BIC":
        return -2.0 * loglik + math.log(n) * d
    raise ValueError(f"unknown criterion {criterion!r}")


def robust_mle(study: Study, scaling: ScalingParams | None = None) -> LogisticModel:
    """ML fit that falls back to the capped iterate on separation.

    The fallback is flagged by ``fit_meta.converged == False``.
    """
    try:
        return fit_logistic_mle(study, scaling=scaling)
    except SeparationError as exc:
        if exc.model is None:
            raise
        return exc.model


def robust_l1(study: Study, lam: float, scaling: ScalingParams | None = None) -> LogisticModel:
    try:
        return fit_logistic_l1(study, lam, scaling=scaling)
    except SeparationError as exc:
        if exc.model is None:
            raise
        return exc.model


def _fit_subset(study: Study, subset: Sequence[int], scaling: ScalingParams | None):
    sub = study.select(subset)
    sc = scaling.subset(subset) if scaling is not None else None
    model = robust_mle(sub, sc)
    return model, log_likelihood(model, sub)


@dataclass(frozen=True)
class StepwiseResult:
    model: LogisticModel
    selected: tuple[int, ...]
    criterion: str
    score: float
    trace: tuple[tuple[str, int, float], ...] = ()

    @property
    def selected_names(self) -> tuple[str, ...]:
        return self.model.feature_names


def subset_score(study: Study, subset: Sequence[int], criterion: str,
                 scaling: ScalingParams | None = None) -> float:
    """Criterion value of the ML fit on ``subset``; ``inf`` if the fit fails."""
    try:
        _, ll = _fit_subset(study, list(subset), scaling)
    except FitError:
        return math.inf
    return information_criterion(ll, len(subset) + 1, study.n, criterion)


def stepwise_select(study: Study, criterion: str = "AIC", candidates: Sequence[int] | None = None,
                    scaling: ScalingParams | None = None, max_steps: int = 200) -> StepwiseResult:
    """Greedy bidirectional stepwise search starting from the intercept-only model.

    At each step every single add or drop is scored; the best strict
    improvement is taken (ties resolved by candidate order). Separated
    subsets are scored at the capped fit; fits that fail otherwise are
    treated as infinitely bad.
    """
    cands = list(range(study.p)) if candidates is None else list(candidates)
    current: list[int] = []
    best = subset_score(study, current, criterion, scaling)
    trace = []
    for _ in range(max_steps):
        move = None
        for j in cands:
            if j in current:
                trial, kind = [c for c in current if c != j], "drop"
            else:
                trial, kind = sorted(current + [j]), "add"
            score = subset_score(study, trial, criterion, scaling)
            if score < best - 1e-10 and (move is None or score < move[0]):
                move = (score, kind, j, trial)
        if move is None:
            break
        best, kind, j, current = move[0], move[1], move[2], move[3]
        trace.append((kind, j, best))
    model, _ = _fit_subset(study, current, scaling)
    return StepwiseResult(model, tuple(current), criterion.upper(), best, tuple(trace))


def exhaustive_select(study: Study, criterion: str = "AIC",
                      scaling: ScalingParams | None = None) -> tuple[tuple[int, ...], float]:
    """Best subset by brute force over all ``2**p`` subsets (small ``p`` only)."""
    best, best_score = (), math.inf
    for r in range(study.p + 1):
        for subset in itertools.combinations(range(study.p), r):
            s = subset_score(study, subset, criterion, scaling)
            if s < best_score:
                best, best_score = subset, s
    return best, best_score


# --------------------------------------------------------------------------
# Sparse fits


def sparse_then_refit(study: Study, lam: float, *, scaling: ScalingParams | None = None,
                      standardize: bool = False) -> LogisticModel:
    """ML refit restricted to the nonzero slopes of the L1 fit at ``lam``.

    The returned model is expressed over all ``p`` features, with exact
    zeros outside the support.
    """
    sparse = fit_logistic_l1(study, lam, scaling=scaling, standardize=standardize)
    support = sparse.support
    sc = sparse.scaling
    refit = fit_logistic_mle(study.select(support), scaling=sc.subset(support))
    beta = np.zeros(study.p)
    beta[support] = refit.coefficients
    return LogisticModel(refit.intercept, beta, sc, study.feature_names, refit.fit_meta)


# --------------------------------------------------------------------------
# 2-means


@dataclass(frozen=True)
class KMeansResult:
    assignment: np.ndarray
    centers: np.ndarray
    inertia: float
    iterations: int
    empty_cluster: bool
    history: tuple[float, ...] = ()


def _wcss(x: np.ndarray, assign: np.ndarray) -> float:
    total = 0.0
    for c in (0, 1):
        pts = x[assign == c]
        if len(pts):
            total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
    return total


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    assign = None
    history = []
    for it in range(1, max_iter + 1):
        d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = (d[:, 1] < d[:, 0]).astype(np.int64)
        history.append(_wcss(x, new))
        if assign is not None and np.array_equal(new, assign):
            return assign, centers, it, history
        assign = new
        centers = centers.copy()
        for c in (0, 1):
            if np.any(assign == c):
                centers[c] = x[assign == c].mean(axis=0)
    return assign, centers, max_iter, history


def _transfer(x: np.ndarray, assign: np.ndarray, history: list, max_iter: int):
    """Single-point moves that lower the WCSS, applied until none is left.

    Moving ``x_i`` from cluster A to B changes the WCSS by
    ``nB/(nB+1) |x_i - cB|^2 - nA/(nA-1) |x_i - cA|^2``. Lloyd's rule ignores
    the size factors and can stall where such a move still helps.
    """
    assign = assign.copy()
    for _ in range(max_iter):
        counts = np.bincount(assign, minlength=2).astype(float)
        if counts.min() == 0:
            break
        centers = np.stack([x[assign == c].mean(axis=0) for c in (0, 1)])
        d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        own = assign
        other = 1 - assign
        n_own = counts[own]
        n_other = counts[other]
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(n_own > 1, n_own / (n_own - 1) * d[np.arange(len(x)), own], 0.0) \
                - n_other / (n_other + 1) * d[np.arange(len(x)), other]
        i = int(np.argmax(gain))
        if gain[i] <= 1e-12 * max(1.0, history[-1] if history else 1.0):
            break
        assign[i] = 1 - assign[i]
        history.append(_wcss(x, assign))
    centers = np.stack([x[assign == c].mean(axis=0) if np.any(assign == c) else x[0] for c in (0, 1)])
    return assign, centers


def kmeans2(features, seed: int = 0, restarts: int = 10, labels=None, *,
            standardize: bool = False, max_iter: int = 300) -> KMeansResult:
    """Two-cluster k-means with k-means++ seeding and restarts.

    Each restart runs Lloyd iterations, then single-point transfers until no
    move lowers the within-cluster sum of squares. The best restart wins;
    ties keep the earliest restart. With ``labels`` the cluster ids are
    swapped if that increases agreement with the labels; otherwise
    observation 0 is put in cluster 0.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n = len(x)
    if n < 2:
        raise ValueError("k-means needs at least two observations")
    if standardize:
        sd = x.std(axis=0, ddof=1)
        x = (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    best = None
    for r in range(restarts):
        rng = derive_rng(seed, "kmeans", r)
        first = int(rng.integers(n))
        d2 = ((x - x[first]) ** 2).sum(axis=1)
        if d2.sum() <= 0:
            return KMeansResult(np.zeros(n, dtype=np.int64), np.stack([x[0], x[0]]), 0.0, 0, True)
        second = int(rng.choice(n, p=d2 / d2.sum()))
        assign, centers, it, hist = _lloyd(x, np.stack([x[first], x[second]]), max_iter)
        assign, centers = _transfer(x, assign, hist, max_iter)
        inertia = _wcss(x, assign)
        if best is None or inertia < best[0] - 1e-12 * max(1.0, best[0]):
            best = (inertia, assign, centers, it, hist)
    inertia, assign, centers, it, hist = best
    flip = False
    if labels is not None:
        y = np.asarray(labels)
        flip = np.sum(assign != y) > np.sum(assign == y)
    else:
        flip = assign[0] == 1
    if flip:
        assign = 1 - assign
        centers = centers[::-1].copy()
    empty = bool(np.all(assign == assign[0]))
    return KMeansResult(assign, centers, inertia, it, empty, tuple(hist))


# --------------------------------------------------------------------------
# Brier score


def brier_score(labels, scores, normalize: bool = True) -> float:
    """Squared-error score; the mean when ``normalize`` else the plain sum."""
    y = np.asarray(labels, dtype=float)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {s.shape}")
    if s.size and (s.min() < 0 or s.max() > 1):
        raise ValueError("scores must lie in [0, 1]")
    total = float(np.sum((y - s) ** 2))
    return total / len(y) if normalize else total


# --------------------------------------------------------------------------
# Pipelines


@dataclass(frozen=True)
class PipelineSpec:
    """Configuration of one model pipeline.

    ``lambda_points``/``lambda_decades`` define the penalty grid below
    ``lambda_max``; ``lambda_folds`` is the number of inner folds used to pick
    the penalty by minimum cross-validated risk at the tuned cutoff.
    """

    kind: str
    n_components: int = 5
    lambda_points: int = 50
    lambda_decades: float = 4.0
    lambda_folds: int = 5
    lam: float | None = None  # fixed penalty; skips inner selection
    cost: CostSpec = field(default_factory=CostSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PIPELINE_KINDS:
            raise ValueError(f"unknown pipeline {self.kind!r}; choose from {PIPELINE_KINDS}")
        if self.n_components < 1:
            raise ValueError("n_components must be positive")

    @property
    def name(self) -> str:
        return self.kind

    def with_seed(self, seed: int) -> "PipelineSpec":
        return replace(self, seed=seed)

    def fit(self, study: Study) -> "FittedPipeline":
        return fit_pipeline(study, self)


@dataclass(frozen=True)
class FittedPipeline:
    kind: str
    model: LogisticModel
    columns: tuple[int, ...]
    pca: tuple[ScalingParams, PcaBasis] | None = None
    info: dict = field(default_factory=dict)

    def inputs(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if self.pca is not None:
            scaling, basis = self.pca
            x = basis.project(scaling.transform(x))
        return x[:, list(self.columns)]

    def predict_scores(self, features) -> np.ndarray:
        return self.model.predict_scores(self.inputs(features))


def _scaled(study: Study) -> ScalingParams:
    return standardize(study)[1]


def _pc_study(study: Study, k: int):
    z, scaling = standardize(study)
    k = min(k, study.p, study.n - 1)
    basis = pca_fit(z.features, k)
    scores = basis.project(z.features)
    return study.with_features(scores, tuple(f"PC{j + 1}" for j in range(k))), scaling, basis


def select_lambda(study: Study, spec: PipelineSpec) -> tuple[float, dict]:
    """Pick the L1 penalty minimizing inner-CV empirical risk.

    Risk for each penalty is taken at its own best cutoff over stratified
    inner folds. Ties go to the largest penalty (sparsest model). If no
    penalty can be scored on every fold, ``lambda_max`` is returned.
    """
    from .evaluation import make_folds, tune_cutoff

    scaling = _scaled(study)
    lmax = lambda_max(study, scaling=scaling)
    grid = lambda_grid(lmax, spec.lambda_points, spec.lambda_decades)
    k = min(spec.lambda_folds, study.n)
    # stratified so every inner training split holds both classes
    folds = make_folds(study.n, k, derive_rng(spec.seed, "lambda-folds"), labels=study.labels)
    scores = np.full((len(grid), study.n), np.nan)
    for f in range(k):
        test = np.flatnonzero(folds == f)
        train = study.take(np.flatnonzero(folds != f))
        if train.n1 == 0 or train.n0 == 0:
            continue
        try:
            sc = _scaled(train)
        except ValueError:
            continue
        for i, m in enumerate(l1_path(train, grid, scaling=sc)):
            if m is not None:
                scores[i, test] = m.predict_scores(study.features[test])
    risks = np.full(len(grid), np.inf)
    for i in range(len(grid)):
        if np.all(np.isfinite(scores[i])):
            risks[i] = tune_cutoff(scores[i], study.labels, spec.cost, spec.prior).risk
    if not np.any(np.isfinite(risks)):
        return float(lmax), {"lambda_max": lmax, "grid": grid.tolist(), "risks": risks.tolist()}
    best = int(np.flatnonzero(risks == risks.min())[0])  # grid is decreasing
    return float(grid[best]), {"lambda_max": lmax, "grid": grid.tolist(), "risks": risks.tolist()}


def fit_pipeline(study: Study, spec: PipelineSpec) -> FittedPipeline:
    kind = spec.kind
    if kind in ("Sparse", "SparseL"):
        if spec.lam is None:
            lam, info = select_lambda(study, spec)
        else:
            lam, info = float(spec.lam), {}
        scaling = _scaled(study)
        sparse = robust_l1(study, lam, scaling)
        info = {**info, "lambda": lam, "support": sparse.support,
                "separation": not sparse.fit_meta.converged}
        if kind == "Sparse":
            return FittedPipeline(kind, sparse, tuple(range(study.p)), info=info)
        support = sparse.support
        refit = robust_mle(study.select(support), scaling.subset(support))
        info["separation"] = not refit.fit_meta.converged
        return FittedPipeline(kind, refit, tuple(support), info=info)
    if kind in ("AIC", "BIC"):
        scaling = _scaled(study)
        res = stepwise_select(study, kind, scaling=scaling)
        return FittedPipeline(kind, res.model, res.selected,
                              info={"criterion": res.score, "selected": list(res.selected_names),
                                    "separation": not res.model.fit_meta.converged})
    pcs, scaling, basis = _pc_study(study, spec.n_components)
    pc_scaling = _scaled(pcs)
    if kind == "PC":
        model = robust_mle(pcs, pc_scaling)
        cols = tuple(range(pcs.p))
        info = {}
    else:  # AICPC
        res = stepwise_select(pcs, "AIC", scaling=pc_scaling)
        model, cols = res.model, res.selected
        info = {"criterion": res.score, "selected": list(res.selected_names)}
    info["explained_ratio"] = basis.explained_ratio.tolist()
    info["separation"] = not model.fit_meta.converged
    return FittedPipeline(kind, model, cols, pca=(scaling, basis), info=info)
