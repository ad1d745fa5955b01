"""Cross-validated risk estimation, cutoff tuning, ROC and bootstrap intervals.

Risk of a classifier that labels an observation emergent when its score is
above ``t`` is::

    R(t) = l1 * p1 * c1(t) + l0 * p0 * c0(t)

with ``c1`` the fraction of class-1 observations labelled 0 and ``c0`` the
fraction of class-0 observations labelled 1. The normalized risk
``(c0 + c1) / 2`` is reported alongside it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import CostSpec, PriorSpec, Study
from .rng import derive_rng
from .shift import bayes_cutoff, classify, shift_factor


class FoldError(ValueError):
    """A training split lacks one of the classes."""


def make_folds(n: int, k: int, seed=0, labels=None) -> np.ndarray:
    """Random fold id per observation; fold sizes differ by at most one.

    With ``labels`` the permutation is stratified: each class is shuffled
    and the classes are dealt round-robin one after the other, which keeps
    class counts per fold balanced as well.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "folds")
    if labels is None:
        order = rng.permutation(n)
    else:
        y = np.asarray(labels)
        order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in np.unique(y)])
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    return folds


@dataclass(frozen=True)
class CvScores:
    scores: np.ndarray
    folds: np.ndarray
    k: int
    seed: int
    pipeline: str = ""
    fold_info: tuple = ()


def _fold_seed(seed: int, name: str, fold: int) -> int:
    return int(derive_rng(seed, name, "fold", fold).integers(2 ** 31))


def cv_scores(study: Study, pipeline, k: int = 12, seed: int = 0, *, stratify: bool = False,
              folds: np.ndarray | None = None) -> CvScores:
    """Out-of-fold scores of ``pipeline`` on ``study``.

    ``pipeline`` needs a ``fit(study)`` method returning an object with
    ``predict_scores(features)``; a ``with_seed`` method, if present, is used
    to give each fold its own deterministic stream. Fold assignment depends
    only on ``seed``, so every pipeline evaluated with the same seed sees
    the same folds.
    """
    if folds is None:
        folds = make_folds(study.n, k, seed, study.labels if stratify else None)
    else:
        folds = np.asarray(folds, dtype=np.int64)
        k = int(folds.max()) + 1
    name = getattr(pipeline, "name", type(pipeline).__name__)
    out = np.full(study.n, np.nan)
    info = []
    for f in range(k):
        test = np.flatnonzero(folds == f)
        train_idx = np.flatnonzero(folds != f)
        y_train = study.labels[train_idx]
        if y_train.min() == y_train.max():
            raise FoldError(f"fold {f}: training split has a single class; "
                            "use stratified folds or a different seed")
        if len(test) == 0:
            continue
        model = pipeline.with_seed(_fold_seed(seed, name, f)) if hasattr(pipeline, "with_seed") else pipeline
        fitted = model.fit(study.take(train_idx))
        out[test] = fitted.predict_scores(study.features[test])
        info.append(getattr(fitted, "info", {}))
    return CvScores(out, folds, k, seed, name, tuple(info))


def _as_scores(cv) -> np.ndarray:
    return np.asarray(cv.scores if isinstance(cv, CvScores) else cv, dtype=float)


def conditional_errors(cv, labels, cutoff: float) -> tuple[float, float]:
    """``(c0, c1)``: class-0 error rate and class-1 error rate at ``cutoff``."""
    s = _as_scores(cv)
    y = np.asarray(labels)
    if not (np.any(y == 0) and np.any(y == 1)):
        raise ValueError("both classes must be present")
    pred = classify(s, cutoff)
    c0 = float(np.mean(pred[y == 0] == 1))
    c1 = float(np.mean(pred[y == 1] == 0))
    return c0, c1


def empirical_risk(c0: float, c1: float, cost: CostSpec, prior: PriorSpec) -> tuple[float, float]:
    """Return ``(risk, normalized_risk)``."""
    risk = cost.l1 * prior.p1 * c1 + cost.l0 * prior.p0 * c0
    return risk, (c0 + c1) / 2.0


def reference_cutoff(labels, cost: CostSpec, prior: PriorSpec) -> float:
    """Bayes cutoff with the sample prior taken from ``labels``."""
    y = np.asarray(labels)
    return bayes_cutoff(cost, shift_factor(float(np.mean(y)), prior))


@dataclass(frozen=True)
class CutoffTuning:
    cutoff: float
    risk: float
    normalized_risk: float
    c0: float
    c1: float
    bayes_cutoff: float
    grid: np.ndarray
    risks: np.ndarray
    c0s: np.ndarray
    c1s: np.ndarray

    def curve_rows(self):
        for t, r, a, b in zip(self.grid, self.risks, self.c0s, self.c1s):
            yield float(t), float(r), float(a), float(b), (float(a) + float(b)) / 2.0


def default_grid(scores) -> np.ndarray:
    """0, 1 and the midpoints between consecutive distinct scores."""
    u = np.unique(np.asarray(scores, dtype=float))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([[0.0], mids, [1.0]]))


def risk_curve(scores, labels, cutoffs, cost: CostSpec, prior: PriorSpec):
    """Vectorized ``(risk, c0, c1)`` over an array of cutoffs."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    s0 = np.sort(s[y == 0])
    s1 = np.sort(s[y == 1])
    t = np.asarray(cutoffs, dtype=float)
    # label 1 iff score > t, so class members at or below t are labelled 0
    c1 = np.searchsorted(s1, t, side="right") / len(s1)
    c0 = (len(s0) - np.searchsorted(s0, t, side="right")) / len(s0)
    risk = cost.l1 * prior.p1 * c1 + cost.l0 * prior.p0 * c0
    return risk, c0, c1


def tune_cutoff(cv, labels, cost: CostSpec, prior: PriorSpec, grid=None,
                bayes: float | None = None) -> CutoffTuning:
    """Cutoff minimizing the empirical risk over ``grid``.

    Among minimizers the one nearest the Bayes cutoff wins, then the
    smallest.
    """
    s = _as_scores(cv)
    y = np.asarray(labels)
    g = default_grid(s) if grid is None else np.sort(np.asarray(grid, dtype=float))
    if g.size == 0:
        raise ValueError("empty cutoff grid")
    ref = reference_cutoff(y, cost, prior) if bayes is None else bayes
    risks, c0s, c1s = risk_curve(s, y, g, cost, prior)
    at_min = np.flatnonzero(risks == risks.min())
    dist = np.abs(g[at_min] - ref)
    i = int(at_min[np.flatnonzero(dist == dist.min())[0]])
    return CutoffTuning(float(g[i]), float(risks[i]), float((c0s[i] + c1s[i]) / 2), float(c0s[i]),
                        float(c1s[i]), float(ref), g, risks, c0s, c1s)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(scores, labels) -> RocCurve:
    """ROC staircase over all distinct thresholds.

    Tied scores move both rates at once, so the trapezoidal area credits
    ties with one half, the midrank convention.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    n1 = int(np.sum(y == 1))
    n0 = int(np.sum(y == 0))
    if n0 == 0 or n1 == 0:
        raise ValueError("ROC needs both classes")
    thr = np.unique(s)[::-1]
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # last position of each distinct score in descending order
    ends = np.searchsorted(-s_sorted, -thr, side="right")
    tp = np.concatenate([[0], np.cumsum(y_sorted == 1)[ends - 1]])
    fp = np.concatenate([[0], np.cumsum(y_sorted == 0)[ends - 1]])
    tpr = tp / n1
    fpr = fp / n0
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, np.concatenate([[np.inf], thr]), auc)


@dataclass(frozen=True)
class BootstrapCI:
    level: float
    replicates: int
    c0: tuple[float, float]
    c1: tuple[float, float]
    risk: tuple[float, float]
    normalized_risk: tuple[float, float]

    def to_dict(self) -> dict:
        return asdict(self)


def _percentile(values: np.ndarray, level: float) -> tuple[float, float]:
    lo, hi = np.quantile(values, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return float(lo), float(hi)


def bootstrap_replicates(errors0: np.ndarray, errors1: np.ndarray, B: int, seed: int,
                         chunk: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Stratified bootstrap of per-class error indicators.

    Each block of ``chunk`` replicates draws from its own stream keyed by
    (seed, block index).
    """
    n0, n1 = len(errors0), len(errors1)
    c0 = np.empty(B)
    c1 = np.empty(B)
    for b, start in enumerate(range(0, B, chunk)):
        m = min(chunk, B - start)
        rng = derive_rng(seed, "bootstrap", b)
        c0[start:start + m] = errors0[rng.integers(0, n0, size=(m, n0))].mean(axis=1)
        c1[start:start + m] = errors1[rng.integers(0, n1, size=(m, n1))].mean(axis=1)
    return c0, c1


def bootstrap_ci(cv, labels, cutoff: float, cost: CostSpec, prior: PriorSpec, B: int = 2000,
                 level: float = 0.90, seed: int = 0) -> BootstrapCI:
    """Percentile intervals for ``c0``, ``c1`` and the risks.

    Resamples (label, cross-validated label) pairs with replacement within
    each class, so ``n0`` and ``n1`` are fixed in every replicate. Models
    are not refitted; see :func:`bootstrap_refit_ci` for that.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    s = _as_scores(cv)
    y = np.asarray(labels)
    pred = classify(s, cutoff)
    e0 = (pred[y == 0] == 1).astype(float)
    e1 = (pred[y == 1] == 0).astype(float)
    c0, c1 = bootstrap_replicates(e0, e1, B, seed)
    return _intervals(c0, c1, cost, prior, level, B)


def _intervals(c0, c1, cost, prior, level, B) -> BootstrapCI:
    risk = cost.l1 * prior.p1 * c1 + cost.l0 * prior.p0 * c0
    return BootstrapCI(level, B, _percentile(c0, level), _percentile(c1, level),
                       _percentile(risk, level), _percentile((c0 + c1) / 2.0, level))


def bootstrap_refit_ci(study: Study, pipeline, cutoff: float, cost: CostSpec, prior: PriorSpec,
                       B: int = 200, level: float = 0.90, seed: int = 0, k: int = 12) -> BootstrapCI:
    """Bootstrap that redraws the study (stratified) and reruns cross-validation.

    Duplicated rows can land on both sides of a fold split, so intervals are
    optimistic; offered for comparison with :func:`bootstrap_ci`.
    """
    idx0 = np.flatnonzero(study.labels == 0)
    idx1 = np.flatnonzero(study.labels == 1)
    c0 = np.empty(B)
    c1 = np.empty(B)
    for b in range(B):
        rng = derive_rng(seed, "refit-bootstrap", b)
        rows = np.concatenate([rng.choice(idx0, len(idx0)), rng.choice(idx1, len(idx1))])
        boot = study.take(rows)
        cv = cv_scores(boot, pipeline, k, seed=int(rng.integers(2 ** 31)), stratify=True)
        c0[b], c1[b] = conditional_errors(cv, boot.labels, cutoff)
    return _intervals(c0, c1, cost, prior, level, B)


def nested_cv_errors(study: Study, pipeline, cost: CostSpec, prior: PriorSpec, k: int = 12,
                     inner_k: int = 12, seed: int = 0) -> tuple[float, float, np.ndarray]:
    """Errors when the cutoff is tuned inside each outer training split.

    Returns ``(c0, c1, predictions)``.
    """
    folds = make_folds(study.n, k, seed)
    pred = np.zeros(study.n, dtype=np.int64)
    for f in range(k):
        test = np.flatnonzero(folds == f)
        train = study.take(np.flatnonzero(folds != f))
        inner = cv_scores(train, pipeline, min(inner_k, train.n), seed=_fold_seed(seed, "nested", f),
                          stratify=True)
        t = tune_cutoff(inner, train.labels, cost, prior).cutoff
        model = pipeline.with_seed(_fold_seed(seed, "nested-fit", f)) if hasattr(pipeline, "with_seed") else pipeline
        pred[test] = classify(model.fit(train).predict_scores(study.features[test]), t)
    y = study.labels
    return float(np.mean(pred[y == 0] == 1)), float(np.mean(pred[y == 1] == 0)), pred


@dataclass(frozen=True)
class OverlapMatrix:
    names: tuple[str, ...]
    order: np.ndarray
    labels: np.ndarray
    matrix: np.ndarray  # observations (in ``order``) x models
    intensity: np.ndarray


def misclassification_matrix(predictions: dict, labels) -> OverlapMatrix:
    """Indicator of which model misclassifies which observation.

    Rows are reordered class 0 first, then class 1, keeping the original
    order within each class.
    """
    y = np.asarray(labels)
    names = tuple(predictions)
    if not names:
        raise ValueError("no predictions given")
    cols = []
    for name in names:
        p = np.asarray(predictions[name])
        if p.shape != y.shape:
            raise ValueError(f"{name}: {p.shape[0] if p.ndim else 0} predictions for {len(y)} observations")
        cols.append((p != y).astype(np.int64))
    order = np.argsort(y, kind="stable")
    m = np.column_stack(cols)[order]
    return OverlapMatrix(names, order, y[order], m, m.sum(axis=1))


@dataclass(frozen=True)
class EvalReport:
    pipeline: str
    cutoff_policy: str
    cutoff: float
    bayes_cutoff: float
    c0: float
    c1: float
    risk: float
    normalized_risk: float
    auc: float
    brier: float
    brier_sum: float
    folds: int
    seed: int
    cv_scores: np.ndarray
    fold_ids: np.ndarray
    predictions: np.ndarray
    curve: CutoffTuning
    roc: RocCurve
    ci: BootstrapCI | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "cutoff_policy": self.cutoff_policy,
            "cutoff": self.cutoff,
            "bayes_cutoff": self.bayes_cutoff,
            "c0": self.c0,
            "c1": self.c1,
            "risk": self.risk,
            "normalized_risk": self.normalized_risk,
            "auc": self.auc,
            "brier": self.brier,
            "brier_sum": self.brier_sum,
            "folds": self.folds,
            "seed": self.seed,
            "cv_scores": self.cv_scores.tolist(),
            "fold_ids": self.fold_ids.tolist(),
            "predictions": self.predictions.tolist(),
            "ci": self.ci.to_dict() if self.ci else None,
            "note": "cutoff tuned on the same cross-validated scores used for the risk estimate",
            "info": _jsonable(self.info),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def evaluate_pipeline(study: Study, pipeline, cost: CostSpec, prior: PriorSpec, k: int = 12,
                      seed: int = 0, cutoff_policy: str = "tuned", B: int = 2000,
                      level: float = 0.90, stratify: bool = False) -> EvalReport:
    """Cross-validate ``pipeline`` and summarize it at the chosen cutoff."""
    from .models import brier_score

    cv = cv_scores(study, pipeline, k, seed, stratify=stratify)
    y = study.labels
    tuning = tune_cutoff(cv, y, cost, prior)
    if cutoff_policy == "tuned":
        cutoff = tuning.cutoff
    elif cutoff_policy == "bayes":
        cutoff = tuning.bayes_cutoff
    else:
        raise ValueError(f"unknown cutoff policy {cutoff_policy!r}")
    c0, c1 = conditional_errors(cv, y, cutoff)
    risk, norm = empirical_risk(c0, c1, cost, prior)
    ci = bootstrap_ci(cv, y, cutoff, cost, prior, B, level, seed) if B > 0 else None
    return EvalReport(
        pipeline=cv.pipeline, cutoff_policy=cutoff_policy, cutoff=cutoff,
        bayes_cutoff=tuning.bayes_cutoff, c0=c0, c1=c1, risk=risk, normalized_risk=norm,
        auc=roc_curve(cv.scores, y).auc, brier=brier_score(y, cv.scores),
        brier_sum=brier_score(y, cv.scores, normalize=False), folds=cv.k, seed=seed,
        cv_scores=cv.scores, fold_ids=cv.folds, predictions=classify(cv.scores, cutoff),
        curve=tuning, roc=roc_curve(cv.scores, y), ci=ci, info={"folds": list(cv.fold_info)},
    )
