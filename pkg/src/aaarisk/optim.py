"""Logistic regression fitting.

Two solvers share one parameterization: an intercept plus slopes acting on
standardized features. :func:`fit_logistic_mle` is Newton's method (IRLS)
with step halving; :func:`fit_logistic_l1` minimizes the L1-penalized
negative log-likelihood by proximal Newton steps whose subproblem is
solved by cyclic coordinate descent.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .dataset import ScalingParams, Study, StudyFormatError

SEPARATION_BOUND = 30.0
PERSIST = 3  # consecutive over-bound iterates before separation is declared


class FitError(RuntimeError):
    """Base class for fitting failures."""


class SeparationError(FitError):
    """Slopes diverge: the classes are (quasi-)separable in the design.

    ``model`` holds the iterate at which the bound was crossed; it still
    orders observations usefully but its probabilities are saturated.
    """

    def __init__(self, message: str, model: "LogisticModel | None" = None):
        super().__init__(message)
        self.model = model


class ConvergenceError(FitError):
    pass


@dataclass(frozen=True)
class FitMeta:
    iterations: int = 0
    gap: float = 0.0
    penalty: float = 0.0
    converged: bool = True
    jitter: float = 0.0
    method: str = "none"
    trace: tuple[float, ...] = ()  # log-likelihood (MLE) or penalized loss (L1) per accepted step


@dataclass(frozen=True)
class LogisticModel:
    """Fitted logistic model.

    ``coefficients`` live in standardized-feature space; :attr:`scaling`
    maps raw features into that space, so :meth:`predict_scores` accepts
    raw-scale input.
    """

    intercept: float
    coefficients: np.ndarray
    scaling: ScalingParams
    feature_names: tuple[str, ...] = ()
    fit_meta: FitMeta = field(default_factory=FitMeta)

    def __post_init__(self):
        beta = np.array(self.coefficients, dtype=float).reshape(-1)
        beta.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)
        object.__setattr__(self, "intercept", float(self.intercept))
        if len(self.scaling) != len(beta):
            raise ValueError("scaling and coefficient lengths differ")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(len(beta)))
        if len(names) != len(beta):
            raise ValueError("feature name count differs from coefficient count")
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def zero(cls, p: int, scaling: ScalingParams | None = None, feature_names=()) -> "LogisticModel":
        return cls(0.0, np.zeros(p), scaling or ScalingParams.identity(p), feature_names)

    @property
    def p(self) -> int:
        return len(self.coefficients)

    @property
    def raw_coefficients(self) -> np.ndarray:
        return self.coefficients / self.scaling.sd

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - np.sum(self.coefficients * self.scaling.mean / self.scaling.sd))

    @property
    def support(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.coefficients != 0.0)]

    def design(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise ValueError(f"expected {self.p} feature columns, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        return self.scaling.transform(x)

    def linear_predictor(self, features) -> np.ndarray:
        return self.intercept + self.design(features) @ self.coefficients

    def predict_scores(self, features) -> np.ndarray:
        return expit(self.linear_predictor(features))

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "intercept_raw": self.raw_intercept,
            "coefficients": {
                name: {"standardized": float(b), "raw": float(r)}
                for name, b, r in zip(self.feature_names, self.coefficients, self.raw_coefficients)
            },
            "feature_names": list(self.feature_names),
            "scaling": self.scaling.to_dict(),
            "lambda": self.fit_meta.penalty,
            "fit_meta": asdict(self.fit_meta),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        names = tuple(d["feature_names"])
        beta = [d["coefficients"][n]["standardized"] for n in names]
        scaling = ScalingParams(np.array(d["scaling"]["mean"], dtype=float),
                                np.array(d["scaling"]["sd"], dtype=float))
        meta = dict(d["fit_meta"])
        meta["trace"] = tuple(meta.get("trace", ()))
        return cls(d["intercept"], np.array(beta, dtype=float), scaling, names, FitMeta(**meta))

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        return cls.from_dict(json.loads(text))


def predict_scores(model: LogisticModel, features) -> np.ndarray:
    """Sample-measure posteriors ``sigma(b0 + b^T z)`` for raw-scale rows."""
    return model.predict_scores(features)


def _loglik(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> float:
    eta = X1 @ theta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _check_dims(model: LogisticModel, study: Study):
    if study.p != model.p:
        raise ValueError(f"model has {model.p} coefficients but study has {study.p} features")


def log_likelihood(model: LogisticModel, study: Study) -> float:
    """Bernoulli log-likelihood ``sum y*eta - log(1 + exp(eta))``."""
    _check_dims(model, study)
    eta = model.linear_predictor(study.features)
    return float(np.sum(study.labels * eta - np.logaddexp(0.0, eta)))


def log_likelihood_gradient(model: LogisticModel, study: Study) -> tuple[float, np.ndarray]:
    """Gradient of :func:`log_likelihood` w.r.t. (intercept, standardized slopes)."""
    _check_dims(model, study)
    z = model.design(study.features)
    r = study.labels - expit(model.intercept + z @ model.coefficients)
    return float(r.sum()), z.T @ r


def _design(study: Study, scaling: ScalingParams | None, standardize: bool):
    if scaling is None:
        if standardize:
            mean = study.features.mean(axis=0)
            sd = study.features.std(axis=0, ddof=1)
            if np.any(~(sd > 0)):
                raise StudyFormatError("constant column cannot be standardized")
            scaling = ScalingParams(mean, sd)
        else:
            scaling = ScalingParams.identity(study.p)
    elif len(scaling) != study.p:
        raise ValueError("scaling length differs from feature count")
    z = scaling.transform(study.features)
    X1 = np.column_stack([np.ones(study.n), z])
    return X1, study.labels.astype(float), scaling


def _solve(H: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        if np.linalg.cond(H) < 1e12:
            return np.linalg.solve(H, g), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * max(1.0, float(np.trace(H)) / len(H))
    for _ in range(12):
        try:
            return np.linalg.solve(H + jitter * np.eye(len(H)), g), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FitError("weighted normal equations are singular")


def _over_bound(theta: np.ndarray) -> bool:
    return theta.size > 1 and bool(np.max(np.abs(theta[1:])) > SEPARATION_BOUND)


def _separation_error(theta: np.ndarray, it: int, scaling: ScalingParams, names, meta: "FitMeta"):
    j = int(np.argmax(np.abs(theta[1:])))
    model = LogisticModel(theta[0], theta[1:], scaling, names, replace(meta, converged=False))
    return SeparationError(
        f"quasi-separation: |standardized slope {j}| = {abs(theta[1 + j]):.3g} exceeds "
        f"{SEPARATION_BOUND:g} after {it} iterations", model)


def _slack(value: float) -> float:
    # objective differences below this are rounding noise
    return 1e-12 * max(1.0, abs(value))


def _intercept_only(ybar: float, p: int) -> np.ndarray:
    theta = np.zeros(p + 1)
    theta[0] = np.log(ybar / (1.0 - ybar))
    return theta


def fit_logistic_mle(study: Study, tol: float = 1e-8, max_iter: int = 100, *,
                     scaling: ScalingParams | None = None, standardize: bool = False,
                     start: np.ndarray | None = None) -> LogisticModel:
    """Maximum-likelihood logistic regression by Newton-Raphson (IRLS).

    Parameters
    ----------
    study : Study
        Training data. Features are mapped through ``scaling`` (identity by
        default, sample standardization when ``standardize`` is set) before
        fitting, so slopes are always reported on the standardized scale.
    tol : float
        Convergence threshold on the max-norm of the log-likelihood gradient.
    max_iter : int
        Newton iterations allowed.

    Raises
    ------
    SeparationError
        If a standardized slope exceeds ``SEPARATION_BOUND``.
    ConvergenceError
        If the gradient is still above ``tol`` after ``max_iter`` steps.
    """
    X1, y, scaling = _design(study, scaling, standardize)
    n, k = X1.shape
    if n <= k:
        warnings.warn(f"n={n} observations for {k} parameters; MLE may not exist", stacklevel=2)
    theta = _intercept_only(y.mean(), k - 1) if start is None else np.asarray(start, float).copy()
    ll = _loglik(theta, X1, y)
    trace = [ll]
    over = 0
    jitter_used = 0.0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X1 @ theta)
        g = X1.T @ (y - mu)
        gap = float(np.max(np.abs(g)))
        if gap < tol:
            it -= 1
            break
        w = mu * (1.0 - mu)
        H = (X1 * w[:, None]).T @ X1
        step, jit = _solve(H, g)
        jitter_used = max(jitter_used, jit)
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            ll_c = _loglik(cand, X1, y)
            if ll_c >= ll - _slack(ll):
                break
            t *= 0.5
        else:
            # no ascent possible at working precision
            break
        theta, ll = cand, ll_c
        trace.append(ll)
        over = over + 1 if _over_bound(theta) else 0
        if over >= PERSIST:
            raise _separation_error(theta, it, scaling, study.feature_names,
                                    FitMeta(it, gap, 0.0, False, jitter_used, "irls", tuple(trace)))
    else:
        mu = expit(X1 @ theta)
        gap = float(np.max(np.abs(X1.T @ (y - mu))))
    if _over_bound(theta):
        raise _separation_error(theta, it, scaling, study.feature_names,
                                FitMeta(it, gap, 0.0, False, jitter_used, "irls", tuple(trace)))
    if gap >= tol:
        raise ConvergenceError(f"IRLS stopped after {it} iterations with gradient {gap:.3g} >= {tol:g}")
    meta = FitMeta(iterations=it, gap=gap, penalty=0.0, converged=True, jitter=jitter_used, method="irls",
                   trace=tuple(trace))
    return LogisticModel(theta[0], theta[1:], scaling, study.feature_names, meta)


def lambda_max(study: Study, *, scaling: ScalingParams | None = None, standardize: bool = False) -> float:
    """Smallest penalty at which every slope is zero at the optimum."""
    X1, y, _ = _design(study, scaling, standardize)
    return float(np.max(np.abs(X1[:, 1:].T @ (y - y.mean())))) if X1.shape[1] > 1 else 0.0


def kkt_residual(model: LogisticModel, study: Study, lam: float) -> np.ndarray:
    """Per-coordinate violation of the L1 stationarity conditions.

    Entry 0 is the intercept (unpenalized); entry ``j+1`` is slope ``j``.
    """
    g0, g = log_likelihood_gradient(model, study)
    b = model.coefficients
    res = np.where(b == 0.0, np.maximum(np.abs(g) - lam, 0.0), np.abs(g - lam * np.sign(b)))
    return np.concatenate([[abs(g0)], res])


def _kkt(g: np.ndarray, theta: np.ndarray, lam: float) -> float:
    b, gb = theta[1:], g[1:]
    res = np.where(b == 0.0, np.maximum(np.abs(gb) - lam, 0.0), np.abs(gb - lam * np.sign(b)))
    return float(max(abs(g[0]), res.max() if res.size else 0.0))


def _soft(v: float, t: float) -> float:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


def _quadratic_l1(H: np.ndarray, c: np.ndarray, lam: float, x0: np.ndarray,
                  max_sweeps: int = 2000) -> np.ndarray:
    """Minimize ``0.5 x'Hx - c'x + lam*|x[1:]|_1`` by coordinate descent.

    After each sweep the sign pattern is tried in a direct solve; a candidate
    passing the optimality check ends the loop exactly.
    """
    k = len(c)
    x = x0.copy()
    grad = c - H @ x  # negative gradient of the smooth part
    diag = np.diag(H).copy()
    pen = np.full(k, lam)
    pen[0] = 0.0
    for sweep in range(max_sweeps):
        biggest = 0.0
        for j in range(k):
            old = x[j]
            new = _soft(diag[j] * old + grad[j], pen[j]) / diag[j]
            if new != old:
                delta = new - old
                grad -= H[:, j] * delta
                x[j] = new
                biggest = max(biggest, abs(delta) * np.sqrt(diag[j]))
        active = np.flatnonzero(x != 0.0)
        active = np.union1d([0], active)
        s = np.sign(x[active])
        s[0] = 0.0
        try:
            xa = np.linalg.solve(H[np.ix_(active, active)], c[active] - lam * s)
        except np.linalg.LinAlgError:
            xa = None
        if xa is not None:
            cand = np.zeros(k)
            cand[active] = xa
            ok = np.all(np.sign(xa[1:]) == s[1:]) if len(active) > 1 else True
            if ok:
                q = c - H @ cand
                inactive = np.setdiff1d(np.arange(k), active)
                if inactive.size == 0 or np.all(np.abs(q[inactive]) <= lam * (1 + 1e-12) + 1e-14):
                    return cand
        if biggest < 1e-15:
            break
    return x


def _penalized(theta: np.ndarray, X1: np.ndarray, y: np.ndarray, lam: float) -> float:
    return -_loglik(theta, X1, y) + lam * float(np.sum(np.abs(theta[1:])))


def fit_logistic_l1(study: Study, lam: float, tol: float = 1e-8, max_iter: int = 200, *,
                    scaling: ScalingParams | None = None, standardize: bool = False,
                    start: np.ndarray | None = None) -> LogisticModel:
    """L1-penalized logistic regression.

    Maximizes ``loglik - lam * sum|b_j|`` with the intercept unpenalized.
    Each outer iteration builds the Newton quadratic at the current point,
    solves the penalized subproblem by coordinate descent and backtracks
    along the resulting direction until the penalized objective drops.
    Convergence is declared when the largest KKT residual is below ``tol``.

    ``start`` is a warm start ``[b0, b1, ..., bp]`` in standardized space.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"penalty must be a finite non-negative number, got {lam}")
    X1, y, scaling = _design(study, scaling, standardize)
    n, k = X1.shape
    theta = _intercept_only(y.mean(), k - 1) if start is None else np.asarray(start, float).copy()
    obj = _penalized(theta, X1, y, lam)
    trace = [obj]
    over = 0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X1 @ theta)
        g = X1.T @ (y - mu)
        gap = _kkt(g, theta, lam)
        if gap < tol:
            it -= 1
            break
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        H = (X1 * w[:, None]).T @ X1
        H[np.diag_indices_from(H)] += 1e-12 * max(1.0, float(np.trace(H)) / k)
        # quadratic in the new point x: 0.5 x'Hx - (g + H theta)'x + lam|x|
        target = _quadratic_l1(H, g + H @ theta, lam, theta)
        d = target - theta
        decrease = -g @ d + lam * (np.sum(np.abs(target[1:])) - np.sum(np.abs(theta[1:])))
        t = 1.0
        accepted = False
        for _ in range(50):
            cand = theta + t * d
            obj_c = _penalized(cand, X1, y, lam)
            if obj_c <= obj + 1e-4 * t * min(decrease, 0.0) + _slack(obj):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        theta, obj = cand, obj_c
        trace.append(obj)
        over = over + 1 if _over_bound(theta) else 0
        if over >= PERSIST:
            raise _separation_error(theta, it, scaling, study.feature_names,
                                    FitMeta(it, gap, float(lam), False, 0.0, "prox-newton-cd", tuple(trace)))
    else:
        mu = expit(X1 @ theta)
        gap = _kkt(X1.T @ (y - mu), theta, lam)
    if _over_bound(theta):
        raise _separation_error(theta, it, scaling, study.feature_names,
                                FitMeta(it, gap, float(lam), False, 0.0, "prox-newton-cd", tuple(trace)))
    if gap >= tol:
        raise ConvergenceError(
            f"L1 fit (lambda={lam:g}) stopped after {it} iterations with KKT residual {gap:.3g}")
    meta = FitMeta(iterations=it, gap=gap, penalty=float(lam), converged=True, method="prox-newton-cd",
                   trace=tuple(trace))
    return LogisticModel(theta[0], theta[1:], scaling, study.feature_names, meta)


def lambda_grid(lam_max: float, n_points: int = 50, decades: float = 4.0) -> np.ndarray:
    """Log-spaced penalties from ``lam_max`` down ``decades`` orders of magnitude."""
    if lam_max <= 0:
        return np.zeros(1)
    return lam_max * np.logspace(0.0, -decades, n_points)


def l1_path(study: Study, lambdas, tol: float = 1e-8, *, scaling: ScalingParams | None = None,
            standardize: bool = False) -> list[LogisticModel | None]:
    """Warm-started fits along a decreasing penalty sequence.

    Once a fit fails (separation or non-convergence), every smaller penalty
    is reported as ``None``.
    """
    X1, _, scaling = _design(study, scaling, standardize)
    out: list[LogisticModel | None] = []
    start = None
    failed = False
    for lam in lambdas:
        if failed:
            out.append(None)
            continue
        try:
            m = fit_logistic_l1(study, float(lam), tol, scaling=scaling, start=start)
        except FitError:
            failed = True
            out.append(None)
            continue
        start = np.concatenate([[m.intercept], m.coefficients])
        out.append(m)
    return out
