import itertools
import math

import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st
from scipy.stats import mannwhitneyu

from aaarisk.dataset import ScalingParams, Study, standardize
from aaarisk.optim import LogisticModel, fit_logistic_mle
from aaarisk.stats import (
    EXACT_MAX_N,
    exact_p_value,
    gaussian_kde,
    mann_whitney,
    perfect_separation_p,
    screen_features,
    standardized_importance,
    violin_data,
    violin_group,
)

from conftest import logistic_study


def brute_force_p(x0, x1):
    """Two-sided p by enumerating every assignment of pooled values to the groups."""
    pooled = np.concatenate([x0, x1])
    n, n1 = len(pooled), len(x1)

    def u_of(idx1):
        mask = np.zeros(n, bool)
        mask[list(idx1)] = True
        a, b = pooled[~mask], pooled[mask]
        return int(np.sum(b[:, None] > a[None, :]))

    obs = u_of(range(n - n1, n))
    us = [u_of(c) for c in itertools.combinations(range(n), n1)]
    lower = sum(u <= obs for u in us)
    upper = sum(u >= obs for u in us)
    return obs, min(Fraction(1), Fraction(2 * min(lower, upper), len(us)))


def test_mwu_small_example():
    r = mann_whitney([1, 2], [3, 4])
    assert r.U == 4 and r.method == "exact"
    assert r.p == pytest.approx(1 / 3, abs=1e-15)
    flipped = mann_whitney([3, 4], [1, 2])
    assert flipped.U == 0 and flipped.p == r.p


def test_mwu_constant_samples():
    r = mann_whitney([5.0] * 6, [5.0] * 8)
    assert r.U == 24 and r.p == 1.0 and r.tie_corrected


def test_mwu_empty():
    with pytest.raises(ValueError):
        mann_whitney([], [1.0])


def _enumerated_null(n):
    """U for every subset of ranks 0..n-1 taken as class 1, keyed by subset size."""
    masks = np.arange(2 ** n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    # a class-1 member at rank i beats every class-0 member below it
    below0 = np.cumsum(1 - bits, axis=1) - (1 - bits)
    u = np.sum(bits * below0, axis=1)
    return bits, u


def test_mwu_exact_matches_enumeration_exhaustively():
    # only ranks matter, so each subset of 0..n-1 stands for every untied input
    for n in range(2, EXACT_MAX_N + 1):
        bits, u = _enumerated_null(n)
        sizes = bits.sum(axis=1)
        x = np.arange(n, dtype=float)
        for mask in range(1, 2 ** n - 1):
            n1 = sizes[mask]
            same = u[sizes == n1]
            obs = u[mask]
            tail = min(np.sum(same <= obs), np.sum(same >= obs))
            expected = min(1.0, float(Fraction(2 * int(tail), len(same))))
            sel = bits[mask].astype(bool)
            r = mann_whitney(x[~sel], x[sel])
            assert r.method == "exact"
            assert r.U == obs
            assert r.p == expected, (n, mask)


def test_exact_p_against_brute_force_random():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n = int(rng.integers(2, EXACT_MAX_N + 1))
        n1 = int(rng.integers(1, n))
        v = rng.permutation(n).astype(float) + rng.random()
        x0, x1 = v[: n - n1], v[n - n1:]
        u, p = brute_force_p(x0, x1)
        r = mann_whitney(x0, x1)
        assert r.method == "exact"
        assert r.U == u
        assert r.p == float(p)


def test_exact_distribution_sums():
    # the null distribution is symmetric: P(U <= k) == P(U >= mn - k)
    for m, n in [(3, 4), (5, 7), (6, 6)]:
        for k in range(m * n + 1):
            assert exact_p_value(k, m, n) == exact_p_value(m * n - k, m, n)


def test_normal_approximation_vs_exact_20_20():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x0 = rng.standard_normal(20)
        x1 = rng.standard_normal(20) + rng.uniform(0, 1.2)
        r = mann_whitney(x0, x1)
        assert r.method == "normal-approximation"
        ref = mannwhitneyu(x1, x0, alternative="two-sided", method="exact")
        assert r.U == ref.statistic
        assert abs(r.p - ref.pvalue) < 0.01
        assert abs(r.p - exact_p_value(r.U, 20, 20)) < 0.01


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_mwu_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    x0, x1 = rng.standard_normal(15), rng.standard_normal(9)
    a = mann_whitney(x0, x1)
    b = mann_whitney(np.exp(x0), np.exp(x1))
    assert a.U == b.U and a.p == b.p
    assert 0 <= a.U <= 15 * 9 and 0 < a.p <= 1


# --- violins -----------------------------------------------------------------


def test_violin_quartiles():
    v = violin_group([1, 2, 3, 4, 5])
    assert v.quartiles == (2.0, 3.0, 4.0)
    assert v.minimum == 1 and v.maximum == 5


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(2, 80))
def test_violin_integrates_to_one(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) * rng.uniform(0.1, 10)
    if len(np.unique(v)) < 2:
        return
    d = violin_group(v, grid_size=400)
    area = np.trapezoid(d.density, d.grid) if hasattr(np, "trapezoid") else np.trapz(d.density, d.grid)
    assert 0.99 <= area <= 1.01
    assert np.all(d.density >= 0)
    assert d.quartiles[0] <= d.quartiles[1] <= d.quartiles[2]


def test_violin_normal_density_at_zero():
    vals = []
    for seed in range(10):
        x = np.random.default_rng(seed).standard_normal(500)
        d = violin_group(x)
        vals.append(gaussian_kde(x, [0.0], d.bandwidth)[0])
    assert abs(np.mean(vals) - 1 / math.sqrt(2 * math.pi)) < 0.05


def test_violin_shift_equivariance():
    x = np.random.default_rng(4).standard_normal(50)
    a, b = violin_group(x), violin_group(x + 3.0)
    np.testing.assert_allclose(b.grid, a.grid + 3.0, atol=1e-12)
    np.testing.assert_allclose(b.density, a.density, atol=1e-12)


def test_violin_degenerate_and_empty():
    out = violin_data([1.0, 1.0, 2.0, 3.0], [0, 0, 1, 1])
    assert out[0].degenerate and out[0].density is None
    assert not out[1].degenerate
    with pytest.raises(ValueError):
        violin_data([1.0, 2.0], [0, 0])


# --- importance --------------------------------------------------------------


def _model(coefs):
    p = len(coefs)
    return LogisticModel(0.0, np.asarray(coefs, float), ScalingParams.identity(p),
                         tuple(f"f{j + 1}" for j in range(p)))


def test_importance_examples():
    assert standardized_importance(_model([0.0, 0.0])) == []
    ranking = standardized_importance(_model([2.0, -1.0]))
    assert [r.feature for r in ranking] == ["f1", "f2"]
    assert [r.direction for r in ranking] == ["increasing", "decreasing"]
    ranking = standardized_importance(_model([-1.0, 3.0, 1.0]))
    assert [r.feature for r in ranking] == ["f2", "f1", "f3"]


def test_importance_scale_invariance(rng):
    s = logistic_study(rng, n=120, beta=(1.2, -0.6, 0.3))
    _, sc = standardize(s)
    a = standardized_importance(fit_logistic_mle(s, scaling=sc))
    x = s.features.copy()
    x[:, 1] *= 10
    s10 = Study(x, s.labels, s.feature_names)
    _, sc10 = standardize(s10)
    b = standardized_importance(fit_logistic_mle(s10, scaling=sc10))
    assert [r.feature for r in a] == [r.feature for r in b]
    assert [r.direction for r in a] == [r.direction for r in b]
    np.testing.assert_allclose([r.magnitude for r in a], [r.magnitude for r in b], rtol=1e-6)


# --- screening ---------------------------------------------------------------


def test_screening_order():
    y = np.r_[np.zeros(4), np.ones(4)].astype(int)
    x = np.column_stack([
        np.ones(8),                          # identical across groups
        np.arange(8, dtype=float),           # perfectly separating
        np.array([0, 1, 5, 2, 3, 7, 4, 6], float),
    ])
    sc = screen_features(Study(x, y, ["flat", "sep", "mixed"]))
    assert sc.names[0] == "sep" and sc.names[-1] == "flat"
    assert sc.rows[-1].p == 1.0
    assert sc.rows[0].p == pytest.approx(2 / math.comb(8, 4), abs=1e-15)
    assert sc.rows[0].p == perfect_separation_p(4, 4)
    assert list(sc.to_csv_rows())[0] == ("feature", "U", "p", "method")
    assert len(sc.top(2)) == 2
