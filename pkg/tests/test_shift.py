import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aaarisk.dataset import CostSpec, PriorSpec, Study
from aaarisk.shift import ShiftContext, bayes_cutoff, classify, correct_posterior, shift_factor

DEFAULT_COST = CostSpec(1.0, 7.72)
DEFAULT_PRIOR = PriorSpec(84 / 733)
A_DEFAULT = (100 * 84) / (44 * 649)


def test_shift_factor_default_constants():
    assert shift_factor(44 / 144, DEFAULT_PRIOR) == pytest.approx(A_DEFAULT, rel=1e-14)
    assert shift_factor(44 / 144, DEFAULT_PRIOR) == pytest.approx(0.294159, abs=1e-6)


def test_shift_factor_identity_cases():
    assert shift_factor(0.3, PriorSpec(0.3)) == pytest.approx(1.0, rel=1e-15)
    assert shift_factor(0.5, PriorSpec(0.5)) == 1.0


@pytest.mark.parametrize("pi1", [0.0, 1.0, -0.1])
def test_shift_factor_rejects_boundaries(pi1):
    with pytest.raises(ValueError):
        shift_factor(pi1, DEFAULT_PRIOR)


def test_bayes_cutoff_default_constants():
    t = bayes_cutoff(DEFAULT_COST, A_DEFAULT)
    assert t == pytest.approx(0.30573, abs=1e-5)
    assert round(t, 3) == 0.306


def test_bayes_cutoff_symmetric():
    assert bayes_cutoff(CostSpec(2.0, 2.0), 1.0) == 0.5
    assert bayes_cutoff(CostSpec(1.0, 3.0), 1.0) == pytest.approx(0.25)


def test_bayes_cutoff_identity():
    # l0 * p0 == l1 * p1 makes the cutoff equal the sample prior
    cost, prior = CostSpec(1.0, 4.0), PriorSpec(0.2)
    pi1 = 44 / 144
    t = bayes_cutoff(cost, shift_factor(pi1, prior))
    assert t == pytest.approx(pi1, abs=1e-12)
    assert t == pytest.approx(0.30556, abs=1e-5)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.1, 10))
def test_bayes_cutoff_identity_property(pi1, p1, l0):
    l1 = l0 * (1 - p1) / p1
    t = bayes_cutoff(CostSpec(l0, l1), shift_factor(pi1, PriorSpec(p1)))
    assert abs(t - pi1) < 1e-12


def test_correct_posterior_examples():
    assert correct_posterior(0.5, A_DEFAULT) == pytest.approx(0.22730, abs=1e-5)
    q = np.linspace(0, 1, 11)
    np.testing.assert_allclose(correct_posterior(q, 1.0), q, atol=1e-15)
    for a in (1e-6, 0.3, 1.0, 5.0, 1e6):
        assert correct_posterior(0.0, a) == 0.0
        assert correct_posterior(1.0, a) == 1.0


@given(st.floats(0.0, 1.0), st.floats(1e-3, 1e3))
def test_decision_equivalence(q, a):
    cost = DEFAULT_COST
    t = bayes_cutoff(cost, a)
    P = correct_posterior(q, a)
    lhs = P * cost.l1 - (1 - P) * cost.l0
    if abs(q - t) > 1e-9:
        assert (q > t) == (lhs > 0)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-2, 1e2))
def test_correction_invertible(q, a):
    assert correct_posterior(correct_posterior(q, a), 1 / a) == pytest.approx(q, abs=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(1e-3, 1e3))
def test_correction_monotone(q1, q2, a):
    lo, hi = sorted((q1, q2))
    assert correct_posterior(lo, a) <= correct_posterior(hi, a)
    if 0 < lo < hi < 1 and hi - lo > 1e-9:
        assert correct_posterior(lo, a) < correct_posterior(hi, a)


def test_ties_classify_as_elective():
    assert classify([0.3, 0.30001, 0.29], 0.3).tolist() == [0, 1, 0]


def test_context_defaults_from_study():
    s = Study(np.arange(144.0).reshape(-1, 1), np.r_[np.zeros(100), np.ones(44)])
    ctx = ShiftContext.build(DEFAULT_PRIOR, DEFAULT_COST, study=s)
    assert ctx.pi1 == 44 / 144
    assert ctx.a == (ctx.pi0 * ctx.prior.p1) / (ctx.pi1 * ctx.prior.p0)
    assert ctx.cutoff == pytest.approx(0.30573, abs=1e-5)
    ctx2 = ShiftContext.build(DEFAULT_PRIOR, DEFAULT_COST, pi1=0.5)
    assert ctx2.pi1 == 0.5
