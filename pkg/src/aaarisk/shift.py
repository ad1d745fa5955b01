"""Prior-probability-shift correction and the cost-sensitive Bayes cutoff.

Scores produced by a model fitted on a case-control sample estimate the
sample-measure posterior ``P_N(Y=1|x)``. Under the assumption that the
class-conditional feature law is the same in the sample and in the target
population, the population posterior differs only by a constant factor on
the odds scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CostSpec, PriorSpec, Study


def shift_factor(pi1: float, prior: PriorSpec) -> float:
    """Odds multiplier taking sample posteriors to population posteriors.

    ``a = (1 - pi1) * p1 / (pi1 * (1 - p1))`` where ``pi1`` is the sample
    proportion of class 1.
    """
    if not 0.0 < pi1 < 1.0:
        raise ValueError(f"sample prior must lie strictly inside (0, 1), got {pi1}")
    p1 = prior.p1
    return ((1.0 - pi1) * p1) / (pi1 * (1.0 - p1))


def bayes_cutoff(cost: CostSpec, a: float) -> float:
    """Threshold on the sample-measure posterior for the Bayes rule."""
    if not a > 0:
        raise ValueError(f"shift factor must be positive, got {a}")
    r = cost.l0 / (cost.l1 * a)
    return r / (1.0 + r)


def correct_posterior(q, a: float):
    """Map sample-measure posteriors ``q`` to population posteriors.

    Evaluated as ``a*q / (a*q + 1 - q)``, which equals the odds form and is
    exact at ``q = 0`` and ``q = 1``.
    """
    if not a > 0:
        raise ValueError(f"shift factor must be positive, got {a}")
    q_arr = np.asarray(q, dtype=float)
    out = (a * q_arr) / (a * q_arr + (1.0 - q_arr))
    if np.ndim(out) == 0:
        return float(out)
    return out


def classify(q, cutoff: float):
    """Emergent iff the score strictly exceeds the cutoff; ties go to 0."""
    return (np.asarray(q, dtype=float) > cutoff).astype(np.int64)


@dataclass(frozen=True)
class ShiftContext:
    pi1: float
    prior: PriorSpec
    cost: CostSpec
    a: float
    cutoff: float

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    @classmethod
    def build(cls, prior: PriorSpec, cost: CostSpec, pi1: float | None = None,
              study: Study | None = None) -> "ShiftContext":
        """Assemble the context; ``pi1`` defaults to ``n1/n`` of ``study``."""
        if pi1 is None:
            if study is None:
                raise ValueError("need either pi1 or a study")
            pi1 = study.sample_prior
        a = shift_factor(pi1, prior)
        return cls(pi1=pi1, prior=prior, cost=cost, a=a, cutoff=bayes_cutoff(cost, a))

    def population_posterior(self, q):
        return correct_posterior(q, self.a)

    def classify(self, q):
        return classify(q, self.cutoff)

    def to_dict(self) -> dict:
        return {
            "pi1": self.pi1,
            "p1": self.prior.p1,
            "l0": self.cost.l0,
            "l1": self.cost.l1,
            "a": self.a,
            "bayes_cutoff": self.cutoff,
        }
