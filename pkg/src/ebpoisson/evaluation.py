"""Risk metrics for posterior-mean rules under finitely supported priors.

Bayes risk of the optimal rule, excess risk (regret) of a plug-in rule,
its in-sample counterpart, and simple prediction error summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core, divergences
from .core import DiscretePrior, EmpiricalPMF


@dataclass(frozen=True)
class PredictionMetrics:
    rmse: float
    mad: float
    n: int

    def __post_init__(self):
        if self.rmse < 0 or self.mad < 0:
            raise ValueError("error metrics must be nonnegative")
        if self.mad > self.rmse * (1 + 1e-12) + 1e-15:
            raise ValueError("mean absolute error cannot exceed the rmse")


@dataclass(frozen=True)
class RegretReport:
    """Excess-risk summary of a fitted prior against the truth."""

    regret: float
    training_regret: float
    mmse_true: float
    hellinger_sq: float

    def __post_init__(self):
        if self.regret < -1e-10 or self.training_regret < -1e-10:
            raise ValueError("regret must be nonnegative")
        if not -1e-12 <= self.hellinger_sq <= 2.0 + 1e-12:
            raise ValueError("squared Hellinger distance must lie in [0, 2]")


def _mixture_pmf_range(prior: DiscretePrior, k: int) -> np.ndarray:
    return np.exp(core.mixture_log_pmf_arrays(
        prior.atom_array(), prior.weight_array(), np.arange(k)))


def mmse(prior: DiscretePrior) -> float:
    """Bayes risk of the posterior-mean rule: E[theta^2] - E[postmean(Y)^2].

    The count series is truncated where the tail mass drops below 1e-12.
    """
    k = core.truncation_point(prior)
    f = _mixture_pmf_range(prior, k + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.arange(1, k + 1) * f[1:] / f[:k]
    good = f[:k] > 0
    second = float(np.sum(np.where(good, f[:k] * np.square(np.where(good, post, 0.0)), 0.0)))
    return max(prior.second_moment() - second, 0.0)


def regret(prior_hat: DiscretePrior, prior_true: DiscretePrior) -> float:
    """Excess Bayes risk of using prior_hat's rule when prior_true generated
    the data: sum_y (postmean_hat(y) - postmean_true(y))^2 f_true(y)."""
    k = core.truncation_point(prior_true)
    ys = np.arange(k)
    f_true = _mixture_pmf_range(prior_true, k)
    d = core.bayes_curve(prior_hat, ys) - core.bayes_curve(prior_true, ys)
    return float(np.sum(d * d * f_true))


def training_regret(prior_hat: DiscretePrior, prior_true: DiscretePrior,
                    sample) -> float:
    """In-sample version of the regret, averaged over an observed sample."""
    emp = sample if isinstance(sample, EmpiricalPMF) else EmpiricalPMF.from_sample(sample)
    ys, ps = emp.support_arrays()
    d = core.bayes_curve(prior_hat, ys) - core.bayes_curve(prior_true, ys)
    return float(np.sum(d * d * ps))


def prediction_metrics(predictions, truths) -> PredictionMetrics:
    """Root-mean-square and mean-absolute error of a prediction vector."""
    pred = np.asarray(predictions, dtype=float)
    true = np.asarray(truths, dtype=float)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValueError("predictions and truths must be matching nonempty vectors")
    err = pred - true
    return PredictionMetrics(rmse=float(np.sqrt(np.mean(err ** 2))),
                             mad=float(np.mean(np.abs(err))), n=pred.size)


def regret_report(prior_hat: DiscretePrior, prior_true: DiscretePrior,
                  sample) -> RegretReport:
    return RegretReport(
        regret=regret(prior_hat, prior_true),
        training_regret=training_regret(prior_hat, prior_true, sample),
        mmse_true=mmse(prior_true),
        hellinger_sq=divergences.hellinger_sq_mixtures(prior_hat, prior_true),
    )
