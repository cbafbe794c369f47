"""Distances between an observed pmf and a candidate mixture pmf.

Each distance decomposes as  dist(p || f) = t(p) + sum_y ell(p(y), f(y))
with ell(0, b) = 0, so only the support of p ever enters the sum.  The
module ships the three instances used throughout: Kullback-Leibler,
squared Hellinger, and chi-squared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import core

DENSITY_FLOOR = 1e-300


def _kl_ell(a, b):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * (np.log(a) - np.log(b))
    return np.where(a > 0, out, 0.0)


def _kl_ell_db(a, b):
    return -np.asarray(a, dtype=float) / np.asarray(b, dtype=float)


def _kl_ell_d2b(a, b):
    return np.asarray(a, dtype=float) / np.asarray(b, dtype=float) ** 2


def _hel_ell(a, b):
    return -2.0 * np.sqrt(np.asarray(a, dtype=float) * np.asarray(b, dtype=float))


def _hel_ell_db(a, b):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.sqrt(a / np.asarray(b, dtype=float))
    return np.where(a > 0, out, 0.0)


def _hel_ell_d2b(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * np.sqrt(a) * b ** -1.5
    return np.where(a > 0, out, 0.0)


def _chi2_ell(a, b):
    return np.asarray(a, dtype=float) ** 2 / np.asarray(b, dtype=float)


def _chi2_ell_db(a, b):
    return -(np.asarray(a, dtype=float) / np.asarray(b, dtype=float)) ** 2


def _chi2_ell_d2b(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 2.0 * a ** 2 / b ** 3


@dataclass(frozen=True)
class DistanceSpec:
    """A distance in t + sum-of-ell form.

    ``ell(a, b)`` is the per-count loss, strictly decreasing and strictly
    convex in b for a > 0 and identically 0 at a == 0; ``ell_db`` and
    ``ell_d2b`` are its first and second derivatives in b.  ``t_const`` is
    the prior-independent offset t(p) (constant for all three instances).
    """

    name: str
    t_const: float
    ell: Callable
    ell_db: Callable
    ell_d2b: Callable


KL = DistanceSpec("kl", 0.0, _kl_ell, _kl_ell_db, _kl_ell_d2b)
HELLINGER_SQ = DistanceSpec("h2", 2.0, _hel_ell, _hel_ell_db, _hel_ell_d2b)
CHI_SQ = DistanceSpec("chi2", -1.0, _chi2_ell, _chi2_ell_db, _chi2_ell_d2b)

DISTANCES = {d.name: d for d in (KL, HELLINGER_SQ, CHI_SQ)}


def get_distance(name: str) -> DistanceSpec:
    try:
        return DISTANCES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown distance {name!r}; expected one of {sorted(DISTANCES)}")


def ell_derivative(spec: DistanceSpec, a: float, f: float) -> float:
    """d ell / d f at the point (a, f); the weight each support count gets in
    the solver's optimality conditions."""
    a = float(a)
    f = float(f)
    if a < 0:
        raise ValueError("observed probability must be nonnegative")
    if a == 0:
        return 0.0
    if f <= 0:
        raise ValueError("mixture pmf must be positive where the data has mass")
    return float(spec.ell_db(a, f))


def eval_distance(spec: DistanceSpec, emp: core.EmpiricalPMF, prior: core.DiscretePrior) -> float:
    """dist(p_emp || f_prior) = t + sum over the support of p of ell(p, f).

    The mixture pmf is floored at 1e-300 before logs/divisions so degenerate
    priors produce huge finite values rather than infinities.
    """
    ys, ps = emp.support_arrays()
    f = np.exp(core.mixture_log_pmf_arrays(prior.atom_array(), prior.weight_array(), ys))
    f = np.maximum(f, DENSITY_FLOOR)
    val = spec.t_const + float(np.sum(spec.ell(ps, f)))
    return max(val, 0.0)


def hellinger_sq_mixtures(prior1: core.DiscretePrior, prior2: core.DiscretePrior) -> float:
    """Squared Hellinger distance between two mixture pmfs, summed out to
    where both tails are below 1e-12 (the neglected part is at most 2e-12)."""
    k = max(core.truncation_point(prior1), core.truncation_point(prior2))
    ys = np.arange(k)
    f1 = np.exp(core.mixture_log_pmf_arrays(prior1.atom_array(), prior1.weight_array(), ys))
    f2 = np.exp(core.mixture_log_pmf_arrays(prior2.atom_array(), prior2.weight_array(), ys))
    val = float(np.sum((np.sqrt(f1) - np.sqrt(f2)) ** 2))
    return min(max(val, 0.0), 2.0)
