"""Poisson mixture primitives.

Log-space pmf evaluation, finitely supported mixing distributions, empirical
count tables, the posterior-mean and Robbins estimators, and tail-mass
utilities.  Everything here is deterministic and free of global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import special

WEIGHT_SUM_TOL = 1e-9


class PosteriorUndefinedError(ValueError):
    """Posterior mean requested at a count the mixture gives zero mass."""


def _as_int_count(y) -> int:
    yi = int(y)
    if yi != y or yi < 0:
        raise ValueError(f"count must be a nonnegative integer, got {y!r}")
    return yi


@dataclass(frozen=True)
class DiscretePrior:
    """Mixing distribution with finitely many atoms.

    ``atoms`` are strictly increasing nonnegative reals (Poisson means) and
    ``weights`` are strictly positive probabilities summing to one.
    """

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if len(atoms) == 0 or len(atoms) != len(weights):
            raise ValueError("atoms and weights must be nonempty and equal length")
        arr = np.asarray(atoms)
        if not np.all(np.isfinite(arr)) or arr[0] < 0:
            raise ValueError("atoms must be finite and nonnegative")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("atoms must be strictly increasing")
        warr = np.asarray(weights)
        if not np.all(np.isfinite(warr)) or np.any(warr <= 0):
            raise ValueError("weights must be finite and strictly positive")
        if abs(warr.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {warr.sum()!r}, expected 1")

    @classmethod
    def from_points(cls, atoms, weights, drop_tol: float = 0.0) -> "DiscretePrior":
        """Build a prior from unsorted points: sorts atoms, pools weights of
        duplicate atoms, drops weights <= drop_tol and renormalizes."""
        a = np.asarray(atoms, dtype=float)
        w = np.asarray(weights, dtype=float)
        if a.shape != w.shape or a.ndim != 1 or a.size == 0:
            raise ValueError("atoms and weights must be matching 1-d arrays")
        order = np.argsort(a, kind="stable")
        a, w = a[order], w[order]
        ua, inverse = np.unique(a, return_inverse=True)
        uw = np.zeros_like(ua)
        np.add.at(uw, inverse, w)
        keep = uw > drop_tol
        if not keep.any():
            raise ValueError("no atoms left after dropping small weights")
        ua, uw = ua[keep], uw[keep]
        return cls(tuple(ua), tuple(uw / uw.sum()))

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def max_atom(self) -> float:
        return self.atoms[-1]

    def atom_array(self) -> np.ndarray:
        return np.asarray(self.atoms, dtype=float)

    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def mean(self) -> float:
        return float(np.dot(self.atom_array(), self.weight_array()))

    def second_moment(self) -> float:
        return float(np.dot(self.atom_array() ** 2, self.weight_array()))

    def variance(self) -> float:
        return max(self.second_moment() - self.mean() ** 2, 0.0)


@dataclass(frozen=True)
class EmpiricalPMF:
    """Empirical pmf of an observed count sample.

    ``counts`` maps each observed value y to its multiplicity N(y) > 0 and
    ``n`` is the sample size, so p(y) = N(y) / n.  Multiplicities are
    integers for real samples; fractional values are accepted so exact pmfs
    can be fed through the same interface (with n = 1).
    """

    counts: Mapping
    n: float

    def __post_init__(self):
        items = {}
        for y, c in dict(self.counts).items():
            yi = _as_int_count(y)
            cf = float(c)
            if not math.isfinite(cf) or cf <= 0:
                raise ValueError(f"count multiplicity for y={yi} must be positive")
            items[yi] = cf
        if not items:
            raise ValueError("empirical pmf needs at least one observed value")
        total = math.fsum(items.values())
        if abs(total - self.n) > 1e-9 * max(1.0, abs(self.n)):
            raise ValueError(f"multiplicities sum to {total}, expected n={self.n}")
        object.__setattr__(self, "counts", dict(sorted(items.items())))
        object.__setattr__(self, "n", float(self.n))

    @classmethod
    def from_sample(cls, sample: Iterable) -> "EmpiricalPMF":
        values = [_as_int_count(y) for y in sample]
        if not values:
            raise ValueError("sample is empty")
        counts: dict = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        return cls(counts, len(values))

    @classmethod
    def from_probabilities(cls, ys, probs) -> "EmpiricalPMF":
        """Exact pmf support: probabilities summing to one, stored with n=1."""
        return cls(dict(zip(ys, probs)), 1.0)

    @property
    def support(self) -> tuple:
        return tuple(self.counts.keys())

    @property
    def y_min(self) -> int:
        return next(iter(self.counts))

    @property
    def y_max(self) -> int:
        return next(reversed(self.counts))

    def count(self, y: int) -> float:
        return self.counts.get(y, 0)

    def probability(self, y: int) -> float:
        return self.counts.get(y, 0.0) / self.n

    def support_arrays(self):
        ys = np.array(list(self.counts.keys()), dtype=int)
        ps = np.array(list(self.counts.values()), dtype=float) / self.n
        return ys, ps


def poisson_log_pmf(theta: float, y: int) -> float:
    """log of the Poisson(theta) pmf at y, with exp(-inf) == 0 conventions.

    theta == 0 is the degenerate-at-zero limit: log pmf is 0 at y == 0 and
    -inf for y > 0.
    """
    th = float(theta)
    if not math.isfinite(th) or th < 0:
        raise ValueError(f"theta must be finite and nonnegative, got {theta!r}")
    yi = _as_int_count(y)
    if th == 0.0:
        return 0.0 if yi == 0 else -math.inf
    return yi * math.log(th) - th - math.lgamma(yi + 1.0)


def log_pmf_matrix(ys, thetas) -> np.ndarray:
    """Matrix of log Poisson pmfs, shape (len(ys), len(thetas))."""
    th = np.asarray(thetas, dtype=float)[None, :]
    yy = np.asarray(ys, dtype=float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = yy * np.log(th) - th - special.gammaln(yy + 1.0)
    zero = np.broadcast_to(th == 0.0, out.shape)
    if zero.any():
        at_zero = np.where(np.broadcast_to(yy == 0.0, out.shape), 0.0, -np.inf)
        out = np.where(zero, at_zero, out)
    return out


def mixture_log_pmf_arrays(atoms, weights, ys) -> np.ndarray:
    """log f_G(y) for each y, where f_G is the mixture with the given atoms."""
    logf = log_pmf_matrix(ys, atoms)
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        return special.logsumexp(logf, axis=1, b=w[None, :])


def mixture_pmf(prior: DiscretePrior, y: int) -> float:
    """Marginal pmf of the count under the mixture defined by ``prior``."""
    _as_int_count(y)
    lf = mixture_log_pmf_arrays(prior.atom_array(), prior.weight_array(), [y])
    return float(np.exp(lf[0]))


def bayes_estimate(prior: DiscretePrior, y: int) -> float:
    """Posterior mean of theta given Y = y under the mixture prior.

    Equals (y+1) * f_G(y+1) / f_G(y); raises PosteriorUndefinedError when
    f_G(y) == 0 (a point mass at zero observed with y > 0).
    """
    yi = _as_int_count(y)
    lf = mixture_log_pmf_arrays(prior.atom_array(), prior.weight_array(), [yi, yi + 1])
    if lf[0] == -np.inf:
        raise PosteriorUndefinedError(f"mixture pmf vanishes at y={yi}")
    val = (yi + 1) * math.exp(lf[1] - lf[0])
    return float(min(max(val, prior.atoms[0]), prior.atoms[-1]))


def bayes_curve(prior: DiscretePrior, ys) -> np.ndarray:
    """Vectorized posterior mean over an array of counts."""
    ys = np.asarray(ys, dtype=int)
    if ys.size == 0:
        return np.zeros(0)
    if np.any(ys < 0):
        raise ValueError("counts must be nonnegative")
    atoms, weights = prior.atom_array(), prior.weight_array()
    lf = mixture_log_pmf_arrays(atoms, weights, ys)
    lf1 = mixture_log_pmf_arrays(atoms, weights, ys + 1)
    if np.any(lf == -np.inf):
        bad = int(ys[np.argmax(lf == -np.inf)])
        raise PosteriorUndefinedError(f"mixture pmf vanishes at y={bad}")
    vals = (ys + 1.0) * np.exp(lf1 - lf)
    return np.clip(vals, prior.atoms[0], prior.atoms[-1])


def robbins_estimate(emp: EmpiricalPMF, y: int) -> float:
    """Count-ratio plug-in rule (y+1) N(y+1) / N(y), with max(N(y), 1) in the
    denominator so unseen counts yield finite values."""
    yi = _as_int_count(y)
    return (yi + 1) * emp.count(yi + 1) / max(emp.count(yi), 1)


def tail_mass(prior: DiscretePrior, k: int) -> float:
    """P[Y >= k] under the mixture; k = 0 gives exactly 1."""
    ki = int(k)
    if ki != k or ki < 0:
        raise ValueError("k must be a nonnegative integer")
    if ki == 0:
        return 1.0
    # P[Poisson(theta) >= k] is the regularized lower incomplete gamma P(k, theta)
    tails = special.gammainc(float(ki), prior.atom_array())
    return float(np.dot(prior.weight_array(), tails))


def truncation_point(prior: DiscretePrior, tol: float = 1e-12) -> int:
    """Smallest K with tail_mass(prior, K) <= tol, capped at
    max(10 * max atom, 200)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    cap = int(max(10.0 * prior.max_atom, 200.0))
    if tail_mass(prior, cap) > tol:
        return cap
    lo, hi = 0, cap  # tail(lo) > tol >= tail(hi)
    if tail_mass(prior, lo) <= tol:
        return 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_mass(prior, mid) <= tol:
            hi = mid
        else:
            lo = mid
    return hi
