"""Sampling distributions and replicated experiments.

Prior specifications know how to sample their own mixing values, evaluate
the exact posterior-mean rule, and produce the marginal count pmf, so
experiments can score fitted priors against the truth.  Randomness comes
from the counter-based Philox generator (``philox4x64``); every replicate
derives its generator key from ``seed + replicate_index`` with a separate
stream word per purpose, so runs are reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from . import core
from .core import DiscretePrior, EmpiricalPMF, PosteriorUndefinedError
from .divergences import DISTANCES
from .solver import SolverConfig, SolverError, fit

RNG_ALGORITHM = "philox4x64"

_STREAM_THETA = 0
_STREAM_COUNTS = 1
_STREAM_COEF = 2

_MASK64 = (1 << 64) - 1


def _rng(seed: int, stream: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    key = np.array([seed & _MASK64, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class PointMassPrior:
    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError("point mass must be at a finite nonnegative value")

    def sample(self, rng, n):
        return np.full(n, float(self.value))

    def bayes_values(self, ys):
        return np.full(np.asarray(ys).shape, float(self.value))

    def marginal_pmf(self, ys):
        return np.exp(core.log_pmf_matrix(ys, [self.value])[:, 0])


@dataclass(frozen=True)
class FiniteDiscretePrior:
    atoms: tuple
    weights: tuple

    def __post_init__(self):
        self.as_prior()

    def as_prior(self) -> DiscretePrior:
        return DiscretePrior(self.atoms, self.weights)

    def sample(self, rng, n):
        prior = self.as_prior()
        return rng.choice(prior.atom_array(), size=n, p=prior.weight_array())

    def bayes_values(self, ys):
        return core.bayes_curve(self.as_prior(), ys)

    def marginal_pmf(self, ys):
        prior = self.as_prior()
        return np.exp(core.mixture_log_pmf_arrays(
            prior.atom_array(), prior.weight_array(), ys))


@dataclass(frozen=True)
class UniformPrior:
    low: float
    high: float

    def __post_init__(self):
        if not (0 <= self.low < self.high and math.isfinite(self.high)):
            raise ValueError("need 0 <= low < high")

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, size=n)

    def bayes_values(self, ys):
        ys = np.asarray(ys, dtype=float)
        num = special.gammainc(ys + 2, self.high) - special.gammainc(ys + 2, self.low)
        den = special.gammainc(ys + 1, self.high) - special.gammainc(ys + 1, self.low)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = (ys + 1.0) * num / den
        return np.where(den > 0, vals, self.high)

    def marginal_pmf(self, ys):
        ys = np.asarray(ys, dtype=float)
        span = special.gammainc(ys + 1, self.high) - special.gammainc(ys + 1, self.low)
        return span / (self.high - self.low)


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("shape and scale must be positive")

    def sample(self, rng, n):
        return rng.gamma(self.shape, self.scale, size=n)

    def bayes_values(self, ys):
        # gamma prior is conjugate: posterior mean is linear in the count
        ys = np.asarray(ys, dtype=float)
        return (ys + self.shape) * self.scale / (1.0 + self.scale)

    def marginal_pmf(self, ys):
        ys = np.asarray(ys, dtype=float)
        s = self.scale
        logp = (special.gammaln(ys + self.shape) - special.gammaln(self.shape)
                - special.gammaln(ys + 1.0)
                + self.shape * math.log(1.0 / (1.0 + s))
                + ys * math.log(s / (1.0 + s)))
        return np.exp(logp)


@dataclass(frozen=True)
class ExponentialPrior:
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def _gamma(self):
        return GammaPrior(1.0, self.scale)

    def sample(self, rng, n):
        return rng.exponential(self.scale, size=n)

    def bayes_values(self, ys):
        return self._gamma().bayes_values(ys)

    def marginal_pmf(self, ys):
        return self._gamma().marginal_pmf(ys)


@dataclass(frozen=True)
class PoissonMixturePrior:
    """Mixing value drawn from a mixture of Poisson distributions, so the
    prior itself is supported on the nonnegative integers."""

    means: tuple
    weights: tuple

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        if len(means) != len(weights) or not means:
            raise ValueError("means and weights must be nonempty and equal length")
        if any(m < 0 for m in means) or any(w <= 0 for w in weights):
            raise ValueError("means must be nonnegative and weights positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to one")

    def as_prior(self) -> DiscretePrior:
        return _poisson_mixture_as_prior(self)

    def sample(self, rng, n):
        idx = rng.choice(len(self.means), size=n, p=np.asarray(self.weights))
        return rng.poisson(np.asarray(self.means)[idx]).astype(float)

    def bayes_values(self, ys):
        return core.bayes_curve(self.as_prior(), ys)

    def marginal_pmf(self, ys):
        prior = self.as_prior()
        return np.exp(core.mixture_log_pmf_arrays(
            prior.atom_array(), prior.weight_array(), ys))


@lru_cache(maxsize=None)
def _poisson_mixture_as_prior(spec: PoissonMixturePrior) -> DiscretePrior:
    means = np.asarray(spec.means)
    weights = np.asarray(spec.weights)
    hi = int(np.ceil(means.max() * 10 + 50))
    support = np.arange(hi + 1)
    pmf = np.exp(core.log_pmf_matrix(support, means)) @ weights
    last = int(np.searchsorted(np.cumsum(pmf), 1.0 - 1e-14)) + 1
    pmf = pmf[:last]
    return DiscretePrior(tuple(support[:last].astype(float)), tuple(pmf / pmf.sum()))


@dataclass(frozen=True)
class AbsGaussianMixturePrior:
    """|N(m, sd^2)| with m drawn uniformly from ``means``."""

    means: tuple
    sd: float = 1.0

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if not means or self.sd <= 0:
            raise ValueError("need at least one mean and a positive sd")

    def sample(self, rng, n):
        idx = rng.integers(0, len(self.means), size=n)
        return np.abs(np.asarray(self.means)[idx] + rng.normal(0.0, self.sd, size=n))

    def _log_pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        means = np.asarray(self.means)
        z1 = (theta[..., None] - means) / self.sd
        z2 = (theta[..., None] + means) / self.sd
        dens = (np.exp(-0.5 * z1 ** 2) + np.exp(-0.5 * z2 ** 2)).sum(axis=-1)
        norm = len(self.means) * self.sd * math.sqrt(2.0 * math.pi)
        with np.errstate(divide="ignore"):
            return np.where(theta >= 0, np.log(dens / norm), -np.inf)

    def bayes_values(self, ys):
        ys = np.asarray(ys, dtype=int)
        return np.array([math.exp(_abs_gauss_log_moment(self, int(y) + 1)
                                  - _abs_gauss_log_moment(self, int(y)))
                         for y in ys.ravel()]).reshape(ys.shape)

    def marginal_pmf(self, ys):
        ys = np.asarray(ys, dtype=int)
        vals = [math.exp(_abs_gauss_log_moment(self, int(y)) - special.gammaln(y + 1.0))
                for y in ys.ravel()]
        return np.array(vals).reshape(ys.shape)


@lru_cache(maxsize=None)
def _abs_gauss_log_moment(spec: AbsGaussianMixturePrior, y: int) -> float:
    """log integral of theta^y e^-theta dPrior(theta), by scaled quadrature."""
    upper = max(spec.means) + 10.0 * spec.sd + 3.0 * y + 30.0
    probe = np.linspace(1e-12, upper, 4001)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_vals = y * np.log(probe) - probe + spec._log_pdf(probe)
    peak = float(np.max(log_vals))

    def integrand(t):
        if t <= 0:
            return 0.0
        lv = y * math.log(t) - t + float(spec._log_pdf(np.array([t])))
        return math.exp(lv - peak) if lv - peak > -745 else 0.0

    val, _ = integrate.quad(integrand, 0.0, upper, limit=300,
                            epsabs=1e-300, epsrel=1e-10)
    return peak + math.log(val)


PRIOR_KINDS = {
    "point": PointMassPrior,
    "discrete": FiniteDiscretePrior,
    "uniform": UniformPrior,
    "gamma": GammaPrior,
    "exp": ExponentialPrior,
    "poimix": PoissonMixturePrior,
    "absgauss": AbsGaussianMixturePrior,
}


def parse_prior_spec(text: str):
    """Parse a compact prior description such as ``gamma:4,2`` or
    ``poimix:1=0.2,2=0.3,8=0.5`` into a prior-spec object."""
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()
    if kind not in PRIOR_KINDS or not body:
        raise ValueError(f"cannot parse prior spec {text!r}")
    try:
        if kind == "point":
            return PointMassPrior(float(body))
        if kind == "uniform":
            a, b = (float(x) for x in body.split(","))
            return UniformPrior(a, b)
        if kind == "gamma":
            a, b = (float(x) for x in body.split(","))
            return GammaPrior(a, b)
        if kind == "exp":
            return ExponentialPrior(float(body))
        if kind in ("discrete", "poimix"):
            pairs = [p.split("=") for p in body.split(",")]
            atoms = tuple(float(a) for a, _ in pairs)
            weights = tuple(float(w) for _, w in pairs)
            if kind == "discrete":
                return FiniteDiscretePrior(atoms, weights)
            return PoissonMixturePrior(atoms, weights)
        parts = body.split(",")
        sd = 1.0
        if parts and parts[-1].startswith("sd="):
            sd = float(parts.pop()[3:])
        return AbsGaussianMixturePrior(tuple(float(x) for x in parts), sd)
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot parse prior spec {text!r}") from exc


def describe_prior_spec(spec) -> str:
    kind = {v: k for k, v in PRIOR_KINDS.items()}[type(spec)]
    return f"{kind}{spec}"


def sample_thetas(spec, n: int, seed: int) -> np.ndarray:
    """Draw n mixing values from the prior, on the theta stream of ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return spec.sample(_rng(seed, _STREAM_THETA), n)


def sample_counts(thetas, seed: int) -> np.ndarray:
    """Draw one Poisson count per mixing value, on the count stream of ``seed``."""
    th = np.asarray(thetas, dtype=float)
    if th.size == 0 or np.any(~np.isfinite(th)) or np.any(th < 0):
        raise ValueError("thetas must be finite and nonnegative")
    return _rng(seed, _STREAM_COUNTS).poisson(th)


@dataclass(frozen=True)
class MethodResult:
    mean: float
    sd: float
    half_width: float
    reps_used: int
    failures: int
    samples: tuple


@dataclass(frozen=True)
class ExperimentResult:
    statistic: str
    methods: dict
    config: dict


def _summarize(statistic, per_method_values, per_method_failures, config) -> ExperimentResult:
    methods = {}
    for name, values in per_method_values.items():
        vals = np.asarray(values, dtype=float)
        used = vals.size
        mean = float(vals.mean()) if used else math.nan
        sd = float(vals.std(ddof=1)) if used > 1 else 0.0
        half = 1.96 * sd / math.sqrt(used) if used else math.nan
        methods[name] = MethodResult(mean, sd, half, used,
                                     per_method_failures.get(name, 0), tuple(vals))
    return ExperimentResult(statistic, methods, config)


_FIT_METHODS = tuple(DISTANCES)
_ALL_METHODS = ("robbins",) + _FIT_METHODS


def _check_methods(methods, allowed):
    methods = tuple(methods)
    if not methods:
        raise ValueError("need at least one method")
    for mth in methods:
        if mth not in allowed:
            raise ValueError(f"unknown method {mth!r}; expected ones of {allowed}")
    return methods


def _robbins_values(emp: EmpiricalPMF, ys) -> np.ndarray:
    return np.array([core.robbins_estimate(emp, int(y)) for y in ys])


def run_regret_experiment(spec, n: int, reps: int, methods, seed: int,
                          config: SolverConfig | None = None) -> ExperimentResult:
    """Replicated in-sample regret of each method against the true rule.

    Each replicate draws a fresh sample, fits one prior per distance, and
    averages the squared gap between the fitted and exact posterior-mean
    rules over the sample.  Failed replicates are excluded and counted.
    """
    methods = _check_methods(methods, _ALL_METHODS)
    if reps < 2:
        raise ValueError("need at least two replicates")
    values = {mth: [] for mth in methods}
    failures = {mth: 0 for mth in methods}
    for rep in range(reps):
        rep_seed = seed + rep
        thetas = sample_thetas(spec, n, rep_seed)
        counts = sample_counts(thetas, rep_seed)
        emp = EmpiricalPMF.from_sample(counts)
        ys, ps = emp.support_arrays()
        true_vals = np.asarray(spec.bayes_values(ys), dtype=float)
        for mth in methods:
            try:
                if mth == "robbins":
                    est = _robbins_values(emp, ys)
                else:
                    result = fit(DISTANCES[mth], emp, config)
                    est = core.bayes_curve(result.prior, ys)
                values[mth].append(float(np.sum((est - true_vals) ** 2 * ps)))
            except (SolverError, PosteriorUndefinedError, FloatingPointError):
                failures[mth] += 1
    cfg = {"experiment": "regret", "prior": describe_prior_spec(spec), "n": n,
           "reps": reps, "seed": seed, "rng": RNG_ALGORITHM}
    return _summarize("training_regret", values, failures, cfg)


def run_hellinger_experiment(spec, sizes, reps: int, methods, seed: int,
                             config: SolverConfig | None = None) -> dict:
    """Mean squared Hellinger distance between the true count pmf and the
    fitted mixture pmf, for each sample size.  Returns {size: result}."""
    methods = _check_methods(methods, _FIT_METHODS)
    sizes = tuple(int(s) for s in sizes)
    if reps < 2 or not sizes or min(sizes) < 1:
        raise ValueError("need reps >= 2 and positive sizes")
    out = {}
    for si, size in enumerate(sizes):
        values = {mth: [] for mth in methods}
        failures = {mth: 0 for mth in methods}
        for rep in range(reps):
            rep_seed = seed + si * reps + rep
            thetas = sample_thetas(spec, size, rep_seed)
            counts = sample_counts(thetas, rep_seed)
            emp = EmpiricalPMF.from_sample(counts)
            for mth in methods:
                try:
                    result = fit(DISTANCES[mth], emp, config)
                    values[mth].append(_hellinger_vs_truth(spec, result.prior))
                except (SolverError, PosteriorUndefinedError, FloatingPointError):
                    failures[mth] += 1
        cfg = {"experiment": "hellinger", "prior": describe_prior_spec(spec),
               "n": size, "reps": reps, "seed": seed, "rng": RNG_ALGORITHM}
        out[size] = _summarize("hellinger_sq", values, failures, cfg)
    return out


def _marginal_truncation(spec, tol: float = 1e-12, cap: int = 500) -> int:
    pmf = np.asarray(spec.marginal_pmf(np.arange(cap)), dtype=float)
    csum = np.cumsum(pmf)
    idx = int(np.searchsorted(csum, 1.0 - tol))
    return min(idx + 1, cap)


def _hellinger_vs_truth(spec, prior: DiscretePrior) -> float:
    k = max(core.truncation_point(prior), _marginal_truncation(spec))
    ys = np.arange(k)
    f_true = np.asarray(spec.marginal_pmf(ys), dtype=float)
    f_fit = np.exp(core.mixture_log_pmf_arrays(
        prior.atom_array(), prior.weight_array(), ys))
    return float(np.sum((np.sqrt(f_true) - np.sqrt(f_fit)) ** 2))


_REGRESSION_SPEC = AbsGaussianMixturePrior((2.0, 8.0, 16.0, 32.0), 1.0)


def _ols_rmse(design, response):
    gram = design.T @ design
    moment = design.T @ response
    jittered = False
    try:
        coef = np.linalg.solve(gram, moment)
        if not np.all(np.isfinite(coef)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        jittered = True
        ridge = gram + 1e-8 * np.trace(gram) * np.eye(gram.shape[0])
        coef = np.linalg.solve(ridge, moment)
    resid = design @ coef - response
    return float(np.sqrt(np.mean(resid ** 2))), jittered


def run_regression_experiment(d: int, n: int, reps: int, methods, seed: int,
                              config: SolverConfig | None = None,
                              beta_override=None) -> ExperimentResult:
    """Least-squares recovery with Poisson-noised covariates, with and
    without per-column posterior-mean denoising.

    Each replicate draws an (n, d) matrix of mixing values from the
    absolute-Gaussian mixture, noiseless responses theta @ beta with beta
    uniform on [-5, 5]^d, and covariates X ~ Poisson(theta).  ``raw``
    regresses on X directly; each distance method first replaces every
    column by its fitted posterior-mean values.  Reported statistic is the
    in-sample rmse of the fitted responses.
    """
    methods = _check_methods(methods, _FIT_METHODS)
    if d < 1 or n < 2 or reps < 2:
        raise ValueError("need d >= 1, n >= 2, reps >= 2")
    values = {"raw": []}
    values.update({mth: [] for mth in methods})
    failures = {name: 0 for name in values}
    jitter_events = 0
    for rep in range(reps):
        rep_seed = seed + rep
        thetas = _REGRESSION_SPEC.sample(_rng(rep_seed, _STREAM_THETA), n * d).reshape(n, d)
        counts = _rng(rep_seed, _STREAM_COUNTS).poisson(thetas).astype(float)
        if beta_override is None:
            beta = _rng(rep_seed, _STREAM_COEF).uniform(-5.0, 5.0, size=d)
        else:
            beta = np.asarray(beta_override, dtype=float)
        response = thetas @ beta
        rmse_raw, jit = _ols_rmse(counts, response)
        values["raw"].append(rmse_raw)
        jitter_events += jit
        for mth in methods:
            try:
                filtered = np.empty_like(counts)
                for j in range(d):
                    col = counts[:, j].astype(int)
                    emp = EmpiricalPMF.from_sample(col)
                    result = fit(DISTANCES[mth], emp, config)
                    curve = core.bayes_curve(result.prior, np.arange(col.max() + 1))
                    filtered[:, j] = curve[col]
                rmse_f, jit = _ols_rmse(filtered, response)
                values[mth].append(rmse_f)
                jitter_events += jit
            except (SolverError, PosteriorUndefinedError, FloatingPointError):
                failures[mth] += 1
    cfg = {"experiment": "filter-regress", "prior": describe_prior_spec(_REGRESSION_SPEC),
           "d": d, "n": n, "reps": reps, "seed": seed, "rng": RNG_ALGORITHM,
           "ridge_jitter_events": jitter_events}
    return _summarize("rmse", values, failures, cfg)
