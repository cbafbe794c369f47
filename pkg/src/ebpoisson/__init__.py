"""Empirical-Bayes estimation for Poisson count data.

Fits a discrete mixing distribution to observed counts by minimizing a
distance between the empirical count frequencies and the implied Poisson
mixture, then predicts each unit's rate by the posterior mean under the
fitted prior.  Supported distances: KL (maximum likelihood), squared
Hellinger, and chi-square.
"""

from .core import (
    DiscretePrior,
    EmpiricalPMF,
    PosteriorUndefinedError,
    bayes_curve,
    bayes_estimate,
    mixture_pmf,
    poisson_log_pmf,
    robbins_estimate,
    tail_mass,
    truncation_point,
)
from .dataio import (
    DataError,
    PairedSeasonRow,
    PairedSeasonsDataset,
    PriorDocument,
    read_counts_csv,
    read_paired_seasons_csv,
    read_prior_document,
    write_predictions_csv,
    write_prior_document,
)
from .divergences import (
    CHI_SQ,
    DISTANCES,
    HELLINGER_SQ,
    KL,
    DistanceSpec,
    eval_distance,
    get_distance,
    hellinger_sq_mixtures,
)
from .evaluation import (
    PredictionMetrics,
    RegretReport,
    mmse,
    prediction_metrics,
    regret,
    regret_report,
    training_regret,
)
from .simulate import (
    RNG_ALGORITHM,
    AbsGaussianMixturePrior,
    ExperimentResult,
    ExponentialPrior,
    FiniteDiscretePrior,
    GammaPrior,
    MethodResult,
    PointMassPrior,
    PoissonMixturePrior,
    UniformPrior,
    parse_prior_spec,
    run_hellinger_experiment,
    run_regression_experiment,
    run_regret_experiment,
    sample_counts,
    sample_thetas,
)
from .solver import (
    Certificate,
    FitResult,
    SolverConfig,
    SolverError,
    WeightOptConfig,
    brute_force_fit,
    first_order_certificate,
    fit,
    merge_atoms,
    optimize_weights,
    support_roots,
    worst_case_prior,
)

__version__ = "0.1.0"

__all__ = [
    "AbsGaussianMixturePrior",
    "CHI_SQ",
    "Certificate",
    "DISTANCES",
    "DataError",
    "DiscretePrior",
    "DistanceSpec",
    "EmpiricalPMF",
    "ExperimentResult",
    "ExponentialPrior",
    "FiniteDiscretePrior",
    "FitResult",
    "GammaPrior",
    "HELLINGER_SQ",
    "KL",
    "MethodResult",
    "PairedSeasonRow",
    "PairedSeasonsDataset",
    "PointMassPrior",
    "PoissonMixturePrior",
    "PosteriorUndefinedError",
    "PredictionMetrics",
    "PriorDocument",
    "RNG_ALGORITHM",
    "RegretReport",
    "SolverConfig",
    "SolverError",
    "UniformPrior",
    "WeightOptConfig",
    "bayes_curve",
    "bayes_estimate",
    "brute_force_fit",
    "eval_distance",
    "first_order_certificate",
    "fit",
    "get_distance",
    "hellinger_sq_mixtures",
    "merge_atoms",
    "mixture_pmf",
    "mmse",
    "optimize_weights",
    "parse_prior_spec",
    "poisson_log_pmf",
    "prediction_metrics",
    "read_counts_csv",
    "read_paired_seasons_csv",
    "read_prior_document",
    "regret",
    "regret_report",
    "robbins_estimate",
    "run_hellinger_experiment",
    "run_regression_experiment",
    "run_regret_experiment",
    "sample_counts",
    "sample_thetas",
    "support_roots",
    "tail_mass",
    "training_regret",
    "truncation_point",
    "worst_case_prior",
    "write_predictions_csv",
    "write_prior_document",
]
