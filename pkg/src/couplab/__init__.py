"""Classifier-confidence guided diffusion purification on Gaussian-mixture data.

The library is split by concern:

* :mod:`couplab.sde` - VP schedule, time grids, counter-based noise, Euler-Maruyama
* :mod:`couplab.mixture` - Gaussian mixtures with closed-form diffused scores
* :mod:`couplab.classifiers` - Bayes, noisy-sine and logistic classifiers
* :mod:`couplab.purify` - guided reverse-time purification and baselines
* :mod:`couplab.adjoint` - pathwise gradients through the discrete solver
* :mod:`couplab.attacks` - PGD with EOT and BPDA
* :mod:`couplab.harness` - experiments, configs, CSV output and the CLI
"""

__version__ = "0.1.0"

from .attacks import AdvResult, AttackSpec, pgd
from .classifiers import (
    BayesClassifier,
    LogisticClassifier,
    NoisySineClassifier,
    confidence,
    fit_logistic,
    grad_log_max_conf,
    hess_log_max_conf_vp,
)
from .errors import ConfigError, CouplabError, DomainError, FitError, IntegrationError, ReplayError
from .mixture import GaussianMixture, log_density, responsibilities, sample, score_at, score_jvp
from .purify import (
    Defense,
    GuidanceSpec,
    PurifyResult,
    PurifySpec,
    confidence_trace,
    coup_purify,
    diffpure_purify,
    reverse_purify,
)
from .adjoint import augmented_solve, fd_pathwise_grad
from .sde import (
    NoiseDriver,
    Schedule,
    TimeGrid,
    Trajectory,
    alpha_of,
    beta_at,
    euler_maruyama,
    gamma_of,
    linear_reverse_stats,
)

__all__ = [
    "__version__",
    "AdvResult",
    "AttackSpec",
    "pgd",
    "BayesClassifier",
    "LogisticClassifier",
    "NoisySineClassifier",
    "confidence",
    "fit_logistic",
    "grad_log_max_conf",
    "hess_log_max_conf_vp",
    "ConfigError",
    "CouplabError",
    "DomainError",
    "FitError",
    "IntegrationError",
    "ReplayError",
    "GaussianMixture",
    "log_density",
    "responsibilities",
    "sample",
    "score_at",
    "score_jvp",
    "Defense",
    "GuidanceSpec",
    "PurifyResult",
    "PurifySpec",
    "confidence_trace",
    "coup_purify",
    "diffpure_purify",
    "reverse_purify",
    "augmented_solve",
    "fd_pathwise_grad",
    "NoiseDriver",
    "Schedule",
    "TimeGrid",
    "Trajectory",
    "alpha_of",
    "beta_at",
    "euler_maruyama",
    "gamma_of",
    "linear_reverse_stats",
]
