"""Zero-inflated power series count models."""

__version__ = "0.1.0"

from .families import (  # noqa: E402
    DomainError,
    PowerSeriesFamily,
    binomial,
    dispersion_index,
    evaluate_series,
    family_from_name,
    geometric,
    logarithmic,
    moments,
    negative_binomial,
    pmf,
    poisson,
    sample,
)
from .inflated import (  # noqa: E402
    LatentDecomposition,
    ZeroInflatedModel,
    classify_dispersion,
    omega_lower_bound,
    zi_moments,
    zi_pmf,
    zi_sample,
)
from .regression import CoefficientSet, DesignData, link_omega, link_theta, loglik  # noqa: E402
from .mle import CountSummary, MleResult, grid_oracle, mle_nocov, mle_regression  # noqa: E402
from .bayes import ChainSet, McmcConfig, PriorSpec, diagnostics, dic, log_posterior, run_mcmc  # noqa: E402

__all__ = [
    "__version__",
    "DomainError", "PowerSeriesFamily", "binomial", "dispersion_index", "evaluate_series",
    "family_from_name", "geometric", "logarithmic", "moments", "negative_binomial", "pmf",
    "poisson", "sample",
    "LatentDecomposition", "ZeroInflatedModel", "classify_dispersion", "omega_lower_bound",
    "zi_moments", "zi_pmf", "zi_sample",
    "CoefficientSet", "DesignData", "link_omega", "link_theta", "loglik",
    "CountSummary", "MleResult", "grid_oracle", "mle_nocov", "mle_regression",
    "ChainSet", "McmcConfig", "PriorSpec", "diagnostics", "dic", "log_posterior", "run_mcmc",
]
