"""Concurrent losses of two Merton credit portfolios and their copulas."""
from .copula import (
    CopulaHistogram,
    DeviationGrid,
    ZeroVariance,
    average_histograms,
    bivariate_normal_cdf,
    deviation,
    empirical_copula,
    gaussian_copula,
    pearson_correlation,
    rank_transform,
)
from .experiments import (
    ExperimentConfig,
    LossCorrCurve,
    StudyResult,
    loss_pdf,
    run_empirical_study,
    run_heterogeneous_sigma_study,
    run_homogeneous_study,
    run_loss_corr_sweep,
)
from .kernels import BACKEND
from .merton import (
    ContractParams,
    LossPairSample,
    PortfolioSpec,
    asset_value_at_maturity,
    contract_loss,
    portfolio_loss,
    simulate_loss_pairs,
)
from .rng import INFINITY, MarketParams, NotPositiveDefinite, StreamKey, cholesky_factor

__version__ = "0.1.0"
