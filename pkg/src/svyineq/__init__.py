"""Design-based income-inequality estimation for complex survey samples.

Point estimators for the Gini index, Atkinson indexes, generalized entropy
measures and the coefficient of variation, with closed-form small-sample bias
corrections, linearization-based design variances, extreme-value treatment,
a design-aware bootstrap and a Monte Carlo evaluation harness.
"""

__version__ = "0.1.0"

from .bias import BiasReport, bias_estimate, corrected_estimate
from .bootstrap import (
    BootstrapResult,
    CalibrationSpec,
    ReplicateWeights,
    bootstrap_resample,
    bootstrap_variance,
    calibrate,
)
from .design import (
    DesignFrame,
    StratumInfo,
    VariancePieces,
    collapse_strata,
    covariance_linear,
    variance_linear,
    variance_pieces,
)
from .errors import (
    BootstrapError,
    CalibrationError,
    ConfigError,
    DegenerateSampleError,
    DesignError,
    DomainError,
    EstimationError,
    SchemaError,
    SimulationError,
    SurveyInequalityError,
    TailError,
)
from .linearize import LinearizedSample, linearize_gamma, linearize_numeric
from .measures import (
    IncomePopulation,
    MeasureSpec,
    ThetaDecomposition,
    WeightedObservation,
    WeightedSample,
    atkinson_from_ge,
    ht_estimate,
    population_value,
    relative_entropy_transform,
)
from .populations import (
    IncomeModelFit,
    PopulationModel,
    fit_income_model,
    generate_population,
)
from .sampling import (
    FramedPopulation,
    assign_probability_weights,
    make_framed_population,
    midzuno_inclusion_probabilities,
    midzuno_sample,
    srs_sample,
    two_stage_sample,
)
from .simulation import (
    EstimatorDistributionFit,
    ScenarioConfig,
    ScenarioReport,
    arb_aare,
    empirical_moments,
    fit_estimator_distribution,
    run_scenario,
    write_report,
)
from .tails import (
    OutlierFlags,
    TailFit,
    detect_outliers,
    fit_pareto_tail,
    treat_sample,
    treat_tails,
)

__all__ = [name for name in dir() if not name.startswith("_")]
