"""Sideband thermometry of trapped-ion crystals.

Estimates the mean phonon number of laser-cooled crystal modes from
red/blue sideband excitation data, with the many-body corrected ratio
estimator, exact small-system dynamics oracles, alternative estimators,
and the statistical machinery to validate them.
"""

__version__ = "0.1.0"

from .coefficients import CoefficientSet, coefficient_set, power_sums, string_expectation
from .crystal import (
    ChainConfig,
    ModeSpec,
    chain_modes,
    com_mode,
    equilibrium_positions,
    load_mode_file,
    make_mode_spec,
    save_mode_file,
)
from .dynamics import (
    PropagationResult,
    SidebandKind,
    SidebandPropagator,
    bichromatic_excitation,
    com_dicke_flop,
    exact_flop,
    probability_oracle,
)
from .errors import (
    AmbiguousRootError,
    BracketEdgeError,
    ConvergenceError,
    DegenerateSidebandsError,
    DimensionCapError,
    IcctError,
    InstabilityError,
    NoAdmissibleRootError,
    NoUsableRecordsError,
    UninformativeDataError,
    ValidationError,
)
from .estimators import (
    EstimateReport,
    FitResult,
    SidebandRecord,
    bichromatic_crb,
    crb_curves,
    estimate_bichromatic,
    estimate_sideband_ratio,
    fisher_binary,
    fit_estimator,
    weighted_linear_fit,
    weighted_mean,
)
from .ratio import (
    EstimateAtTime,
    RatioPolynomial,
    crystal_bias,
    crystal_variance,
    single_ion_bias,
    single_ion_flops,
    single_ion_variance,
    thermal_nmax,
    thermal_pn,
)
from .sampling import (
    CampaignConfig,
    CutoffResult,
    cutoff_time,
    naive_vs_global_demo,
    sample_campaign,
    validate_estimator_moments,
)
