"""Multicell massive-MIMO simulation with low-rank angular-support channel
covariances, low-dimensional MMSE processing, ergodic-rate bounds, and
random-matrix deterministic equivalents for cross-validation."""

from .covmodel import (
    CorrelationModel,
    CovarianceProfile,
    EigenProfile,
    NetworkScenario,
    PilotScheme,
    Regime,
    ScenarioConfig,
    build_network,
    eigen_profile,
    sample_partial_fourier,
    sample_partial_unitary,
    stream,
)
from .channel import (
    ChannelBlock,
    angular_overlap,
    cross_channel,
    despread,
    realize_block,
    spread,
)
from .training import (
    ChannelEstimate,
    EstimatorBank,
    fulldim_mmse_estimate,
    mmse_estimate,
    observe_nonorthogonal,
    observe_orthogonal,
)
from .beamform import matched_filter, mmse_combiner, mmse_precoder
from .detequiv import (
    DetEquivProblem,
    DetEquivSolution,
    concentration_check,
    sinr_mf_detequiv,
    sinr_mmse_detequiv,
    solve_fixed_point,
    solve_primed,
)
from .bounds import (
    RateReport,
    alt_rate,
    asymptotic_capacity,
    coherent_rate_ul,
    cutset_upper,
    legacy_scaling,
    noncoherent_rate,
    run_bounds,
)
from .harness import (
    ExperimentSpec,
    ResultTable,
    load_config,
    reproduce_figure,
    run_experiment,
    write_results,
)

__version__ = "0.1.0"
