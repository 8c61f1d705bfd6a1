"""Stochastic UWB channel model for links inside hurricane-force winds and rain."""
from .analysis import (
    ClusterIdentifier, CleanDeconvolver, ClusterSegmentation, KFactorEstimate, RicianKFactorEstimator,
    clean_deconvolve, compute_pdp, count_significant_mpcs, empirical_attenuation, estimate_k_factor,
    identify_clusters, significant_mpc_profile, static_background_subtract,
)
from .channel import Cir, Pdp, PulseTemplate, ScanWaveform, Tap
from .fitting import (
    ChannelParameterEstimator, DiffusePowerRegressor, FitResult, LargeScaleRegressor, NakagamiEstimator,
    fit_decay_constants, fit_diffuse_power_lse, fit_large_scale, fit_nakagami, fit_poisson_rates, k_to_m,
    lognormal_m_statistics, roundtrip_report,
)
from .params import (
    HurricaneScaling, PathKind, Position, Rain, Scenario, ScenarioParams, builtin_tables, load_params,
    validate,
)
from .synthesis import SynthesisOptions, apply_rain, render_waveform, synthesize_cir, synthesize_ensemble

__version__ = "0.1.0"
