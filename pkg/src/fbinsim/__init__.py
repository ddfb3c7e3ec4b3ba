"""Frequency-bin entangled photon pairs: interference and Clauser-Horne model."""
from .belltest import (
    TABLE1,
    TABLE1_K,
    BellConfig,
    BellResult,
    Constraint,
    SearchSpec,
    ch_value,
    estimate_k,
    fit_phase_offset,
    normalization_bias,
    optimize_settings,
    s_from_counts,
    s_map,
)
from .interference import (
    FilterSelection,
    ProbabilityTable,
    Scheme,
    coincidence_prob,
    fringe_scan,
    joint_amplitude,
    marginal_prob,
    normalization_deviation,
    pair_amplitudes,
    probability_table,
)
from .modulator import EomCoefficients, EomSetting, bessel_j, eom_coefficients, truncation_order
from .spectrum import (
    ConfigError,
    GaussianEnvelope,
    ModeSpectrum,
    fig1a_spectrum,
    generate_envelope_spectrum,
    load_spectrum,
    normalize,
)
from .stats import CountRecord, propagate_s_error, sample_counts, visibility

__version__ = "0.1.0"
