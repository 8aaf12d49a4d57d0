"""Equivalent model of low-resolution ADCs with noisy input and ADC-array metrics."""

__version__ = "0.1.0"

from .errors import ConsistencyError, DegenerateInputError, NoSolutionError, RankError
from .quantizer import QuantizerSpec, make_quantizer, quantize, quantize_complex
from .equiv_model import (
    EquivalentStats,
    OperatingPoint,
    QuadratureGrid,
    bussgang_gain,
    decompose,
    direct_moments,
    energy_V,
    energy_V_numeric,
    equiv_noise_var,
    monte_carlo_stats,
    nld_var,
    output_power,
    small_signal_limits,
    transfer_F,
    transfer_F_numeric,
)
from .metrics import (
    ScaledPoint,
    adc_output_metrics,
    cumulative_sinad,
    effective_antenna_count,
    min_nf,
    nf_curve,
    nf_max,
    optimal_sf,
    resolution_for,
    small_signal_nf,
    snr_threshold,
)
from .mimo_sim import (
    ArrayConfig,
    ber_sim,
    degradation_onset_db,
    empirical_nf,
    los_channel,
    mmse_estimate,
    mrc_estimate,
    nld_coherence_probe,
    simulate_snapshot,
    zf_estimate,
)
