"""Universal decoding for Gaussian intersymbol-interference channels.

Frequency-domain universal decoder, maximum-likelihood baselines, the
shell-truncated Gaussian ensemble and a Monte Carlo harness for comparing
their error rates.
"""

from .channel import ChannelParams, InterferenceModel, cosine_basis, transmit, transmit_with_interference
from .decoder import (
    ML,
    BackwardParams,
    DecoderVerdict,
    Universal,
    UniversalInterference,
    decode,
    delta_error_event,
    fit_backward,
    fit_backward_with_interference,
    max_log_V,
    universal_metric,
)
from .ensemble import Codebook, EnsembleConfig, generate_codebook, log_mu_unnormalized, sample_codeword
from .errors import (
    AsymmetricSpectrumError,
    ConfigError,
    DegenerateFitError,
    NumericalDegeneracy,
    SamplingExhausted,
    SingularSystemError,
    UnidecError,
    ZeroHitError,
)
from .harness import ExperimentConfig, exponent_sweep, run_experiment, run_trial
from .results import ExperimentResult, emit_results, parse_results
from .spectral import ToeplitzOperator, dft, idft, szego_gap

__version__ = "0.1.0"
