"""Spectral simulator and verification suite for mean-field oscillator dephasing."""

__version__ = "0.1.0"

from .config import RunConfig, config_from_dict, load_config
from .core import (
    ConfigError,
    DatumError,
    EtaGrid,
    Gaussian,
    InitialDatum,
    Lorentzian,
    MixedField,
    NumericalError,
    OmegaGrid,
    OrderSample,
    OrderSeries,
    SpectralField,
    Tabulated,
    evaluate_spectral_at,
    make_initial_field,
    mixed_to_spectral,
    spectral_trajectory,
)
from .norms import (
    WeightParams,
    beta,
    bracket,
    bracket2,
    norm_lambda_p,
    r_lambda_p,
    triple_norm_R,
    triple_norm_h,
    weight_A,
)
from .solver import apply_L, order_parameter, reconstruct_f, run, step_rk4

__all__ = [
    "ConfigError",
    "DatumError",
    "EtaGrid",
    "Gaussian",
    "InitialDatum",
    "Lorentzian",
    "MixedField",
    "NumericalError",
    "OmegaGrid",
    "OrderSample",
    "OrderSeries",
    "RunConfig",
    "SpectralField",
    "Tabulated",
    "WeightParams",
    "apply_L",
    "beta",
    "bracket",
    "bracket2",
    "config_from_dict",
    "evaluate_spectral_at",
    "load_config",
    "make_initial_field",
    "mixed_to_spectral",
    "norm_lambda_p",
    "order_parameter",
    "r_lambda_p",
    "reconstruct_f",
    "run",
    "spectral_trajectory",
    "step_rk4",
    "triple_norm_R",
    "triple_norm_h",
    "weight_A",
]
