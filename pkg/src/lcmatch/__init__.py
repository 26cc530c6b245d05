"""Lumped LC impedance matching for high-impedance quantum devices.

Circuit models, parameter fitting from reflectometry and hanger sweeps,
shot-noise calibration, sweep-map I/O and synthetic ground-truth data.
"""

from .circuit_model import (
    CircuitParams,
    DerivedQuantities,
    Load,
    characteristic_impedance,
    hanger_s21,
    input_impedance,
    integrated_transfer,
    match_condition_zc,
    matching_conductance,
    min_external_q,
    quality_factors,
    reflection_coefficient,
    resonance_frequency,
    transfer_function_approx,
    transfer_function_exact,
    vna_reflectance,
)
from .errors import (
    ApproximationDomainError,
    ConfigError,
    DomainError,
    FitError,
    GridFormatError,
    InitializationError,
    LcmatchError,
    NoMatchError,
    QuadratureError,
    RankDeficiencyError,
    ShapeError,
)
from .fitting import ScatterDataset, augment_near_match, fit_hanger_sweep, fit_scatter_fixed_frequency
from .lsq import FitConfig, FitResult
from .maps_io import SweepGrid, conductance_from_reflectance, differential_conductance, extract_cut, load_grid, save_grid
from .noise_cal import E_CHARGE, FanoMask, NoiseChain, calibrate_map, excess_current_noise, fano_factor

__version__ = "0.1.0"
