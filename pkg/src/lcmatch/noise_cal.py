"""Noise-power calibration into device current noise, Schottky noise and Fano factor.

The measured current-dependent noise power obeys::

    <dP> = S_I * R^2 / Z0 * g * integral_BW |t_V(f)|^2 df + <dP0>

with ``g`` the linear power gain of the amplification chain. Gains are
given in power decibels (``10 log10``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .circuit_model import CircuitParams, integrated_transfer
from .errors import ConfigError, DomainError
from .maps_io import Region, SweepGrid, require_same_axes

#: Elementary charge, exact in the 2019 SI.
E_CHARGE = 1.602176634e-19


@dataclass(frozen=True)
class NoiseChain:
    """Amplification chain and detection band.

    Attributes:
        gain_db: Overall power gain in dB.
        band_center: Centre of the integration band in Hz.
        bandwidth: Width of the integration band in Hz.
        line_impedance: Z0 in ohms.
        averaging_count: Number of averaged acquisitions per retained value.
    """

    gain_db: float
    band_center: float
    bandwidth: float
    line_impedance: float = 50.0
    averaging_count: int = 1

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be > 0")
        if not self.band_center - 0.5 * self.bandwidth > 0:
            raise DomainError("band must lie at positive frequencies")
        if self.averaging_count < 1:
            raise DomainError("averaging_count must be >= 1")
        if not self.line_impedance > 0:
            raise DomainError("line_impedance must be > 0")

    @property
    def gain_linear(self):
        return 10.0 ** (self.gain_db / 10.0)

    @classmethod
    def from_dict(cls, d):
        return cls(
            gain_db=float(d["gain_db"]),
            band_center=float(d["band_center"]),
            bandwidth=float(d["bandwidth"]),
            line_impedance=float(d.get("line_impedance", 50.0)),
            averaging_count=int(d.get("averaging_count", 1)),
        )

    def to_dict(self):
        return {
            "gain_db": self.gain_db,
            "band_center": self.band_center,
            "bandwidth": self.bandwidth,
            "line_impedance": self.line_impedance,
            "averaging_count": self.averaging_count,
        }


@dataclass(frozen=True)
class NoisePoint:
    measured_power: float
    background_power: float
    dc_current: float
    conductance: float

    def __post_init__(self):
        if self.measured_power < 0 or self.background_power < 0:
            raise DomainError("noise powers must be >= 0")


@dataclass(frozen=True)
class FanoMask:
    """Fano values are masked below ``current_floor`` or above ``fano_ceiling``."""

    current_floor: float = 5e-12
    fano_ceiling: float = 10.0

    def __post_init__(self):
        if not (self.current_floor > 0 and self.fano_ceiling > 0):
            raise DomainError("current_floor and fano_ceiling must be > 0")


class _Masked:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MASKED"

    def __float__(self):
        raise TypeError("a masked value has no float value")


#: Marker returned for discarded Fano values.
MASKED = _Masked()


def power_per_current_noise(chain: NoiseChain, params: CircuitParams, conductance, exact=False):
    """Noise power per unit current noise, ``R^2/Z0 * g * integral |t_V|^2``, in W/(A^2/Hz).

    Evaluated with the local conductance; ``conductance`` may be an array.
    """
    g = np.asarray(conductance, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("conductance must be > 0 (finite device resistance)")
    if params.line_impedance != chain.line_impedance:
        raise ConfigError("circuit and noise chain disagree on the line impedance")
    band = integrated_transfer(params, g, chain.band_center, chain.bandwidth, exact=exact)
    k = chain.gain_linear * band / (chain.line_impedance * g * g)
    if np.any(~(k > 0)):
        raise ArithmeticError("integrated transfer vanished; cannot calibrate")
    return k


def noise_power(s_i, background, conductance, chain, params, exact=False):
    """Forward model: measured noise power for current noise ``s_i``."""
    return np.asarray(s_i) * power_per_current_noise(chain, params, conductance, exact) + background


def excess_current_noise(point: NoisePoint, chain: NoiseChain, params: CircuitParams, exact=False) -> float:
    """Current noise S_I in A^2/Hz from a measured power; negative values are kept."""
    if not point.conductance > 0:
        raise DomainError("excess current noise needs G > 0 (R finite)")
    k = float(power_per_current_noise(chain, params, point.conductance, exact))
    return (point.measured_power - point.background_power) / k


def voltage_noise_from_current(s_i, resistance):
    if not np.all(np.asarray(resistance) > 0):
        raise DomainError("resistance must be > 0")
    return np.asarray(resistance) ** 2 * s_i


def schottky_noise(current):
    """Full shot noise ``2 e |I|`` in A^2/Hz."""
    return 2.0 * E_CHARGE * np.abs(current)


def fano_factor(s_i, current, mask: FanoMask = FanoMask()):
    """``S_I / (2e|I|)``, or :data:`MASKED` for small currents or values above the ceiling."""
    if abs(current) < mask.current_floor:
        return MASKED
    f = s_i / float(schottky_noise(current))
    if not math.isfinite(f) or f > mask.fano_ceiling:
        return MASKED
    return f


def fano_array(s_i, current, mask: FanoMask = FanoMask()):
    """Vectorized :func:`fano_factor`: returns ``(values, masked)`` with NaN at masked cells."""
    s_i = np.asarray(s_i, dtype=float)
    current = np.asarray(current, dtype=float)
    small = ~(np.abs(current) >= mask.current_floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = s_i / schottky_noise(current)
    masked = small | ~np.isfinite(f) | (f > mask.fano_ceiling)
    return np.where(masked, np.nan, f), masked


def estimate_background(power_map: SweepGrid, region: Region, per_gate=False):
    """Median noise power over a deep-blockade region.

    With ``per_gate`` the median is taken per gate row and an array (NaN for
    rows without region cells) is returned.
    """
    sel = region.cells(power_map) & ~power_map.mask
    if not sel.any():
        raise DomainError("blockade region contains no unmasked map cells")
    if not per_gate:
        return float(np.median(power_map.values[sel]))
    out = np.full(power_map.gate_axis.size, np.nan)
    for i in range(out.size):
        row = sel[i]
        if row.any():
            out[i] = np.median(power_map.values[i, row])
    return out


class CalibratedMaps(NamedTuple):
    s_i: SweepGrid
    schottky: SweepGrid
    fano: SweepGrid


def default_workers():
    """Worker count from ``LCMATCH_THREADS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get("LCMATCH_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LCMATCH_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("LCMATCH_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def calibrate_map(
    power_map: SweepGrid,
    current_map: SweepGrid,
    conductance_map: SweepGrid,
    chain: NoiseChain,
    params: CircuitParams,
    mask: FanoMask = FanoMask(),
    background=None,
    blockade_region: Optional[Region] = None,
    per_gate_background=False,
    exact=False,
    workers: Optional[int] = None,
) -> CalibratedMaps:
    """Pointwise calibration of a noise-power map.

    The background ``<dP0>`` is either given (scalar, or one value per gate row)
    or estimated with :func:`estimate_background` over ``blockade_region``.
    Cells with non-positive conductance are masked in the S_I map; the Fano
    map is additionally masked per ``mask``.
    """
    require_same_axes(power_map, current_map, conductance_map)
    if background is None:
        if blockade_region is None:
            raise ConfigError("give either a background power or a blockade region to estimate it")
        background = estimate_background(power_map, blockade_region, per_gate_background)
    bg = np.asarray(background, dtype=float)
    if bg.ndim == 1:
        if bg.size != power_map.gate_axis.size:
            raise ConfigError("per-gate background needs one value per gate row")
        bg = bg[:, None]
    power = power_map.values
    current = current_map.values
    g = conductance_map.values
    usable = np.isfinite(power) & np.isfinite(current) & (g > 0) & np.isfinite(bg)
    flat_idx = np.flatnonzero(usable)
    k = np.full(power.size, np.nan)

    n_workers = default_workers() if workers is None else max(int(workers), 1)
    g_flat = g.ravel()
    if n_workers == 1 or flat_idx.size < 2 * n_workers:
        k[flat_idx] = power_per_current_noise(chain, params, g_flat[flat_idx], exact)
    else:
        # per-element quadrature makes the result independent of the chunking
        chunks = np.array_split(flat_idx, n_workers)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda c: power_per_current_noise(chain, params, g_flat[c], exact), chunks))
        for c, part in zip(chunks, parts):
            k[c] = part
    k = k.reshape(power.shape)

    with np.errstate(invalid="ignore"):
        s_i = np.where(usable, (power - bg) / k, np.nan)
    fano, fano_masked = fano_array(s_i, current, mask)
    fano_masked |= ~usable
    fano[fano_masked] = np.nan

    meta = {
        "background_power": bg.ravel().tolist() if bg.size > 1 else float(bg),
        "chain": chain.to_dict(),
    }
    s_i_grid = power_map.with_values(s_i, unit="A^2/Hz", mask=~usable, metadata=meta)
    schottky_grid = current_map.with_values(schottky_noise(current), unit="A^2/Hz", metadata={})
    fano_grid = power_map.with_values(
        fano,
        unit="dimensionless",
        mask=fano_masked,
        metadata={
            "current_floor": mask.current_floor,
            "fano_ceiling": mask.fano_ceiling,
            "masked_fraction": float(fano_masked.mean()),
        },
    )
    return CalibratedMaps(s_i_grid, schottky_grid, fano_grid)
