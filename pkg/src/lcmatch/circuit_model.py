"""Lumped-element model of an LC matching circuit loaded by a resistive device.

Topology: the line (impedance ``Z0``) sees a series ``R_loss + L`` branch
followed by the shunt capacitance ``C`` in parallel with the device
conductance ``G``.

All quantities are SI. Functions accept numpy arrays for frequency and
conductance and broadcast them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ApproximationDomainError, DomainError, NoMatchError
from .quadrature import DEFAULT_MAX_DEPTH, DEFAULT_RTOL, adaptive_simpson_batch

TWO_PI = 2.0 * math.pi

#: Zc must be below R / APPROX_RATIO for the on-resonance approximation.
APPROX_RATIO = 5.0


@dataclass(frozen=True)
class CircuitParams:
    """Matching-circuit parameters.

    Attributes:
        inductance: Coil inductance L in henries.
        capacitance: Capacitance to ground C in farads.
        loss_resistance: Effective series loss R_loss in ohms.
        line_impedance: Characteristic impedance Z0 of the feed line in ohms.
    """

    inductance: float
    capacitance: float
    loss_resistance: float = 0.0
    line_impedance: float = 50.0

    def __post_init__(self):
        if not self.inductance > 0:
            raise DomainError(f"inductance must be > 0, got {self.inductance!r}")
        if not self.capacitance > 0:
            raise DomainError(f"capacitance must be > 0, got {self.capacitance!r}")
        if not self.line_impedance > 0:
            raise DomainError(f"line_impedance must be > 0, got {self.line_impedance!r}")
        if not self.loss_resistance >= 0:
            raise DomainError(f"loss_resistance must be >= 0, got {self.loss_resistance!r}")

    @classmethod
    def from_resonance(cls, f0, zc, loss_resistance=0.0, line_impedance=50.0):
        """Build parameters from resonance frequency and characteristic impedance."""
        w0 = TWO_PI * f0
        return cls(zc / w0, 1.0 / (w0 * zc), loss_resistance, line_impedance)

    def with_loss(self, loss_resistance):
        return replace(self, loss_resistance=loss_resistance)

    def as_dict(self):
        return {
            "inductance": self.inductance,
            "capacitance": self.capacitance,
            "loss_resistance": self.loss_resistance,
            "line_impedance": self.line_impedance,
        }


@dataclass(frozen=True)
class Load:
    """Device load. ``conductance == 0`` is an open load (deep Coulomb blockade)."""

    conductance: float

    def __post_init__(self):
        if not np.all(np.asarray(self.conductance) >= 0):
            raise DomainError("load conductance must be >= 0")

    @classmethod
    def from_resistance(cls, resistance):
        if resistance == math.inf:
            return cls(0.0)
        if not resistance > 0:
            raise DomainError(f"resistance must be > 0, got {resistance!r}")
        return cls(1.0 / resistance)

    @property
    def resistance(self):
        return math.inf if self.conductance == 0 else 1.0 / self.conductance


LoadLike = Union[Load, float, np.ndarray]


def _conductance(load: LoadLike):
    if isinstance(load, Load):
        return load.conductance
    g = np.asarray(load, dtype=float)
    if not np.all(g >= 0):
        raise DomainError("load conductance must be >= 0")
    return g if g.ndim else float(g)


def _check_frequency(f):
    f = np.asarray(f, dtype=float)
    if not np.all(f > 0):
        raise DomainError("frequency must be > 0")
    return f if f.ndim else float(f)


class _Unbounded:
    """Marker for an infinite quality factor (lossless element)."""

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __float__(self):
        raise TypeError("an unbounded quality factor has no float value")


UNBOUNDED = _Unbounded()


@dataclass(frozen=True)
class DerivedQuantities:
    """Figures of merit of a loaded matching circuit.

    ``q_internal`` is :data:`UNBOUNDED` when ``R_loss == 0``. ``g_match`` is the
    conductance satisfying the on-resonance match condition, or ``None`` when
    ``R_loss >= Z0`` makes matching impossible.
    """

    resonance_frequency: float
    characteristic_impedance: float
    q_internal: Union[float, _Unbounded]
    q_external: float
    q_total: float
    bandwidth: float
    g_match: Union[float, None]

    @property
    def internal_loss(self):
        """1/q_internal, zero for an unbounded internal Q."""
        return 0.0 if self.q_internal is UNBOUNDED else 1.0 / self.q_internal


def resonance_frequency(params: CircuitParams) -> float:
    return 1.0 / (TWO_PI * math.sqrt(params.inductance * params.capacitance))


def characteristic_impedance(params: CircuitParams) -> float:
    return math.sqrt(params.inductance / params.capacitance)


def input_impedance(params: CircuitParams, load: LoadLike, f):
    """Impedance seen from the line: ``R_loss + iwL + 1/(G + iwC)``."""
    f = _check_frequency(f)
    g = _conductance(load)
    w = TWO_PI * f
    return params.loss_resistance + 1j * w * params.inductance + 1.0 / (g + 1j * w * params.capacitance)


def input_impedance_resonant_approx(params: CircuitParams, load: LoadLike) -> float:
    """Real input impedance at resonance, ``R_loss + Zc^2 G``, valid for Zc << R."""
    g = _conductance(load)
    zc = characteristic_impedance(params)
    if np.any(zc * g * APPROX_RATIO >= 1.0):
        r = 1.0 / np.max(g)
        raise ApproximationDomainError(zc, r)
    return params.loss_resistance + zc * zc * g


def match_condition_zc(resistance: float, line_impedance: float = 50.0, loss_resistance: float = 0.0) -> float:
    """Characteristic impedance that matches ``resistance`` to the line at resonance."""
    if line_impedance <= loss_resistance:
        raise NoMatchError(
            f"no match possible: Z0={line_impedance:.6g} Ohm <= R_loss={loss_resistance:.6g} Ohm"
        )
    if loss_resistance < 0:
        raise DomainError("loss_resistance must be >= 0")
    if resistance <= loss_resistance:
        raise NoMatchError(
            f"no match possible: R={resistance:.6g} Ohm <= R_loss={loss_resistance:.6g} Ohm"
        )
    return math.sqrt((line_impedance - loss_resistance) * resistance)


def reflection_coefficient(params: CircuitParams, load: LoadLike, f):
    z = input_impedance(params, load, f)
    z0 = params.line_impedance
    return (z - z0) / (z + z0)


def vna_reflectance(params: CircuitParams, load: LoadLike, f, baseline):
    """Reflectance seen at the analyzer, ``baseline * |Gamma|^2``."""
    if not np.all(np.asarray(baseline) > 0):
        raise DomainError("baseline must be > 0")
    gamma = reflection_coefficient(params, load, f)
    return baseline * (gamma.real ** 2 + gamma.imag ** 2)


def matching_conductance(params: CircuitParams, f, baseline=1.0) -> float:
    """Conductance minimizing the reflectance at frequency ``f``.

    Bounded Brent search on log G within a factor 50 of ``(Z0 - R_loss)/Zc^2``.
    """
    z0 = params.line_impedance
    zc = characteristic_impedance(params)
    g_ref = max(z0 - params.loss_resistance, 1e-3 * z0) / zc ** 2
    lo, hi = math.log(g_ref / 50.0), math.log(g_ref * 50.0)

    def objective(log_g):
        return float(vna_reflectance(params, math.exp(log_g), f, baseline))

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return math.exp(res.x)


def quality_factors(params: CircuitParams, load: LoadLike = 0.0) -> DerivedQuantities:
    g = _conductance(load)
    zc = characteristic_impedance(params)
    f0 = resonance_frequency(params)
    z0 = params.line_impedance
    r_loss = params.loss_resistance
    q_int = UNBOUNDED if r_loss == 0 else zc / r_loss
    q_ext = 1.0 / (z0 / zc + zc * g)
    inv_int = 0.0 if q_int is UNBOUNDED else 1.0 / q_int
    q_tot = 1.0 / (inv_int + 1.0 / q_ext)
    g_match = (z0 - r_loss) / (zc * zc) if z0 > r_loss else None
    return DerivedQuantities(f0, zc, q_int, q_ext, q_tot, f0 / q_tot, g_match)


def min_external_q(resistance: float, line_impedance: float = 50.0) -> float:
    """Smallest external Q reachable when Zc = sqrt(R Z0)."""
    if not (resistance > 0 and line_impedance > 0):
        raise DomainError("resistance and line impedance must be > 0")
    return math.sqrt(resistance / line_impedance) / 2.0


def transfer_function_approx(params: CircuitParams, load: LoadLike, f):
    """Noise-voltage transfer ``V/V_noise`` in the near-resonance form.

    Proportional to G, so an open load returns exactly zero.
    """
    f = _check_frequency(f)
    g = _conductance(load)
    zc = characteristic_impedance(params)
    z0 = params.line_impedance
    omega = TWO_PI * f * math.sqrt(params.inductance * params.capacitance)
    damping = z0 / zc + params.loss_resistance / zc + zc * g
    return z0 * g / (1.0 + 1j * omega * damping - omega * omega)


def transfer_function_exact(params: CircuitParams, load: LoadLike, f):
    """Exact voltage division of the noise network.

    Source ``V_noise`` in series with R feeds the node shunted by C, which is
    connected to the ``Z0`` termination through ``R_loss + L``.
    """
    f = _check_frequency(f)
    g = _conductance(load)
    w = TWO_PI * f
    z0 = params.line_impedance
    z_series = params.loss_resistance + 1j * w * params.inductance
    y_node = 1j * w * params.capacitance + 1.0 / (z_series + z0)
    z_node = 1.0 / y_node
    # Z_p/(R + Z_p) written with G so that G = 0 is regular
    node_division = g * z_node / (1.0 + g * z_node)
    return node_division * z0 / (z0 + z_series)


def integrated_transfer(
    params: CircuitParams,
    load: LoadLike,
    f_center: float,
    bandwidth: float,
    exact: bool = False,
    rtol: float = DEFAULT_RTOL,
    max_depth: int = DEFAULT_MAX_DEPTH,
):
    """Integral of ``|t_V(f)|^2`` over the band centred on ``f_center``, in hertz.

    Array conductances are integrated element by element (batched).
    """
    if not bandwidth > 0:
        raise DomainError("bandwidth must be > 0")
    lo = f_center - 0.5 * bandwidth
    hi = f_center + 0.5 * bandwidth
    if not lo > 0:
        raise DomainError("band must lie at positive frequencies")
    g = np.atleast_1d(np.asarray(_conductance(load), dtype=float))
    shape = g.shape
    flat = g.ravel()
    transfer = transfer_function_exact if exact else transfer_function_approx

    def integrand(f, idx):
        t = transfer(params, flat[idx], f)
        return t.real ** 2 + t.imag ** 2

    out = adaptive_simpson_batch(integrand, lo, hi, flat.size, rtol=rtol, max_depth=max_depth)
    if np.ndim(_conductance(load)) == 0:
        return float(out[0])
    return out.reshape(shape)


def hanger_s21(params: CircuitParams, load: LoadLike, f, phi: float = 0.0):
    """Transmission past a series R_loss-L-C branch tapped onto a through line.

    The line impedance carries the asymmetry phase, ``Z0 * exp(i phi)``. The
    hanger structure has no device attached, so ``load`` must be zero. A
    vanishing branch impedance gives a full dip, ``S21 = 0``.
    """
    if np.any(np.asarray(_conductance(load)) != 0):
        raise DomainError("hanger geometry has no device load; conductance must be 0")
    f = _check_frequency(f)
    w = TWO_PI * f
    z = params.loss_resistance + 1j * w * params.inductance + 1.0 / (1j * w * params.capacitance)
    z_line = params.line_impedance * np.exp(1j * phi)
    z = np.asarray(z)
    safe = np.where(z == 0, 1.0, z)
    s21 = np.where(z == 0, 0.0 + 0.0j, 2.0 / (2.0 + z_line / safe))
    return complex(s21) if s21.ndim == 0 else s21
