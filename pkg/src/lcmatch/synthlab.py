"""Ground-truth synthetic datasets and brute-force oracles.

Random numbers come from numpy's ``PCG64`` bit generator seeded with the
scenario seed, so every dataset is reproducible from its seed alone.

The oracles at the bottom re-derive reflectance and transfer functions with
their own real-arithmetic formulas; they share no evaluation code with
:mod:`lcmatch.circuit_model`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import jsonschema
import numpy as np
from scipy.integrate import cumulative_trapezoid

from .circuit_model import CircuitParams, hanger_s21, vna_reflectance
from .errors import ConfigError, DomainError
from .fitting import ScatterDataset, augment_near_match
from .maps_io import SweepGrid
from .noise_cal import E_CHARGE, NoiseChain, power_per_current_noise

RNG_NAME = "PCG64"


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class DiamondModel:
    """Phenomenological Coulomb-diamond transport.

    Level ``n`` has detuning ``eps_n = gate_lever * (V_G - gate_offset - n * period)``
    with gate period ``charging_energy / gate_lever``. Conductance peaks of
    sech^2 shape (width ``level_broadening``) follow the diamond edges
    ``eps_n = +-bias_lever * V_SD``. Beyond ``|V_SD| = inelastic_onset`` a
    smoothed cotunneling conductance step switches on.

    Energies are in eV, so an energy divided by e reads directly in volts.
    """

    charging_energy: float = 8e-3
    gate_lever: float = 0.1
    bias_lever: float = 0.5
    peak_conductance: float = 25e-6
    level_broadening: float = 0.4e-3
    inelastic_onset: float = 5e-3
    cotunneling_conductance: float = 0.5e-6
    cotunneling_fano: float = 8.0
    gate_offset: float = 0.0

    def __post_init__(self):
        for name in (
            "charging_energy",
            "gate_lever",
            "bias_lever",
            "peak_conductance",
            "level_broadening",
            "inelastic_onset",
            "cotunneling_fano",
        ):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")
        if self.cotunneling_conductance < 0:
            raise DomainError("cotunneling_conductance must be >= 0")
        if not self.inelastic_onset < self.diamond_height:
            raise DomainError("inelastic onset must lie below the diamond height")

    @property
    def gate_period(self):
        return self.charging_energy / self.gate_lever

    @property
    def diamond_height(self):
        """Bias at the diamond tips, ``charging_energy / (2 bias_lever)``."""
        return self.charging_energy / (2.0 * self.bias_lever)

    def degeneracy_gate(self, n):
        return self.gate_offset + n * self.gate_period

    def diamond_center_gate(self, n):
        return self.degeneracy_gate(n) + 0.5 * self.gate_period

    def _detunings(self, v_g):
        n0 = np.round((np.asarray(v_g) - self.gate_offset) / self.gate_period)
        return [self.gate_lever * (v_g - self.degeneracy_gate(n0 + k)) for k in range(-2, 3)]

    def blockade_weight(self, v_g, v_sd):
        """Smooth indicator, 1 inside a diamond and 0 in the sequential tunneling region."""
        eps_min = np.min(np.abs(np.stack(np.broadcast_arrays(*self._detunings(v_g)))), axis=0)
        return _sigmoid((eps_min - self.bias_lever * np.abs(v_sd)) / (0.25 * self.level_broadening))

    def to_dict(self):
        return asdict(self)


def diamond_conductance(model: DiamondModel, v_g, v_sd):
    """Differential conductance (S) of the diamond model; even in ``v_sd``."""
    v_g, v_sd = np.broadcast_arrays(np.asarray(v_g, dtype=float), np.asarray(v_sd, dtype=float))
    w = model.level_broadening
    shift = model.bias_lever * v_sd
    g = np.zeros(v_g.shape)
    for eps in model._detunings(v_g):
        g += _sech2((eps - shift) / w) + _sech2((eps + shift) / w)
    g *= 0.5 * model.peak_conductance
    step_width = w / model.bias_lever
    g += model.cotunneling_conductance * _sigmoid(2.0 * (np.abs(v_sd) - model.inelastic_onset) / step_width)
    return g


def current_from_conductance(g, bias_axis):
    """``I(V_SD) = integral_0^V_SD G dV`` along the last axis (trapezoids)."""
    cum = cumulative_trapezoid(g, bias_axis, axis=-1, initial=0.0)
    if bias_axis[0] <= 0.0 <= bias_axis[-1]:
        at_zero = np.array([np.interp(0.0, bias_axis, row) for row in cum.reshape(-1, cum.shape[-1])])
        cum = cum - at_zero.reshape(cum.shape[:-1] + (1,))
    else:
        raise DomainError("bias axis must include V_SD = 0 to anchor the current")
    return cum


@dataclass(frozen=True)
class BaselineModel:
    """``b(f) = base + sum_k a_k sin(2 pi f / period_k + phase_k)``."""

    base: float = 0.42
    amplitudes: tuple = (0.03, 0.02, 0.01)
    periods: tuple = (80e6, 35e6, 13e6)
    phases: tuple = (0.3, 1.7, 4.1)

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(self.amplitudes))
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.base > 0:
            raise DomainError("baseline base level must be > 0")
        if not len(self.amplitudes) == len(self.periods) == len(self.phases):
            raise DomainError("ripple lists must have equal length")
        if sum(abs(a) for a in self.amplitudes) >= self.base:
            raise DomainError("ripple amplitudes must sum below the base level")
        if any(p <= 0 for p in self.periods):
            raise DomainError("ripple periods must be > 0")

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        b = np.full(f.shape, self.base)
        for a, p, ph in zip(self.amplitudes, self.periods, self.phases):
            b = b + a * np.sin(2.0 * math.pi * f / p + ph)
        return b if b.ndim else float(b)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class GridSpec:
    gate: tuple = (0.0, 0.24, 201)
    bias: tuple = (-10e-3, 10e-3, 401)

    def axes(self):
        return (
            np.linspace(self.gate[0], self.gate[1], int(self.gate[2])),
            np.linspace(self.bias[0], self.bias[1], int(self.bias[2])),
        )

    def to_dict(self):
        return {"gate": list(self.gate), "bias": list(self.bias)}


class TransportMaps(NamedTuple):
    reflectance: SweepGrid
    current: SweepGrid
    conductance: SweepGrid


def _transport(model, gate_axis, bias_axis):
    vg, vsd = np.meshgrid(gate_axis, bias_axis, indexing="ij")
    g = diamond_conductance(model, vg, vsd)
    return vg, vsd, g, current_from_conductance(g, bias_axis)


def synth_reflectance_map(
    model: DiamondModel,
    params: CircuitParams,
    baseline_value,
    f_m: float,
    noise_fraction: float = 0.0,
    seed: int = 0,
    grid: GridSpec = GridSpec(),
) -> TransportMaps:
    """Reflectance, current and conductance maps measured at ``f_m``.

    ``baseline_value`` is a number or a :class:`BaselineModel` evaluated at
    ``f_m``. Reflectance noise is multiplicative Gaussian.
    """
    if noise_fraction < 0:
        raise DomainError("noise_fraction must be >= 0")
    b = baseline_value(f_m) if callable(baseline_value) else float(baseline_value)
    gate, bias = grid.axes()
    _, _, g, current = _transport(model, gate, bias)
    rng = make_rng(seed)
    refl = vna_reflectance(params, g, f_m, b) * (1.0 + noise_fraction * rng.standard_normal(g.shape))
    meta = {"generator": "synth_reflectance_map", "rng": RNG_NAME, "seed": seed, "baseline": b, "f_m": f_m}
    return TransportMaps(
        SweepGrid(gate, bias, refl, "dimensionless", metadata=meta),
        SweepGrid(gate, bias, current, "A", metadata=meta),
        SweepGrid(gate, bias, g, "S", metadata=meta),
    )


def synth_scatter_dataset(
    params: CircuitParams,
    baseline_value,
    f_m: float = 3.23e9,
    n_points: int = 500,
    g_max: float = 30e-6,
    noise_fraction: float = 0.01,
    near_match_g: Optional[float] = 77e-6,
    seed: int = 0,
) -> ScatterDataset:
    """Reflectance-versus-conductance scatter at ``f_m``.

    Conductances are uniform in ``[0, g_max]``; the optional near-match point
    is generated from the model with the same multiplicative noise.
    """
    rng = make_rng(seed)
    b = baseline_value(f_m) if callable(baseline_value) else float(baseline_value)
    g = rng.uniform(0.0, g_max, n_points)
    r = vna_reflectance(params, g, f_m, b) * (1.0 + noise_fraction * rng.standard_normal(n_points))
    ds = ScatterDataset(g, np.abs(r), f_m)
    if near_match_g is not None:
        r_near = float(vna_reflectance(params, near_match_g, f_m, b)) * (1.0 + noise_fraction * rng.standard_normal())
        ds = augment_near_match(ds, (near_match_g, abs(r_near)))
    return ds


def synth_hanger_sweep(
    params: CircuitParams,
    phi: float,
    frequencies: Sequence[float],
    noise_fraction: float = 0.005,
    seed: int = 0,
    scale: float = 1.0,
):
    """``scale * |S21|`` of the hanger geometry with multiplicative Gaussian noise."""
    f = np.asarray(frequencies, dtype=float)
    rng = make_rng(seed)
    s = scale * np.abs(hanger_s21(params, 0.0, f, phi))
    return s * (1.0 + noise_fraction * rng.standard_normal(f.size))


@dataclass(frozen=True)
class FanoProfile:
    """Fano factor field of a noise scenario.

    ``kind="poissonian"`` gives F = 1 everywhere. ``kind="cotunneling"`` adds
    a Gaussian ridge of height ``peak - 1`` and width ``width`` (V) centred on
    ``|V_SD| = onset`` inside the diamonds; ``peak`` and ``onset`` default to
    the diamond model's cotunneling Fano amplitude and inelastic onset.
    """

    kind: str = "poissonian"
    peak: Optional[float] = None
    onset: Optional[float] = None
    width: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("poissonian", "cotunneling"):
            raise DomainError(f"unknown Fano profile kind {self.kind!r}")

    def evaluate(self, model: DiamondModel, v_g, v_sd):
        if self.kind == "poissonian":
            return np.ones(np.broadcast(v_g, v_sd).shape)
        peak = model.cotunneling_fano if self.peak is None else self.peak
        onset = model.inelastic_onset if self.onset is None else self.onset
        ridge = np.exp(-(((np.abs(v_sd) - onset) / self.width) ** 2))
        return 1.0 + (peak - 1.0) * ridge * model.blockade_weight(v_g, v_sd)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class NoiseScenario:
    """Everything needed to synthesize a noise-power map.

    ``power_noise`` is the standard deviation of a single acquisition (W);
    retained values average ``chain.averaging_count`` acquisitions.
    """

    diamond: DiamondModel
    circuit: CircuitParams
    chain: NoiseChain
    background_power: float
    fano: FanoProfile = FanoProfile()
    power_noise: float = 0.0
    seed: int = 0
    grid: GridSpec = GridSpec()

    def __post_init__(self):
        if self.background_power < 0 or self.power_noise < 0:
            raise DomainError("background power and power noise must be >= 0")


class NoiseMaps(NamedTuple):
    power: SweepGrid
    current: SweepGrid
    conductance: SweepGrid
    fano: SweepGrid


def synth_noise_map(scenario: NoiseScenario) -> NoiseMaps:
    """Noise power ``F 2e|I| K(G) + <dP0> + noise`` on the scenario grid.

    Also returns the ground-truth Fano field. Cells with vanishing conductance
    carry only the background.
    """
    gate, bias = scenario.grid.axes()
    vg, vsd, g, current = _transport(scenario.diamond, gate, bias)
    fano = scenario.fano.evaluate(scenario.diamond, vg, vsd)
    s_i = fano * 2.0 * E_CHARGE * np.abs(current)
    k = np.zeros(g.shape)
    pos = g > 0
    k[pos] = power_per_current_noise(scenario.chain, scenario.circuit, g[pos])
    rng = make_rng(scenario.seed)
    sigma = scenario.power_noise / math.sqrt(scenario.chain.averaging_count)
    power = s_i * k + scenario.background_power + sigma * rng.standard_normal(g.shape)
    meta = {"generator": "synth_noise_map", "rng": RNG_NAME, "seed": scenario.seed}
    return NoiseMaps(
        SweepGrid(gate, bias, power, "W", metadata=meta),
        SweepGrid(gate, bias, current, "A", metadata=meta),
        SweepGrid(gate, bias, g, "S", metadata=meta),
        SweepGrid(gate, bias, fano, "dimensionless", metadata=meta),
    )


# ---------------------------------------------------------------------------
# oracles


def _oracle_reflectance(params: CircuitParams, g, f):
    """|Gamma|^2 in real arithmetic from the admittance G + iB of the shunt node."""
    w = 2.0 * math.pi * f
    b = w * params.capacitance
    denom = g * g + b * b
    re = params.loss_resistance + g / denom
    im = w * params.inductance - b / denom
    z0 = params.line_impedance
    return ((re - z0) ** 2 + im * im) / ((re + z0) ** 2 + im * im)


def _golden_section(func, lo, hi, tol):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = func(c), func(d)
    while hi - lo > tol * max(abs(lo), abs(hi), 1e-300):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = func(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = func(d)
    return 0.5 * (lo + hi)


def oracle_min_reflectance(params: CircuitParams, f: float, g_range=(1e-7, 1e-2), n_grid: int = 100_000):
    """Matching conductance by dense log grid scan plus golden-section refinement.

    Returns ``(g_match, min_reflectance)`` with the reflectance of a unit baseline.

    Raises:
        DomainError: if the grid minimum sits at an edge of ``g_range``.
    """
    lo, hi = g_range
    if not 0 < lo < hi:
        raise DomainError("g_range must satisfy 0 < lo < hi")
    grid = np.logspace(math.log10(lo), math.log10(hi), n_grid)
    vals = _oracle_reflectance(params, grid, f)
    i = int(np.argmin(vals))
    if i == 0 or i == n_grid - 1:
        raise DomainError(f"reflectance minimum at the edge of g_range {g_range}")
    g = _golden_section(lambda x: float(_oracle_reflectance(params, x, f)), grid[i - 1], grid[i + 1], 1e-13)
    return g, float(_oracle_reflectance(params, g, f))


def _oracle_transfer_sq(params: CircuitParams, g, f, exact):
    z0 = params.line_impedance
    if not exact:
        x = 2.0 * math.pi * f * math.sqrt(params.inductance * params.capacitance)
        zc = math.sqrt(params.inductance / params.capacitance)
        a = (z0 + params.loss_resistance) / zc + zc * g
        return (z0 * g) ** 2 / ((1.0 - x * x) ** 2 + (a * x) ** 2)
    # nodal analysis: (Vs - Vn) G = Vn (iwC + 1/Zs), V = Vn Z0 / Zs
    w = 2.0 * math.pi * f
    zs = complex(z0 + params.loss_resistance, 0.0) + 1j * w * params.inductance
    vn = g / (g + 1j * w * params.capacitance + 1.0 / zs)
    v = vn * z0 / zs
    return np.abs(v) ** 2


def oracle_riemann_integral(
    params: CircuitParams,
    conductance: float,
    f_center: float,
    bandwidth: float,
    n_points: int = 1_000_000,
    exact: bool = False,
    chunk: int = 250_000,
) -> float:
    """Uniform midpoint Riemann sum of ``|t_V|^2`` over the band (Hz)."""
    if n_points < 10_000:
        raise DomainError("oracle Riemann sum needs n_points >= 1e4")
    lo = f_center - 0.5 * bandwidth
    h = bandwidth / n_points
    total = 0.0
    for start in range(0, n_points, chunk):
        k = np.arange(start, min(start + chunk, n_points))
        f = lo + (k + 0.5) * h
        total += float(np.sum(_oracle_transfer_sq(params, conductance, f, exact)))
    return total * h


# ---------------------------------------------------------------------------
# scenario documents


def scenario_from_dict(d):
    """Build generator inputs from a scenario JSON document (already schema-validated)."""
    kind = d["kind"]
    grid = GridSpec(**d["grid"]) if "grid" in d else GridSpec()
    circuit = CircuitParams(**d["circuit"]) if "circuit" in d else CircuitParams(37e-9, 63e-15)
    diamond = DiamondModel(**d.get("diamond", {}))
    seed = int(d.get("seed", 0))
    if kind == "reflectance":
        base = d.get("baseline", {})
        baseline = BaselineModel(**base) if isinstance(base, dict) else float(base)
        return {
            "kind": kind,
            "model": diamond,
            "params": circuit,
            "baseline_value": baseline,
            "f_m": float(d.get("f_m", 3.23e9)),
            "noise_fraction": float(d.get("noise_fraction", 0.0)),
            "seed": seed,
            "grid": grid,
            "near_match_g": float(d.get("near_match_g", 77e-6)),
        }
    if kind == "noise":
        chain = NoiseChain.from_dict(d["chain"])
        return {
            "kind": kind,
            "scenario": NoiseScenario(
                diamond=diamond,
                circuit=circuit,
                chain=chain,
                background_power=float(d["background_power"]),
                fano=FanoProfile(**d.get("fano", {})),
                power_noise=float(d.get("power_noise", 0.0)),
                seed=seed,
                grid=grid,
            ),
        }
    if kind == "hanger":
        sweep = d.get("sweep", [3.1e9, 3.6e9, 401])
        if "circuit" not in d:
            circuit = CircuitParams.from_resonance(3.35e9, 954.0, 1.26)
        return {
            "kind": kind,
            "params": circuit,
            "phi": float(d.get("phi", 0.56)),
            "frequencies": np.linspace(sweep[0], sweep[1], int(sweep[2])),
            "noise_fraction": float(d.get("noise_fraction", 0.005)),
            "seed": seed,
        }
    raise ConfigError(f"unknown scenario kind {kind!r}")


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_TRIPLE = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_NUM_LIST = {"type": "array", "items": _NUM}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "kind"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "kind": {"enum": ["reflectance", "noise", "hanger"]},
        "seed": {"type": "integer", "minimum": 0},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"gate": _TRIPLE, "bias": _TRIPLE},
        },
        "circuit": {
            "type": "object",
            "required": ["inductance", "capacitance"],
            "additionalProperties": False,
            "properties": {
                "inductance": _POS,
                "capacitance": _POS,
                "loss_resistance": _NONNEG,
                "line_impedance": _POS,
            },
        },
        "diamond": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                name: _NUM
                for name in DiamondModel.__dataclass_fields__
            },
        },
        "baseline": {
            "oneOf": [
                _POS,
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"base": _POS, "amplitudes": _NUM_LIST, "periods": _NUM_LIST, "phases": _NUM_LIST},
                },
            ]
        },
        "f_m": _POS,
        "noise_fraction": _NONNEG,
        "near_match_g": _POS,
        "chain": {
            "type": "object",
            "required": ["gain_db", "band_center", "bandwidth"],
            "additionalProperties": False,
            "properties": {
                "gain_db": _NUM,
                "band_center": _POS,
                "bandwidth": _POS,
                "line_impedance": _POS,
                "averaging_count": {"type": "integer", "minimum": 1},
            },
        },
        "background_power": _NONNEG,
        "power_noise": _NONNEG,
        "fano": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["poissonian", "cotunneling"]},
                "peak": _POS,
                "onset": _POS,
                "width": _POS,
            },
        },
        "phi": _NUM,
        "sweep": _TRIPLE,
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "noise"}}},
            "then": {"required": ["chain", "background_power"]},
        }
    ],
}


def validate_scenario(doc):
    """Check a scenario document against :data:`SCENARIO_SCHEMA`.

    Raises:
        ConfigError: naming the offending field path, e.g. ``$.circuit.inductance``.
    """
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ConfigError(f"invalid scenario at {path}: {err.message}")
    return doc
