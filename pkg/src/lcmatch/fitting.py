"""Circuit-parameter extraction from reflectometry and hanger transmission data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .circuit_model import (
    TWO_PI,
    CircuitParams,
    characteristic_impedance,
    hanger_s21,
    match_condition_zc,
    matching_conductance,
    resonance_frequency,
    vna_reflectance,
)
from .errors import ConfigError, DomainError, InitializationError, RankDeficiencyError
from .lsq import FitConfig, FitResult, least_squares_solve

SCATTER_PARAMS = frozenset({"L", "C", "R_loss", "b"})
HANGER_PARAMS = frozenset({"L", "C", "R_loss", "phi", "scale"})

#: Fractional offset of the initial resonance guess from the measurement frequency.
SCATTER_DETUNING_GUESS = 0.01

#: Observed values below this fraction of the maximum are clipped before relative weighting.
RELATIVE_WEIGHT_FLOOR = 1e-3


@dataclass
class ScatterDataset:
    """Paired (conductance, reflectance) points taken at one frequency.

    ``augmented`` marks points added by :func:`augment_near_match`; they are
    weighted by ``FitConfig.near_match_weight``.
    """

    conductance: np.ndarray
    reflectance: np.ndarray
    frequency: float
    augmented: np.ndarray = field(default=None)

    def __post_init__(self):
        self.conductance = np.asarray(self.conductance, dtype=float).ravel()
        self.reflectance = np.asarray(self.reflectance, dtype=float).ravel()
        if self.augmented is None:
            self.augmented = np.zeros(self.conductance.size, dtype=bool)
        self.augmented = np.asarray(self.augmented, dtype=bool).ravel()
        if not (self.conductance.size == self.reflectance.size == self.augmented.size):
            raise DomainError("conductance, reflectance and augmented must have equal length")
        if np.any(self.conductance < 0) or np.any(~np.isfinite(self.conductance)):
            raise DomainError("conductances must be finite and >= 0")
        if np.any(self.reflectance < 0) or np.any(~np.isfinite(self.reflectance)):
            raise DomainError("reflectances must be finite and >= 0")
        if not self.frequency > 0:
            raise DomainError("frequency must be > 0")

    def __len__(self):
        return self.conductance.size

    @classmethod
    def from_maps(cls, conductance_grid, reflectance_grid, frequency):
        """Pair two maps cell by cell, dropping masked, non-finite and negative cells."""
        if conductance_grid.values.shape != reflectance_grid.values.shape:
            raise DomainError("maps must have the same shape")
        g = conductance_grid.masked_values().ravel()
        r = reflectance_grid.masked_values().ravel()
        keep = np.isfinite(g) & np.isfinite(r) & (g >= 0) & (r >= 0)
        return cls(g[keep], r[keep], frequency)

    def weights(self, near_match_weight=1.0, weighting="unit"):
        w = np.where(self.augmented, near_match_weight, 1.0)
        if weighting == "relative":
            floor = RELATIVE_WEIGHT_FLOOR * self.reflectance.max()
            w = w / np.maximum(self.reflectance, floor) ** 2
        return w


def augment_near_match(dataset: ScatterDataset, point) -> ScatterDataset:
    """Append a near-match ``(conductance, reflectance)`` point to ``dataset``."""
    g, r = float(point[0]), float(point[1])
    if len(dataset) and not g > dataset.conductance.max():
        raise DomainError(
            f"near-match point G={g:.6g} S must exceed the dataset maximum {dataset.conductance.max():.6g} S"
        )
    return ScatterDataset(
        np.append(dataset.conductance, g),
        np.append(dataset.reflectance, r),
        dataset.frequency,
        np.append(dataset.augmented, True),
    )


def initial_guess_scatter(dataset: ScatterDataset, line_impedance=50.0, r_loss=0.0, resonance_side="above"):
    """Heuristic start point for the scatter fit.

    The baseline is the reflectance at the lowest conductance; Zc follows from
    the match condition at the conductance of minimum reflectance; the
    resonance sits just above (or below) the measurement frequency, because
    the reflectance only depends on the square of the detuning reactance and
    starting exactly on resonance leaves the side undetermined.
    """
    if len(dataset) == 0:
        raise DomainError("empty dataset")
    g, r = dataset.conductance, dataset.reflectance
    b = float(r[np.argmin(g)])
    g_dip = float(g[np.argmin(r)])
    if g_dip <= 0:
        g_dip = float(g.max())
    if g_dip <= 0 or b <= 0:
        raise InitializationError("cannot derive initial guesses: no conductance spread or zero baseline")
    zc = match_condition_zc(1.0 / g_dip, line_impedance, r_loss)
    sign = 1.0 if resonance_side == "above" else -1.0
    f0 = dataset.frequency * (1.0 + sign * SCATTER_DETUNING_GUESS)
    w0 = TWO_PI * f0
    return {"L": zc / w0, "C": 1.0 / (w0 * zc), "b": b, "R_loss": max(r_loss, 0.1)}


def initial_guess_hanger(frequencies, s21_mag, line_impedance=50.0):
    """Heuristic start point for the hanger fit from the dip position, depth and width."""
    f = np.asarray(frequencies, dtype=float)
    s = np.asarray(s21_mag, dtype=float)
    if f.size == 0:
        raise DomainError("empty sweep")
    i_min = int(np.argmin(s))
    if i_min == 0 or i_min == f.size - 1:
        raise InitializationError("no resonance dip inside the sweep (minimum at the sweep edge)")
    n_edge = max(1, f.size // 10)
    scale = float(np.median(np.concatenate([s[:n_edge], s[-n_edge:]])))
    depth = s[i_min] / scale
    if not 0 < scale or depth >= 0.99:
        raise InitializationError("no resonance dip in the sweep")
    half_line = 0.5 * line_impedance
    r_loss = max(half_line * depth / (1.0 - depth), 1e-3)
    notch = 1.0 - (s / scale) ** 2
    above = np.nonzero(notch >= 0.5 * notch[i_min])[0]
    if above[0] == 0 or above[-1] == f.size - 1:
        raise InitializationError("resonance dip not resolved: its half-depth region reaches the sweep edge")
    df = float(np.median(np.diff(f)))
    fwhm = max(float(f[above[-1]] - f[above[0]]), df)
    f0 = float(f[i_min])
    zc = f0 * (r_loss + half_line) / fwhm
    w0 = TWO_PI * f0
    return {"L": zc / w0, "C": 1.0 / (w0 * zc), "R_loss": r_loss, "phi": 0.0, "scale": scale}


def initial_guess_from_data(data, **kw):
    """Initial parameters from a ScatterDataset or a ``(frequencies, s21_mag)`` sweep."""
    if isinstance(data, ScatterDataset):
        return initial_guess_scatter(data, **kw)
    frequencies, s21_mag = data
    return initial_guess_hanger(frequencies, s21_mag, **kw)


def _check_partition(config: FitConfig, model_params):
    names = set(config.free) | set(config.fixed)
    if names != set(model_params) or set(config.free) & set(config.fixed):
        raise ConfigError(
            f"free {sorted(config.free)} and fixed {sorted(config.fixed)} must partition {sorted(model_params)}"
        )


def _scatter_model(dataset, line_impedance):
    def model(p):
        params = CircuitParams(p["L"], p["C"], p["R_loss"], line_impedance)
        return vna_reflectance(params, dataset.conductance, dataset.frequency, p["b"])

    return model


def fit_scatter_fixed_frequency(dataset: ScatterDataset, config: FitConfig = None, line_impedance=50.0) -> FitResult:
    """Fit baseline-scaled reflectance versus conductance at the dataset frequency.

    Returns a FitResult whose ``derived`` entry holds the resonance frequency,
    characteristic impedance and the matching conductance (minimum of the
    fitted reflectance curve evaluated at the fitted resonance).
    """
    config = FitConfig.scatter() if config is None else config
    _check_partition(config, SCATTER_PARAMS)
    if "b" in config.free and "R_loss" in config.free:
        if not config.allow_b_and_rloss:
            raise ConfigError(
                "fitting baseline b and R_loss together is refused: they are only separable with data at "
                "G -> infinity (rank deficient); set allow_b_and_rloss=True to override"
            )
        warnings.warn("fitting b and R_loss simultaneously; expect a near-singular Jacobian", RuntimeWarning)
    if len(dataset) == 0:
        raise DomainError("empty dataset")
    if np.unique(dataset.conductance).size < 2:
        raise RankDeficiencyError(
            "rank deficient: the dataset has a single conductance value, so log(L), log(C) and b are not identifiable",
            combination={"log(L)": 1.0, "log(C)": 1.0},
        )
    r_loss_guess = config.fixed.get("R_loss", 0.0)
    guess = initial_guess_scatter(dataset, line_impedance, r_loss_guess, config.resonance_side)
    guess.update(config.initial)
    run = FitConfig(**{**config.__dict__, "initial": {n: guess[n] for n in config.free}})
    result = least_squares_solve(
        _scatter_model(dataset, line_impedance),
        dataset.reflectance,
        run,
        weights=dataset.weights(config.near_match_weight, config.weighting),
    )
    p = result.params
    params = CircuitParams(p["L"], p["C"], p["R_loss"], line_impedance)
    f0 = resonance_frequency(params)
    result.params["Z0"] = line_impedance
    result.derived = {
        "f0": f0,
        "Zc": characteristic_impedance(params),
        "g_match": matching_conductance(params, f0, p["b"]),
        "measurement_frequency": dataset.frequency,
    }
    return result


def _hanger_model(frequencies, line_impedance):
    def model(p):
        params = CircuitParams(p["L"], p["C"], p["R_loss"], line_impedance)
        return p["scale"] * np.abs(hanger_s21(params, 0.0, frequencies, p["phi"]))

    return model


def fit_hanger_sweep(frequencies, s21_mag, config: FitConfig = None, line_impedance=50.0) -> FitResult:
    """Fit ``scale * |S21(f)|`` of the hanger geometry to a frequency sweep.

    ``derived`` holds R_loss, Zc, f0 and phi of the fitted circuit.
    """
    config = FitConfig.hanger() if config is None else config
    _check_partition(config, HANGER_PARAMS)
    f = np.asarray(frequencies, dtype=float)
    s = np.asarray(s21_mag, dtype=float)
    if f.shape != s.shape or f.ndim != 1:
        raise DomainError("frequencies and s21_mag must be 1-D arrays of equal length")
    if f.size < 5:
        raise DomainError("hanger fit needs at least 5 frequency points")
    order = np.argsort(f, kind="stable")
    f, s = f[order], s[order]
    guess = initial_guess_hanger(f, s, line_impedance)
    guess.update(config.fixed)
    guess.update(config.initial)
    run = FitConfig(**{**config.__dict__, "initial": {n: guess[n] for n in config.free}})
    weights = None
    if config.weighting == "relative":
        weights = 1.0 / np.maximum(s, RELATIVE_WEIGHT_FLOOR * s.max()) ** 2
    result = least_squares_solve(_hanger_model(f, line_impedance), s, run, weights=weights)
    p = result.params
    params = CircuitParams(p["L"], p["C"], p["R_loss"], line_impedance)
    result.params["Z0"] = line_impedance
    result.derived = {
        "R_loss": p["R_loss"],
        "Zc": characteristic_impedance(params),
        "f0": resonance_frequency(params),
        "phi": p["phi"],
    }
    return result


def circuit_from_fit(result: FitResult) -> CircuitParams:
    p = result.params
    return CircuitParams(p["L"], p["C"], p.get("R_loss", 0.0), p.get("Z0", 50.0))
