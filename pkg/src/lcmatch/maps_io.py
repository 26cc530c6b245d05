"""Gate/bias sweep maps: data model, CSV persistence, derivatives, inversion.

CSV layout::

    # unit: <unit>
    # gate_axis: v1,v2,...
    # bias_axis: v1,v2,...
    <one comma-separated row per gate value>

Numbers are written with ``repr`` (shortest round-trip form, at most 17
significant digits) so save/load is bitwise lossless. Masked cells are
written as ``NaN``. A JSON sidecar ``<file>.json`` carries metadata.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .circuit_model import CircuitParams, matching_conductance, vna_reflectance
from .errors import DomainError, GridFormatError, ShapeError

UNITS = ("A", "S", "dimensionless", "W", "A^2/Hz")

#: Relative excess over the baseline tolerated before a cell is out of model.
REFLECTANCE_EPSILON = 0.02

FLAG_OK = 0
FLAG_BELOW_MINIMUM = 1
FLAG_OUT_OF_MODEL = 2
FLAG_RANGE_LIMIT = 4


def _readonly(a):
    a = np.array(a, dtype=float if a.dtype != bool else bool)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SweepGrid:
    """Immutable map of one quantity over (gate, bias) voltages.

    ``values[i, j]`` belongs to ``gate_axis[i]`` and ``bias_axis[j]``. Masked
    cells hold NaN and every NaN cell is masked.
    """

    gate_axis: np.ndarray
    bias_axis: np.ndarray
    values: np.ndarray
    unit: str
    mask: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        gate = np.asarray(self.gate_axis, dtype=float).ravel()
        bias = np.asarray(self.bias_axis, dtype=float).ravel()
        values = np.array(self.values, dtype=float)
        if self.unit not in UNITS:
            raise DomainError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        if values.shape != (gate.size, bias.size):
            raise ShapeError(f"values shape {values.shape} does not match axes ({gate.size}, {bias.size})")
        for name, axis in (("gate_axis", gate), ("bias_axis", bias)):
            bad = np.nonzero(~(np.diff(axis) > 0))[0]
            if bad.size:
                raise DomainError(f"{name} is not strictly increasing at index {bad[0] + 1}")
        mask = np.zeros(values.shape, dtype=bool) if self.mask is None else np.array(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise ShapeError("mask shape does not match values")
        mask = mask | np.isnan(values)
        values[mask] = np.nan
        object.__setattr__(self, "gate_axis", _readonly(gate))
        object.__setattr__(self, "bias_axis", _readonly(bias))
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def shape(self):
        return self.values.shape

    def masked_values(self):
        return np.array(self.values)

    def with_values(self, values, unit=None, mask=None, metadata=None):
        return SweepGrid(
            self.gate_axis,
            self.bias_axis,
            values,
            self.unit if unit is None else unit,
            mask,
            self.metadata if metadata is None else metadata,
        )

    def same_axes(self, other):
        return (
            self.gate_axis.shape == other.gate_axis.shape
            and self.bias_axis.shape == other.bias_axis.shape
            and np.array_equal(self.gate_axis, other.gate_axis)
            and np.array_equal(self.bias_axis, other.bias_axis)
        )

    def mesh(self):
        """``(V_G, V_SD)`` arrays broadcast to the grid shape."""
        return np.meshgrid(self.gate_axis, self.bias_axis, indexing="ij")

    def equals(self, other):
        """Bitwise equality of axes, values (NaN == NaN), mask and unit."""
        return (
            self.unit == other.unit
            and self.same_axes(other)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.mask, other.mask)
        )


def require_same_axes(*grids):
    first = grids[0]
    for g in grids[1:]:
        if not first.same_axes(g):
            raise ShapeError("grids do not share identical gate/bias axes")


def _fmt(x):
    x = float(x)
    return "NaN" if math.isnan(x) else repr(x)


def save_grid(grid: SweepGrid, path, metadata=None):
    """Write ``grid`` as CSV plus a JSON metadata sidecar next to it."""
    path = Path(path)
    lines = [
        f"# unit: {grid.unit}",
        "# gate_axis: " + ",".join(_fmt(v) for v in grid.gate_axis),
        "# bias_axis: " + ",".join(_fmt(v) for v in grid.bias_axis),
    ]
    lines.extend(",".join(_fmt(v) for v in row) for row in grid.values)
    path.write_text("\n".join(lines) + "\n")
    meta = {"unit": grid.unit, "shape": list(grid.shape), **grid.metadata, **(metadata or {})}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def _parse_numbers(text, lineno, what):
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise GridFormatError(f"cannot parse {what}: {exc}", lineno) from None


def _header(line, key, lineno):
    prefix = f"# {key}:"
    if not line.startswith(prefix):
        raise GridFormatError(f"expected header '{prefix} ...', got {line[:40]!r}", lineno)
    return line[len(prefix):].strip()


def load_grid(path, expected_unit=None) -> SweepGrid:
    """Read a grid written by :func:`save_grid`.

    Raises:
        GridFormatError: malformed header, ragged or unparsable rows,
            non-monotone axes or a unit different from ``expected_unit``.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) < 3:
        raise GridFormatError("file too short for the three header lines", len(lines) + 1)
    unit = _header(lines[0], "unit", 1)
    if unit not in UNITS:
        raise GridFormatError(f"unknown unit {unit!r}", 1)
    if expected_unit is not None and unit != expected_unit:
        raise GridFormatError(f"unit mismatch: file has {unit!r}, expected {expected_unit!r}", 1)
    gate = np.array(_parse_numbers(_header(lines[1], "gate_axis", 2), 2, "gate_axis"))
    bias = np.array(_parse_numbers(_header(lines[2], "bias_axis", 3), 3, "bias_axis"))
    for name, axis, lineno in (("gate_axis", gate, 2), ("bias_axis", bias, 3)):
        if not np.all(np.isfinite(axis)):
            raise GridFormatError(f"{name} contains non-finite values", lineno)
        bad = np.nonzero(~(np.diff(axis) > 0))[0]
        if bad.size:
            i = bad[0] + 1
            raise GridFormatError(
                f"{name} not strictly increasing at index {i} (value {axis[i]!r} after {axis[i - 1]!r}"
                + (f"; data row {i + 1}, file line {i + 4})" if name == "gate_axis" else ")"),
                lineno,
            )
    rows = lines[3:]
    if len(rows) != gate.size:
        raise GridFormatError(f"expected {gate.size} data rows, found {len(rows)}", 4 + min(len(rows), gate.size))
    values = np.empty((gate.size, bias.size))
    for i, line in enumerate(rows):
        lineno = i + 4
        row = _parse_numbers(line, lineno, "data row")
        if len(row) != bias.size:
            raise GridFormatError(f"ragged row: {len(row)} values, expected {bias.size}", lineno)
        values[i] = row
    metadata = {}
    side = sidecar_path(path)
    if side.exists():
        metadata = json.loads(side.read_text())
        for key in ("unit", "shape"):
            metadata.pop(key, None)
    return SweepGrid(gate, bias, values, unit, metadata=metadata)


def differential_conductance(current_map: SweepGrid) -> SweepGrid:
    """dI/dV_SD by central differences along bias, second-order one-sided at the edges."""
    if current_map.unit != "A":
        raise DomainError(f"current map must be in amperes, got {current_map.unit!r}")
    if current_map.bias_axis.size < 3:
        raise DomainError("differential conductance needs at least 3 bias points")
    dg = np.gradient(current_map.values, current_map.bias_axis, axis=1, edge_order=2)
    return current_map.with_values(dg, unit="S", metadata={**current_map.metadata, "derived": "dI/dV_SD"})


@dataclass(frozen=True, eq=False)
class Inversion:
    """Result of reflectance-to-conductance inversion.

    ``flags`` is a per-cell bit field of FLAG_BELOW_MINIMUM (reflectance under
    the curve minimum, G set to the turning point), FLAG_OUT_OF_MODEL
    (reflectance above ``baseline*(1+eps)``, cell masked) and FLAG_RANGE_LIMIT
    (high branch, reflectance beyond the value at ``g_max``).
    """

    conductance: SweepGrid
    flags: np.ndarray
    g_turn: float

    @property
    def below_minimum(self):
        return (self.flags & FLAG_BELOW_MINIMUM) != 0

    @property
    def out_of_model(self):
        return (self.flags & FLAG_OUT_OF_MODEL) != 0


def conductance_from_reflectance(
    reflectance_map: SweepGrid,
    params: CircuitParams,
    baseline: float,
    f_m: float,
    branch: str = "low",
    g_max: Optional[float] = None,
    tol: float = 1e-12,
    max_iter: int = 200,
    epsilon: float = REFLECTANCE_EPSILON,
) -> Inversion:
    """Invert ``vna_reflectance(G) = measured`` cell by cell by bisection.

    The reflectance curve at ``f_m`` falls from ``G = 0`` to its minimum at
    ``g_turn`` and rises beyond; ``branch`` selects ``[0, g_turn]`` ("low") or
    ``[g_turn, g_max]`` ("high").
    """
    if branch not in ("low", "high"):
        raise DomainError("branch must be 'low' or 'high'")
    if not baseline > 0:
        raise DomainError("baseline must be > 0")
    g_turn = matching_conductance(params, f_m, baseline)
    if g_max is None:
        g_max = 1e3 * g_turn
    def curve(g):
        return vna_reflectance(params, g, f_m, baseline)

    y = reflectance_map.masked_values()
    valid = ~reflectance_map.mask
    flags = np.zeros(y.shape, dtype=np.uint8)
    out = np.full(y.shape, np.nan)

    r_turn = float(curve(g_turn))
    if branch == "low":
        lo_edge, hi_edge = 0.0, g_turn
        r_zero = float(curve(0.0))
    else:
        lo_edge, hi_edge = g_turn, g_max
        r_end = float(curve(g_max))

    out_of_model = valid & (y > baseline * (1.0 + epsilon))
    below = valid & ~out_of_model & (y <= r_turn)
    flags[out_of_model] |= FLAG_OUT_OF_MODEL
    flags[below] |= FLAG_BELOW_MINIMUM
    out[below] = g_turn

    work = valid & ~out_of_model & ~below
    if branch == "low":
        at_edge = work & (y >= r_zero)
        out[at_edge] = 0.0
    else:
        at_edge = work & (y >= r_end)
        out[at_edge] = g_max
        flags[at_edge] |= FLAG_RANGE_LIMIT
    work &= ~at_edge

    target = y[work]
    lo = np.full(target.shape, lo_edge)
    hi = np.full(target.shape, hi_edge)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        r_mid = curve(mid)
        # low branch: reflectance decreasing in G; high branch: increasing
        go_right = (r_mid > target) if branch == "low" else (r_mid < target)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    out[work] = 0.5 * (lo + hi)

    mask = ~valid | out_of_model
    grid = reflectance_map.with_values(
        out,
        unit="S",
        mask=mask,
        metadata={**reflectance_map.metadata, "derived": f"conductance from reflectance ({branch} branch)"},
    )
    return Inversion(grid, flags, g_turn)


@dataclass(frozen=True)
class Cut:
    """One gridline of a map. ``position`` is the coordinate of the line used."""

    axis: str
    position: float
    index: int
    coordinates: np.ndarray
    values: np.ndarray


def extract_cut(grid: SweepGrid, axis: str, value: float) -> Cut:
    """Nearest-gridline cut; ``axis="gate"`` fixes V_G and returns a bias trace.

    Ties go to the lower index.
    """
    if axis == "gate":
        fixed, other = grid.gate_axis, grid.bias_axis
    elif axis == "bias":
        fixed, other = grid.bias_axis, grid.gate_axis
    else:
        raise DomainError("axis must be 'gate' or 'bias'")
    if not fixed[0] <= value <= fixed[-1]:
        raise DomainError(f"cut at {value!r} outside {axis} range [{fixed[0]!r}, {fixed[-1]!r}]")
    idx = int(np.argmin(np.abs(fixed - value)))
    values = grid.values[idx, :] if axis == "gate" else grid.values[:, idx]
    return Cut(axis, float(fixed[idx]), idx, np.array(other), np.array(values))


@dataclass(frozen=True)
class Region:
    """Rectangular ``[gate_min, gate_max] x [bias_min, bias_max]`` region of a map."""

    gate_min: float
    gate_max: float
    bias_min: float
    bias_max: float

    def cells(self, grid: SweepGrid):
        vg, vsd = grid.mesh()
        return (vg >= self.gate_min) & (vg <= self.gate_max) & (vsd >= self.bias_min) & (vsd <= self.bias_max)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["gate_min"]), float(d["gate_max"]), float(d["bias_min"]), float(d["bias_max"]))

    def to_dict(self):
        return {"gate_min": self.gate_min, "gate_max": self.gate_max, "bias_min": self.bias_min, "bias_max": self.bias_max}
