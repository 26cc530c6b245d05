"""``lcmatch`` command-line front end.

Usage::

    lcmatch <design|fit-scatter|fit-hanger|calibrate|invert|simulate> [--config PATH] [flags] ...

Option precedence is flags > config file > built-in defaults. Config files are
JSON objects with a required ``schema_version`` (currently 1) whose keys are
the long flag names with dashes replaced by underscores. Numeric flags accept
SI suffixes (``37nH``, ``3.23GHz``, ``84uS``, ``11.74k``); files are strictly SI.

Exit codes: 0 success, 2 invalid input or config, 3 fit failure, 4 data-shape error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .circuit_model import (
    TWO_PI,
    UNBOUNDED,
    CircuitParams,
    hanger_s21,
    match_condition_zc,
    min_external_q,
    quality_factors,
    vna_reflectance,
)
from .errors import ConfigError, FitError, GridFormatError, LcmatchError, ShapeError
from .fitting import (
    ScatterDataset,
    augment_near_match,
    circuit_from_fit,
    fit_hanger_sweep,
    fit_scatter_fixed_frequency,
)
from .lsq import FitConfig, FitResult
from .maps_io import (
    FLAG_OUT_OF_MODEL,
    Region,
    SweepGrid,
    conductance_from_reflectance,
    differential_conductance,
    extract_cut,
    load_grid,
    require_same_axes,
    save_grid,
)
from .noise_cal import FanoMask, NoiseChain, calibrate_map
from .svg import heatmap, xy_plot
from .synthlab import (
    scenario_from_dict,
    synth_hanger_sweep,
    synth_noise_map,
    synth_reflectance_map,
    validate_scenario,
)
from .units import parse_quantity

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3
EXIT_SHAPE = 4

CONFIG_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------------------
# config and manifest


def load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path}: top level must be a JSON object")
    if "schema_version" not in doc:
        raise ConfigError(f"config {path}: missing required 'schema_version'")
    if doc["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"config {path}: unsupported schema_version {doc['schema_version']!r}")
    return {k: v for k, v in doc.items() if k != "schema_version"}


def resolve(args, config, defaults):
    """Merge options with precedence flags > config > defaults.

    Only keys present in ``defaults`` are resolved; a flag counts as given
    when its parsed value is not None.
    """
    unknown = set(config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in config:
            out[key] = config[key]
        else:
            out[key] = default
    return out


def config_hash(options):
    text = json.dumps(options, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    """Provenance record; exactly one per output directory."""

    command: str
    config_path: str | None
    inputs: dict
    outputs: list
    options: dict
    version: str = __version__
    timestamp: str = ""
    config_hash: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def write(self, outdir):
        self.timestamp = self.timestamp or datetime.now(timezone.utc).isoformat()
        self.config_hash = config_hash(self.options)
        path = Path(outdir) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        return path


class _Outputs:
    def __init__(self, outdir):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.paths = []

    def path(self, name):
        p = self.dir / name
        self.paths.append(str(p))
        return p

    def grid(self, name, grid, metadata=None):
        p = self.path(name)
        self.paths.append(str(p) + ".json")
        save_grid(grid, p, metadata)
        return p

    def plot(self, paths):
        self.paths.extend(str(p) for p in paths)

    def json(self, name, obj):
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
        return p


def _quantity(unit=None):
    def parse(text):
        try:
            return parse_quantity(text, unit)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    parse.__name__ = f"quantity[{unit or ''}]"
    return parse


def _pair(text):
    parts = [p for p in str(text).replace(":", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
    return [parse_quantity(p) for p in parts]


def _region(text):
    parts = [p for p in str(text).split(",") if p.strip()]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("region needs gate_min,gate_max,bias_min,bias_max")
    return [parse_quantity(p) for p in parts]


def _num(value, unit=None):
    return None if value is None else parse_quantity(value, unit)


def _circuit(opts, fit_path):
    """Circuit parameters from a FitResult JSON or from explicit L/C options."""
    if fit_path is not None:
        return circuit_from_fit(FitResult.from_json(Path(fit_path).read_text()))
    c = opts.get("circuit")
    if c is None:
        raise ConfigError("give --fit or a 'circuit' config entry with inductance and capacitance")
    return CircuitParams(**c)


# ---------------------------------------------------------------------------
# design


DESIGN_DEFAULTS = {"R": None, "f0": None, "Z0": 50.0, "R_loss": 0.0}


def cmd_design(args):
    opts = resolve(args, load_config(args.config), DESIGN_DEFAULTS)
    for key in ("R", "f0"):
        if opts[key] is None:
            raise ConfigError(f"design needs --{key} (flag or config)")
    opts = {k: parse_quantity(v) for k, v in opts.items()}
    zc = match_condition_zc(opts["R"], opts["Z0"], opts["R_loss"])
    w0 = TWO_PI * opts["f0"]
    params = CircuitParams(zc / w0, 1.0 / (w0 * zc), opts["R_loss"], opts["Z0"])
    q = quality_factors(params, 1.0 / opts["R"])
    result = {
        "inputs": opts,
        "Zc": zc,
        "L": params.inductance,
        "C": params.capacitance,
        "G_match": (opts["Z0"] - opts["R_loss"]) / zc ** 2,
        "min_external_q": min_external_q(opts["R"], opts["Z0"]),
        "q_external_loaded": q.q_external,
        "q_internal": None if q.q_internal is UNBOUNDED else q.q_internal,
        "q_total_loaded": q.q_total,
        "bandwidth": q.bandwidth,
    }
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))
    else:
        rows = [
            ("Zc", zc, "Ohm"),
            ("L", params.inductance, "H"),
            ("C", params.capacitance, "F"),
            ("G_match", result["G_match"], "S"),
            ("min external Q", result["min_external_q"], ""),
            ("loaded external Q", q.q_external, ""),
            ("loaded total Q", q.q_total, ""),
            ("bandwidth f0/Q", q.bandwidth, "Hz"),
        ]
        for name, value, unit in rows:
            print(f"{name:<20s} {value:>14.6g} {unit}")
    if args.out:
        out = _Outputs(args.out)
        out.json("design.json", result)
        RunManifest("design", args.config, {}, out.paths, opts).write(out.dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-scatter


SCATTER_DEFAULTS = {
    "f_m": None,
    "near_match": None,
    "r_loss": 0.0,
    "max_points": None,
    "seed": 0,
    "weighting": "relative",
    "near_match_weight": 1.0,
    "resonance_side": "above",
    "fit": {},
}


def _fit_config(base, overrides):
    d = {**base.to_dict(), **overrides}
    if "log_params" in d:
        d["log_params"] = frozenset(d["log_params"])
    d["free"] = tuple(d["free"])
    return FitConfig.from_dict(d)


def cmd_fit_scatter(args):
    config = load_config(args.config)
    opts = resolve(args, config, SCATTER_DEFAULTS)
    refl = load_grid(args.reflectance, expected_unit="dimensionless")
    if opts["f_m"] is None:
        # simulated grids record their measurement frequency
        opts["f_m"] = refl.metadata.get("f_m")
    if opts["f_m"] is None:
        raise ConfigError("measurement frequency required (--f-m, 'f_m' in config or grid metadata)")
    f_m = _num(opts["f_m"], "Hz")
    if args.conductance:
        cond = load_grid(args.conductance, expected_unit="S")
        source = {"conductance": args.conductance}
    elif args.current:
        cond = differential_conductance(load_grid(args.current, expected_unit="A"))
        source = {"current": args.current}
    else:
        raise ConfigError("give --current (dI/dV is taken numerically) or --conductance")
    require_same_axes(refl, cond)
    ds = ScatterDataset.from_maps(cond, refl, f_m)
    if opts["max_points"] is not None and len(ds) > int(opts["max_points"]):
        rng = np.random.Generator(np.random.PCG64(int(opts["seed"])))
        keep = np.sort(rng.choice(len(ds), int(opts["max_points"]), replace=False))
        ds = ScatterDataset(ds.conductance[keep], ds.reflectance[keep], f_m)
    if opts["near_match"] is not None:
        g_near, r_near = (parse_quantity(v) for v in opts["near_match"])
        ds = augment_near_match(ds, (g_near, r_near))
    r_loss = _num(opts["r_loss"], "Ohm")
    base = FitConfig.scatter(
        r_loss,
        weighting=opts["weighting"],
        near_match_weight=float(opts["near_match_weight"]),
        resonance_side=opts["resonance_side"],
    )
    fit_config = _fit_config(base, opts["fit"])
    result = fit_scatter_fixed_frequency(ds, fit_config)

    out = _Outputs(args.out)
    out.path("fit.json").write_text(result.to_json(indent=2) + "\n")
    params = circuit_from_fit(result)
    b = result.params["b"]
    g_curve = np.linspace(0.0, max(ds.conductance.max(), result.derived["g_match"]) * 1.2, 400)
    out.plot(
        xy_plot(
            out.dir / "scatter.svg",
            [
                ("data", ds.conductance, ds.reflectance, "scatter"),
                ("fit at f_m", g_curve, vna_reflectance(params, g_curve, f_m, b), "line"),
                ("fit at f0", g_curve, vna_reflectance(params, g_curve, result.derived["f0"], b), "line"),
            ],
            "G (S)",
            "reflectance",
            "reflectance versus conductance",
        )
    )
    RunManifest(
        "fit-scatter", args.config, {"reflectance": args.reflectance, **source}, out.paths, opts, seed=opts["seed"]
    ).write(out.dir)
    return _print_fit(result)


def _print_fit(result):
    for name in result.free:
        err = result.stderr.get(name)
        print(f"{name:<8s} {result.params[name]:>14.6g} +- {err if err is not None else float('nan'):.3g}")
    for name, value in result.derived.items():
        print(f"{name:<8s} {value:>14.6g}")
    if not result.converged:
        print(f"lcmatch: error: fit did not converge: {result.message}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-hanger


HANGER_DEFAULTS = {"weighting": "relative", "line_impedance": 50.0, "fit": {}}


def read_sweep(path):
    """Two-column CSV ``frequency,s21_mag`` with a header row."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["frequency", "s21_mag"]:
            raise ConfigError(f"{path}: expected header 'frequency,s21_mag'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise GridFormatError("sweep row needs two values", lineno)
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise GridFormatError(f"cannot parse sweep row {row!r}", lineno) from None
    a = np.array(rows, dtype=float).reshape(-1, 2)
    return a[:, 0], a[:, 1]


def write_sweep(path, f, s):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency", "s21_mag"])
        for a, b in zip(f, s):
            w.writerow([repr(float(a)), repr(float(b))])


def cmd_fit_hanger(args):
    config = load_config(args.config)
    opts = resolve(args, config, HANGER_DEFAULTS)
    f, s = read_sweep(args.sweep)
    z0 = _num(opts["line_impedance"], "Ohm")
    fit_config = _fit_config(FitConfig.hanger(weighting=opts["weighting"]), opts["fit"])
    result = fit_hanger_sweep(f, s, fit_config, z0)
    out = _Outputs(args.out)
    out.path("fit.json").write_text(result.to_json(indent=2) + "\n")
    order = np.argsort(f)
    model = result.params["scale"] * np.abs(hanger_s21(circuit_from_fit(result), 0.0, f[order], result.params["phi"]))
    out.plot(
        xy_plot(
            out.dir / "hanger.svg",
            [("data", f[order], s[order], "scatter"), ("fit", f[order], model, "line")],
            "f (Hz)",
            "|S21|",
            "hanger transmission",
        )
    )
    RunManifest("fit-hanger", args.config, {"sweep": args.sweep}, out.paths, opts).write(out.dir)
    return _print_fit(result)


# ---------------------------------------------------------------------------
# calibrate


CALIBRATE_DEFAULTS = {
    "chain": None,
    "gain_db": None,
    "band_center": None,
    "bandwidth": None,
    "averaging_count": None,
    "circuit": None,
    "background": None,
    "blockade_region": None,
    "per_gate_background": False,
    "current_floor": 5e-12,
    "fano_ceiling": 10.0,
    "exact": False,
    "cut_gate": None,
    "workers": None,
}


def _chain(opts, line_impedance):
    d = dict(opts["chain"] or {})
    for key in ("gain_db", "band_center", "bandwidth", "averaging_count"):
        if opts[key] is not None:
            d[key] = opts[key]
    d.setdefault("line_impedance", line_impedance)
    missing = [k for k in ("gain_db", "band_center", "bandwidth") if k not in d]
    if missing:
        raise ConfigError(f"noise chain incomplete, missing {missing} (flags or 'chain' config entry)")
    return NoiseChain.from_dict(d)


def cmd_calibrate(args):
    config = load_config(args.config)
    opts = resolve(args, config, CALIBRATE_DEFAULTS)
    power = load_grid(args.power, expected_unit="W")
    current = load_grid(args.current, expected_unit="A")
    inputs = {"power": args.power, "current": args.current}
    if args.conductance:
        cond = load_grid(args.conductance, expected_unit="S")
        inputs["conductance"] = args.conductance
    else:
        cond = differential_conductance(current)
    require_same_axes(power, current, cond)
    if args.fit:
        inputs["fit"] = args.fit
    params = _circuit(opts, args.fit)
    chain = _chain(opts, params.line_impedance)
    region = opts["blockade_region"]
    if isinstance(region, (list, tuple)):
        region = Region(*region)
    elif isinstance(region, dict):
        region = Region.from_dict(region)
    background = opts["background"]
    if background is not None and not isinstance(background, list):
        background = parse_quantity(background, "W")
    mask = FanoMask(float(opts["current_floor"]), float(opts["fano_ceiling"]))
    cal = calibrate_map(
        power,
        current,
        cond,
        chain,
        params,
        mask=mask,
        background=background,
        blockade_region=region,
        per_gate_background=bool(opts["per_gate_background"]),
        exact=bool(opts["exact"]),
        workers=opts["workers"],
    )
    out = _Outputs(args.out)
    out.grid("s_i.csv", cal.s_i)
    out.grid("schottky.csv", cal.schottky)
    out.grid("fano.csv", cal.fano)
    out.plot(heatmap(out.dir / "s_i_map.svg", cal.s_i, "S_I"))
    out.plot(heatmap(out.dir / "schottky_map.svg", cal.schottky, "2e|I|"))
    out.plot(heatmap(out.dir / "fano_map.svg", cal.fano, "Fano factor"))
    cut_gate = opts["cut_gate"]
    cut_gate = float(np.median(power.gate_axis)) if cut_gate is None else parse_quantity(cut_gate, "V")
    cut = extract_cut(cal.fano, "gate", cut_gate)
    out.plot(
        xy_plot(
            out.dir / "fano_cut.svg",
            [("F", cut.coordinates, cut.values, "line")],
            "V_SD (V)",
            "Fano factor",
            f"bias cut at V_G = {cut.position:.6g} V",
        )
    )
    masked_fraction = cal.fano.metadata["masked_fraction"]
    RunManifest(
        "calibrate",
        args.config,
        inputs,
        out.paths,
        opts,
        extra={"masked_fraction": masked_fraction, "background_power": cal.s_i.metadata["background_power"]},
    ).write(out.dir)
    print(f"masked fraction {masked_fraction:.4f}; max Fano on cut {np.nanmax(cut.values):.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# invert


INVERT_DEFAULTS = {"baseline": None, "f_m": None, "branch": "low", "cut_gate": None}


def cmd_invert(args):
    config = load_config(args.config)
    opts = resolve(args, config, INVERT_DEFAULTS)
    refl = load_grid(args.reflectance, expected_unit="dimensionless")
    fit = FitResult.from_json(Path(args.fit).read_text())
    params = circuit_from_fit(fit)
    baseline = fit.params.get("b") if opts["baseline"] is None else parse_quantity(opts["baseline"])
    f_m = fit.derived.get("measurement_frequency") if opts["f_m"] is None else parse_quantity(opts["f_m"], "Hz")
    if baseline is None or f_m is None:
        raise ConfigError("baseline and measurement frequency needed (scatter FitResult or --baseline/--f-m)")
    inv = conductance_from_reflectance(refl, params, baseline, f_m, branch=opts["branch"])
    failed = inv.conductance.mask & ~refl.mask
    out = _Outputs(args.out)
    out.grid("conductance.csv", inv.conductance, {"g_turn": inv.g_turn})
    flags = refl.with_values(inv.flags.astype(float), unit="dimensionless", mask=np.zeros(refl.shape, bool))
    out.grid("flags.csv", flags, {"bits": {"1": "below minimum", "2": "out of model", "4": "range limit"}})
    inputs = {"reflectance": args.reflectance, "fit": args.fit}
    reference = None
    if args.conductance:
        reference = load_grid(args.conductance, expected_unit="S")
        inputs["conductance"] = args.conductance
    elif args.current:
        reference = differential_conductance(load_grid(args.current, expected_unit="A"))
        inputs["current"] = args.current
    cut_gate = opts["cut_gate"]
    cut_gate = float(np.median(refl.gate_axis)) if cut_gate is None else parse_quantity(cut_gate, "V")
    cut = extract_cut(inv.conductance, "gate", cut_gate)
    series = [("G from reflectance", cut.coordinates, cut.values, "line")]
    if reference is not None:
        require_same_axes(reference, refl)
        ref_cut = extract_cut(reference, "gate", cut_gate)
        series.insert(0, ("dI/dV", ref_cut.coordinates, ref_cut.values, "line"))
    out.plot(xy_plot(out.dir / "overlay_cut.svg", series, "V_SD (V)", "G (S)", f"cut at V_G = {cut.position:.6g} V"))
    n_flagged = int(np.count_nonzero(inv.flags))
    RunManifest(
        "invert",
        args.config,
        inputs,
        out.paths,
        opts,
        extra={"flagged_cells": n_flagged, "masked_fraction": float(inv.conductance.mask.mean())},
    ).write(out.dir)
    usable = ~refl.mask
    if usable.any() and np.all(failed[usable]):
        print("lcmatch: error: inversion failed on every cell", file=sys.stderr)
        return EXIT_FIT
    if n_flagged:
        n_out = int(np.count_nonzero(inv.flags & FLAG_OUT_OF_MODEL))
        print(f"warning: {n_flagged} cells flagged ({n_out} out of model, masked)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    try:
        doc = json.loads(Path(args.scenario).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {args.scenario}: invalid JSON ({exc})") from None
    if args.seed is not None:
        doc["seed"] = args.seed
    validate_scenario(doc)
    spec = scenario_from_dict(doc)
    out = _Outputs(args.out)
    seed = int(doc.get("seed", 0))
    kind = spec["kind"]
    if kind == "reflectance":
        maps = synth_reflectance_map(
            spec["model"],
            spec["params"],
            spec["baseline_value"],
            spec["f_m"],
            spec["noise_fraction"],
            spec["seed"],
            spec["grid"],
        )
        out.grid("reflectance.csv", maps.reflectance)
        out.grid("current.csv", maps.current)
        out.grid("conductance.csv", maps.conductance)
        b = maps.reflectance.metadata["baseline"]
        g_near = spec["near_match_g"]
        # seeded separately from the map so the map is unaffected
        rng = np.random.Generator(np.random.PCG64([seed, 1]))
        r_near = float(vna_reflectance(spec["params"], g_near, spec["f_m"], b))
        r_near *= 1.0 + spec["noise_fraction"] * rng.standard_normal()
        truth = {"circuit": spec["params"].as_dict(), "baseline": b, "f_m": spec["f_m"], "near_match": [g_near, r_near]}
    elif kind == "noise":
        maps = synth_noise_map(spec["scenario"])
        out.grid("power.csv", maps.power)
        out.grid("current.csv", maps.current)
        out.grid("conductance.csv", maps.conductance)
        out.grid("fano_truth.csv", maps.fano)
        sc = spec["scenario"]
        truth = {"circuit": sc.circuit.as_dict(), "chain": sc.chain.to_dict(), "background_power": sc.background_power}
    else:
        s = synth_hanger_sweep(spec["params"], spec["phi"], spec["frequencies"], spec["noise_fraction"], seed)
        write_sweep(out.path("sweep.csv"), spec["frequencies"], s)
        truth = {"circuit": spec["params"].as_dict(), "phi": spec["phi"]}
    out.json("truth.json", truth)
    RunManifest("simulate", args.scenario, {"scenario": args.scenario}, out.paths, doc, seed=seed).write(out.dir)
    print(f"wrote {len(out.paths)} files to {out.dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="lcmatch", description="LC impedance-matching analysis toolkit")
    parser.add_argument("--version", action="version", version=f"lcmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="matching-circuit design numbers for a load resistance")
    p.add_argument("--config")
    p.add_argument("--R", type=_quantity("Ohm"), help="load resistance")
    p.add_argument("--f0", type=_quantity("Hz"), help="target resonance frequency")
    p.add_argument("--Z0", type=_quantity("Ohm"), help="line impedance (default 50)")
    p.add_argument("--R-loss", dest="R_loss", type=_quantity("Ohm"), help="series loss (default 0)")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.add_argument("-o", "--out", help="also write design.json and a manifest here")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("fit-scatter", help="fit reflectance versus conductance at a fixed frequency")
    p.add_argument("--config")
    p.add_argument("--reflectance", required=True, help="reflectance grid CSV")
    p.add_argument("--current", help="DC current grid CSV (dI/dV taken numerically)")
    p.add_argument("--conductance", help="conductance grid CSV, instead of --current")
    p.add_argument("--f-m", dest="f_m", type=_quantity("Hz"), help="measurement frequency")
    p.add_argument("--near-match", dest="near_match", type=_pair, help="near-match point G,reflectance")
    p.add_argument("--r-loss", dest="r_loss", type=_quantity("Ohm"), help="fixed loss resistance (default 0)")
    p.add_argument("--max-points", dest="max_points", type=int, help="random subsample size")
    p.add_argument("--seed", type=int, help="subsampling seed")
    p.add_argument("--weighting", choices=("unit", "relative"))
    p.add_argument("--near-match-weight", dest="near_match_weight", type=float)
    p.add_argument("--resonance-side", dest="resonance_side", choices=("above", "below"))
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_fit_scatter)

    p = sub.add_parser("fit-hanger", help="fit a hanger |S21| frequency sweep")
    p.add_argument("--config")
    p.add_argument("--sweep", required=True, help="CSV with header frequency,s21_mag")
    p.add_argument("--weighting", choices=("unit", "relative"))
    p.add_argument("--line-impedance", dest="line_impedance", type=_quantity("Ohm"))
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_fit_hanger)

    p = sub.add_parser("calibrate", help="noise power map to S_I, Schottky and Fano maps")
    p.add_argument("--config")
    p.add_argument("--power", required=True)
    p.add_argument("--current", required=True)
    p.add_argument("--conductance", help="conductance grid; default dI/dV of --current")
    p.add_argument("--fit", help="FitResult JSON with the circuit parameters")
    p.add_argument("--gain-db", dest="gain_db", type=float)
    p.add_argument("--band-center", dest="band_center", type=_quantity("Hz"))
    p.add_argument("--bandwidth", type=_quantity("Hz"))
    p.add_argument("--averaging-count", dest="averaging_count", type=int)
    p.add_argument("--background", type=_quantity("W"), help="background noise power")
    p.add_argument("--blockade-region", dest="blockade_region", type=_region, help="gmin,gmax,bmin,bmax")
    p.add_argument("--per-gate-background", dest="per_gate_background", action="store_const", const=True)
    p.add_argument("--current-floor", dest="current_floor", type=_quantity("A"))
    p.add_argument("--fano-ceiling", dest="fano_ceiling", type=float)
    p.add_argument("--exact", action="store_const", const=True, help="exact transfer function")
    p.add_argument("--cut-gate", dest="cut_gate", type=_quantity("V"), help="gate voltage of the bias cut")
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("invert", help="conductance map from a reflectance map")
    p.add_argument("--config")
    p.add_argument("--reflectance", required=True)
    p.add_argument("--fit", required=True, help="scatter FitResult JSON")
    p.add_argument("--baseline", type=float)
    p.add_argument("--f-m", dest="f_m", type=_quantity("Hz"))
    p.add_argument("--branch", choices=("low", "high"))
    p.add_argument("--current", help="DC current grid for the overlay cut")
    p.add_argument("--conductance", help="reference conductance grid for the overlay cut")
    p.add_argument("--cut-gate", dest="cut_gate", type=_quantity("V"))
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("simulate", help="synthetic dataset from a scenario JSON")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def exit_code_for(exc):
    if isinstance(exc, ShapeError):
        return EXIT_SHAPE
    if isinstance(exc, FitError):
        return EXIT_FIT
    return EXIT_INPUT


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (LcmatchError, ValueError, OSError, TypeError, KeyError) as exc:
        print(f"lcmatch: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
