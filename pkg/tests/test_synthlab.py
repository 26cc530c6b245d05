import math
import re

import numpy as np
import pytest

import lcmatch.circuit_model as circuit
from lcmatch.circuit_model import CircuitParams, integrated_transfer, matching_conductance, resonance_frequency
from lcmatch.errors import ConfigError, DomainError
from lcmatch.maps_io import conductance_from_reflectance
from lcmatch.noise_cal import NoiseChain
from lcmatch.synthlab import (
    BaselineModel,
    DiamondModel,
    FanoProfile,
    GridSpec,
    NoiseScenario,
    current_from_conductance,
    diamond_conductance,
    oracle_min_reflectance,
    oracle_riemann_integral,
    scenario_from_dict,
    synth_hanger_sweep,
    synth_noise_map,
    synth_reflectance_map,
    synth_scatter_dataset,
    validate_scenario,
)

SMALL = GridSpec(gate=(0.0, 0.16, 33), bias=(-10e-3, 10e-3, 81))


class TestDiamondModel:
    model = DiamondModel()

    def test_geometry(self):
        assert self.model.gate_period == pytest.approx(0.08)
        assert self.model.diamond_height == pytest.approx(8e-3)
        assert self.model.diamond_center_gate(0) == pytest.approx(0.04)

    def test_blockade_in_center(self):
        for n in range(3):
            g = diamond_conductance(self.model, self.model.diamond_center_gate(n), 0.0)
            assert g < 1e-3 * self.model.peak_conductance

    def test_peak_at_degeneracy(self):
        g = diamond_conductance(self.model, self.model.degeneracy_gate(1), 0.0)
        assert g == pytest.approx(self.model.peak_conductance, rel=1e-6)

    def test_non_negative_and_even(self, rng):
        vg = rng.uniform(-0.1, 0.3, 2000)
        vsd = rng.uniform(-15e-3, 15e-3, 2000)
        g = diamond_conductance(self.model, vg, vsd)
        assert np.all(g >= 0)
        assert np.array_equal(g, diamond_conductance(self.model, vg, -vsd))

    def test_invariants(self):
        with pytest.raises(DomainError):
            DiamondModel(gate_lever=0.0)
        with pytest.raises(DomainError):
            DiamondModel(inelastic_onset=9e-3)
        with pytest.raises(DomainError):
            BaselineModel(base=0.05)

    def test_current_odd_continuous_anchored(self):
        maps = synth_reflectance_map(self.model, CircuitParams(37e-9, 63e-15), 0.42, 3.23e9, grid=SMALL)
        i = maps.current.values
        bias = maps.current.bias_axis
        zero = int(np.argmin(np.abs(bias)))
        assert bias[zero] == 0.0
        assert np.all(i[:, zero] == 0.0)
        assert np.allclose(i, -i[:, ::-1], rtol=0, atol=1e-12 * np.abs(i).max())
        pos, neg = bias > 0, bias < 0
        assert np.all(i[:, pos] > 0) and np.all(i[:, neg] < 0)
        h = bias[1] - bias[0]
        assert np.max(np.abs(np.diff(i, axis=1))) <= maps.conductance.values.max() * h * (1 + 1e-12)

    def test_current_by_independent_integration(self):
        bias = np.linspace(-10e-3, 10e-3, 2001)
        g = diamond_conductance(self.model, 0.0, bias)
        i = current_from_conductance(g, bias)
        fine = np.linspace(0.0, 10e-3, 200001)
        ref = np.sum(diamond_conductance(self.model, 0.0, 0.5 * (fine[1:] + fine[:-1]))) * (fine[1] - fine[0])
        assert i[-1] == pytest.approx(ref, rel=1e-4)

    def test_current_needs_zero_bias(self):
        with pytest.raises(DomainError):
            current_from_conductance(np.ones(5), np.linspace(1, 2, 5))


class TestGenerators:
    params = CircuitParams(37e-9, 63e-15)

    def test_reflectance_map_deterministic(self):
        a = synth_reflectance_map(DiamondModel(), self.params, 0.42, 3.23e9, 0.01, seed=9, grid=SMALL)
        b = synth_reflectance_map(DiamondModel(), self.params, 0.42, 3.23e9, 0.01, seed=9, grid=SMALL)
        c = synth_reflectance_map(DiamondModel(), self.params, 0.42, 3.23e9, 0.01, seed=10, grid=SMALL)
        assert a.reflectance.values.tobytes() == b.reflectance.values.tobytes()
        assert a.reflectance.values.tobytes() != c.reflectance.values.tobytes()
        assert a.reflectance.metadata["seed"] == 9 and a.reflectance.metadata["rng"]

    def test_noiseless_map_inverts(self):
        maps = synth_reflectance_map(DiamondModel(), self.params, 0.42, 3.23e9, grid=SMALL)
        inv = conductance_from_reflectance(maps.reflectance, self.params, 0.42, 3.23e9)
        g = maps.conductance.values
        big = g > 1e-6
        assert np.max(np.abs(inv.conductance.values[big] / g[big] - 1)) < 1e-6

    def test_baseline_model_callable(self):
        b = BaselineModel()
        assert b(0.0) == pytest.approx(0.42 + 0.03 * math.sin(0.3) + 0.02 * math.sin(1.7) + 0.01 * math.sin(4.1))
        maps = synth_reflectance_map(DiamondModel(), self.params, b, 3.23e9, grid=SMALL)
        assert maps.reflectance.metadata["baseline"] == b(3.23e9)

    def test_scatter_and_hanger_deterministic(self):
        a = synth_scatter_dataset(self.params, 0.42, seed=3)
        b = synth_scatter_dataset(self.params, 0.42, seed=3)
        assert np.array_equal(a.reflectance, b.reflectance) and a.augmented[-1]
        f = np.linspace(3.1e9, 3.6e9, 51)
        h = CircuitParams.from_resonance(3.35e9, 954.0, 1.26)
        assert np.array_equal(synth_hanger_sweep(h, 0.5, f, seed=1), synth_hanger_sweep(h, 0.5, f, seed=1))

    def test_zero_current_noise_map(self):
        chain = NoiseChain(94.6, 3.25e9, 50e6, averaging_count=500)
        sc = NoiseScenario(DiamondModel(peak_conductance=1e-30, cotunneling_conductance=0.0), self.params, chain, 2e-6,
                           grid=SMALL)
        maps = synth_noise_map(sc)
        assert np.allclose(maps.power.values, 2e-6, rtol=1e-12)

    def test_noise_map_deterministic(self):
        chain = NoiseChain(94.6, 3.25e9, 50e6, averaging_count=500)
        sc = NoiseScenario(DiamondModel(), self.params, chain, 1e-6, FanoProfile("cotunneling"), 1e-9, 4, SMALL)
        assert synth_noise_map(sc).power.values.tobytes() == synth_noise_map(sc).power.values.tobytes()
        truth = synth_noise_map(sc).fano.values
        assert truth.max() == pytest.approx(8.0, rel=1e-3)
        assert truth.min() >= 1.0


class TestMinReflectanceOracle:
    def test_device_value(self, device):
        g, r = oracle_min_reflectance(device, resonance_frequency(device))
        assert 84e-6 <= g <= 86e-6
        assert r < 2e-3

    def test_closed_form(self):
        for zc in (300.0, 766.0, 1500.0):
            p = CircuitParams.from_resonance(3e9, zc)
            g_closed = 50.0 / zc**2
            # Im Z_in = 0 with Re Z_in = Z0 puts the perfect match slightly below f0
            omega = math.sqrt(1 / (p.inductance * p.capacitance) - (g_closed / p.capacitance) ** 2)
            g, r = oracle_min_reflectance(p, omega / (2 * math.pi))
            assert g == pytest.approx(g_closed, rel=1e-9)
            assert r < 1e-20
            g0, _ = oracle_min_reflectance(p, 3e9)
            assert g0 == pytest.approx(g_closed, rel=0.02)

    def test_line_impedance_scaling(self, device):
        f0 = resonance_frequency(device)
        g1, _ = oracle_min_reflectance(device, f0)
        g2, _ = oracle_min_reflectance(CircuitParams(device.inductance, device.capacitance, 0.0, 100.0), f0)
        assert g2 / g1 == pytest.approx(2.0, rel=0.05)

    def test_edge_minimum(self, device):
        with pytest.raises(DomainError):
            oracle_min_reflectance(device, resonance_frequency(device), g_range=(1e-7, 1e-5))
        with pytest.raises(DomainError):
            oracle_min_reflectance(device, resonance_frequency(device), g_range=(1e-5, 1e-7))

    def test_agrees_with_primary(self, device):
        for f in (3.2e9, 3.23e9, resonance_frequency(device), 3.4e9):
            g_oracle, _ = oracle_min_reflectance(device, f)
            assert matching_conductance(device, f) == pytest.approx(g_oracle, rel=1e-5)


class TestRiemannOracle:
    def test_agrees_with_adaptive(self, device):
        for g in (1e-6, 30e-6):
            ref = integrated_transfer(device, g, 3.25e9, 50e6)
            assert oracle_riemann_integral(device, g, 3.25e9, 50e6) == pytest.approx(ref, rel=1e-6)

    def test_second_order(self, device):
        ref = integrated_transfer(device, 30e-6, 3.25e9, 50e6)
        e1 = abs(oracle_riemann_integral(device, 30e-6, 3.25e9, 50e6, 10_000) - ref)
        e2 = abs(oracle_riemann_integral(device, 30e-6, 3.25e9, 50e6, 20_000) - ref)
        assert e1 / e2 == pytest.approx(4.0, rel=0.05)

    def test_constant_integrand(self, device):
        # a 1 Hz band is flat to ~1e-16 relative, so the sum is |t|^2 times the width
        t = circuit.transfer_function_approx(device, 30e-6, 3.25e9)
        assert oracle_riemann_integral(device, 30e-6, 3.25e9, 1.0, 10_000) == pytest.approx(abs(t) ** 2, rel=1e-12)

    def test_minimum_points(self, device):
        with pytest.raises(DomainError):
            oracle_riemann_integral(device, 30e-6, 3.25e9, 50e6, 9_999)


class TestOracleIndependence:
    """A bug injected into the primary path must be caught by the oracle check."""

    @staticmethod
    def matching_check(p, f):
        g_oracle, _ = oracle_min_reflectance(p, f)
        return abs(matching_conductance(p, f) / g_oracle - 1) < 1e-5

    @staticmethod
    def band_check(p):
        return abs(integrated_transfer(p, 30e-6, 3.25e9, 50e6) / oracle_riemann_integral(p, 30e-6, 3.25e9, 50e6) - 1) < 1e-6

    def test_reflectance_bug_detected(self, device, monkeypatch):
        f = 3.23e9
        before = oracle_min_reflectance(device, f)
        assert self.matching_check(device, f)
        original = circuit.input_impedance

        def buggy(params, load, freq):
            return original(CircuitParams(params.inductance * 1.01, params.capacitance), load, freq)

        monkeypatch.setattr(circuit, "input_impedance", buggy)
        assert not self.matching_check(device, f)
        assert oracle_min_reflectance(device, f) == before

    def test_transfer_bug_detected(self, device, monkeypatch):
        before = oracle_riemann_integral(device, 30e-6, 3.25e9, 50e6)
        assert self.band_check(device)
        original = circuit.transfer_function_approx
        monkeypatch.setattr(circuit, "transfer_function_approx", lambda p, g, f: 1.001 * original(p, g, f))
        assert not self.band_check(device)
        assert oracle_riemann_integral(device, 30e-6, 3.25e9, 50e6) == before


class TestScenarioDocuments:
    def test_valid_kinds(self):
        for doc in (
            {"schema_version": 1, "kind": "reflectance", "seed": 2, "noise_fraction": 0.01, "grid": SMALL.to_dict()},
            {"schema_version": 1, "kind": "hanger", "phi": 0.3},
            {
                "schema_version": 1,
                "kind": "noise",
                "chain": {"gain_db": 94.6, "band_center": 3.25e9, "bandwidth": 50e6, "averaging_count": 500},
                "background_power": 1e-6,
                "fano": {"kind": "cotunneling"},
            },
        ):
            built = scenario_from_dict(validate_scenario(doc))
            assert built["kind"] == doc["kind"]

    def test_reflectance_defaults(self):
        built = scenario_from_dict({"schema_version": 1, "kind": "reflectance"})
        assert built["params"] == CircuitParams(37e-9, 63e-15)
        assert built["f_m"] == 3.23e9 and built["near_match_g"] == 77e-6
        assert isinstance(built["baseline_value"], BaselineModel)

    @pytest.mark.parametrize(
        "doc, path",
        [
            ({"schema_version": 1, "kind": "reflectance", "circuit": {"inductance": -1, "capacitance": 1e-13}},
             "$.circuit.inductance"),
            ({"schema_version": 1, "kind": "reflectance", "colour": "blue"}, "$"),
            ({"schema_version": 2, "kind": "reflectance"}, "$.schema_version"),
            ({"schema_version": 1, "kind": "noise", "background_power": 1e-6}, "$"),
            ({"schema_version": 1, "kind": "hanger", "sweep": [1, 2]}, "$.sweep"),
            ({"schema_version": 1, "kind": "reflectance", "seed": -3}, "$.seed"),
        ],
    )
    def test_schema_errors_name_path(self, doc, path):
        with pytest.raises(ConfigError, match=f"at {re.escape(path)}:"):
            validate_scenario(doc)

