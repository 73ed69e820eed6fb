"""
Pruebas del modelo de canal: vectores de dirección, canal Rician, perturbaciones y JSON
"""
import json
import os

import numpy as np
import pytest

from channel import (ArrayGeometry, ComplexMatrix, Scenario, UncertaintyModel, draw_samples, load_scenario,
                     nominal_channel, path_gain, perturb, save_scenario, scenario_from_dict, scenario_to_dict,
                     steering_ula, steering_upa)
from errors import ScenarioError

GOLDEN = os.path.join(os.path.dirname(__file__), '..', 'scenarios', 'default_scenario.json')


class TestComplexMatrix:

    def test_hermitian_twice_is_identity(self):
        rng = np.random.default_rng(0)
        m = ComplexMatrix.from_complex(rng.standard_normal((6, 16)) + 1j * rng.standard_normal((6, 16)))
        assert m.hermitian().hermitian().equals(m)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            ComplexMatrix(2, 2, np.zeros(3), np.zeros(4))


class TestSteering:
    """Vectores de dirección UPA / ULA"""

    def test_upa_broadside(self):
        a = steering_upa(ArrayGeometry.upa(4, 4), 0.0, 0.3)
        assert np.allclose(a, np.full(16, 1 / 4), atol=1e-15)

    def test_single_element(self):
        assert steering_upa(ArrayGeometry.upa(1, 1), 0.7, 0.2)[0] == pytest.approx(1.0)
        assert steering_ula(ArrayGeometry.ula(1), 0.4)[0] == pytest.approx(1.0)

    def test_upa_per_element_oracle(self):
        theta, phi = np.pi / 3, np.pi / 4
        a = steering_upa(ArrayGeometry.upa(4, 4), theta, phi)
        expected = []
        for m in range(4):
            for n in range(4):
                phase = np.pi * (m * np.sin(theta) * np.cos(phi) + n * np.sin(theta) * np.sin(phi))
                expected.append(np.exp(1j * phase) / 4)
        assert np.allclose(a, expected, atol=1e-14)

    def test_ula_perpendicular(self):
        a = steering_ula(ArrayGeometry.ula(6), np.pi / 2)
        assert np.allclose(a, np.full(6, 1 / np.sqrt(6)), atol=1e-15)

    def test_ula_phase_oracle(self):
        a = steering_ula(ArrayGeometry.ula(4), np.pi / 3)
        expected = np.exp(1j * np.arange(4) * np.pi / 4) / 2
        assert np.allclose(a, expected, atol=1e-14)

    @pytest.mark.parametrize('seed', range(5))
    def test_unit_norm(self, seed):
        rng = np.random.default_rng(seed)
        theta, phi = rng.uniform(0, np.pi, 2)
        assert np.linalg.norm(steering_upa(ArrayGeometry.upa(4, 4), theta, phi)) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(steering_ula(ArrayGeometry.ula(6), theta)) == pytest.approx(1.0, abs=1e-12)

    def test_wrong_kind_raises(self):
        with pytest.raises(ScenarioError):
            steering_ula(ArrayGeometry.upa(2, 2), 0.1)


class TestScenario:

    def test_defaults(self, scenario):
        assert scenario.bs_array.n_elements == 16
        assert scenario.uav_array.n_elements == 6
        assert scenario.tx_power == 1.0

    @pytest.mark.parametrize('kwargs', [
        {'tx_power': 0.0},
        {'noise_power': -1.0},
        {'rician_k': -0.5},
        {'uav_position': (0.0, 0.0, 1500.0)},
        {'eve_position': (0.0, 0.0, 0.0)},
        {'uav_array': ArrayGeometry.ula(4)},
    ])
    def test_invalid_scenarios(self, kwargs):
        with pytest.raises(ScenarioError):
            Scenario(**kwargs)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ScenarioError):
            UncertaintyModel(position_sigma=-1.0)

    def test_scaled_levels(self, uncertainty):
        doubled = uncertainty.scaled(2.0)
        assert doubled.csi_error_sigma == pytest.approx(0.1)
        assert uncertainty.scaled(0.0).is_zero


class TestNominalChannel:

    def test_shapes(self, nominal):
        assert (nominal.h_b.rows, nominal.h_b.cols) == (6, 16)
        assert (nominal.h_e.rows, nominal.h_e.cols) == (6, 16)

    def test_same_seed_bit_identical(self, scenario):
        assert nominal_channel(scenario, 5).equals(nominal_channel(scenario, 5))

    def test_pure_los_limit(self):
        s = Scenario(rician_k=1e12)
        pair = nominal_channel(s, 1)
        g = path_gain(s, s.uav_position)
        assert pair.h_b.frobenius_norm() ** 2 == pytest.approx(g * 6 * 16, rel=1e-3)

    def test_rayleigh_moment(self):
        s = Scenario(rician_k=0.0)
        g = path_gain(s, s.uav_position)
        energies = np.array([nominal_channel(s, seed).h_b.frobenius_norm() ** 2 / 96 for seed in range(10000)])
        se = energies.std() / np.sqrt(energies.size)
        assert abs(energies.mean() - g) < 3 * se

    def test_energy_scales_with_gain(self):
        base = Scenario(rician_k=0.0)
        louder = Scenario(rician_k=0.0, reference_gain_db=base.reference_gain_db + 10 * np.log10(2.0))
        e1 = np.array([nominal_channel(base, s).h_b.frobenius_norm() ** 2 for s in range(4000)])
        e2 = np.array([nominal_channel(louder, s).h_b.frobenius_norm() ** 2 for s in range(4000)])
        ratio_se = np.sqrt(e1.var() / e1.size * 4 + e2.var() / e2.size) / e1.mean()
        assert abs(e2.mean() / e1.mean() - 2.0) < 3 * ratio_se


class TestPerturb:

    def test_zero_uncertainty_is_exact(self, scenario, nominal):
        out = perturb(nominal, scenario, UncertaintyModel(0.0, 0.0, 0.0), 3)
        assert out.equals(nominal)

    def test_same_seed_identical(self, scenario, nominal, uncertainty):
        assert perturb(nominal, scenario, uncertainty, 9).equals(perturb(nominal, scenario, uncertainty, 9))

    def test_csi_error_moment(self, scenario, nominal):
        u = UncertaintyModel(0.0, 0.1, 0.0)
        h = nominal.h_b.to_complex()
        ratios = np.array([np.linalg.norm(perturb(nominal, scenario, u, s).h_b.to_complex() - h) ** 2
                           for s in range(10000)]) / np.linalg.norm(h) ** 2
        se = ratios.std() / np.sqrt(ratios.size)
        assert abs(ratios.mean() - 0.01) < 3 * se

    def test_eve_error_is_larger(self, scenario, nominal):
        u = UncertaintyModel(0.0, 0.1, 0.0)
        b, e = [], []
        for s in range(500):
            out = perturb(nominal, scenario, u, s)
            b.append(np.linalg.norm(out.h_b.to_complex() - nominal.h_b.to_complex()) / nominal.h_b.frobenius_norm())
            e.append(np.linalg.norm(out.h_e.to_complex() - nominal.h_e.to_complex()) / nominal.h_e.frobenius_norm())
        assert np.mean(e) > 1.5 * np.mean(b)

    def test_draw_samples_independent_of_threads(self, scenario, nominal, uncertainty):
        serial = draw_samples(nominal, scenario, uncertainty, 8, 11, threads=1)
        parallel = draw_samples(nominal, scenario, uncertainty, 8, 11, threads=4)
        assert len(serial) == 8
        assert np.array_equal(serial.h_b, parallel.h_b)
        assert np.array_equal(serial.h_e, parallel.h_e)


class TestScenarioJSON:

    def test_round_trip(self, tmp_path, scenario, uncertainty):
        path = tmp_path / 'scenario.json'
        save_scenario(path, scenario, uncertainty)
        loaded, loaded_u = load_scenario(path)
        assert scenario_to_dict(loaded) == scenario_to_dict(scenario)
        assert loaded_u == uncertainty

    def test_golden_file_matches_defaults(self):
        loaded, loaded_u = load_scenario(GOLDEN)
        assert scenario_to_dict(loaded) == scenario_to_dict(Scenario())
        assert loaded_u == UncertaintyModel()

    def test_unknown_key_rejected(self):
        with pytest.raises(ScenarioError):
            scenario_from_dict({'carrier_ghz': 28})

    def test_golden_file_is_si(self):
        with open(GOLDEN, encoding='utf-8') as f:
            doc = json.load(f)
        assert doc['scenario']['noise_power_w'] == 1e-9
