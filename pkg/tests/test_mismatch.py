import numpy as np
import pytest

from adexsim.circuit import get_bias
from adexsim.mismatch import (
    MismatchModel, PARAMETER_RANGES, Population, default_mismatch_model,
    sample_population,
)


class TestSamplePopulation:
    def test_zero_sigma_identical_copies(self, hw_circuit):
        mm = MismatchModel(relative={"leak_ota.g_per_bias": 0.0}, seed=7)
        pop = sample_population(hw_circuit, mm, 5)
        assert pop.size == 5
        assert all(n == hw_circuit for n in pop.neurons)

    def test_law_of_large_numbers(self, hw_circuit):
        # sigma_rel = 0.15 on the leak constant, ten thousand samples
        mm = MismatchModel(relative={"leak_ota.g_per_bias": 0.15}, seed=11)
        pop = sample_population(hw_circuit, mm, 10_000)
        g = np.array([n.leak_ota.g_per_bias for n in pop.neurons])
        spread = np.std(g) / np.mean(g)
        assert abs(spread - 0.15) < 0.01
        assert np.mean(g) == pytest.approx(hw_circuit.leak_ota.g_per_bias, rel=0.01)
        assert np.all(g > 0)

    def test_same_seed_identical_populations(self, hw_circuit):
        mm = default_mismatch_model(hw_circuit, seed=3)
        a = sample_population(hw_circuit, mm, 32)
        b = sample_population(hw_circuit, mm, 32)
        assert a.neurons == b.neurons

    def test_different_seeds_differ(self, hw_circuit):
        a = sample_population(hw_circuit, default_mismatch_model(hw_circuit, seed=3), 8)
        b = sample_population(hw_circuit, default_mismatch_model(hw_circuit, seed=4), 8)
        assert a.neurons != b.neurons

    def test_additive_offsets(self, hw_circuit):
        mm = MismatchModel(additive={"syn_exc.follower_offset": 5e-3}, seed=2)
        pop = sample_population(hw_circuit, mm, 2000)
        offs = np.array([n.syn_exc.follower_offset for n in pop.neurons])
        assert np.std(offs) == pytest.approx(5e-3, rel=0.1)
        assert abs(np.mean(offs)) < 5e-4

    def test_stack_round_trip(self, hw_circuit):
        mm = default_mismatch_model(hw_circuit, seed=5)
        pop = sample_population(hw_circuit, mm, 6)
        again = Population.from_stacked(pop.stacked(), 6)
        assert again.neurons == pop.neurons


class TestDefaultModel:
    def test_paths_reference_real_knobs(self, hw_circuit):
        mm = default_mismatch_model(hw_circuit, seed=0)
        for path in list(mm.relative) + list(mm.additive):
            get_bias(hw_circuit, path)  # raises if the path is wrong

    def test_endpoint_sigma_interpolation(self):
        rng = PARAMETER_RANGES["tau_m"]
        assert rng.sigma_at(0.6e-6) == pytest.approx(0.2 / 0.6)
        assert rng.sigma_at(915e-6) == pytest.approx(140 / 915)
        mid = rng.sigma_at(20e-6)
        assert min(rng.sigma_lo, rng.sigma_hi) < mid < max(rng.sigma_lo, rng.sigma_hi)

    def test_tau_m_endpoint_sigma_value(self):
        # documented endpoint spread at the slow end: 140/915 ~ 0.153
        assert PARAMETER_RANGES["tau_m"].sigma_hi == pytest.approx(0.153, abs=0.001)

    def test_disabled_circuits_contribute_no_spreads(self):
        from adexsim import default_circuit_config
        cfg = default_circuit_config()  # adaptation and exponential off
        mm = default_mismatch_model(cfg, seed=0)
        assert not any(p.startswith("adaptation") for p in mm.relative)
        assert not any(p.startswith("exponential") for p in mm.relative)
