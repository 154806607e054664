"""Annealer: trivial landscapes, determinism, oracle agreement, brute force."""

import numpy as np
import pytest

from prunequbo.anneal import AnnealConfig, anneal, brute_force
from prunequbo.errors import ArgumentError, SizeError
from prunequbo.kernels import active_backend, set_backend
from prunequbo.problem import PruningMask, cardinality
from prunequbo.qubo import CoefficientSet, QuboMatrix, energy


def make_qubo(diag, upper=None):
    diag = np.asarray(diag, dtype=np.float64)
    n = diag.size
    if upper is None:
        upper = np.zeros((n, n))
    return QuboMatrix(n=n, diag=diag, upper=np.asarray(upper, dtype=np.float64),
                      diag_base=diag.copy(), components={}, gamma=0.0,
                      variant="classic_l1", coeffs=CoefficientSet())


def random_qubo(rng, n, scale=1.0):
    diag = rng.normal(size=n) * scale
    upper = np.triu(rng.normal(size=(n, n)) * scale, k=1)
    return make_qubo(diag, upper)


FAST = AnnealConfig(num_reads=20, sweeps_per_read=200, seed=123)


class TestAnneal:
    def test_positive_diagonal_prunes_nothing(self):
        q = make_qubo(np.ones(10))
        res = anneal(q, FAST)
        assert cardinality(res.best_mask) == 0
        assert res.best_energy == 0.0

    def test_negative_diagonal_prunes_everything(self):
        q = make_qubo(-np.ones(10))
        res = anneal(q, FAST)
        assert cardinality(res.best_mask) == 10
        assert res.best_energy == -10.0

    def test_result_invariants(self):
        rng = np.random.default_rng(0)
        q = random_qubo(rng, 12)
        res = anneal(q, FAST)
        assert res.best_energy == min(res.per_read_energies)
        assert energy(q, res.best_mask) == pytest.approx(res.best_energy, abs=1e-9)
        assert res.flips_evaluated == FAST.num_reads * FAST.sweeps_per_read * 12

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        q = random_qubo(rng, 14)
        a = anneal(q, FAST)
        b = anneal(q, FAST)
        assert a.best_energy == b.best_energy
        assert a.best_mask == b.best_mask
        np.testing.assert_array_equal(a.per_read_energies, b.per_read_energies)

    def test_monotone_reads_prefix_property(self):
        rng = np.random.default_rng(2)
        q = random_qubo(rng, 12)
        few = anneal(q, AnnealConfig(num_reads=5, sweeps_per_read=100, seed=9))
        many = anneal(q, AnnealConfig(num_reads=10, sweeps_per_read=100, seed=9))
        np.testing.assert_array_equal(many.per_read_energies[:5], few.per_read_energies)
        assert many.best_energy <= few.best_energy

    def test_matches_brute_force_on_small_instances(self):
        rng = np.random.default_rng(3)
        hits = 0
        for _ in range(20):
            n = int(rng.integers(6, 13))
            q = random_qubo(rng, n)
            res = anneal(q, AnnealConfig(num_reads=30, sweeps_per_read=300, seed=7))
            exact = brute_force(q)
            assert res.best_energy >= exact.best_energy - 1e-9
            if res.best_energy <= exact.best_energy + 1e-9:
                hits += 1
        assert hits == 20

    def test_linear_schedule_supported(self):
        rng = np.random.default_rng(4)
        q = random_qubo(rng, 8)
        cfg = AnnealConfig(num_reads=10, sweeps_per_read=100, schedule="linear", seed=1)
        res = anneal(q, cfg)
        assert energy(q, res.best_mask) == pytest.approx(res.best_energy, abs=1e-9)

    def test_config_validation(self):
        with pytest.raises(ArgumentError):
            AnnealConfig(num_reads=0)
        with pytest.raises(ArgumentError):
            AnnealConfig(beta_start=1.0, beta_end=0.5)
        with pytest.raises(ArgumentError):
            AnnealConfig(schedule="exponential")


class TestBruteForce:
    def test_single_negative_variable(self):
        q = make_qubo(np.array([-2.0]))
        res = brute_force(q)
        assert res.best_mask == PruningMask(np.array([1]))
        assert res.best_energy == -2.0

    def test_two_variable_tie_breaks_lexicographically(self):
        # Energies: 00 -> 0, 01 -> -1, 10 -> -1, 11 -> 1. The tie between
        # 01 and 10 resolves to the lexicographically smaller 01.
        upper = np.array([[0.0, 3.0], [0.0, 0.0]])
        q = make_qubo(np.array([-1.0, -1.0]), upper)
        res = brute_force(q)
        assert res.best_mask == PruningMask(np.array([0, 1]))
        assert res.best_energy == -1.0

    def test_lower_bound_for_anneal(self):
        rng = np.random.default_rng(5)
        q = random_qubo(rng, 12)
        exact = brute_force(q)
        res = anneal(q, FAST)
        assert exact.best_energy <= res.best_energy + 1e-12

    def test_size_guard(self):
        q = make_qubo(np.zeros(25))
        with pytest.raises(SizeError):
            brute_force(q)

    def test_enumeration_oracle_small(self):
        rng = np.random.default_rng(6)
        q = random_qubo(rng, 6)
        energies = []
        for k in range(64):
            bits = np.array([(k >> (5 - i)) & 1 for i in range(6)], dtype=np.int8)
            energies.append(energy(q, PruningMask(bits)))
        res = brute_force(q)
        assert res.best_energy == min(energies)


class TestBackends:
    def test_numpy_backend_matches_numba(self):
        rng = np.random.default_rng(7)
        q = random_qubo(rng, 10)
        cfg = AnnealConfig(num_reads=5, sweeps_per_read=100, seed=3)
        default = active_backend()
        try:
            set_backend("numpy")
            res_np = anneal(q, cfg)
            set_backend("numba")
            res_nb = anneal(q, cfg)
        finally:
            set_backend(default)
        assert res_np.best_mask == res_nb.best_mask
        assert res_np.best_energy == res_nb.best_energy
        np.testing.assert_array_equal(res_np.per_read_energies, res_nb.per_read_energies)

    def test_unknown_backend_rejected(self):
        with pytest.raises(ArgumentError):
            set_backend("gpu")
