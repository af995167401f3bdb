import math
import unittest

import numpy as np

from src.equilibrium.potentials import FourierPotential
from src.product_structure import omega_series
from src.reductions import (
    chunk_ranges,
    configure_workers,
    exact_complex_sum,
    exact_sum,
    get_workers,
    log_sum_exp,
    parallel_map,
)
from tests.fixtures import FOURIER_TERMS, PERTURBED


class TestExactReductions(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(3)
        self.values = rng.normal(size=10_000) * 10.0 ** rng.integers(-8, 8, size=10_000)

    def test_sum_ignores_order(self):
        shuffled = np.random.default_rng(4).permutation(self.values)
        self.assertEqual(exact_sum(self.values), exact_sum(shuffled))
        self.assertEqual(exact_sum(self.values), math.fsum(self.values.tolist()))

    def test_cancellation(self):
        self.assertEqual(exact_sum([1e16, 1.0, -1e16]), 1.0)
        self.assertEqual(exact_complex_sum(np.array([1e16 + 1j, 1.0 - 1e16j, -1e16 + 1e16j])), complex(1.0, 1.0))

    def test_log_sum_exp(self):
        self.assertAlmostEqual(log_sum_exp([0.0, 0.0]), math.log(2.0))
        self.assertAlmostEqual(log_sum_exp([1000.0, 1000.0]), 1000.0 + math.log(2.0))
        with self.assertRaises(ValueError):
            log_sum_exp([])


class TestWorkers(unittest.TestCase):
    def tearDown(self):
        configure_workers(1)

    def test_chunks_cover_range(self):
        slices = chunk_ranges(10, 3)
        covered = [i for s in slices for i in range(10)[s]]
        self.assertEqual(covered, list(range(10)))
        self.assertEqual(len(chunk_ranges(2, 8)), 2)

    def test_invalid_worker_count(self):
        with self.assertRaises(ValueError):
            configure_workers(0)
        self.assertEqual(get_workers(), 1)

    def test_parallel_map_matches_serial(self):
        items = np.random.default_rng(5).random((1000, 2))
        serial = parallel_map(np.sqrt, items, min_chunk=100)
        configure_workers(3)
        parallel = parallel_map(np.sqrt, items, min_chunk=100)
        np.testing.assert_array_equal(serial, parallel)

    def test_cocycle_sums_do_not_depend_on_workers(self):
        phi = FourierPotential(FOURIER_TERMS)
        rng = np.random.default_rng(6)
        x = np.array([0.3, 0.6])
        ys = np.mod(x + 0.04 * (rng.random((600, 2)) - 0.5), 1.0)
        serial = omega_series(PERTURBED, phi, "unstable", x, ys).values
        configure_workers(2)
        parallel = omega_series(PERTURBED, phi, "unstable", x, ys).values
        np.testing.assert_array_equal(serial, parallel)


if __name__ == "__main__":
    unittest.main()
