import unittest

import numpy as np

from src.analysis.dimension_estimation import (
    AutomorphismMap,
    BallCounter,
    IdentityMap,
    ShearMap,
    bilipschitz_invariance,
    default_radii,
    hausdorff_consistency,
    region_offsets,
    median_dimension,
    median_invariance_gap,
    pointwise_dimension,
)
from src.equilibrium.ensemble import ensemble
from src.equilibrium.potentials import ZeroPotential
from src.errors import EmptyBall
from src.torus_dynamics import TorusPoint
from tests.fixtures import CAT, LINEAR


class TestPointwiseDimension(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.e = ensemble(LINEAR, ZeroPotential(), 12)
        cls.counter = BallCounter.from_ensemble(cls.e)

    def test_radii_window(self):
        radii = default_radii(self.counter)
        self.assertAlmostEqual(radii[0], 0.1)
        self.assertGreaterEqual(len(radii), 3)
        self.assertGreaterEqual(radii[-1], 10.0 * self.counter.spacing())

    def test_uniform_measure_has_dimension_two(self):
        median, estimates = median_dimension(self.e, counter=self.counter)
        self.assertAlmostEqual(median, 2.0, delta=0.1)
        self.assertEqual(len(estimates), 20)
        self.assertTrue(all(est.reliable for est in estimates))
        record = estimates[0].to_record()
        self.assertEqual(set(record), {"center", "slope", "slope_stderr", "window", "reliable"})

    def test_box_counting_matches(self):
        self.assertAlmostEqual(hausdorff_consistency(self.e), 2.0, delta=0.05)
        with self.assertRaises(ValueError):
            hausdorff_consistency(self.e, region=(0.0, 0.0, 1.5))

    def test_regions_wrap_across_the_seam(self):
        points = np.array([[0.95, 0.95], [0.05, 0.05], [0.5, 0.5], [0.95, 0.05]])
        rel, inside = region_offsets(points, (0.9, 0.9, 0.2))
        np.testing.assert_array_equal(inside, [True, True, False, True])
        np.testing.assert_allclose(rel[inside], [[0.05, 0.05], [0.15, 0.15], [0.05, 0.15]], atol=1e-12)
        wrapped = hausdorff_consistency(self.e, region=(0.75, 0.75, 0.5))
        self.assertAlmostEqual(wrapped, hausdorff_consistency(self.e, region=(0.25, 0.25, 0.5)), delta=0.1)

    def test_bilipschitz_images_keep_the_dimension(self):
        x = TorusPoint(0.37, 0.61)
        comparison = bilipschitz_invariance(self.e, IdentityMap(), x)
        self.assertEqual(comparison.slope_difference, 0.0)
        self.assertLess(median_invariance_gap(self.e, AutomorphismMap(CAT)), 0.1)
        self.assertLess(median_invariance_gap(self.e, ShearMap(0.1)), 0.1)


class TestDimensionValidation(unittest.TestCase):
    def setUp(self):
        self.e = ensemble(LINEAR, ZeroPotential(), 4)

    def test_sparse_ensemble_gives_empty_balls(self):
        with self.assertRaises(EmptyBall):
            pointwise_dimension(self.e, TorusPoint(0.5, 0.5), radii=[0.1, 0.05, 0.025])

    def test_radii_must_decrease(self):
        with self.assertRaises(ValueError):
            pointwise_dimension(self.e, TorusPoint(0.5, 0.5), radii=[0.05, 0.1, 0.2])

    def test_ball_masses_grow_with_the_radius(self):
        counter = BallCounter(np.array([[0.1, 0.1], [0.95, 0.1], [0.5, 0.5]]), np.array([0.25, 0.25, 0.5]))
        masses, counts = counter.ball_masses(np.array([0.02, 0.1]), np.array([0.2, 0.1, 0.05]))
        np.testing.assert_allclose(masses, [0.5, 0.5, 0.0])
        np.testing.assert_array_equal(counts, [2, 2, 0])


if __name__ == "__main__":
    unittest.main()
