import unittest

import numpy as np

from src.equilibrium.potentials import ConstantPotential, FourierPotential, ZeroPotential
from src.errors import LeafEscape, OutOfChart
from src.hyperbolic_splitting import bracket, local_manifold
from src.product_structure import (
    check_dynamical_jacobian,
    check_holonomy_jacobian,
    cocycle_identity_residuals,
    conditional_family,
    leaf_measure,
    matched_tv,
    omega_series,
    omega_u,
    product_reconstruction,
    pushforward_equivalence,
    total_variation,
)
from src.torus_dynamics import TorusPoint
from tests.fixtures import CAT, FOURIER_TERMS, LINEAR, PERTURBED


class TestLeafMeasures(unittest.TestCase):
    def setUp(self):
        self.x = TorusPoint(0.3, 0.6)
        self.phi = FourierPotential(FOURIER_TERMS)

    def test_linear_zero_potential_is_arclength(self):
        segment = local_manifold(LINEAR, self.x, "unstable", 0.1, 0.01)
        lm = leaf_measure(LINEAR, ZeroPotential(), segment, 6)
        self.assertEqual(lm.resolution, 64)
        np.testing.assert_allclose(lm.masses, 1.0 / 64, atol=1e-10)
        self.assertAlmostEqual(float(lm.cdf(np.array([0.0]))[0]), 0.5, places=9)
        self.assertEqual(list(lm.to_frame().columns), ["param", "mass"])

    def test_generation_is_bounded_by_the_leaf_depth(self):
        segment = local_manifold(LINEAR, self.x, "unstable", 0.1, 0.01, depth=6)
        with self.assertRaises(LeafEscape):
            leaf_measure(LINEAR, ZeroPotential(), segment, 8)
        with self.assertRaises(ValueError):
            leaf_measure(LINEAR, ZeroPotential(), segment, 0)

    def test_edges_must_stay_on_the_segment(self):
        segment = local_manifold(LINEAR, self.x, "unstable", 0.1, 0.01)
        with self.assertRaises(LeafEscape):
            leaf_measure(LINEAR, ZeroPotential(), segment, 4, edges=np.linspace(-0.2, 0.2, 9))

    def test_refinement_converges(self):
        segment = local_manifold(PERTURBED, self.x, "unstable", 0.1, 0.005)
        coarse = leaf_measure(PERTURBED, self.phi, segment, 6)
        fine = leaf_measure(PERTURBED, self.phi, segment, 10)
        self.assertLess(matched_tv(coarse, fine), 1e-2)

    def test_total_variation(self):
        self.assertEqual(total_variation(np.array([0.5, 0.5]), np.array([0.5, 0.5])), 0.0)
        self.assertAlmostEqual(total_variation(np.array([1.0, 0.0]), np.array([0.0, 1.0])), 1.0)


class TestDynamicalJacobian(unittest.TestCase):
    def test_linear_zero_potential(self):
        segment = local_manifold(LINEAR, TorusPoint(0.3, 0.6), "unstable", 0.1, 0.01)
        lm = leaf_measure(LINEAR, ZeroPotential(), segment, 6)
        self.assertLess(check_dynamical_jacobian(LINEAR, ZeroPotential(), lm), 1e-10)

    def test_perturbed_fourier_on_both_sides(self):
        phi = FourierPotential(FOURIER_TERMS)
        for side in ("unstable", "stable"):
            segment = local_manifold(PERTURBED, TorusPoint(0.3, 0.6), side, 0.1, 0.005)
            fine = check_dynamical_jacobian(PERTURBED, phi, leaf_measure(PERTURBED, phi, segment, 8))
            coarse = check_dynamical_jacobian(PERTURBED, phi, leaf_measure(PERTURBED, phi, segment, 4))
            self.assertLess(fine, 0.05)
            self.assertLessEqual(fine, coarse + 1e-12)

    def test_pushforward_equivalence(self):
        phi = FourierPotential(FOURIER_TERMS)
        segment = local_manifold(PERTURBED, TorusPoint(0.3, 0.6), "unstable", 0.1, 0.005)
        bound = pushforward_equivalence(PERTURBED, phi, leaf_measure(PERTURBED, phi, segment, 6))
        self.assertGreaterEqual(bound.ratio_bound, 1.0)
        self.assertLessEqual(bound.ratio_bound, 1.05 * bound.predicted_bound)
        stable = local_manifold(PERTURBED, TorusPoint(0.3, 0.6), "stable", 0.1, 0.005)
        with self.assertRaises(ValueError):
            pushforward_equivalence(PERTURBED, phi, leaf_measure(PERTURBED, phi, stable, 6))


class TestCocycles(unittest.TestCase):
    def setUp(self):
        self.phi = FourierPotential(FOURIER_TERMS)
        self.x = TorusPoint(0.3, 0.6)

    def test_constant_potential_has_no_cocycle(self):
        ys = np.array([[0.32, 0.61], [0.29, 0.58]])
        series = omega_series(PERTURBED, ConstantPotential(0.4), "unstable", self.x.as_array(), ys)
        np.testing.assert_array_equal(series.values, np.zeros(2))
        np.testing.assert_array_equal(series.terms, np.zeros(2, dtype=int))

    def test_cocycle_vanishes_at_the_base_point(self):
        self.assertEqual(omega_u(PERTURBED, self.phi, self.x, self.x), 0.0)

    def test_series_tails_are_small(self):
        ys = self.x.as_array() + np.array([[0.02, 0.01], [-0.01, 0.03], [0.015, -0.02]])
        for side in ("unstable", "stable"):
            series = omega_series(PERTURBED, self.phi, side, self.x.as_array(), ys)
            self.assertTrue(np.all(np.isfinite(series.values)))
            self.assertLess(series.max_tail_bound, 1e-10)
            self.assertTrue(np.all(series.terms > 1))

    def test_cocycle_identity(self):
        x_prime = bracket(PERTURBED, TorusPoint(0.31, 0.585), self.x)
        ys = self.x.as_array() + np.array([[0.02, 0.01], [-0.01, 0.03]])
        residuals = cocycle_identity_residuals(
            PERTURBED,
            self.phi,
            np.repeat(self.x.as_array()[None, :], 2, axis=0),
            np.repeat(x_prime.as_array()[None, :], 2, axis=0),
            ys,
        )
        self.assertLess(float(np.max(residuals)), 1e-8)


class TestHolonomyJacobian(unittest.TestCase):
    def setUp(self):
        self.phi = FourierPotential(FOURIER_TERMS)

    def test_linear_map(self):
        _, e_s = CAT.eigenbasis()
        x = TorusPoint(0.3, 0.6)
        x_s = TorusPoint.from_array(x.as_array() + 0.02 * e_s)
        self.assertLess(check_holonomy_jacobian(LINEAR, self.phi, x, x_s), 1e-3)
        self.assertEqual(check_holonomy_jacobian(LINEAR, self.phi, x, x), 0.0)

    def test_perturbed_map(self):
        x = TorusPoint(0.3, 0.6)
        x_s = bracket(PERTURBED, TorusPoint(0.31, 0.585), x)
        self.assertLess(check_holonomy_jacobian(PERTURBED, self.phi, x, x_s), 0.05)
        with self.assertRaises(OutOfChart):
            check_holonomy_jacobian(PERTURBED, self.phi, x, x_s, chart_delta=0.005)

    def test_point_off_the_stable_leaf(self):
        with self.assertRaises(OutOfChart):
            check_holonomy_jacobian(PERTURBED, self.phi, TorusPoint(0.3, 0.6), TorusPoint(0.32, 0.61))


class TestConditionalsAndProduct(unittest.TestCase):
    def test_conditional_family_refines(self):
        phi = FourierPotential(FOURIER_TERMS)
        segment = local_manifold(PERTURBED, TorusPoint(0.3, 0.6), "unstable", 0.1, 0.005)
        table = conditional_family(PERTURBED, phi, segment, generations=(6, 8))
        self.assertEqual(list(table.columns), ["generation_from", "generation_to", "tv"])
        self.assertLess(float(table["tv"].iloc[0]), 0.05)
        with self.assertRaises(ValueError):
            conditional_family(PERTURBED, phi, segment, generations=(6,))

    def test_linear_product_matches_the_ensemble(self):
        tv = product_reconstruction(
            LINEAR, ZeroPotential(), TorusPoint(0.4, 0.3), resolution=4, n=12, half_width=0.1
        )
        self.assertLess(tv, 0.1)

    def test_half_width_is_validated(self):
        with self.assertRaises(ValueError):
            product_reconstruction(LINEAR, ZeroPotential(), TorusPoint(0.4, 0.3), half_width=0.3)
        with self.assertRaises(OutOfChart):
            product_reconstruction(
                LINEAR, ZeroPotential(), TorusPoint(0.4, 0.3), resolution=4, n=8, half_width=0.1, chart_delta=0.05
            )


if __name__ == "__main__":
    unittest.main()
