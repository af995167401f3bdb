import unittest
from fractions import Fraction

import numpy as np

from src.conjugacy import compute_conjugacy
from src.equilibrium.ensemble import ensemble
from src.equilibrium.potentials import ZeroPotential
from src.errors import DegenerateSamples, NonCommuting, NotHyperbolic
from src.rigidity.centralizer import (
    GroupElementSymbol,
    affine_straightening_residual,
    centralizer_generator,
    commutant_candidates,
    estimate_translation_group,
    noise_floor,
    quotient_contraction,
    rational_grid,
    translation_invariance_statistic,
)
from src.torus_dynamics import IntMatrix2
from tests.fixtures import CAT, FIBONACCI, GOLDEN, LINEAR

HALF = Fraction(1, 2)
ZERO = Fraction(0)


class TestCentralizer(unittest.TestCase):
    def test_cat_map_is_the_square_of_fibonacci(self):
        data = centralizer_generator(CAT)
        self.assertEqual(data.M, FIBONACCI)
        self.assertEqual(data.k, 2)
        self.assertEqual(data.sign, 1)
        self.assertEqual(data.to_record()["M"], [[1, 1], [1, 0]])

    def test_generator_of_itself(self):
        data = centralizer_generator(FIBONACCI, entry_bound=4)
        self.assertEqual(data.M, FIBONACCI)
        self.assertEqual(data.k, 1)

    def test_validation(self):
        with self.assertRaises(NotHyperbolic):
            centralizer_generator(IntMatrix2(1, 1, 0, 1))
        with self.assertRaises(ValueError):
            centralizer_generator(IntMatrix2(5, 2, 2, 1), entry_bound=3)

    def test_quotient_contraction(self):
        self.assertAlmostEqual(quotient_contraction(CAT, CAT), 1.0 / GOLDEN**2, places=12)
        self.assertAlmostEqual(quotient_contraction(FIBONACCI, CAT), -1.0 / GOLDEN, places=12)
        with self.assertRaises(NonCommuting):
            quotient_contraction(IntMatrix2(1, 1, 0, 1), CAT)


class TestGroupElementSymbol(unittest.TestCase):
    def test_powers_add(self):
        self.assertEqual(GroupElementSymbol(power=2).compose(GroupElementSymbol(power=-5)).power, -3)

    def test_affine_composition(self):
        g = GroupElementSymbol(linear=FIBONACCI, translation=(HALF, ZERO))
        h = GroupElementSymbol(linear=FIBONACCI, translation=(ZERO, HALF))
        gh = g.compose(h)
        self.assertEqual(gh.linear, CAT)
        self.assertEqual(gh.translation, (ZERO, ZERO))
        self.assertEqual(gh.to_record()["translation"], ["0", "0"])

    def test_translations_are_reduced(self):
        g = GroupElementSymbol(linear=CAT, translation=(Fraction(3, 2), Fraction(-1, 3)))
        self.assertEqual(g.translation, (HALF, Fraction(2, 3)))
        with self.assertRaises(ValueError):
            GroupElementSymbol(translation=(HALF, HALF))
        with self.assertRaises(ValueError):
            g.compose(GroupElementSymbol(power=1))


class TestCommutant(unittest.TestCase):
    def setUp(self):
        self.data = centralizer_generator(CAT)

    def test_trivial_translation_group(self):
        report = commutant_candidates(CAT, self.data, [(ZERO, ZERO)])
        self.assertEqual(report.translations, [(ZERO, ZERO)])
        self.assertEqual(report.index, 4)
        self.assertTrue(report.axioms_verified)

    def test_full_two_torsion(self):
        H = [(ZERO, ZERO), (HALF, ZERO), (ZERO, HALF), (HALF, HALF)]
        report = commutant_candidates(CAT, self.data, H)
        self.assertEqual(len(report.translations), 4)
        self.assertEqual(report.index, 16)
        self.assertTrue(report.axioms_verified)
        self.assertEqual(report.to_record()["translation_count"], 4)

    def test_non_invariant_subgroup_fails_closure(self):
        report = commutant_candidates(CAT, self.data, [(ZERO, ZERO), (HALF, HALF)])
        self.assertEqual(report.translations, [(ZERO, ZERO), (HALF, ZERO)])
        self.assertFalse(report.axioms_verified)
        self.assertTrue(report.failures[0].startswith("closure"))


class TestTranslationGroup(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.e = ensemble(LINEAR, ZeroPotential(), 8)
        cls.c = compute_conjugacy(LINEAR, 256)

    def test_noise_floor_of_uniform_weights(self):
        self.assertAlmostEqual(noise_floor(self.e), 1.0 / np.sqrt(2205), places=12)

    def test_uniform_lattice_measure_is_invariant(self):
        self.assertLess(translation_invariance_statistic(self.e, self.c, (HALF, ZERO)), 1e-12)
        accepted = estimate_translation_group(self.e, self.c, max_denominator=3)
        self.assertEqual(accepted, rational_grid(3))
        self.assertEqual(len(accepted), 12)


class TestAffineFit(unittest.TestCase):
    def test_recovers_an_affine_automorphism(self):
        sources = np.random.default_rng(11).random((200, 2))
        images = np.mod(sources @ CAT.as_array().T + np.array([0.25, 0.5]), 1.0)
        fit = affine_straightening_residual(sources, images, CAT)
        self.assertEqual(fit.integer_linear(), CAT)
        np.testing.assert_allclose(fit.translation, [0.25, 0.5], atol=1e-10)
        self.assertLess(fit.residual, 1e-10)

    def test_collinear_samples(self):
        t = np.linspace(0.1, 0.4, 20)
        sources = np.column_stack([t, t])
        with self.assertRaises(DegenerateSamples):
            affine_straightening_residual(sources, sources, CAT)
        with self.assertRaises(DegenerateSamples):
            affine_straightening_residual(sources[:2], sources[:2], CAT)


if __name__ == "__main__":
    unittest.main()
