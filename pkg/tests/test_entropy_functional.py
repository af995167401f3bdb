import math
import unittest
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from src.equilibrium.ensemble import ExponentReport, ensemble, entropy, exponent_report, power_ensemble
from src.equilibrium.potentials import FourierPotential, ZeroPotential
from src.rigidity.centralizer import GroupElementSymbol
from src.rigidity.entropy_functional import (
    chi_bar,
    entropy_of_element,
    entropy_spectrum,
    multiplicativity_residual,
    power_entropy,
    rigidity_hypotheses,
    sign_split,
    signed_additivity_residual,
    unstable_factor,
)
from tests.fixtures import CAT, FIBONACCI, FOURIER_TERMS, GOLDEN, LINEAR, LOG_LAMBDA, PERIODIC_COUNTS, PERTURBED


def _report(lambda_u: float, lambda_s: float, kind: str = "fourier") -> ExponentReport:
    return ExponentReport(
        lambda_u=lambda_u,
        lambda_s=lambda_s,
        entropy=0.5,
        delta_u=0.5 / lambda_u,
        delta_s=0.5 / abs(lambda_s),
        dim_total=0.5 / lambda_u + 0.5 / abs(lambda_s),
        pressure=0.0,
        period_used=8,
        potential_kind=kind,
        error_estimates={"lambda_u": 1e-4, "lambda_s": 1e-4, "entropy": 1e-4},
    )


class TestChiBar(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.report = exponent_report(LINEAR, ZeroPotential(), 8, coarse_n=6)

    def test_powers_scale_the_exponent(self):
        self.assertAlmostEqual(chi_bar(self.report, GroupElementSymbol(power=3)), 3 * LOG_LAMBDA, places=12)
        self.assertAlmostEqual(chi_bar(self.report, GroupElementSymbol(power=-2)), -2 * LOG_LAMBDA, places=12)

    def test_affine_tags_use_the_linear_part(self):
        tag = GroupElementSymbol(linear=FIBONACCI, translation=(Fraction(0), Fraction(0)))
        self.assertAlmostEqual(unstable_factor(FIBONACCI, CAT), GOLDEN, places=12)
        self.assertAlmostEqual(chi_bar(self.report, tag, CAT), math.log(GOLDEN), places=12)
        with self.assertRaises(ValueError):
            chi_bar(self.report, tag)

    def test_entropy_of_elements(self):
        h = entropy_of_element(self.report, GroupElementSymbol(power=1))
        self.assertAlmostEqual(h, self.report.entropy, places=12)
        self.assertAlmostEqual(entropy_of_element(self.report, GroupElementSymbol(power=-3)), 3 * h, places=12)
        self.assertAlmostEqual(signed_additivity_residual(self.report, 2, 3), 0.0, places=12)
        self.assertAlmostEqual(signed_additivity_residual(self.report, 2, -3), 0.0, places=12)

    def test_power_entropy(self):
        self.assertEqual(power_entropy(LINEAR, ZeroPotential(), 0, 4), 0.0)
        self.assertAlmostEqual(power_entropy(LINEAR, ZeroPotential(), 2, 4), math.log(2205) / 4, places=12)
        self.assertAlmostEqual(power_entropy(LINEAR, ZeroPotential(), -2, 4), math.log(2205) / 4, places=12)
        with self.assertRaises(ValueError):
            power_entropy(LINEAR, ZeroPotential(), 2, 0)

    def test_square_entropy_from_its_own_ensemble(self):
        phi = FourierPotential(FOURIER_TERMS)
        squared = power_ensemble(PERTURBED, phi, 2, 3)
        base = ensemble(PERTURBED, phi, 6)
        self.assertEqual(squared.power, 2)
        self.assertEqual(len(squared), PERIODIC_COUNTS[6])
        self.assertLess(squared.periodic_set.residual, 1e-10)
        # Fix((a^2)^3) refined on its own lands on Fix(a^6)
        nearest, _ = cKDTree(base.points, boxsize=1.0).query(squared.points)
        self.assertLess(float(np.max(nearest)), 1e-10)
        gap = abs(power_entropy(PERTURBED, phi, 2, 3) - 2.0 * entropy(base, PERTURBED))
        self.assertLess(gap, 1e-9)
        with self.assertRaises(ValueError):
            power_ensemble(PERTURBED, phi, 0, 3)


class TestEntropySpectrum(unittest.TestCase):
    def test_spectrum_is_quantized(self):
        report = exponent_report(LINEAR, ZeroPotential(), 8, coarse_n=6)
        spectrum = entropy_spectrum(report)
        self.assertEqual(len(spectrum.entries), 11)
        self.assertAlmostEqual(spectrum.gap, spectrum.base_entropy, places=14)
        self.assertEqual(len(spectrum.values), 6)
        self.assertEqual(spectrum.to_record()["entries"][0]["m"], -5)
        with self.assertRaises(ValueError):
            entropy_spectrum(report, m_range=(3, -3))

    def test_range_without_the_generator_keeps_the_quantum(self):
        report = exponent_report(LINEAR, ZeroPotential(), 6, coarse_n=4)
        spectrum = entropy_spectrum(report, m_range=(2, 5))
        self.assertEqual(spectrum.gap, spectrum.base_entropy)
        self.assertEqual([m for m, _ in spectrum.entries], [2, 3, 4, 5])
        self.assertAlmostEqual(spectrum.entries[0][1], 2.0 * spectrum.base_entropy, places=12)

        trivial = entropy_spectrum(report, m_range=(0, 0))
        self.assertEqual(trivial.entries, [(0, 0.0)])
        self.assertEqual(trivial.gap, trivial.base_entropy)
        self.assertGreater(trivial.gap, 0.0)


class TestHypotheses(unittest.TestCase):
    def test_linear_measure_is_symmetric(self):
        report = exponent_report(LINEAR, ZeroPotential(), 8, coarse_n=6)
        verdict = rigidity_hypotheses(report)
        self.assertTrue(verdict["positive_entropy"])
        self.assertFalse(verdict["exponent_sum_nonzero"])
        self.assertFalse(verdict["virtually_cyclic"])
        self.assertTrue(verdict["natural_potential"])

    def test_asymmetric_fourier_state(self):
        verdict = rigidity_hypotheses(_report(1.0, -0.9))
        self.assertTrue(verdict["virtually_cyclic"])
        self.assertTrue(verdict["quantized"])
        self.assertAlmostEqual(verdict["exponent_sum"], 0.1)

    def test_sign_split(self):
        mu, nu = _report(1.0, -1.1), _report(1.0, -0.9)
        split = sign_split(mu, nu)
        self.assertTrue(split.holds)
        self.assertIs(split.positive, nu)
        self.assertFalse(sign_split(_report(1.0, -0.9), _report(1.0, -0.8)).holds)


class TestMultiplicativity(unittest.TestCase):
    def test_quotient_factor_is_a_homomorphism(self):
        self.assertLess(multiplicativity_residual(FIBONACCI, CAT, CAT), 1e-12)
        self.assertLess(multiplicativity_residual(FIBONACCI, FIBONACCI, CAT), 1e-12)
        self.assertLess(multiplicativity_residual(-FIBONACCI, CAT.inverse(), CAT), 1e-12)


if __name__ == "__main__":
    unittest.main()
