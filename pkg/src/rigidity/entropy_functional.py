"""Average unstable exponent of group elements, their entropies and the
quantized entropy spectrum of the constructible subgroup."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from src.equilibrium.ensemble import ExponentReport, entropy, power_ensemble
from src.equilibrium.potentials import Potential
from src.equilibrium.seeding import PeriodicOrbitFinder
from src.errors import NumericalError
from src.rigidity.centralizer import GroupElementSymbol, quotient_contraction
from src.torus_dynamics import DEFAULT_CONE, AnosovMapSpec, IntMatrix2

NATURAL_POTENTIALS = ("zero", "constant", "phi_u", "phi_s")
EXPONENT_SUM_FLOOR: float = 1e-10


def unstable_factor(B: IntMatrix2, A: IntMatrix2) -> float:
    """Eigenvalue of a matrix commuting with A on the unstable eigenline of A."""
    e_u, _ = A.eigenbasis()
    return float(e_u @ (B.as_array() @ e_u))


def chi_bar(report: ExponentReport, symbol: GroupElementSymbol, A: Optional[IntMatrix2] = None) -> float:
    """Average unstable log-Jacobian of a group element.

    Powers a^m give m lambda_u. An affine tag (B, v) of the linear model gives
    log |B| along the unstable line of A, which then has to be passed.

    Raises:
        ValueError: If an affine tag is given without A.
    """
    if not symbol.is_affine:
        return symbol.power * report.lambda_u
    if A is None:
        raise ValueError("The 'A' parameter is required to evaluate an affine tag.")
    return math.log(abs(unstable_factor(symbol.linear, A)))


def entropy_of_element(report: ExponentReport, symbol: GroupElementSymbol, A: Optional[IntMatrix2] = None) -> float:
    """h_mu(g) = |chi_bar(g)| delta_u."""
    return abs(chi_bar(report, symbol, A)) * report.delta_u


def signed_additivity_residual(report: ExponentReport, m: int, n: int) -> float:
    """Defect of h(a^m a^n) against h(a^m) + h(a^n), or |h(a^m) - h(a^n)| when mn < 0."""
    h_m = entropy_of_element(report, GroupElementSymbol(power=m))
    h_n = entropy_of_element(report, GroupElementSymbol(power=n))
    h_mn = entropy_of_element(report, GroupElementSymbol(power=m).compose(GroupElementSymbol(power=n)))
    expected = h_m + h_n if m * n >= 0 else abs(h_m - h_n)
    return abs(h_mn - expected)


def power_entropy(
    map_spec: AnosovMapSpec,
    phi: Potential,
    m: int,
    n: int,
    finder: Optional[PeriodicOrbitFinder] = None,
    cone: Tuple[int, float, float] = DEFAULT_CONE,
) -> float:
    """Entropy of a^m from its own period-n ensemble.

    Fix((a^m)^n) is refined for the composed map and weighted by S_|m| phi
    along a^m-orbits. a^-m has the entropy of a^m, so only |m| enters.
    """
    if m == 0:
        return 0.0
    if n < 1:
        raise ValueError("The parameter 'n' must be at least 1.")
    return entropy(power_ensemble(map_spec, phi, abs(m), n, finder, cone), map_spec)


@dataclass(frozen=True)
class EntropySpectrum:
    base_entropy: float
    entries: List[Tuple[int, float]]
    gap: float

    @property
    def values(self) -> List[float]:
        return sorted({value for _, value in self.entries})

    def to_record(self) -> dict:
        return {
            "base_entropy": self.base_entropy,
            "gap": self.gap,
            "entries": [{"m": m, "entropy": value} for m, value in self.entries],
        }


def entropy_spectrum(report: ExponentReport, m_range: Tuple[int, int] = (-5, 5)) -> EntropySpectrum:
    """Entropies |m| h of the powers a^m for m in the closed range.

    The gap is the quantum h itself, whether or not m = +-1 lies in the range.

    Raises:
        ValueError: If the range is empty.
        NumericalError: If an entry is not the multiple |m| h of the quantum.
    """
    low, high = m_range
    if low > high:
        raise ValueError(f"The 'm_range' parameter {m_range} is empty.")
    base = entropy_of_element(report, GroupElementSymbol(power=1))
    entries = [(m, entropy_of_element(report, GroupElementSymbol(power=m))) for m in range(low, high + 1)]
    for m, value in entries:
        if not math.isclose(value, abs(m) * base, rel_tol=1e-12, abs_tol=1e-15):
            raise NumericalError(
                f"Entropy {value} of a^{m} is not {abs(m)} times the quantum {base}.",
                {"m": m, "entropy": value, "quantum": base},
            )
    gap = base
    if base == 0.0:
        logging.warning("Zero base entropy: the spectrum collapses to {0}")
    logging.info(f"Entropy spectrum over m in [{low}, {high}] with quantum {base:.8f}")
    return EntropySpectrum(base_entropy=base, entries=entries, gap=gap)


def _error(report: ExponentReport, *keys: str) -> float:
    return sum(report.error_estimates.get(key, 0.0) for key in keys)


def rigidity_hypotheses(report: ExponentReport) -> dict:
    """Which hypotheses of the rigidity theorems a computed equilibrium state meets.

    Positive entropy and an exponent sum away from zero are judged against
    the period-refinement error estimates; sums below 1e-10 count as zero.
    """
    exponent_sum = report.exponent_sum
    sum_error = _error(report, "lambda_u", "lambda_s")
    positive_entropy = report.entropy > _error(report, "entropy")
    asymmetric = abs(exponent_sum) > max(sum_error, EXPONENT_SUM_FLOOR)
    natural = report.potential_kind in NATURAL_POTENTIALS
    if not asymmetric:
        logging.warning(
            f"Exponent sum {exponent_sum:.3e} is within its error estimate {sum_error:.3e}"
        )
    return {
        "potential": report.potential_kind,
        "positive_entropy": positive_entropy,
        "exponent_sum": exponent_sum,
        "exponent_sum_error": sum_error,
        "exponent_sum_nonzero": asymmetric,
        "natural_potential": natural,
        "virtually_cyclic": positive_entropy and asymmetric,
        "quantized": positive_entropy and asymmetric and not natural,
    }


@dataclass(frozen=True)
class SignSplit:
    positive: ExponentReport
    negative: ExponentReport
    holds: bool

    def to_record(self) -> dict:
        return {
            "holds": self.holds,
            "positive_sum": self.positive.exponent_sum,
            "negative_sum": self.negative.exponent_sum,
            "positive_potential": self.positive.potential_kind,
            "negative_potential": self.negative.potential_kind,
        }


def sign_split(mu: ExponentReport, nu: ExponentReport) -> SignSplit:
    """Order two reports so that the first has the larger exponent sum and check
    that the sums lie on opposite sides of zero."""
    positive, negative = (mu, nu) if mu.exponent_sum >= nu.exponent_sum else (nu, mu)
    holds = bool(negative.exponent_sum < 0.0 < positive.exponent_sum)
    logging.info(
        f"Sign split {positive.exponent_sum:.3e} / {negative.exponent_sum:.3e}: "
        f"{'holds' if holds else 'fails'}"
    )
    return SignSplit(positive=positive, negative=negative, holds=holds)


def multiplicativity_residual(B: IntMatrix2, C: IntMatrix2, A: IntMatrix2) -> float:
    """|Psi(BC) - Psi(B) Psi(C)| for the transverse quotient factor Psi."""
    return abs(quotient_contraction(B @ C, A) - quotient_contraction(B, A) * quotient_contraction(C, A))
