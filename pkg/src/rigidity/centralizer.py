"""GL(2, Z) centralizers, the affine commutant of the linear model and the
translation subgroup preserving a transported measure."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.conjugacy import Conjugacy, apply_h_points
from src.equilibrium.ensemble import OrbitEnsemble
from src.errors import DegenerateSamples, NonCommuting, NotFound, NotHyperbolic, Overflow
from src.reductions import exact_complex_sum, get_workers
from src.torus_dynamics import IntMatrix2, lattice_coset_numerators, torus_delta

RationalVector = Tuple[Fraction, Fraction]
COMMUTANT_CAP: int = 100_000


@dataclass(frozen=True)
class CentralizerData:
    """Generator M of C(A) = {+-M^n} with A = sign * M^k."""

    M: IntMatrix2
    k: int
    sign: int
    entry_bound: int

    def to_record(self) -> dict:
        return {"M": self.M.to_record(), "k": self.k, "sign": self.sign, "entry_bound": self.entry_bound}


def _unit_candidates(A: IntMatrix2, entry_bound: int) -> np.ndarray:
    """(N, 4) integer matrices commuting with A with determinant +-1, hyperbolic."""
    values = np.arange(-entry_bound, entry_bound + 1, dtype=np.int64)
    a, b, c, d = (g.ravel() for g in np.meshgrid(values, values, values, values, indexing="ij"))
    det = a * d - b * c
    trace = a + d
    commutes = (
        (a * A.a11 + b * A.a21 == A.a11 * a + A.a12 * c)
        & (a * A.a12 + b * A.a22 == A.a11 * b + A.a12 * d)
        & (c * A.a11 + d * A.a21 == A.a21 * a + A.a22 * c)
        & (c * A.a12 + d * A.a22 == A.a21 * b + A.a22 * d)
    )
    hyperbolic = ((det == 1) & (np.abs(trace) > 2)) | ((det == -1) & (trace != 0))
    keep = commutes & hyperbolic
    return np.column_stack([a[keep], b[keep], c[keep], d[keep]])


def _exponent_for(M: IntMatrix2, A: IntMatrix2) -> Optional[Tuple[int, int]]:
    """(k, sign) with sign * M^k = A for k >= 1, checked in integer arithmetic."""
    k = int(round(math.log(A.spectral_radius) / math.log(M.spectral_radius)))
    if k < 1:
        return None
    power = M.power(k)
    if power == A:
        return k, 1
    if -power == A:
        return k, -1
    return None


def centralizer_generator(A: IntMatrix2, entry_bound: int = 10) -> CentralizerData:
    """Brute-force generator of the centralizer of a hyperbolic A in GL(2, Z).

    Among commuting hyperbolic units with entries in [-entry_bound,
    entry_bound], the ones of least spectral radius are kept; the result is
    the one with sign * M^k = A for some k >= 1, preferring positive trace.

    Raises:
        NotHyperbolic: If A is not hyperbolic.
        ValueError: If `entry_bound` is smaller than the largest entry of A.
        NotFound: If no candidate generates A within the bound.
    """
    if not A.is_hyperbolic:
        raise NotHyperbolic(f"Matrix {A.rows} is not hyperbolic.")
    if entry_bound < max(abs(x) for row in A.rows for x in row):
        raise ValueError("The 'entry_bound' parameter must be at least the largest entry of A.")
    candidates = [IntMatrix2(*row) for row in _unit_candidates(A, entry_bound).tolist()]
    if not candidates:
        raise NotFound(
            f"No commuting hyperbolic unit with entries up to {entry_bound}; double the bound and retry.",
            {"entry_bound": entry_bound},
        )
    radius = min(m.spectral_radius for m in candidates)
    minimal = [m for m in candidates if m.spectral_radius < radius * (1.0 + 1e-12)]
    minimal.sort(key=lambda m: (-m.trace, m.rows))
    for M in minimal:
        found = _exponent_for(M, A)
        if found is not None:
            k, sign = found
            logging.info(f"Centralizer generator {M.rows} with A = {sign} * M^{k}")
            return CentralizerData(M=M, k=k, sign=sign, entry_bound=entry_bound)
    raise NotFound(
        f"No unit of least spectral radius generates A within entry bound {entry_bound}; "
        "double the bound and retry.",
        {"entry_bound": entry_bound},
    )


def quotient_contraction(B: IntMatrix2, A: IntMatrix2) -> float:
    """Eigenvalue of B on the stable eigenline of A, the factor B induces on R^2 / E^u.

    Raises:
        NonCommuting: If B and A do not commute.
    """
    if not B.commutes_with(A):
        raise NonCommuting(f"{B.rows} does not commute with {A.rows}.", {"B": B.to_record()})
    _, e_s = A.eigenbasis()
    return float(e_s @ (B.as_array() @ e_s))


def _reduce(v: RationalVector) -> RationalVector:
    return (v[0] - math.floor(v[0]), v[1] - math.floor(v[1]))


@dataclass(frozen=True)
class GroupElementSymbol:
    """a^power, or with an affine tag the linear-model element T(v) o L_B."""

    power: int = 0
    linear: Optional[IntMatrix2] = None
    translation: Optional[RationalVector] = None

    def __post_init__(self) -> None:
        if self.translation is not None:
            if self.linear is None:
                raise ValueError("An affine tag needs both 'linear' and 'translation'.")
            object.__setattr__(self, "translation", _reduce(tuple(Fraction(t) for t in self.translation)))

    @property
    def is_affine(self) -> bool:
        return self.linear is not None

    def compose(self, other: "GroupElementSymbol") -> "GroupElementSymbol":
        """self o other; affine tags multiply as (B, v)(B', v') = (BB', Bv' + v)."""
        if self.is_affine != other.is_affine:
            raise ValueError("Cannot compose an affine tag with a bare power of a.")
        if not self.is_affine:
            return GroupElementSymbol(power=self.power + other.power)
        B, v = self.linear, self.translation or (Fraction(0), Fraction(0))
        w = other.translation or (Fraction(0), Fraction(0))
        moved = (B.a11 * w[0] + B.a12 * w[1] + v[0], B.a21 * w[0] + B.a22 * w[1] + v[1])
        return GroupElementSymbol(power=self.power + other.power, linear=B @ other.linear, translation=moved)

    def key(self) -> Tuple:
        return (self.power, self.linear.rows if self.linear else None, self.translation)

    def to_record(self) -> dict:
        record: Dict = {"power": self.power}
        if self.is_affine:
            record["linear"] = self.linear.to_record()
            record["translation"] = [str(t) for t in self.translation]
        return record


def _fixed_translations(matrix: Sequence[Sequence[int]], targets: Sequence[RationalVector]) -> List[RationalVector]:
    """All w mod Z^2 with matrix w = h mod Z^2 for some h in `targets`."""
    (p, q), (r, s) = matrix
    det = p * s - q * r
    if det == 0:
        raise NotHyperbolic("I - M^k is singular; M^k has eigenvalue 1.")
    kernel, denom = lattice_coset_numerators(matrix)
    kernel_points = [(Fraction(int(z0), denom), Fraction(int(z1), denom)) for z0, z1 in kernel.tolist()]
    solutions = set()
    for h in targets:
        base = (Fraction(s * h[0] - q * h[1], det), Fraction(-r * h[0] + p * h[1], det))
        for z in kernel_points:
            solutions.add(_reduce((base[0] + z[0], base[1] + z[1])))
    return sorted(solutions)


@dataclass(frozen=True)
class CommutantReport:
    """Right-coset representatives of <M^k> in C(A) x| (L_{I-M^k})^-1 H."""

    elements: List[GroupElementSymbol]
    translations: List[RationalVector]
    index: int
    axioms_verified: bool
    failures: List[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "index": self.index,
            "translation_count": len(self.translations),
            "axioms_verified": self.axioms_verified,
            "failures": self.failures,
            "translations": [[str(t) for t in v] for v in self.translations],
        }


def commutant_candidates(
    A: IntMatrix2,
    centralizer: CentralizerData,
    H_candidates: Sequence[RationalVector],
    cap: int = COMMUTANT_CAP,
) -> CommutantReport:
    """Enumerate the affine commutant modulo right multiplication by <M^k>.

    Representatives are (+-M^l, v) with 0 <= l < k and v in the preimage of H
    under L_{I - M^k}; the index of <M^k> is 2 k |V|. Products of
    representatives must stay in the set, the identity must be present and
    every representative must have an inverse.

    Raises:
        Overflow: If the representatives exceed `cap`.
    """
    M, k = centralizer.M, centralizer.k
    if not M.commutes_with(A):
        raise NonCommuting("The centralizer generator does not commute with A.")
    Mk = M.power(k)
    shifted = [[1 - Mk.a11, -Mk.a12], [-Mk.a21, 1 - Mk.a22]]
    targets = [_reduce(tuple(Fraction(t) for t in h)) for h in H_candidates] or [(Fraction(0), Fraction(0))]
    translations = _fixed_translations(shifted, targets)
    index = 2 * k * len(translations)
    if index > cap:
        raise Overflow(f"The commutant has {index} coset representatives, above the cap {cap}.", {"index": index})

    elements = [
        GroupElementSymbol(linear=M.power(l) if sign == 1 else -M.power(l), translation=v)
        for sign in (1, -1)
        for l in range(k)
        for v in translations
    ]
    known = {e.key() for e in elements}

    def canonical(symbol: GroupElementSymbol) -> Tuple:
        # right multiplication by M^{-k q} brings the power into [0, k)
        B = symbol.linear
        for sign in (1, -1):
            for l in range(k):
                base = M.power(l) if sign == 1 else -M.power(l)
                quotient = base.inverse() @ B
                if _is_power_of(quotient, Mk):
                    return GroupElementSymbol(linear=base, translation=symbol.translation).key()
        return symbol.key()

    failures: List[str] = []
    identity = GroupElementSymbol(linear=IntMatrix2.identity(), translation=(Fraction(0), Fraction(0)))
    if identity.key() not in known:
        failures.append("identity")
    zero = (Fraction(0), Fraction(0))
    # right closure under generators of the group gives closure of the whole set
    generators = [
        GroupElementSymbol(linear=M, translation=zero),
        GroupElementSymbol(linear=-IntMatrix2.identity(), translation=zero),
    ] + [GroupElementSymbol(linear=IntMatrix2.identity(), translation=v) for v in translations]
    for first, second in itertools.product(elements, generators):
        if canonical(first.compose(second)) not in known:
            failures.append(f"closure {first.to_record()} * {second.to_record()}")
            break
    for element in elements:
        B, v = element.linear, element.translation
        inverse_linear = B.inverse()
        back = (
            -(inverse_linear.a11 * v[0] + inverse_linear.a12 * v[1]),
            -(inverse_linear.a21 * v[0] + inverse_linear.a22 * v[1]),
        )
        if canonical(GroupElementSymbol(linear=inverse_linear, translation=back)) not in known:
            failures.append(f"inverse {element.to_record()}")
            break
    logging.info(f"Commutant: {len(translations)} translations, index {index}, failures {len(failures)}")
    return CommutantReport(
        elements=elements,
        translations=translations,
        index=index,
        axioms_verified=not failures,
        failures=failures,
    )


def _is_power_of(B: IntMatrix2, base: IntMatrix2, limit: int = 64) -> bool:
    """B = base^j for some integer |j| <= limit."""
    if B == IntMatrix2.identity():
        return True
    forward, backward = base, base.inverse()
    for _ in range(limit):
        if B == forward or B == backward:
            return True
        forward, backward = forward @ base, backward @ base.inverse()
    return False


def fourier_coefficients(e: OrbitEnsemble, c: Conjugacy, n_modes: int) -> Dict[Tuple[int, int], complex]:
    """c(k) = sum of w_p exp(-2 pi i k . h(p)) for 0 < |k|_inf <= n_modes."""
    images = apply_h_points(c, e.points)
    coefficients = {}
    for k1 in range(-n_modes, n_modes + 1):
        for k2 in range(-n_modes, n_modes + 1):
            if k1 == 0 and k2 == 0:
                continue
            phase = -2.0 * np.pi * (k1 * images[:, 0] + k2 * images[:, 1])
            coefficients[(k1, k2)] = exact_complex_sum(e.weights * np.exp(1j * phase))
    return coefficients


def _statistic(coefficients: Dict[Tuple[int, int], complex], v: RationalVector) -> float:
    worst = 0.0
    for (k1, k2), value in coefficients.items():
        turn = (k1 * v[0] + k2 * v[1]) % 1
        if turn == 0:
            continue
        worst = max(worst, abs(value) * abs(1.0 - np.exp(-2j * np.pi * float(turn))))
    return worst


def translation_invariance_statistic(
    e: OrbitEnsemble, c: Conjugacy, v: RationalVector, n_modes: int = 5
) -> float:
    """max over modes of |c(k)| |1 - exp(-2 pi i k . v)| for h_* of the ensemble."""
    v = tuple(Fraction(t) for t in v)
    return _statistic(fourier_coefficients(e, c, n_modes), v)


def noise_floor(e: OrbitEnsemble) -> float:
    """1 / sqrt(effective sample size) of the ensemble weights."""
    return float(math.sqrt(np.sum(e.weights**2)))


def rational_grid(max_denominator: int) -> List[RationalVector]:
    points = {
        (Fraction(i, q), Fraction(j, q))
        for q in range(1, max_denominator + 1)
        for i in range(q)
        for j in range(q)
    }
    return sorted(points)


def estimate_translation_group(
    e: OrbitEnsemble,
    c: Conjugacy,
    max_denominator: int = 12,
    n_modes: int = 5,
    factor: float = 5.0,
) -> List[RationalVector]:
    """Rational v with denominators up to `max_denominator` whose statistic is below
    `factor` times the noise floor."""
    coefficients = fourier_coefficients(e, c, n_modes)
    threshold = factor * noise_floor(e)
    accepted = [v for v in rational_grid(max_denominator) if _statistic(coefficients, v) <= threshold]
    logging.info(f"Translation candidates: {len(accepted)} below threshold {threshold:.3e}")
    return accepted


@dataclass(frozen=True)
class AffineFit:
    linear: np.ndarray
    translation: np.ndarray
    residual: float

    def integer_linear(self, tol: float = 1e-8) -> Optional[IntMatrix2]:
        """The linear part as an element of GL(2, Z) when it is integral within `tol`."""
        rounded = np.round(self.linear)
        if np.max(np.abs(self.linear - rounded)) > tol:
            return None
        try:
            return IntMatrix2.from_rows(rounded.astype(int).tolist())
        except ValueError:
            return None

    def to_record(self) -> dict:
        return {
            "linear": self.linear.tolist(),
            "translation": self.translation.tolist(),
            "residual": self.residual,
        }


def affine_straightening_residual(sources: np.ndarray, images: np.ndarray, A: IntMatrix2) -> AffineFit:
    """Least-squares affine fit g(p) = B p + v mod Z^2 of sampled point pairs.

    The linear part is first estimated from differences between nearest
    neighbours on the torus; the images are then lifted next to that estimate
    and refitted with lstsq. The residual is the largest torus deviation.

    Raises:
        DegenerateSamples: If the samples do not determine an affine map.
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    images = np.atleast_2d(np.asarray(images, dtype=float))
    if sources.shape != images.shape or sources.shape[0] < 3:
        raise DegenerateSamples("At least three matching point pairs are needed.")
    tree = cKDTree(sources, boxsize=1.0)
    _, neighbours = tree.query(sources, k=min(5, sources.shape[0]), workers=get_workers())
    first = np.repeat(np.arange(sources.shape[0]), neighbours.shape[1] - 1)
    second = neighbours[:, 1:].ravel()
    dp = torus_delta(sources[second], sources[first])
    dg = torus_delta(images[second], images[first])
    linear_guess, _, rank, _ = np.linalg.lstsq(dp, dg, rcond=None)
    if rank < 2:
        raise DegenerateSamples("Neighbour differences do not span the plane.")
    linear_guess = linear_guess.T

    predicted = sources @ linear_guess.T
    offset = images[0] - predicted[0]
    lifted = predicted + offset + torus_delta(predicted + offset, images)
    design = np.column_stack([sources, np.ones(sources.shape[0])])
    solution, _, rank, _ = np.linalg.lstsq(design, lifted, rcond=None)
    if rank < 3:
        raise DegenerateSamples("Samples are collinear; the affine fit is undetermined.")
    linear = solution[:2].T
    translation = np.mod(solution[2], 1.0)
    fitted = sources @ linear.T + translation
    residual = float(np.max(np.linalg.norm(torus_delta(fitted, images), axis=1)))
    logging.info(f"Affine straightening residual {residual:.3e}")
    return AffineFit(linear=linear, translation=translation, residual=residual)
