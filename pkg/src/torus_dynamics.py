"""Points of the 2-torus, unimodular integer matrices, the perturbed-Anosov map
family, cone-field certification and periodic-point enumeration."""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from src.errors import Collision, NonConvergence, NotCertified, NotHyperbolic, Overflow, ValidationError
from src.reductions import parallel_map

ENSEMBLE_CAP: int = 2_000_000
MAX_PERIOD: int = 14
NEWTON_MAX_ITER: int = 50
COLLISION_RADIUS: float = 1e-9
DEFAULT_CONE: Tuple[int, float, float] = (128, 0.3, 0.1)

IntPair = Tuple[int, int]


def reduce_mod1(values: np.ndarray) -> np.ndarray:
    """Reduce coordinates to [0, 1)."""
    reduced = np.mod(values, 1.0)
    # np.mod can round tiny negatives up to exactly 1.0
    return np.where(reduced >= 1.0, 0.0, reduced)


def torus_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest lifted displacement b - a on the flat torus."""
    diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return diff - np.round(diff)


def torus_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flat quotient distance, row-wise for (N, 2) inputs."""
    return np.linalg.norm(torus_delta(a, b), axis=-1)


@dataclass(frozen=True)
class TorusPoint:
    """A point of R^2/Z^2 with both coordinates in [0, 1)."""

    x1: float
    x2: float

    def __post_init__(self) -> None:
        reduced = reduce_mod1(np.array([self.x1, self.x2], dtype=float))
        object.__setattr__(self, "x1", float(reduced[0]))
        object.__setattr__(self, "x2", float(reduced[1]))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "TorusPoint":
        return cls(float(values[0]), float(values[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)

    def distance(self, other: "TorusPoint") -> float:
        return float(torus_distance(self.as_array(), other.as_array()))


@dataclass(frozen=True)
class IntMatrix2:
    """An element of GL(2, Z), stored with exact Python integers."""

    a11: int
    a12: int
    a21: int
    a22: int

    def __post_init__(self) -> None:
        for name in ("a11", "a12", "a21", "a22"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.determinant not in (-1, 1):
            raise ValidationError(
                f"Matrix {self.rows} has determinant {self.determinant}; "
                "GL(2, Z) membership requires determinant +1 or -1.",
                {"matrix": self.rows},
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "IntMatrix2":
        return cls(rows[0][0], rows[0][1], rows[1][0], rows[1][1])

    @classmethod
    def identity(cls) -> "IntMatrix2":
        return cls(1, 0, 0, 1)

    @property
    def rows(self) -> Tuple[IntPair, IntPair]:
        return ((self.a11, self.a12), (self.a21, self.a22))

    @property
    def determinant(self) -> int:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def trace(self) -> int:
        return self.a11 + self.a22

    def __matmul__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    def __neg__(self) -> "IntMatrix2":
        return IntMatrix2(-self.a11, -self.a12, -self.a21, -self.a22)

    def inverse(self) -> "IntMatrix2":
        d = self.determinant
        return IntMatrix2(d * self.a22, -d * self.a12, -d * self.a21, d * self.a11)

    def power(self, n: int) -> "IntMatrix2":
        """Exact integer power; negative exponents use the inverse."""
        base = self if n >= 0 else self.inverse()
        result = IntMatrix2.identity()
        for _ in range(abs(n)):
            result = result @ base
        return result

    def commutes_with(self, other: "IntMatrix2") -> bool:
        return (self @ other) == (other @ self)

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def eigenvalues(self) -> Tuple[float, float]:
        """Real eigenvalues ordered (unstable, stable) by modulus."""
        t, d = float(self.trace), float(self.determinant)
        disc = t * t - 4.0 * d
        if disc <= 0.0:
            raise NotHyperbolic(f"Matrix {self.rows} has no real eigenvalues.")
        root = math.sqrt(disc)
        first, second = (t + root) / 2.0, (t - root) / 2.0
        if abs(first) < abs(second):
            first, second = second, first
        return first, second

    @property
    def is_hyperbolic(self) -> bool:
        t, d = self.trace, self.determinant
        if d == 1:
            return abs(t) > 2
        return t != 0

    @property
    def spectral_radius(self) -> float:
        return abs(self.eigenvalues()[0])

    def eigenvector(self, eigenvalue: float) -> np.ndarray:
        """Unit eigenvector with a non-negative first nonzero coordinate."""
        m = self.as_array() - eigenvalue * np.eye(2)
        # kernel of a rank-one 2x2 matrix: orthogonal to its larger row
        row = m[0] if np.linalg.norm(m[0]) >= np.linalg.norm(m[1]) else m[1]
        vec = np.array([-row[1], row[0]], dtype=float)
        vec /= np.linalg.norm(vec)
        if vec[0] < 0 or (vec[0] == 0 and vec[1] < 0):
            vec = -vec
        return vec

    def eigenbasis(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unit vectors (e_u, e_s) spanning the unstable and stable lines."""
        lam_u, lam_s = self.eigenvalues()
        return self.eigenvector(lam_u), self.eigenvector(lam_s)

    def to_record(self) -> List[List[int]]:
        return [list(self.rows[0]), list(self.rows[1])]


@dataclass(frozen=True)
class PerturbationTerm:
    """One term eps * v * sin(2 pi (k . x + rho))."""

    amplitude: float
    direction: Tuple[float, float]
    frequency: IntPair
    phase: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", tuple(float(c) for c in self.direction))
        object.__setattr__(self, "frequency", tuple(int(c) for c in self.frequency))


@dataclass(frozen=True)
class AnosovMapSpec:
    """a(x) = A x + sum_j eps_j v_j sin(2 pi (k_j . x + rho_j)) mod Z^2."""

    linear: IntMatrix2
    perturbations: Tuple[PerturbationTerm, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "perturbations", tuple(self.perturbations))
        if not self.linear.is_hyperbolic:
            raise NotHyperbolic(
                f"Linear part {self.linear.rows} is not hyperbolic.",
                {"matrix": self.linear.rows},
            )

    @property
    def is_linear(self) -> bool:
        return all(term.amplitude == 0.0 for term in self.perturbations)

    @property
    def matrix(self) -> np.ndarray:
        return self.linear.as_array()

    def _term_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        terms = [t for t in self.perturbations if t.amplitude != 0.0]
        amps = np.array([t.amplitude for t in terms], dtype=float)
        dirs = np.array([t.direction for t in terms], dtype=float).reshape(-1, 2)
        freqs = np.array([t.frequency for t in terms], dtype=float).reshape(-1, 2)
        phases = np.array([t.phase for t in terms], dtype=float)
        return amps, dirs, freqs, phases

    def perturbation(self, x: np.ndarray) -> np.ndarray:
        """Periodic part P(x) of the lift, for (N, 2) input."""
        x = np.atleast_2d(x)
        amps, dirs, freqs, phases = self._term_arrays()
        if amps.size == 0:
            return np.zeros_like(x, dtype=float)
        theta = 2.0 * np.pi * (x @ freqs.T + phases)
        return (np.sin(theta) * amps) @ dirs

    def lift(self, x: np.ndarray) -> np.ndarray:
        """The lifted map A x + P(x) on R^2, for (N, 2) input."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.matrix.T + self.perturbation(x)

    def lift_difference(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """lift(x + s) - lift(x) without cancellation for tiny `s`."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = np.atleast_2d(np.asarray(s, dtype=float))
        linear = s @ self.matrix.T
        amps, dirs, freqs, phases = self._term_arrays()
        if amps.size == 0:
            return linear
        theta = 2.0 * np.pi * (x @ freqs.T + phases)
        half = np.pi * (s @ freqs.T)
        delta = 2.0 * np.cos(theta + half) * np.sin(half)
        return linear + (delta * amps) @ dirs

    def jacobians(self, x: np.ndarray) -> np.ndarray:
        """Analytic Jacobians Da_x as an (N, 2, 2) array."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        jac = np.broadcast_to(self.matrix, (x.shape[0], 2, 2)).copy()
        amps, dirs, freqs, phases = self._term_arrays()
        if amps.size:
            theta = 2.0 * np.pi * (x @ freqs.T + phases)
            coeff = 2.0 * np.pi * np.cos(theta) * amps
            jac += np.einsum("nj,ja,jb->nab", coeff, dirs, freqs)
        return jac

    def inverse_lift(self, y: np.ndarray, tol: float = 1e-14) -> np.ndarray:
        """Newton solve of lift(x) = y seeded at A^-1 y, for (N, 2) input.

        Rows converge independently, so the result of a row never depends on
        the other rows of the batch.

        Raises:
            NonConvergence: If Newton needs more than `NEWTON_MAX_ITER` steps.
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        x = y @ np.linalg.inv(self.matrix).T
        if self.is_linear:
            return x
        return _rowwise_newton(
            lambda rows, cur: self.lift(cur) - y[rows],
            lambda rows, cur: self.jacobians(cur),
            x,
            lambda cur: tol * (1.0 + np.linalg.norm(cur, axis=1)),
            "Newton inversion of the map did not converge; the perturbation is probably too large.",
        )

    def inverse_lift_difference(self, z: np.ndarray, s: np.ndarray) -> np.ndarray:
        """d with lift(z + d) - lift(z) = s, solved without cancellation."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        s = np.atleast_2d(np.asarray(s, dtype=float))
        d = s @ np.linalg.inv(self.matrix).T
        if self.is_linear:
            return d
        # unknowns are the displacements d; rows index into z and s
        return _rowwise_newton(
            lambda rows, cur: self.lift_difference(z[rows], cur) - s[rows],
            lambda rows, cur: self.jacobians(z[rows] + cur),
            d,
            lambda cur: 1e-13 * np.linalg.norm(cur, axis=1),
            "Inverse difference of the map did not converge.",
        )

    def to_record(self) -> dict:
        return {
            "matrix": self.linear.to_record(),
            "perturbations": [
                {
                    "amplitude": t.amplitude,
                    "direction": list(t.direction),
                    "frequency": list(t.frequency),
                    "phase": t.phase,
                }
                for t in self.perturbations
            ],
        }


def _rowwise_newton(residual, jacobian, x0, tolerance, message: str) -> np.ndarray:
    """Batched 2D Newton where each row stops as soon as its own step is small."""
    x = np.array(x0, dtype=float)
    active = np.arange(x.shape[0])
    for _ in range(NEWTON_MAX_ITER):
        if active.size == 0:
            return x
        cur = x[active]
        step = solve2(jacobian(active, cur), residual(active, cur))
        if not np.all(np.isfinite(step)):
            break
        x[active] = cur - step
        done = np.linalg.norm(step, axis=1) <= tolerance(x[active])
        active = active[~done]
    if active.size == 0:
        return x
    raise NonConvergence(message, {"max_iter": NEWTON_MAX_ITER, "unconverged": int(active.size)})


def solve2(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched solve of 2x2 systems via the adjugate."""
    a, b = mats[:, 0, 0], mats[:, 0, 1]
    c, d = mats[:, 1, 0], mats[:, 1, 1]
    det = a * d - b * c
    x0 = (d * rhs[:, 0] - b * rhs[:, 1]) / det
    x1 = (-c * rhs[:, 0] + a * rhs[:, 1]) / det
    return np.stack([x0, x1], axis=1)


def matvec(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    return np.einsum("nab,nb->na", mats, vecs)


def apply(map_spec: AnosovMapSpec, p: TorusPoint) -> TorusPoint:
    """a(p) reduced mod Z^2."""
    return TorusPoint.from_array(map_spec.lift(p.as_array())[0])


def apply_points(map_spec: AnosovMapSpec, points: np.ndarray) -> np.ndarray:
    return reduce_mod1(map_spec.lift(points))


def apply_inverse(map_spec: AnosovMapSpec, q: TorusPoint) -> TorusPoint:
    """a^-1(q) by Newton on a lift seeded at A^-1 q."""
    return TorusPoint.from_array(map_spec.inverse_lift(q.as_array())[0])


def apply_inverse_points(map_spec: AnosovMapSpec, points: np.ndarray) -> np.ndarray:
    return reduce_mod1(map_spec.inverse_lift(points))


def derivative(map_spec: AnosovMapSpec, p: TorusPoint) -> np.ndarray:
    """Exact Jacobian Da_p."""
    return map_spec.jacobians(p.as_array())[0]


def iterate_lift(map_spec: AnosovMapSpec, x: np.ndarray, n: int) -> np.ndarray:
    """Lifted n-th iterate (negative n iterates the inverse)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    for _ in range(abs(n)):
        x = map_spec.lift(x) if n > 0 else map_spec.inverse_lift(x)
    return x


def iterate_with_jacobian(map_spec: AnosovMapSpec, x: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lifted a^n(x) and D(a^n)_x by the chain rule (n >= 0)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    jac = np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)).copy()
    for _ in range(n):
        jac = np.einsum("nab,nbc->nac", map_spec.jacobians(x), jac)
        x = map_spec.lift(x)
    return x, jac


@dataclass(frozen=True)
class ConeReport:
    """Outcome of the grid cone-field check."""

    passed: bool
    grid_n: int
    cone_halfwidth: float
    safety: float
    worst_expansion: float
    worst_margin: float
    min_abs_det: float
    witness: Optional[Tuple[float, float]] = None
    witness_cell: Optional[Tuple[int, int]] = None
    failing_side: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "passed": self.passed,
            "grid_n": self.grid_n,
            "cone_halfwidth": self.cone_halfwidth,
            "safety": self.safety,
            "worst_expansion": self.worst_expansion,
            "worst_margin": self.worst_margin,
            "min_abs_det": self.min_abs_det,
            "witness": list(self.witness) if self.witness else None,
            "witness_cell": list(self.witness_cell) if self.witness_cell else None,
            "failing_side": self.failing_side,
        }


def _cone_directions(axis: np.ndarray, halfwidth: float, n_dirs: int = 9) -> np.ndarray:
    base = math.atan2(axis[1], axis[0])
    angles = base + np.linspace(-halfwidth, halfwidth, n_dirs)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _line_angle(vecs: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Unsigned angle between each row of `vecs` and the line through `axis`."""
    norms = np.linalg.norm(vecs, axis=-1)
    cosines = np.clip(np.abs(vecs @ axis) / norms, 0.0, 1.0)
    return np.arccos(cosines)


def _cone_chunk(
    map_spec: AnosovMapSpec, halfwidth: float, points: np.ndarray
) -> np.ndarray:
    """Per point: unstable/stable expansion and margin, plus |det Da|."""
    e_u, e_s = map_spec.linear.eigenbasis()
    jac = map_spec.jacobians(points)
    inv = np.linalg.inv(jac)
    out = np.empty((points.shape[0], 5))
    for col, (mats, axis) in enumerate(((jac, e_u), (inv, e_s))):
        dirs = _cone_directions(axis, halfwidth)
        images = np.einsum("nab,db->nda", mats, dirs)
        out[:, 2 * col] = np.min(np.linalg.norm(images, axis=-1), axis=1)
        worst_angle = np.max(_line_angle(images, axis), axis=1)
        out[:, 2 * col + 1] = (halfwidth - worst_angle) / halfwidth
    out[:, 4] = np.abs(np.linalg.det(jac))
    return out


def verify_anosov_cones(
    map_spec: AnosovMapSpec, grid_n: int, cone_halfwidth: float, safety: float = 0.1
) -> ConeReport:
    """Check cone invariance and expansion of Da (and Da^-1) on a grid.

    The unstable cone of half-width `cone_halfwidth` around the unstable
    eigenline of A must be mapped strictly inside itself by Da with minimal
    expansion above 1 + safety, and likewise the stable cone by Da^-1. The
    containment margin is reported relative to the half-width and must exceed
    `safety` as well.

    Args:
        map_spec (AnosovMapSpec): Map to certify.
        grid_n (int): Grid resolution per axis, at least 64.
        cone_halfwidth (float): Cone half-width in radians.
        safety (float, optional): Required margin. Defaults to 0.1.

    Returns:
        ConeReport: Pass/fail with worst margins and the failing cell.
    """
    if grid_n < 64:
        raise ValueError("The 'grid_n' parameter must be at least 64.")
    e_u, e_s = map_spec.linear.eigenbasis()
    separation = float(_line_angle(e_u[None, :], e_s)[0])
    if not 0.0 < cone_halfwidth < separation / 2.0:
        raise ValueError(
            f"The 'cone_halfwidth' must lie in (0, {separation / 2.0:.4f}) "
            "so the two cones stay disjoint."
        )
    logging.info(f"Verifying cone field on a {grid_n}x{grid_n} grid")
    ticks = (np.arange(grid_n) + 0.5) / grid_n
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel()], axis=1)
    stats = parallel_map(partial(_cone_chunk, map_spec, cone_halfwidth), points)

    expansion = np.minimum(stats[:, 0], stats[:, 2])
    margin = np.minimum(stats[:, 1], stats[:, 3])
    score = np.minimum(expansion - 1.0 - safety, margin - safety)
    worst = int(np.argmin(score))
    passed = bool(score[worst] > 0.0 and np.min(stats[:, 4]) > 1e-12)

    failing_side = None
    witness = witness_cell = None
    if not passed:
        failing_side = (
            "unstable"
            if min(stats[worst, 0] - 1.0, stats[worst, 1]) <= min(stats[worst, 2] - 1.0, stats[worst, 3])
            else "stable"
        )
        witness = (float(points[worst, 0]), float(points[worst, 1]))
        witness_cell = (worst // grid_n, worst % grid_n)
        logging.warning(f"Cone check failed at cell {witness_cell} ({failing_side} side)")

    return ConeReport(
        passed=passed,
        grid_n=grid_n,
        cone_halfwidth=cone_halfwidth,
        safety=safety,
        worst_expansion=float(np.min(expansion)),
        worst_margin=float(np.min(margin)),
        min_abs_det=float(np.min(stats[:, 4])),
        witness=witness,
        witness_cell=witness_cell,
        failing_side=failing_side,
    )


@lru_cache(maxsize=32)
def certify(
    map_spec: AnosovMapSpec,
    grid_n: int = DEFAULT_CONE[0],
    cone_halfwidth: float = DEFAULT_CONE[1],
    safety: float = DEFAULT_CONE[2],
) -> ConeReport:
    """Cone-certify a map once per cone setting; thermodynamic entry points call this.

    Raises:
        NotCertified: If the cone check fails.
    """
    report = verify_anosov_cones(map_spec, grid_n, cone_halfwidth, safety)
    if not report.passed:
        raise NotCertified(
            "The map failed the Anosov cone check; reduce the perturbation.",
            report.to_record(),
        )
    return report


def _xgcd(a: int, b: int) -> Tuple[int, int, int]:
    """(g, s, t) with s a + t b = g = gcd(a, b) >= 0."""
    old_r, r, old_s, s, old_t, t = a, b, 1, 0, 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


Mat2 = List[List[int]]


def _mul(x: Mat2, y: Mat2) -> Mat2:
    return [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]


def smith_normal_form(matrix: Sequence[Sequence[int]]) -> Tuple[Mat2, Tuple[int, int], Mat2]:
    """Smith form U M V = diag(d1, d2) of an integer 2x2 matrix.

    U and V are unimodular, d1 and d2 are non-negative and d1 divides d2.

    Args:
        matrix (Sequence[Sequence[int]]): Integer matrix rows.

    Returns:
        Tuple: (U, (d1, d2), V).
    """
    m = [[int(matrix[0][0]), int(matrix[0][1])], [int(matrix[1][0]), int(matrix[1][1])]]
    u: Mat2 = [[1, 0], [0, 1]]
    v: Mat2 = [[1, 0], [0, 1]]
    while True:
        if m[1][0] != 0:
            g, s, t = _xgcd(m[0][0], m[1][0])
            a, c = m[0][0] // g, m[1][0] // g
            row_op = [[s, t], [-c, a]]
            m, u = _mul(row_op, m), _mul(row_op, u)
        if m[0][1] != 0:
            g, s, t = _xgcd(m[0][0], m[0][1])
            a, b = m[0][0] // g, m[0][1] // g
            col_op = [[s, -b], [t, a]]
            m, v = _mul(m, col_op), _mul(v, col_op)
            continue
        d1, d2 = m[0][0], m[1][1]
        if d1 == 0 and d2 != 0:
            swap = [[0, 1], [1, 0]]
            m, u, v = _mul(_mul(swap, m), swap), _mul(swap, u), _mul(v, swap)
            continue
        if d1 != 0 and d2 % d1 != 0:
            # add the second row to the first and reduce again
            add = [[1, 1], [0, 1]]
            m, u = _mul(add, m), _mul(add, u)
            continue
        break
    for i in range(2):
        if m[i][i] < 0:
            m[i] = [-c for c in m[i]]
            u[i] = [-c for c in u[i]]
    return u, (m[0][0], m[1][1]), v


def lattice_coset_numerators(matrix: Sequence[Sequence[int]]) -> Tuple[np.ndarray, int]:
    """Coset representatives of B^-1 Z^2 / Z^2 with a common denominator.

    Writing U B V = diag(d1, d2), the solutions of B x in Z^2 are
    x = V (j1 / d1, j2 / d2) mod Z^2 with 0 <= j_i < d_i, enumerated in
    lexicographic order of (j1, j2).

    Returns:
        Tuple[np.ndarray, int]: (z, D) with x = z / D, z integer (N, 2) in [0, D).
    """
    _, (d1, d2), v = smith_normal_form(matrix)
    if d1 == 0 or d2 == 0:
        raise ValueError("The matrix must be non-singular to enumerate cosets.")
    denom = d1 * d2
    j1, j2 = np.meshgrid(np.arange(d1, dtype=np.int64), np.arange(d2, dtype=np.int64), indexing="ij")
    y = np.stack([j1.ravel() * d2, j2.ravel() * d1], axis=1)
    vm = np.array([[int(c) % denom for c in row] for row in v], dtype=np.int64)
    z = (y @ vm.T) % denom
    return z, denom


@dataclass(frozen=True)
class LinearPeriodicSet:
    """Fix(L_A^n) as exact rationals z / denominator with the L_A permutation."""

    n: int
    numerators: np.ndarray
    denominator: int
    successor: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.numerators.astype(float) / float(self.denominator)

    def __len__(self) -> int:
        return int(self.numerators.shape[0])


def periodic_count(A: IntMatrix2, n: int) -> int:
    """|det(A^n - I)|."""
    an = A.power(n)
    return abs((an.a11 - 1) * (an.a22 - 1) - an.a12 * an.a21)


def linear_periodic_set(A: IntMatrix2, n: int, cap: int = ENSEMBLE_CAP) -> LinearPeriodicSet:
    """Enumerate Fix(L_A^n) exactly, with the index permutation induced by L_A.

    Raises:
        Overflow: If |det(A^n - I)| exceeds `cap` or n exceeds `MAX_PERIOD`.
    """
    if n < 1:
        raise ValueError("The period 'n' must be at least 1.")
    if not A.is_hyperbolic:
        raise NotHyperbolic(f"Matrix {A.rows} is not hyperbolic.")
    count = periodic_count(A, n)
    if n > MAX_PERIOD or count > cap:
        raise Overflow(
            f"Fix(A^{n}) has {count} points, above the ensemble cap {cap}.",
            {"n": n, "count": count, "cap": cap},
        )
    an = A.power(n)
    b = [[an.a11 - 1, an.a12], [an.a21, an.a22 - 1]]
    z, denom = lattice_coset_numerators(b)

    keys = z[:, 0] * denom + z[:, 1]
    order = np.argsort(keys)
    image = (z @ np.array(A.rows, dtype=np.int64).T) % denom
    image_keys = image[:, 0] * denom + image[:, 1]
    successor = order[np.searchsorted(keys[order], image_keys)]
    logging.info(f"Enumerated {count} linear periodic points of period {n}")
    return LinearPeriodicSet(n=n, numerators=z, denominator=denom, successor=successor)


def periodic_points_linear(A: IntMatrix2, n: int, cap: int = ENSEMBLE_CAP) -> List[TorusPoint]:
    """Fix(L_A^n) as TorusPoints in Smith-coordinate lexicographic order."""
    return [TorusPoint.from_array(p) for p in linear_periodic_set(A, n, cap).points]


@dataclass(frozen=True)
class PeriodicSet:
    """Refined Fix(a^n) with the permutation induced by a.

    Row i of `points` corresponds to row i of the linear set; a maps point i
    to point `successor[i]`.
    """

    n: int
    points: np.ndarray
    successor: np.ndarray
    residuals: np.ndarray

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))

    def orbit_ids(self) -> np.ndarray:
        """Smallest index on each point's orbit."""
        ids = np.arange(len(self))
        current = ids.copy()
        for _ in range(self.n):
            current = self.successor[current]
            ids = np.minimum(ids, current)
        return ids

    def orbit_table(self) -> np.ndarray:
        """(N, n) indices of a^i(p_k) for i < n."""
        table = np.empty((len(self), self.n), dtype=np.int64)
        table[:, 0] = np.arange(len(self))
        for i in range(1, self.n):
            table[:, i] = self.successor[table[:, i - 1]]
        return table

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "n": self.n,
                "index": np.arange(len(self)),
                "x1": self.points[:, 0],
                "x2": self.points[:, 1],
                "residual": self.residuals,
            }
        )


def refine_periodic_orbits(
    map_spec: AnosovMapSpec,
    n: int,
    seeds: np.ndarray,
    successor: np.ndarray,
    tol: float = 1e-13,
    power: int = 1,
) -> PeriodicSet:
    """Multiple-shooting Newton for a whole periodic set at once.

    Solves b(x_i) - x_{successor(i)} in Z^2 for every i simultaneously, where
    b = a^power; the Jacobian is block sparse with Db(x_i) on the diagonal and
    -I at the successor block. The points of the result are fixed by b^n.

    Raises:
        NonConvergence: After `NEWTON_MAX_ITER` sweeps.
        Collision: If two refined points coincide within `COLLISION_RADIUS`.
    """
    if power < 1:
        raise ValueError("The 'power' parameter must be at least 1.")
    x = np.array(seeds, dtype=float)
    count = x.shape[0]
    offsets = np.round(iterate_lift(map_spec, x, power) - x[successor])
    rows = np.arange(2 * count)
    point_of_row = rows // 2
    for iteration in range(NEWTON_MAX_ITER):
        image, jac = iterate_with_jacobian(map_spec, x, power)
        residual = image - x[successor] - offsets
        diag_rows = np.repeat(rows, 2)
        diag_cols = 2 * np.repeat(point_of_row, 2) + np.tile([0, 1], 2 * count)
        succ_cols = 2 * successor[point_of_row] + rows % 2
        data = np.concatenate([jac.reshape(-1), -np.ones(2 * count)])
        r_idx = np.concatenate([diag_rows, rows])
        c_idx = np.concatenate([diag_cols, succ_cols])
        system = sparse.csc_matrix((data, (r_idx, c_idx)), shape=(2 * count, 2 * count))
        step = spsolve(system, residual.reshape(-1)).reshape(count, 2)
        x = x - step
        if np.max(np.abs(step), initial=0.0) < tol:
            break
    else:
        raise NonConvergence(
            f"Periodic refinement for period {n} did not converge.",
            {"n": n, "max_iter": NEWTON_MAX_ITER},
        )

    points = reduce_mod1(x)
    residuals = torus_distance(reduce_mod1(iterate_lift(map_spec, points, power)), points[successor])
    _check_collisions(points, n)
    label = f"period {n}" if power == 1 else f"period {n} of a^{power}"
    logging.info(f"Refined {count} periodic points of {label} in {iteration + 1} sweeps")
    return PeriodicSet(n=n, points=points, successor=successor, residuals=residuals)


def _check_collisions(points: np.ndarray, n: int) -> None:
    tree = cKDTree(points, boxsize=1.0)
    pairs = tree.query_pairs(COLLISION_RADIUS, output_type="ndarray")
    if len(pairs):
        raise Collision(
            f"{len(pairs)} pairs of period-{n} points refined to the same point; "
            "the seeding is bad.",
            {"n": n, "pairs": pairs[:10].tolist()},
        )


def refine_periodic_point(
    map_spec: AnosovMapSpec, n: int, seed: TorusPoint, tol: float = 1e-13
) -> TorusPoint:
    """Newton on the lifted equation a^n(x) - x in Z^2 from one seed.

    Raises:
        NonConvergence: After `NEWTON_MAX_ITER` iterations.
    """
    x = seed.as_array()[None, :]
    image, _ = iterate_with_jacobian(map_spec, x, n)
    offset = np.round(image - x)
    for _ in range(NEWTON_MAX_ITER):
        image, jac = iterate_with_jacobian(map_spec, x, n)
        step = solve2(jac - np.eye(2)[None, :, :], image - x - offset)
        x = x - step
        if np.max(np.abs(step)) < tol:
            return TorusPoint.from_array(x[0])
    raise NonConvergence(
        f"Periodic point refinement for period {n} did not converge.",
        {"n": n, "seed": [seed.x1, seed.x2]},
    )


def periodic_residual(map_spec: AnosovMapSpec, n: int, p: TorusPoint) -> float:
    """d(a^n(p), p)."""
    image = reduce_mod1(iterate_lift(map_spec, p.as_array(), n))
    return float(torus_distance(image[0], p.as_array()))
