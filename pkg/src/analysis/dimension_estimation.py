import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree
from scipy.stats import linregress

from src.equilibrium.ensemble import OrbitEnsemble, sample_points
from src.errors import EmptyBall
from src.reductions import exact_sum, get_workers
from src.torus_dynamics import IntMatrix2, TorusPoint, reduce_mod1

MIN_ATOMS: int = 10
MIN_RADII: int = 3
UNRELIABLE_STDERR: float = 0.1
CHART_SIZE: float = 0.1
RADIUS_RATIO: float = 2.0**0.5


@dataclass(frozen=True, eq=False)
class DimensionEstimate:
    """Log-log regression of ball masses against radii at one center."""

    center: TorusPoint
    radii: np.ndarray
    masses: np.ndarray
    counts: np.ndarray
    slope: float
    slope_stderr: float

    @property
    def window(self) -> Tuple[float, float]:
        return float(self.radii[-1]), float(self.radii[0])

    @property
    def reliable(self) -> bool:
        return self.slope_stderr <= UNRELIABLE_STDERR

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "center_x1": self.center.x1,
                "center_x2": self.center.x2,
                "radius": self.radii,
                "mass": self.masses,
            }
        )

    def to_record(self) -> dict:
        return {
            "center": [self.center.x1, self.center.x2],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "window": list(self.window),
            "reliable": self.reliable,
        }


class BallCounter:
    def __init__(self, points: np.ndarray, weights: np.ndarray):
        """Periodic k-d tree over weighted atoms of the flat torus.

        Args:
            points (np.ndarray): (N, 2) atoms in [0, 1).
            weights (np.ndarray): (N,) masses.
        """
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.tree = cKDTree(self.points, boxsize=1.0)

    @classmethod
    def from_ensemble(cls, e: OrbitEnsemble) -> "BallCounter":
        return cls(e.points, e.weights)

    def spacing(self) -> float:
        """Median nearest-neighbour distance between atoms."""
        distances, _ = self.tree.query(self.points, k=2, workers=get_workers())
        return float(np.median(distances[:, 1]))

    def ball_masses(self, center: np.ndarray, radii: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Masses and atom counts of the closed balls B(center, r)."""
        masses, counts = [], []
        for r in radii:
            idx = self.tree.query_ball_point(center, r, workers=get_workers())
            masses.append(exact_sum(self.weights[idx]))
            counts.append(len(idx))
        return np.array(masses), np.array(counts)


def default_radii(counter: BallCounter, r_max: float = CHART_SIZE) -> np.ndarray:
    """Half-dyadic radii from `r_max` down to ten atom spacings."""
    r_min = 10.0 * counter.spacing()
    radii = [r_max]
    while radii[-1] / RADIUS_RATIO >= r_min:
        radii.append(radii[-1] / RADIUS_RATIO)
    return np.array(radii)


def pointwise_dimension(
    e: OrbitEnsemble,
    x: TorusPoint,
    radii: Optional[Sequence[float]] = None,
    counter: Optional[BallCounter] = None,
) -> DimensionEstimate:
    """Slope of log mu(B(x, r)) against log r over a window of decreasing radii.

    The smallest radii are dropped while they hold fewer than `MIN_ATOMS`
    atoms, as long as `MIN_RADII` radii remain.

    Raises:
        EmptyBall: If the shrunk window still has a ball below `MIN_ATOMS` atoms.
        ValueError: If the radii are not strictly decreasing.
    """
    counter = counter or BallCounter.from_ensemble(e)
    radii = default_radii(counter) if radii is None else np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0.0):
        raise ValueError("The 'radii' parameter must be strictly decreasing.")
    masses, counts = counter.ball_masses(x.as_array(), radii)
    while counts[-1] < MIN_ATOMS and len(radii) > MIN_RADII:
        radii, masses, counts = radii[:-1], masses[:-1], counts[:-1]
    if counts[-1] < MIN_ATOMS or len(radii) < MIN_RADII:
        raise EmptyBall(
            f"The ball of radius {radii[-1]:.3e} holds {counts[-1]} atoms; "
            f"at least {MIN_ATOMS} are needed over {MIN_RADII} radii.",
            {"radius": float(radii[-1]), "atoms": int(counts[-1])},
        )
    fit = linregress(np.log(radii), np.log(masses))
    estimate = DimensionEstimate(
        center=x,
        radii=radii,
        masses=masses,
        counts=counts,
        slope=float(fit.slope),
        slope_stderr=float(fit.stderr),
    )
    if not estimate.reliable:
        logging.warning(f"Unreliable dimension slope at ({x.x1:.4f}, {x.x2:.4f}): stderr {fit.stderr:.3f}")
    return estimate


def median_dimension(
    e: OrbitEnsemble, n_centers: int = 20, seed: int = 0, counter: Optional[BallCounter] = None
) -> Tuple[float, List[DimensionEstimate]]:
    """Median slope over centers drawn from the ensemble with a seeded sampler."""
    counter = counter or BallCounter.from_ensemble(e)
    centers = sample_points(e, n_centers, seed)
    estimates = [pointwise_dimension(e, TorusPoint.from_array(c), counter=counter) for c in centers]
    median = float(np.median([est.slope for est in estimates]))
    logging.info(f"Median pointwise dimension over {n_centers} centers: {median:.4f}")
    return median, estimates


class BiLipschitzMap(ABC):
    @abstractmethod
    def apply(self, points: np.ndarray) -> np.ndarray:
        """Image of (N, 2) torus points, reduced to [0, 1)."""
        pass


class IdentityMap(BiLipschitzMap):
    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.array(points, dtype=float)


class AutomorphismMap(BiLipschitzMap):
    def __init__(self, matrix: IntMatrix2):
        self.matrix = matrix

    def apply(self, points: np.ndarray) -> np.ndarray:
        return reduce_mod1(np.atleast_2d(points) @ self.matrix.as_array().T)


class ShearMap(BiLipschitzMap):
    """(x1, x2) -> (x1', x2 + a sin(2 pi x1')) with x1' = x1 + a sin(2 pi x2)."""

    def __init__(self, amplitude: float = 0.1):
        self.amplitude = amplitude

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        x1 = points[:, 0] + self.amplitude * np.sin(2.0 * np.pi * points[:, 1])
        x2 = points[:, 1] + self.amplitude * np.sin(2.0 * np.pi * x1)
        return reduce_mod1(np.column_stack([x1, x2]))


@dataclass(frozen=True)
class InvarianceComparison:
    before: DimensionEstimate
    after: DimensionEstimate

    @property
    def slope_difference(self) -> float:
        return abs(self.after.slope - self.before.slope)


def bilipschitz_invariance(
    e: OrbitEnsemble,
    g: BiLipschitzMap,
    x: TorusPoint,
    radii: Optional[Sequence[float]] = None,
) -> InvarianceComparison:
    """Pointwise dimension of mu at x and of g_* mu at g(x)."""
    before = pointwise_dimension(e, x, radii)
    pushed = BallCounter(g.apply(e.points), e.weights)
    image = TorusPoint.from_array(g.apply(x.as_array()[None, :])[0])
    after = pointwise_dimension(e, image, radii, counter=pushed)
    return InvarianceComparison(before=before, after=after)


def median_invariance_gap(e: OrbitEnsemble, g: BiLipschitzMap, n_centers: int = 20, seed: int = 0) -> float:
    """Absolute difference of the 20-center median slopes before and after g."""
    counter = BallCounter.from_ensemble(e)
    pushed = BallCounter(g.apply(e.points), e.weights)
    centers = sample_points(e, n_centers, seed)
    before, after = [], []
    for c in centers:
        before.append(pointwise_dimension(e, TorusPoint.from_array(c), counter=counter).slope)
        image = TorusPoint.from_array(g.apply(c[None, :])[0])
        after.append(pointwise_dimension(e, image, counter=pushed).slope)
    return float(abs(np.median(after) - np.median(before)))


def _skeleton(points: np.ndarray, weights: np.ndarray, mass_fraction: float) -> np.ndarray:
    """Atoms at least as heavy as the lightest one needed to reach `mass_fraction`."""
    order = np.argsort(-weights, kind="stable")
    cumulative = np.cumsum(weights[order]) / exact_sum(weights)
    keep = min(int(np.searchsorted(cumulative, mass_fraction - 1e-12)), len(order) - 1)
    return points[weights >= weights[order[keep]]]


def region_offsets(points: np.ndarray, region: Tuple[float, float, float]) -> Tuple[np.ndarray, np.ndarray]:
    """Offsets of torus points from the corner of a square region, and which lie inside.

    Offsets are taken mod 1, so squares may cross the seams of the unit square.

    Raises:
        ValueError: If the side is not in (0, 1].
    """
    x0, y0, side = region
    if not 0.0 < side <= 1.0:
        raise ValueError("The region side must lie in (0, 1].")
    rel = reduce_mod1(points - np.array([x0, y0]))
    inside = np.all(rel < side, axis=1)
    return rel, inside


def hausdorff_consistency(
    e: OrbitEnsemble,
    region: Tuple[float, float, float] = (0.0, 0.0, 1.0),
    mass_fraction: float = 0.9,
    band: Optional[Tuple[float, float]] = None,
) -> float:
    """Box-counting slope of the high-mass skeleton inside a square region.

    Args:
        e (OrbitEnsemble): Ensemble.
        region (Tuple[float, float, float], optional): Lower-left corner and
            side of the square. Defaults to the whole torus.
        mass_fraction (float, optional): Mass share kept in the skeleton.
        band (Tuple[float, float], optional): [min, max] pointwise slopes; a
            warning is logged when the box slope falls outside.

    Returns:
        float: Slope of log N(s) against log(1/s) over dyadic box sides s.
    """
    side = region[2]
    rel, inside = region_offsets(e.points, region)
    if not np.any(inside):
        raise ValueError("The region holds no atoms of the ensemble.")
    skeleton = _skeleton(rel[inside], e.weights[inside], mass_fraction)
    levels = max(2, int(np.floor(np.log(max(len(skeleton), 1) / 4.0) / np.log(4.0))))
    ks = np.arange(1, levels + 1)
    counts = []
    for k in ks:
        cells = np.floor(skeleton / side * 2**k).astype(np.int64)
        counts.append(len(np.unique(cells[:, 0] * 2**k + cells[:, 1])))
    slope = float(linregress(ks * np.log(2.0), np.log(counts)).slope)
    if band is not None and not band[0] <= slope <= band[1]:
        logging.warning(f"Box-counting slope {slope:.4f} lies outside the pointwise band {band}")
    return slope
