"""Bowen periodic-orbit approximants of equilibrium states."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from src.equilibrium.potentials import Potential
from src.equilibrium.seeding import PeriodicOrbitFinder, default_finder
from src.errors import DegenerateExponent
from src.hyperbolic_splitting import log_stable_jacobians, log_unstable_jacobians, orbit_directions
from src.reductions import exact_sum, log_sum_exp
from src.torus_dynamics import DEFAULT_CONE, AnosovMapSpec, PeriodicSet, TorusPoint, apply_points, certify

ENTROPY_TOL: float = 1e-9
DEGENERATE_EXPONENT: float = 1e-6


@dataclass(frozen=True, eq=False)
class OrbitEnsemble:
    """Weighted Fix(b^n), b = a^power, with w_p proportional to exp(S_n psi(p)).

    For power 1, psi is phi; otherwise psi = S_power phi is the potential of
    b and `phi_values` holds it.
    """

    n: int
    periodic_set: PeriodicSet
    weights: np.ndarray
    pressure_n: float
    potential: Potential
    birkhoff_sums: np.ndarray
    phi_values: np.ndarray
    power: int = 1

    @property
    def points(self) -> np.ndarray:
        return self.periodic_set.points

    @property
    def successor(self) -> np.ndarray:
        return self.periodic_set.successor

    def __len__(self) -> int:
        return len(self.periodic_set)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x1": self.points[:, 0], "x2": self.points[:, 1], "weight": self.weights})


@dataclass(frozen=True)
class ExponentReport:
    lambda_u: float
    lambda_s: float
    entropy: float
    delta_u: float
    delta_s: float
    dim_total: float
    pressure: float
    period_used: int
    potential_kind: str
    error_estimates: Dict[str, float] = field(default_factory=dict)

    @property
    def exponent_sum(self) -> float:
        return self.lambda_u + self.lambda_s

    def to_record(self) -> dict:
        return {
            "lambda_u": self.lambda_u,
            "lambda_s": self.lambda_s,
            "entropy": self.entropy,
            "delta_u": self.delta_u,
            "delta_s": self.delta_s,
            "dim_total": self.dim_total,
            "pressure": self.pressure,
            "period_used": self.period_used,
            "potential": self.potential_kind,
            "error_estimates": dict(self.error_estimates),
        }


def _orbit_sums(pset: PeriodicSet, values: np.ndarray) -> np.ndarray:
    """S_n of `values` at every point; identical along each orbit."""
    table = values[pset.orbit_table()]
    return np.array([math.fsum(row) for row in table.tolist()])


def birkhoff_sum(map_spec: AnosovMapSpec, phi: Potential, p: TorusPoint, n: int) -> float:
    """S_n phi(p) = sum of phi(a^i p) for i < n.

    Raises:
        ValueError: If n < 1.
    """
    if n < 1:
        raise ValueError("The parameter 'n' must be at least 1.")
    orbit = np.empty((n, 2))
    orbit[0] = p.as_array()
    for i in range(1, n):
        orbit[i] = apply_points(map_spec, orbit[i - 1 : i])[0]
    return exact_sum(phi.evaluate(orbit))


def ensemble(
    map_spec: AnosovMapSpec,
    phi: Potential,
    n: int,
    finder: Optional[PeriodicOrbitFinder] = None,
    cone: Tuple[int, float, float] = DEFAULT_CONE,
) -> OrbitEnsemble:
    """Build the period-n ensemble of the equilibrium state of phi.

    Args:
        map_spec (AnosovMapSpec): Certified map.
        phi (Potential): Potential.
        n (int): Period.
        finder (PeriodicOrbitFinder, optional): Periodic point handler.
            Defaults to the shared linear-seeding finder.
        cone (Tuple[int, float, float], optional): Grid size, half-width and
            safety of the cone check. Defaults to `DEFAULT_CONE`.

    Returns:
        OrbitEnsemble: Points in linear enumeration order with normalised weights.

    Raises:
        NotCertified: If the map fails the cone check.
        Overflow: If the period is beyond the ensemble cap.
    """
    certify(map_spec, *cone)
    pset = (finder or default_finder()).find_periodic_points(map_spec, n)
    e = _weighted_ensemble(pset, phi, phi.evaluate_periodic(pset), 1)
    logging.info(f"Built {phi.kind} ensemble of {len(pset)} points at period {n}")
    return e


def _weighted_ensemble(pset: PeriodicSet, phi: Potential, values: np.ndarray, power: int) -> OrbitEnsemble:
    sums = _orbit_sums(pset, values)
    log_total = log_sum_exp(sums)
    weights = np.exp(sums - log_total)
    weights = weights / exact_sum(weights)
    return OrbitEnsemble(
        n=pset.n,
        periodic_set=pset,
        weights=weights,
        pressure_n=log_total / pset.n,
        potential=phi,
        birkhoff_sums=sums,
        phi_values=values,
        power=power,
    )


def power_ensemble(
    map_spec: AnosovMapSpec,
    phi: Potential,
    m: int,
    n: int,
    finder: Optional[PeriodicOrbitFinder] = None,
    cone: Tuple[int, float, float] = DEFAULT_CONE,
) -> OrbitEnsemble:
    """Period-n ensemble of b = a^m for the potential S_m phi of b.

    Fix(b^n) is refined as fixed points of the composed map and every point
    carries S_m phi summed along its own a-orbit segment; orbit sums then
    follow the permutation induced by b.

    Raises:
        ValueError: If m < 1 or n < 1.
        NotCertified: If the map fails the cone check.
    """
    if m < 1 or n < 1:
        raise ValueError(f"The power {m} and period {n} must both be at least 1.")
    certify(map_spec, *cone)
    pset = (finder or default_finder()).find_periodic_points(map_spec, n, power=m)
    segment = [pset.points]
    for _ in range(1, m):
        segment.append(apply_points(map_spec, segment[-1]))
    table = np.stack([phi.evaluate(points) for points in segment], axis=1)
    values = np.array([math.fsum(row) for row in table.tolist()])
    logging.info(f"Built {phi.kind} ensemble of a^{m} with {len(pset)} points at period {n}")
    return _weighted_ensemble(pset, phi, values, m)


def pressure(
    map_spec: AnosovMapSpec,
    phi: Potential,
    n: int,
    finder: Optional[PeriodicOrbitFinder] = None,
    cone: Tuple[int, float, float] = DEFAULT_CONE,
) -> float:
    """P_n(phi) = (1/n) log sum over Fix(a^n) of exp(S_n phi)."""
    return ensemble(map_spec, phi, n, finder, cone).pressure_n


def integrate(e: OrbitEnsemble, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sum of w_p f(p) with a correctly rounded reduction.

    Args:
        e (OrbitEnsemble): Ensemble.
        f (Callable): Vectorised function of (N, 2) torus points.
    """
    values = np.asarray(f(e.points), dtype=float)
    return exact_sum(e.weights * values)


def sample_points(e: OrbitEnsemble, size: int, seed: int) -> np.ndarray:
    """Draw `size` atoms of the ensemble with a seeded generator."""
    rng = np.random.default_rng(seed)
    indices = rng.choice(len(e), size=size, p=e.weights)
    return e.points[indices]


def entropy(e: OrbitEnsemble, map_spec: AnosovMapSpec) -> float:
    """h = P_n(phi) - integral of phi, clamped at 0."""
    h = e.pressure_n - exact_sum(e.weights * e.phi_values)
    if h < 0.0:
        if h < -ENTROPY_TOL:
            logging.warning(f"Negative entropy estimate {h:.3e} at period {e.n} clamped to 0")
        return 0.0
    return h


def ensemble_exponents(map_spec: AnosovMapSpec, e: OrbitEnsemble) -> Dict[str, np.ndarray]:
    """Pointwise log|Da e_u| and log|Da e_s| along the ensemble."""
    pset = e.periodic_set
    log_u = log_unstable_jacobians(map_spec, pset.points, orbit_directions(map_spec, pset, "unstable"))
    log_s = log_stable_jacobians(map_spec, pset.points, orbit_directions(map_spec, pset, "stable"))
    return {"log_u": log_u, "log_s": log_s}


def _raw_report(map_spec: AnosovMapSpec, e: OrbitEnsemble) -> Dict[str, float]:
    logs = ensemble_exponents(map_spec, e)
    lambda_u = exact_sum(e.weights * logs["log_u"])
    lambda_s = exact_sum(e.weights * logs["log_s"])
    if lambda_u < DEGENERATE_EXPONENT:
        raise DegenerateExponent(
            f"Unstable exponent {lambda_u:.3e} is below {DEGENERATE_EXPONENT}.",
            {"lambda_u": lambda_u, "n": e.n},
        )
    h = entropy(e, map_spec)
    delta_u = h / lambda_u
    delta_s = h / abs(lambda_s)
    return {
        "lambda_u": lambda_u,
        "lambda_s": lambda_s,
        "entropy": h,
        "delta_u": delta_u,
        "delta_s": delta_s,
        "dim_total": delta_u + delta_s,
        "pressure": e.pressure_n,
    }


def _clip_unit(name: str, value: float) -> float:
    if value > 1.0 + 1e-3:
        logging.warning(f"{name} = {value:.6f} exceeds 1; clipped")
    return min(max(value, 0.0), 1.0)


def exponent_report(
    map_spec: AnosovMapSpec,
    phi: Potential,
    n: int,
    coarse_n: Optional[int] = None,
    finder: Optional[PeriodicOrbitFinder] = None,
    cone: Tuple[int, float, float] = DEFAULT_CONE,
) -> ExponentReport:
    """Exponents, entropy and dimensions of the period-n ensemble.

    Error estimates are absolute differences against the period `coarse_n`
    ensemble (n - 2 unless given).

    Raises:
        DegenerateExponent: If lambda_u < 1e-6.
        ValueError: If `coarse_n` is not a smaller positive period.
    """
    coarse_n = n - 2 if coarse_n is None else coarse_n
    if not 1 <= coarse_n < n:
        raise ValueError(f"The refinement pair ({coarse_n}, {n}) must satisfy 1 <= coarse < fine.")
    fine = _raw_report(map_spec, ensemble(map_spec, phi, n, finder, cone))
    coarse = _raw_report(map_spec, ensemble(map_spec, phi, coarse_n, finder, cone))
    errors = {key: abs(fine[key] - coarse[key]) for key in fine}
    delta_u = _clip_unit("delta_u", fine["delta_u"])
    delta_s = _clip_unit("delta_s", fine["delta_s"])
    report = ExponentReport(
        lambda_u=fine["lambda_u"],
        lambda_s=fine["lambda_s"],
        entropy=fine["entropy"],
        delta_u=delta_u,
        delta_s=delta_s,
        dim_total=delta_u + delta_s,
        pressure=fine["pressure"],
        period_used=n,
        potential_kind=phi.kind,
        error_estimates=errors,
    )
    logging.info(
        f"Exponents at period {n}: lambda_u={report.lambda_u:.8f}, "
        f"lambda_s={report.lambda_s:.8f}, h={report.entropy:.8f}"
    )
    return report


def minimal_periods(pset: PeriodicSet) -> np.ndarray:
    """Least k >= 1 with a^k(p) = p for every point."""
    periods = np.full(len(pset), pset.n, dtype=np.int64)
    current = np.arange(len(pset))
    for k in range(1, pset.n):
        current = pset.successor[current]
        returned = (current == np.arange(len(pset))) & (periods == pset.n)
        periods[returned] = k
    return periods


def orbit_exponents(map_spec: AnosovMapSpec, e: OrbitEnsemble) -> pd.DataFrame:
    """Unstable and stable exponents of every periodic orbit of the ensemble.

    The weight column is the ensemble mass of the orbit, so the weighted
    column means reproduce the ensemble exponents.

    Returns:
        pd.DataFrame: Columns orbit, period, weight, x1, x2, lambda_u, lambda_s.
    """
    pset = e.periodic_set
    logs = ensemble_exponents(map_spec, e)
    averages_u = _orbit_sums(pset, logs["log_u"]) / pset.n
    averages_s = _orbit_sums(pset, logs["log_s"]) / pset.n
    ids = pset.orbit_ids()
    representatives = np.flatnonzero(ids == np.arange(len(pset)))
    periods = minimal_periods(pset)[representatives]
    return pd.DataFrame(
        {
            "orbit": representatives,
            "period": periods,
            "weight": e.weights[representatives] * periods,
            "x1": pset.points[representatives, 0],
            "x2": pset.points[representatives, 1],
            "lambda_u": averages_u[representatives],
            "lambda_s": averages_s[representatives],
        }
    )
