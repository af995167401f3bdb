import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple

import numpy as np

from src.conjugacy import Conjugacy, apply_h_inverse_points, apply_h_points
from src.hyperbolic_splitting import (
    log_stable_jacobians,
    log_unstable_jacobians,
    orbit_directions,
)
from src.reductions import parallel_map
from src.torus_dynamics import AnosovMapSpec, PeriodicSet, TorusPoint


class Potential(ABC):
    """Continuous real function on the torus used as a thermodynamic weight."""

    kind: str = "abstract"

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the potential at torus points.

        Args:
            points (np.ndarray): (N, 2) coordinates in [0, 1).

        Returns:
            np.ndarray: (N,) values.
        """
        pass

    def evaluate_periodic(self, pset: PeriodicSet) -> np.ndarray:
        """Values on a periodic set; subclasses may use the orbit structure."""
        return parallel_map(self.evaluate, pset.points)

    @property
    def constant_value(self) -> Optional[float]:
        """The value of a constant potential, None otherwise."""
        return None

    @abstractmethod
    def to_record(self) -> dict:
        pass

    def __call__(self, p: TorusPoint) -> float:
        return float(self.evaluate(p.as_array()[None, :])[0])


class ZeroPotential(Potential):
    kind = "zero"

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(np.atleast_2d(points).shape[0])

    @property
    def constant_value(self) -> Optional[float]:
        return 0.0

    def to_record(self) -> dict:
        return {"kind": self.kind}


class ConstantPotential(Potential):
    kind = "constant"

    def __init__(self, value: float) -> None:
        self.value = float(value)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(points).shape[0], self.value)

    @property
    def constant_value(self) -> Optional[float]:
        return self.value

    def to_record(self) -> dict:
        return {"kind": self.kind, "value": self.value}


class FourierPotential(Potential):
    kind = "fourier"

    def __init__(self, terms: Sequence[Tuple[int, int, float, float]]) -> None:
        """Trigonometric polynomial sum a cos(2 pi k.x) + b sin(2 pi k.x).

        Args:
            terms (Sequence[Tuple[int, int, float, float]]): Rows (k1, k2, a, b).
        """
        if not terms:
            raise ValueError("The 'terms' parameter cannot be empty for a fourier potential.")
        self.terms = [(int(k1), int(k2), float(a), float(b)) for k1, k2, a, b in terms]
        self._freqs = np.array([[k1, k2] for k1, k2, _, _ in self.terms], dtype=float)
        self._cos = np.array([a for _, _, a, _ in self.terms])
        self._sin = np.array([b for _, _, _, b in self.terms])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        theta = 2.0 * np.pi * (np.atleast_2d(points) @ self._freqs.T)
        return np.cos(theta) @ self._cos + np.sin(theta) @ self._sin

    def to_record(self) -> dict:
        return {"kind": self.kind, "terms": [list(t) for t in self.terms]}


class PullbackPotential(Potential):
    kind = "pullback"

    def __init__(self, inner: Potential, conjugacy: Conjugacy, inverse: bool = True) -> None:
        """Transport a potential through the conjugacy.

        Args:
            inner (Potential): Potential to transport.
            conjugacy (Conjugacy): Converged conjugacy h.
            inverse (bool, optional): Evaluate inner o h^-1 when True (a
                potential for the linear model), inner o h otherwise.
                Defaults to True.
        """
        self.inner = inner
        self.conjugacy = conjugacy
        self.inverse = inverse

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        moved = (
            apply_h_inverse_points(self.conjugacy, points)
            if self.inverse
            else apply_h_points(self.conjugacy, points)
        )
        return self.inner.evaluate(moved)

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "inner": self.inner.to_record(),
            "inverse": self.inverse,
            "grid_n": self.conjugacy.grid_n,
        }


class PhiUPotential(Potential):
    """Forward SRB potential -log J = -log |Da e_u|."""

    kind = "phi_u"

    def __init__(self, map_spec: AnosovMapSpec) -> None:
        self.map_spec = map_spec

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return -log_unstable_jacobians(self.map_spec, points)

    def evaluate_periodic(self, pset: PeriodicSet) -> np.ndarray:
        directions = orbit_directions(self.map_spec, pset, "unstable")
        return -log_unstable_jacobians(self.map_spec, pset.points, directions)

    def to_record(self) -> dict:
        return {"kind": self.kind}


class PhiSPotential(Potential):
    """Backward SRB potential log |Da e_s|, cohomologous to -log |Da^-1 e_s|."""

    kind = "phi_s"

    def __init__(self, map_spec: AnosovMapSpec) -> None:
        self.map_spec = map_spec

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return log_stable_jacobians(self.map_spec, points)

    def evaluate_periodic(self, pset: PeriodicSet) -> np.ndarray:
        directions = orbit_directions(self.map_spec, pset, "stable")
        return log_stable_jacobians(self.map_spec, pset.points, directions)

    def to_record(self) -> dict:
        return {"kind": self.kind}


def potential_phi_u(map_spec: AnosovMapSpec) -> Potential:
    return PhiUPotential(map_spec)


def potential_phi_s(map_spec: AnosovMapSpec) -> Potential:
    return PhiSPotential(map_spec)


class PotentialFactory:
    """Factory class to obtain the Potential for a declared kind."""

    @staticmethod
    def get_potential(
        kind: str,
        map_spec: AnosovMapSpec,
        conjugacy: Optional[Conjugacy] = None,
        value: float = 0.0,
        terms: Optional[Sequence[Tuple[int, int, float, float]]] = None,
        inner: Optional[Potential] = None,
        inverse: bool = True,
    ) -> Potential:
        """Returns the Potential for `kind`.

        Args:
            kind (str): One of zero, constant, phi_u, phi_s, fourier, pullback.
            map_spec (AnosovMapSpec): Map the SRB potentials refer to.
            conjugacy (Conjugacy, optional): Needed by `pullback`.
            value (float, optional): Value of a `constant` potential.
            terms (Sequence, optional): Rows (k1, k2, a, b) of a `fourier` potential.
            inner (Potential, optional): Potential transported by `pullback`.
            inverse (bool, optional): Direction of the `pullback`.

        Returns:
            Potential: The potential.

        Raises:
            ValueError: If the kind is unknown or its parameters are missing.
        """
        logging.info(f"Building potential of kind: {kind}")
        if kind == "zero":
            return ZeroPotential()
        elif kind == "constant":
            return ConstantPotential(value)
        elif kind == "phi_u":
            return PhiUPotential(map_spec)
        elif kind == "phi_s":
            return PhiSPotential(map_spec)
        elif kind == "fourier":
            return FourierPotential(terms or [])
        elif kind == "pullback":
            if conjugacy is None or inner is None:
                raise ValueError("A pullback potential needs both 'inner' and 'conjugacy'.")
            return PullbackPotential(inner, conjugacy, inverse)
        else:
            raise ValueError(f"No potential available for kind: {kind}")
