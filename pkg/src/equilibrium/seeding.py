import logging
from abc import ABC, abstractmethod
from collections import OrderedDict
from typing import Tuple

import numpy as np

from src.conjugacy import Conjugacy, apply_h_inverse_points
from src.torus_dynamics import (
    ENSEMBLE_CAP,
    AnosovMapSpec,
    IntMatrix2,
    LinearPeriodicSet,
    PeriodicSet,
    linear_periodic_set,
    refine_periodic_orbits,
    reduce_mod1,
    torus_distance,
)

CACHE_SIZE: int = 8


class SeedingStrategy(ABC):
    @abstractmethod
    def seeds(self, map_spec: AnosovMapSpec, linear: LinearPeriodicSet) -> np.ndarray:
        """Initial guesses for Fix(a^n), one per linear periodic point.

        Args:
            map_spec (AnosovMapSpec): Map whose periodic points are sought.
            linear (LinearPeriodicSet): Fix(L_A^n) in enumeration order.

        Returns:
            np.ndarray: (N, 2) seeds aligned with `linear`.
        """
        pass


class LinearSeeding(SeedingStrategy):
    """Seed every orbit with the linear periodic orbit of the same combinatorics."""

    def seeds(self, map_spec: AnosovMapSpec, linear: LinearPeriodicSet) -> np.ndarray:
        return linear.points


class ConjugacySeeding(SeedingStrategy):
    def __init__(self, conjugacy: Conjugacy) -> None:
        """Seed with h^-1 of the linear periodic points.

        Args:
            conjugacy (Conjugacy): Converged conjugacy of the map.
        """
        self.conjugacy = conjugacy

    def seeds(self, map_spec: AnosovMapSpec, linear: LinearPeriodicSet) -> np.ndarray:
        logging.info(f"Seeding {len(linear)} points through the conjugacy inverse")
        return apply_h_inverse_points(self.conjugacy, linear.points)


class PeriodicOrbitFinder:
    def __init__(self, strategy: SeedingStrategy, cap: int = ENSEMBLE_CAP, cache_size: int = CACHE_SIZE):
        """Finds Fix(b^n) for b = a^power with the permutation induced by b.

        Args:
            strategy (SeedingStrategy): Strategy producing Newton seeds.
            cap (int, optional): Maximal ensemble size. Defaults to `ENSEMBLE_CAP`.
            cache_size (int, optional): Periodic sets kept, least recently used
                evicted first. Defaults to `CACHE_SIZE`.
        """
        if cache_size < 1:
            raise ValueError("The 'cache_size' parameter must be at least 1.")
        self._strategy = strategy
        self._cap = cap
        self._cache_size = cache_size
        self._cache: "OrderedDict[Tuple[AnosovMapSpec, int, int], PeriodicSet]" = OrderedDict()

    def set_strategy(self, strategy: SeedingStrategy):
        """Set a new seeding strategy; cached periodic sets are dropped.

        Args:
            strategy (SeedingStrategy): New seeding strategy.
        """
        logging.info("Switching periodic point seeding strategy.")
        self._strategy = strategy
        self._cache.clear()

    def cached_keys(self) -> Tuple[Tuple[AnosovMapSpec, int, int], ...]:
        """(map, n, power) of the cached sets, least recently used first."""
        return tuple(self._cache)

    def find_periodic_points(self, map_spec: AnosovMapSpec, n: int, power: int = 1) -> PeriodicSet:
        """Enumerate Fix(L_B^n) exactly for B = A^power and continue it to Fix(b^n).

        Linear maps need no refinement: the rational points are exact.

        Args:
            map_spec (AnosovMapSpec): The map a.
            n (int): Period under b.
            power (int, optional): b = a^power. Defaults to 1.

        Returns:
            PeriodicSet: Points aligned with the linear enumeration order;
                `successor` is the permutation induced by b.
        """
        if power < 1:
            raise ValueError("The 'power' parameter must be at least 1.")
        key = (map_spec, n, power)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        B: IntMatrix2 = map_spec.linear.power(power)
        linear = linear_periodic_set(B, n, self._cap)
        if map_spec.is_linear:
            points = linear.points
            residuals = torus_distance(reduce_mod1(points @ B.as_array().T), points[linear.successor])
            pset = PeriodicSet(n=n, points=points, successor=linear.successor, residuals=residuals)
        else:
            seeds = self._strategy.seeds(map_spec, linear)
            pset = refine_periodic_orbits(map_spec, n, seeds, linear.successor, power=power)
        self._cache[key] = pset
        if len(self._cache) > self._cache_size:
            evicted, _ = self._cache.popitem(last=False)
            logging.info(f"Evicted cached period-{evicted[1]} set")
        return pset


_DEFAULT_FINDER = PeriodicOrbitFinder(LinearSeeding())


def default_finder() -> PeriodicOrbitFinder:
    return _DEFAULT_FINDER
