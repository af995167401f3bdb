"""Grid solution of h o a = L_A o h with h = id + u, and evaluation of h, h^-1."""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.ndimage import map_coordinates

from src.errors import NonConvergence
from src.reductions import parallel_map
from src.torus_dynamics import (
    NEWTON_MAX_ITER,
    AnosovMapSpec,
    TorusPoint,
    reduce_mod1,
    refine_periodic_point,
    solve2,
    torus_delta,
    torus_distance,
)


def _interpolate(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Periodic bilinear interpolation of a grid field at torus points."""
    grid_n = values.shape[0]
    coords = (np.atleast_2d(points) * grid_n).T
    return map_coordinates(values, coords, order=1, mode="grid-wrap")


def _interpolate_gradient(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Gradient of the bilinear interpolant, constant-per-cell in each variable."""
    grid_n = values.shape[0]
    scaled = np.atleast_2d(points) * grid_n
    base = np.floor(scaled).astype(np.int64)
    frac = scaled - base
    i0, j0 = base[:, 0] % grid_n, base[:, 1] % grid_n
    i1, j1 = (i0 + 1) % grid_n, (j0 + 1) % grid_n
    f00, f01 = values[i0, j0], values[i0, j1]
    f10, f11 = values[i1, j0], values[i1, j1]
    d1 = (1.0 - frac[:, 1]) * (f10 - f00) + frac[:, 1] * (f11 - f01)
    d2 = (1.0 - frac[:, 0]) * (f01 - f00) + frac[:, 0] * (f11 - f10)
    return np.stack([d1, d2], axis=1) * grid_n


@dataclass(frozen=True, eq=False)
class Conjugacy:
    """Displacement field u of h = id + u in the eigenbasis of A.

    `u_plus` and `u_minus` are the components along the unstable and stable
    eigenvectors sampled at the nodes (i / grid_n, j / grid_n).
    """

    grid_n: int
    u_plus: np.ndarray
    u_minus: np.ndarray
    basis: np.ndarray
    residual: float
    tol: float
    converged: bool
    iterations: int
    updates: List[float] = field(default_factory=list)
    interpolation_error: float = float("nan")
    normalization_offset: float = 0.0

    def displacement(self, points: np.ndarray) -> np.ndarray:
        """u(x) in standard coordinates for (N, 2) torus points."""
        plus = _interpolate(self.u_plus, points)
        minus = _interpolate(self.u_minus, points)
        return np.outer(plus, self.basis[:, 0]) + np.outer(minus, self.basis[:, 1])

    def displacement_jacobian(self, points: np.ndarray) -> np.ndarray:
        grad_plus = _interpolate_gradient(self.u_plus, points)
        grad_minus = _interpolate_gradient(self.u_minus, points)
        return np.einsum("a,nb->nab", self.basis[:, 0], grad_plus) + np.einsum(
            "a,nb->nab", self.basis[:, 1], grad_minus
        )

    def grid_displacement(self) -> np.ndarray:
        """(grid_n, grid_n, 2) field in standard coordinates."""
        return self.u_plus[..., None] * self.basis[:, 0] + self.u_minus[..., None] * self.basis[:, 1]

    def contraction_rate(self) -> float:
        """Geometric mean ratio of successive sup-norm updates."""
        ups = np.array([u for u in self.updates if u > 0.0])
        if ups.size < 3:
            return 0.0
        return float(np.exp(np.mean(np.diff(np.log(ups[: max(3, ups.size // 2)])))))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "grid_n": self.grid_n,
                    "residual": self.residual,
                    "interpolation_error": self.interpolation_error,
                    "iterations": self.iterations,
                    "converged": self.converged,
                    "max_displacement": float(np.max(np.linalg.norm(self.grid_displacement(), axis=-1))),
                    "normalization_offset": self.normalization_offset,
                }
            ]
        )


def _grid_points(grid_n: int) -> np.ndarray:
    ticks = np.arange(grid_n) / grid_n
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _solve_split_equations(
    map_spec: AnosovMapSpec, grid_n: int, tol: float, max_iter: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float, int, List[float]]:
    """Iterate u+ <- (u+ o a + P+) / lambda_u and u- <- lambda_s u- o a^-1 - P- o a^-1."""
    lam_u, lam_s = map_spec.linear.eigenvalues()
    e_u, e_s = map_spec.linear.eigenbasis()
    basis = np.column_stack([e_u, e_s])
    to_eigen = np.linalg.inv(basis)

    nodes = _grid_points(grid_n)
    forward = map_spec.lift(nodes)
    backward = parallel_map(map_spec.inverse_lift, nodes)
    p_plus = (map_spec.perturbation(nodes) @ to_eigen.T)[:, 0].reshape(grid_n, grid_n)
    p_minus_back = (map_spec.perturbation(backward) @ to_eigen.T)[:, 1].reshape(grid_n, grid_n)
    forward, backward = reduce_mod1(forward), reduce_mod1(backward)

    u_plus = np.zeros((grid_n, grid_n))
    u_minus = np.zeros((grid_n, grid_n))
    updates: List[float] = []
    if map_spec.is_linear:
        return u_plus, u_minus, basis, 0.0, 0, updates

    for sweep in range(1, max_iter + 1):
        new_plus = (_interpolate(u_plus, forward).reshape(grid_n, grid_n) + p_plus) / lam_u
        new_minus = lam_s * _interpolate(u_minus, backward).reshape(grid_n, grid_n) - p_minus_back
        update = float(max(np.max(np.abs(new_plus - u_plus)), np.max(np.abs(new_minus - u_minus))))
        u_plus, u_minus = new_plus, new_minus
        updates.append(update)
        if update < 0.1 * tol:
            break
    else:
        raise NonConvergence(
            f"Conjugacy iteration did not reach {tol:g} in {max_iter} sweeps; "
            "the perturbation is too large for contraction.",
            {"max_iter": max_iter, "last_update": updates[-1]},
        )

    # defect of the split equations at the final iterate
    defect_plus = lam_u * u_plus - _interpolate(u_plus, forward).reshape(grid_n, grid_n) - p_plus
    defect_minus = u_minus - lam_s * _interpolate(u_minus, backward).reshape(grid_n, grid_n) + p_minus_back
    defect = defect_plus[..., None] * e_u + defect_minus[..., None] * e_s
    residual = float(np.max(np.linalg.norm(defect, axis=-1)))
    return u_plus, u_minus, basis, residual, sweep, updates


def compute_conjugacy(
    map_spec: AnosovMapSpec,
    grid_n: int,
    tol: float = 1e-8,
    max_iter: int = 200,
    estimate_interpolation: bool = True,
) -> Conjugacy:
    """Solve the conjugacy equation for h = id + u on a grid.

    Splitting u along the eigenvectors of A turns A u = u o a + P into two
    contractions: the unstable component is iterated forward with rate
    1 / |lambda_u| and the stable component backward with rate |lambda_s|.

    Args:
        map_spec (AnosovMapSpec): Certified map.
        grid_n (int): Grid size, a power of two not below 256.
        tol (float, optional): Target sup-norm defect. Defaults to 1e-8.
        max_iter (int, optional): Sweep limit. Defaults to 200.
        estimate_interpolation (bool, optional): Compare with the half grid to
            estimate off-grid interpolation error. Defaults to True.

    Returns:
        Conjugacy: The converged field with its residual.

    Raises:
        ValueError: If `grid_n` is not a power of two >= 256.
        NonConvergence: After `max_iter` sweeps.
    """
    if grid_n < 256 or grid_n & (grid_n - 1):
        raise ValueError("The 'grid_n' parameter must be a power of two of at least 256.")
    if tol <= 0.0:
        raise ValueError("The 'tol' parameter must be positive.")
    logging.info(f"Solving conjugacy equation on a {grid_n}x{grid_n} grid")
    u_plus, u_minus, basis, residual, sweeps, updates = _solve_split_equations(
        map_spec, grid_n, tol, max_iter
    )
    interpolation_error = 0.0
    if estimate_interpolation and not map_spec.is_linear:
        coarse_plus, coarse_minus, _, _, _, _ = _solve_split_equations(map_spec, grid_n // 2, tol, max_iter)
        nodes = _grid_points(grid_n)
        diff_plus = _interpolate(coarse_plus, nodes) - u_plus.ravel()
        diff_minus = _interpolate(coarse_minus, nodes) - u_minus.ravel()
        interpolation_error = float(
            np.max(np.linalg.norm(np.outer(diff_plus, basis[:, 0]) + np.outer(diff_minus, basis[:, 1]), axis=1))
        )

    conj = Conjugacy(
        grid_n=grid_n,
        u_plus=u_plus,
        u_minus=u_minus,
        basis=basis,
        residual=residual,
        tol=tol,
        converged=residual < tol,
        iterations=sweeps,
        updates=updates,
        interpolation_error=interpolation_error,
    )
    conj = replace(conj, normalization_offset=_normalization_offset(map_spec, conj))
    logging.info(
        f"Conjugacy converged in {sweeps} sweeps: residual {residual:.3e}, "
        f"interpolation error {interpolation_error:.3e}"
    )
    return conj


def _normalization_offset(map_spec: AnosovMapSpec, conj: Conjugacy) -> float:
    """Distance from h(p0) to the origin, p0 the fixed point of a continued from 0."""
    p0 = refine_periodic_point(map_spec, 1, TorusPoint(0.0, 0.0))
    image = apply_h_points(conj, p0.as_array()[None, :])
    return float(torus_distance(image[0], np.zeros(2)))


def apply_h_points(c: Conjugacy, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return reduce_mod1(points + c.displacement(points))


def apply_h(c: Conjugacy, p: TorusPoint) -> TorusPoint:
    """h(p) = p + u(p) mod Z^2 by bilinear interpolation of u."""
    return TorusPoint.from_array(apply_h_points(c, p.as_array())[0])


def apply_h_inverse_points(c: Conjugacy, targets: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Newton on x + u(x) = q seeded at q, row by row.

    Raises:
        NonConvergence: After `NEWTON_MAX_ITER` iterations.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    x = targets.copy()
    active = np.arange(len(x))
    for _ in range(NEWTON_MAX_ITER):
        if active.size == 0:
            break
        cur = x[active]
        defect = torus_delta(targets[active], cur + c.displacement(cur))
        jac = np.eye(2)[None, :, :] + c.displacement_jacobian(cur)
        step = solve2(jac, defect)
        x[active] = cur - step
        active = active[np.linalg.norm(step, axis=1) > tol]
    if active.size:
        raise NonConvergence(
            "Inverting the conjugacy did not converge.",
            {"max_iter": NEWTON_MAX_ITER, "unconverged": int(active.size)},
        )
    return reduce_mod1(x)


def apply_h_inverse(c: Conjugacy, q: TorusPoint) -> TorusPoint:
    return TorusPoint.from_array(apply_h_inverse_points(c, q.as_array())[0])


def conjugacy_defect(c: Conjugacy, map_spec: AnosovMapSpec, points: np.ndarray) -> np.ndarray:
    """d(h(a(p)), L_A(h(p))) at arbitrary points."""
    lhs = apply_h_points(c, reduce_mod1(map_spec.lift(points)))
    rhs = reduce_mod1(apply_h_points(c, points) @ map_spec.matrix.T)
    return torus_distance(lhs, rhs)


def transport_defect(c: Conjugacy, map_spec: AnosovMapSpec, points: np.ndarray, n: int) -> np.ndarray:
    """d(h(a^n(p)), L_A^n(h(p))) for n >= 1."""
    image = np.atleast_2d(points)
    for _ in range(n):
        image = reduce_mod1(map_spec.lift(image))
    lhs = apply_h_points(c, image)
    rhs = apply_h_points(c, points)
    for _ in range(n):
        rhs = reduce_mod1(rhs @ map_spec.matrix.T)
    return torus_distance(lhs, rhs)


def _modulus_of_continuity(c: Conjugacy) -> Tuple[np.ndarray, np.ndarray]:
    """sup |u(x + s) - u(x)| over grid-aligned dyadic offsets s."""
    field_ = c.grid_displacement()
    scales, moduli = [], []
    shift = 1
    while shift <= c.grid_n // 4:
        worst = 0.0
        for axis_shift in ((shift, 0), (0, shift), (shift, shift)):
            moved = np.roll(field_, (-axis_shift[0], -axis_shift[1]), axis=(0, 1))
            worst = max(worst, float(np.max(np.linalg.norm(moved - field_, axis=-1))))
        scales.append(shift / c.grid_n)
        moduli.append(worst)
        shift *= 2
    return np.array(scales), np.array(moduli)


def holder_window_slopes(c: Conjugacy) -> Tuple[float, float]:
    """Hölder slopes over the fine and the coarse half of the dyadic scales."""
    scales, moduli = _modulus_of_continuity(c)
    if np.max(moduli) == 0.0:
        return 1.0, 1.0
    half = len(scales) // 2
    fine = stats.linregress(np.log(scales[: half + 1]), np.log(moduli[: half + 1]))
    coarse = stats.linregress(np.log(scales[half:]), np.log(moduli[half:]))
    return float(fine.slope), float(coarse.slope)


def holder_estimate(c: Conjugacy) -> float:
    """Least-squares slope of log |u(p) - u(q)| against log d(p, q).

    Diagnostic only. For u identically zero the regression is degenerate and
    the exponent is reported as 1.0.
    """
    scales, moduli = _modulus_of_continuity(c)
    if np.max(moduli) == 0.0:
        logging.warning("Displacement field is identically zero; Hölder exponent reported as 1.0")
        return 1.0
    fit = stats.linregress(np.log(scales), np.log(moduli))
    return float(min(max(fit.slope, 0.0), 1.0))
