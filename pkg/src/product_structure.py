"""Leafwise measures of equilibrium states, the holonomy cocycles and checks of
their transformation laws.

Orientation: leaf measures satisfy mu_{a x}(a E) = integral over E of
exp(P - phi) d mu_x on unstable leaves, and mu^s_{a x}(a E) = integral over E
of exp(phi o a - P) d mu^s_x on stable leaves. In this orientation the
holonomy density is exp(-omega^u), the conditional measures of mu on
unstable leaves are exp(-(omega^s + phi)) mu^u_x and the local product
density is exp(-(omega^u + omega^s + phi)).
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.equilibrium.ensemble import OrbitEnsemble, ensemble
from src.equilibrium.potentials import Potential
from src.errors import LeafEscape, OutOfChart, Overflow
from src.hyperbolic_splitting import (
    CHART_DELTA,
    MAX_HALF_LENGTH,
    LeafSegment,
    bracket_points,
    local_manifold,
    locate_on_segment,
    pushed_segment,
    segment_curve,
    segment_history,
)
from src.reductions import exact_sum, log_sum_exp, parallel_map
from src.torus_dynamics import (
    AnosovMapSpec,
    TorusPoint,
    apply_inverse_points,
    apply_points,
    reduce_mod1,
    torus_delta,
    torus_distance,
)

TAIL_TOL: float = 1e-12
MAX_TERMS: int = 200
CHART_SPAN: float = 1.5


@dataclass(frozen=True, eq=False)
class LeafMeasure:
    """Generation-n approximation of mu^side_x on a sampled leaf segment.

    Interval j spans arclength params edges[j]..edges[j + 1] and carries
    masses[j]; masses sum to 1.
    """

    segment: LeafSegment
    generation: int
    edges: np.ndarray
    edge_taus: np.ndarray
    masses: np.ndarray
    potential_kind: str

    @property
    def side(self) -> str:
        return self.segment.side

    @property
    def resolution(self) -> int:
        return int(self.masses.shape[0])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    def cdf(self, params: np.ndarray) -> np.ndarray:
        """Piecewise-linear cumulative mass at arclength params."""
        cumulative = np.concatenate([[0.0], np.cumsum(self.masses)])
        return np.interp(params, self.edges, cumulative)

    def masses_on(self, edges: np.ndarray) -> np.ndarray:
        """Masses of the intervals between consecutive `edges`."""
        return np.diff(self.cdf(edges))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"param": self.midpoints, "mass": self.masses})


@dataclass(frozen=True)
class CocycleSeries:
    """Truncated omega sums with their geometric tail bounds."""

    values: np.ndarray
    tail_bounds: np.ndarray
    terms: np.ndarray

    @property
    def max_tail_bound(self) -> float:
        return float(np.max(self.tail_bounds, initial=0.0))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Half the l1 distance of two normalised mass vectors."""
    return 0.5 * exact_sum(np.abs(np.asarray(p) - np.asarray(q)))


def matched_tv(first: LeafMeasure, second: LeafMeasure) -> float:
    """Total variation on the coarser of the two interval partitions."""
    coarse = first if first.resolution <= second.resolution else second
    return total_variation(first.masses_on(coarse.edges), second.masses_on(coarse.edges))


def _omega_rows(
    map_spec: AnosovMapSpec,
    phi: Potential,
    side: str,
    tail_tol: float,
    max_terms: int,
    delta: float,
    rows: np.ndarray,
) -> np.ndarray:
    """(N, 3) columns value, tail bound, term count for rows (x1, x2, y1, y2)."""
    xs, ys = rows[:, :2], rows[:, 2:]
    out = np.zeros((rows.shape[0], 3))
    if phi.constant_value is not None:
        return out
    active = np.flatnonzero(torus_distance(xs, ys) > 0.0)
    if active.size == 0:
        return out
    y = ys[active]
    if side == "unstable":
        w = bracket_points(map_spec, xs[active], y, delta)
    else:
        w = bracket_points(map_spec, y, xs[active], delta)
    theta = np.full(active.size, 1.0 / map_spec.linear.spectral_radius)
    gap = torus_distance(w, y)
    for i in range(max_terms):
        term = phi.evaluate(w) - phi.evaluate(y)
        out[active, 0] += term
        out[active, 2] += 1
        magnitude = np.abs(term)
        out[active, 1] = magnitude * theta / (1.0 - theta)
        keep = magnitude >= tail_tol
        if i == max_terms - 1 or not np.any(keep):
            break
        active, w, y, theta, gap = active[keep], w[keep], y[keep], theta[keep], gap[keep]
        # re-bracket each step so the pair stays on one stable (unstable) leaf
        if side == "unstable":
            y = apply_points(map_spec, y)
            w = bracket_points(map_spec, apply_points(map_spec, w), y, delta)
        else:
            y = apply_inverse_points(map_spec, y)
            w = bracket_points(map_spec, y, apply_inverse_points(map_spec, w), delta)
        new_gap = torus_distance(w, y)
        ratio = np.divide(new_gap, gap, out=np.zeros_like(gap), where=gap > 0.0)
        theta = np.clip(ratio, 0.0, 0.99)
        gap = new_gap
    return out


def omega_series(
    map_spec: AnosovMapSpec,
    phi: Potential,
    side: str,
    xs: np.ndarray,
    ys: np.ndarray,
    tail_tol: float = TAIL_TOL,
    max_terms: int = MAX_TERMS,
    delta: float = CHART_DELTA,
) -> CocycleSeries:
    """omega^u_x(y) (side `"unstable"`) or omega^s_x(y) (side `"stable"`), row by row.

    omega^u_x(y) sums phi(a^i [x, y]) - phi(a^i y) over i >= 0 and omega^s_x(y)
    sums phi(a^-i [y, x]) - phi(a^-i y). A series stops once a term is below
    `tail_tol` or after `max_terms` terms; the tail bound is
    term * theta / (1 - theta) with theta the last measured contraction ratio.

    Raises:
        OutOfChart: From the bracket.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    rows = np.hstack([np.broadcast_to(xs, ys.shape), ys])
    func = partial(_omega_rows, map_spec, phi, side, tail_tol, max_terms, delta)
    out = parallel_map(func, rows, min_chunk=256)
    return CocycleSeries(values=out[:, 0], tail_bounds=out[:, 1], terms=out[:, 2].astype(int))


def omega_u(
    map_spec: AnosovMapSpec, phi: Potential, x: TorusPoint, y: TorusPoint, tail_tol: float = TAIL_TOL
) -> float:
    return float(omega_series(map_spec, phi, "unstable", x.as_array(), y.as_array()[None, :], tail_tol).values[0])


def omega_s(
    map_spec: AnosovMapSpec, phi: Potential, x: TorusPoint, y: TorusPoint, tail_tol: float = TAIL_TOL
) -> float:
    return float(omega_series(map_spec, phi, "stable", x.as_array(), y.as_array()[None, :], tail_tol).values[0])


def cocycle_identity_residuals(
    map_spec: AnosovMapSpec,
    phi: Potential,
    xs: np.ndarray,
    x_primes: np.ndarray,
    ys: np.ndarray,
    tail_tol: float = TAIL_TOL,
    chart_delta: float = CHART_DELTA,
) -> np.ndarray:
    """|omega^u_x(y) - omega^u_x([x', y]) - omega^u_{x'}(y)| for x' on W^s_loc(x).

    The three series are summed independently, row by row; brackets may
    reach twice the chart size `chart_delta`.
    """
    xs, x_primes, ys = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (xs, x_primes, ys))
    delta = 2.0 * chart_delta
    moved = bracket_points(map_spec, x_primes, ys, delta)
    whole = _omega_pairs(map_spec, phi, xs, ys, tail_tol, delta)
    first = _omega_pairs(map_spec, phi, xs, moved, tail_tol, delta)
    second = _omega_pairs(map_spec, phi, x_primes, ys, tail_tol, delta)
    return np.abs(whole - first - second)


def _omega_pairs(
    map_spec: AnosovMapSpec, phi: Potential, xs: np.ndarray, ys: np.ndarray, tail_tol: float, delta: float
) -> np.ndarray:
    rows = np.hstack([xs, ys])
    func = partial(_omega_rows, map_spec, phi, "unstable", tail_tol, MAX_TERMS, delta)
    return parallel_map(func, rows, min_chunk=256)[:, 0]


def _log_masses(
    map_spec: AnosovMapSpec, phi: Potential, segment: LeafSegment, n: int, edge_taus: np.ndarray
) -> np.ndarray:
    """log(|E^-n I_j| * exp(-sum_{i=1..n} phi(E^-i y_j))), E the expanding map."""
    if n > segment.depth:
        raise LeafEscape(
            f"Generation {n} exceeds the leaf depth {segment.depth}.",
            {"generation": n, "depth": segment.depth},
        )
    edge_history = segment_history(map_spec, segment, edge_taus)
    chords = np.linalg.norm(np.diff(edge_history[segment.depth - n], axis=0), axis=1)
    mid_taus = 0.5 * (edge_taus[:-1] + edge_taus[1:])
    mid_history = segment_history(map_spec, segment, mid_taus)
    weights = np.zeros(mid_taus.shape[0])
    for i in range(1, n + 1):
        weights -= phi.evaluate(reduce_mod1(mid_history[segment.depth - i]))
    with np.errstate(divide="ignore"):
        logs = np.log(chords) + weights
    if not np.all(np.isfinite(logs)):
        raise LeafEscape("Degenerate interval in the generation-n refinement.", {"generation": n})
    return logs


def _normalize_logs(logs: np.ndarray) -> np.ndarray:
    masses = np.exp(logs - log_sum_exp(logs))
    return masses / exact_sum(masses)


def leaf_measure(
    map_spec: AnosovMapSpec,
    phi: Potential,
    segment: LeafSegment,
    n: int,
    resolution: Optional[int] = None,
    edges: Optional[np.ndarray] = None,
) -> LeafMeasure:
    """Generation-n leaf measure: reference arclength pulled back n steps and reweighted.

    Args:
        map_spec (AnosovMapSpec): Certified map.
        phi (Potential): Potential.
        segment (LeafSegment): Unstable or stable local leaf.
        n (int): Generation, at most the segment depth.
        resolution (int, optional): Number of equal-arclength intervals.
            Defaults to 2**n.
        edges (np.ndarray, optional): Explicit increasing interval edges in
            arclength params; overrides `resolution`.

    Returns:
        LeafMeasure: Normalised interval masses.

    Raises:
        LeafEscape: If the generation exceeds the segment depth or the edges
            leave the segment.
    """
    if n < 1:
        raise ValueError("The generation 'n' must be at least 1.")
    if edges is None:
        resolution = 2**n if resolution is None else resolution
        if resolution < 1:
            raise ValueError("The 'resolution' parameter must be positive.")
        half = segment.half_length
        edges = np.linspace(-half, half, resolution + 1)
    edges = np.asarray(edges, dtype=float)
    if edges[0] < segment.params[0] - 1e-12 or edges[-1] > segment.params[-1] + 1e-12:
        raise LeafEscape(
            "Leaf measure edges leave the sampled segment.",
            {"edges": [float(edges[0]), float(edges[-1])]},
        )
    edge_taus = np.interp(edges, segment.params, segment.taus)
    masses = _normalize_logs(_log_masses(map_spec, phi, segment, n, edge_taus))
    return LeafMeasure(
        segment=segment,
        generation=n,
        edges=edges,
        edge_taus=edge_taus,
        masses=masses,
        potential_kind=phi.kind,
    )


def _interval_midpoints(map_spec: AnosovMapSpec, lm: LeafMeasure) -> np.ndarray:
    mid_taus = 0.5 * (lm.edge_taus[:-1] + lm.edge_taus[1:])
    return reduce_mod1(segment_curve(map_spec, lm.segment, mid_taus))


def _pushed_pair(map_spec: AnosovMapSpec, phi: Potential, lm: LeafMeasure):
    """Leaf measure on the image segment over the images of the intervals of `lm`."""
    image = pushed_segment(map_spec, lm.segment)
    logs = _log_masses(map_spec, phi, image, lm.generation, lm.edge_taus)
    return image, _normalize_logs(logs)


def check_dynamical_jacobian(map_spec: AnosovMapSpec, phi: Potential, lm: LeafMeasure) -> float:
    """TV distance between the reweighted push-forward of `lm` and the direct
    leaf measure at the image point.

    Interval j of the segment maps onto interval j of its image under the
    expanding map (a, or a^-1 on stable leaves) and carries m_j exp(P - phi(y_j)).
    The factor exp(P) drops out in the renormalisation.
    """
    midpoints = _interval_midpoints(map_spec, lm)
    pushed = _normalize_logs(np.log(lm.masses) - phi.evaluate(midpoints))
    _, direct = _pushed_pair(map_spec, phi, lm)
    tv = total_variation(pushed, direct)
    logging.info(f"Dynamical Jacobian check ({lm.side}, generation {lm.generation}): TV = {tv:.3e}")
    return tv


@dataclass(frozen=True)
class EquivalenceBound:
    ratio_bound: float
    predicted_bound: float
    generation: int

    def to_record(self) -> dict:
        return {
            "ratio_bound": self.ratio_bound,
            "predicted_bound": self.predicted_bound,
            "generation": self.generation,
        }


def pushforward_equivalence(map_spec: AnosovMapSpec, phi: Potential, lm: LeafMeasure) -> EquivalenceBound:
    """Bound K with mass ratios of a_* mu_{x} against mu_{a x} in [1/K, K].

    `lm` lives at a^-1 of the point of interest; the predicted bound is the
    spread of exp(-phi) over the segment.
    """
    if lm.side != "unstable":
        raise ValueError("Push-forward equivalence is checked on unstable leaves.")
    _, direct = _pushed_pair(map_spec, phi, lm)
    ratios = direct / lm.masses
    bound = float(max(np.max(ratios), 1.0 / np.min(ratios)))
    values = phi.evaluate(_interval_midpoints(map_spec, lm))
    predicted = float(np.exp(np.max(values) - np.min(values)))
    return EquivalenceBound(ratio_bound=bound, predicted_bound=predicted, generation=lm.generation)


def check_holonomy_jacobian(
    map_spec: AnosovMapSpec,
    phi: Potential,
    x: TorusPoint,
    x_s: TorusPoint,
    n: int = 10,
    resolution: int = 256,
    half_length: float = 0.1,
    step: float = 0.005,
    tail_tol: float = TAIL_TOL,
    chart_delta: float = CHART_DELTA,
) -> float:
    """Transport mu^u_x to W^u(x_s) by stable holonomy and compare.

    The transported intervals carry m_j exp(-omega^u_x(h(y_j))); the result
    is the TV distance to the directly built mu^u_{x_s} on the same
    intervals, both normalised to mass 1.

    Raises:
        OutOfChart: If x_s is not on the local stable leaf of x.
    """
    if x == x_s:
        return 0.0
    delta = 2.0 * chart_delta
    on_leaf = bracket_points(map_spec, x_s.as_array(), x.as_array(), delta)[0]
    miss = float(torus_distance(on_leaf, x_s.as_array()))
    if miss > 1e-8:
        raise OutOfChart(
            f"x_s is {miss:.2e} away from the local stable leaf of x.",
            {"miss": miss},
        )
    source = local_manifold(map_spec, x, "unstable", half_length, step)
    target = local_manifold(map_spec, x_s, "unstable", min(1.5 * half_length, MAX_HALF_LENGTH), step)
    lm = leaf_measure(map_spec, phi, source, n, resolution=resolution)

    edge_points = reduce_mod1(segment_curve(map_spec, source, lm.edge_taus))
    anchor = np.broadcast_to(x_s.as_array(), edge_points.shape)
    target_edges = locate_on_segment(map_spec, target, bracket_points(map_spec, anchor, edge_points, delta))
    midpoints = _interval_midpoints(map_spec, lm)
    mid_images = bracket_points(map_spec, np.broadcast_to(x_s.as_array(), midpoints.shape), midpoints, delta)
    series = omega_series(map_spec, phi, "unstable", x.as_array(), mid_images, tail_tol, delta=delta)
    transported = _normalize_logs(np.log(lm.masses) - series.values)

    if target_edges[-1] < target_edges[0]:
        target_edges, transported = target_edges[::-1], transported[::-1]
    direct = leaf_measure(map_spec, phi, target, n, edges=target_edges)
    tv = total_variation(transported, direct.masses)
    logging.info(f"Holonomy Jacobian check at generation {n}: TV = {tv:.3e}")
    return tv


def conditional_family(
    map_spec: AnosovMapSpec,
    phi: Potential,
    segment: LeafSegment,
    generations: Sequence[int] = (8, 10, 12),
    tail_tol: float = TAIL_TOL,
    chart_delta: float = CHART_DELTA,
) -> pd.DataFrame:
    """Refinement distances of exp(-(omega^s + phi)) mu^u_x across generations.

    All generations share the equal-arclength partition of the coarsest one.

    Returns:
        pd.DataFrame: Columns generation_from, generation_to, tv.
    """
    generations = sorted(generations)
    if len(generations) < 2:
        raise ValueError("The 'generations' parameter needs at least two entries.")
    resolution = 2 ** generations[0]
    base = segment.base.as_array()
    reweighted = []
    for n in generations:
        lm = leaf_measure(map_spec, phi, segment, n, resolution=resolution)
        midpoints = _interval_midpoints(map_spec, lm)
        series = omega_series(map_spec, phi, "stable", base, midpoints, tail_tol, delta=2.0 * chart_delta)
        reweighted.append(_normalize_logs(np.log(lm.masses) - series.values - phi.evaluate(midpoints)))
    rows = [
        {"generation_from": lo, "generation_to": hi, "tv": total_variation(p, q)}
        for lo, hi, p, q in zip(generations[:-1], generations[1:], reweighted[:-1], reweighted[1:])
    ]
    return pd.DataFrame(rows)


@dataclass(frozen=True, eq=False)
class _ProductChart:
    """Product coordinates ([x, z], [z, x]) around a base point."""

    base: TorusPoint
    unstable: LeafSegment
    stable: LeafSegment


def _product_chart(map_spec: AnosovMapSpec, base: TorusPoint, half_length: float, step: float) -> _ProductChart:
    return _ProductChart(
        base=base,
        unstable=local_manifold(map_spec, base, "unstable", half_length, step),
        stable=local_manifold(map_spec, base, "stable", half_length, step),
    )


def _chart_params(map_spec: AnosovMapSpec, chart: _ProductChart, points: np.ndarray, delta: float) -> np.ndarray:
    """(N, 2) arclength params of [x, z] on W^u(x) and [z, x] on W^s(x)."""
    base = np.broadcast_to(chart.base.as_array(), points.shape)
    u = locate_on_segment(map_spec, chart.unstable, bracket_points(map_spec, base, points, delta, delta))
    s = locate_on_segment(map_spec, chart.stable, bracket_points(map_spec, points, base, delta, delta))
    return np.column_stack([u, s])


def _bin_masses(params: np.ndarray, masses: np.ndarray, half_width: float, resolution: int) -> np.ndarray:
    inside = np.all(np.abs(params) < half_width, axis=1)
    edges = np.linspace(-half_width, half_width, resolution + 1)
    hist, _, _ = np.histogram2d(params[inside, 0], params[inside, 1], bins=[edges, edges], weights=masses[inside])
    total = exact_sum(hist)
    if total <= 0.0:
        raise OutOfChart("No mass falls inside the product chart.")
    return hist / total


def _candidates(map_spec: AnosovMapSpec, center: TorusPoint, points: np.ndarray, reach: float) -> np.ndarray:
    """Indices of points whose linear eigen-coordinates around the center lie within `reach`."""
    e_u, e_s = map_spec.linear.eigenbasis()
    coords = np.linalg.solve(np.column_stack([e_u, e_s]), torus_delta(center.as_array(), points).T).T
    return np.flatnonzero(np.all(np.abs(coords) < reach, axis=1))


def product_reconstruction(
    map_spec: AnosovMapSpec,
    phi: Potential,
    chart_center: TorusPoint,
    resolution: int = 32,
    n: int = 12,
    half_width: Optional[float] = None,
    base_point: Optional[TorusPoint] = None,
    subdivision: int = 2,
    step: float = 0.005,
    ens: Optional[OrbitEnsemble] = None,
    tail_tol: float = TAIL_TOL,
    chart_delta: float = CHART_DELTA,
) -> float:
    """TV distance between the local product formula and the ensemble on a chart.

    The chart is the square [-half_width, half_width]^2 in the product
    coordinates of `chart_center`, cut into resolution x resolution bins.
    The product measure exp(-(omega^u + omega^s + phi)) mu^u_x x mu^s_x is
    assembled at `base_point` (the center by default), binned and compared
    after normalisation on the chart with the period-n ensemble. The half
    width defaults to, and may not exceed, 1.5 chart_delta.

    Raises:
        OutOfChart: If `half_width` exceeds 1.5 `chart_delta`, or brackets
            or leaves leave the chart.
        Overflow: If the product densities are not finite.
    """
    half_width = CHART_SPAN * chart_delta if half_width is None else half_width
    if not 0.0 < half_width < MAX_HALF_LENGTH:
        raise ValueError(f"The 'half_width' parameter must lie in (0, {MAX_HALF_LENGTH}).")
    if half_width > CHART_SPAN * chart_delta:
        raise OutOfChart(
            f"The chart square of half width {half_width} exceeds {CHART_SPAN} x the chart size {chart_delta}.",
            {"half_width": half_width, "chart_delta": chart_delta},
        )
    delta = 3.0 * half_width
    base = chart_center if base_point is None else base_point
    chart = _product_chart(map_spec, chart_center, MAX_HALF_LENGTH, step)
    base_chart = chart if base == chart_center else _product_chart(map_spec, base, MAX_HALF_LENGTH, step)

    # atoms of mu^u_x x mu^s_x at the base point
    cells = resolution * subdivision
    shift = float(torus_distance(base.as_array(), chart_center.as_array()))
    reach = min(half_width + 2.0 * shift, 0.9 * MAX_HALF_LENGTH)
    atom_edges = np.linspace(-reach, reach, cells + 1)
    lm_u = leaf_measure(map_spec, phi, base_chart.unstable, n, edges=atom_edges)
    lm_s = leaf_measure(map_spec, phi, base_chart.stable, n, edges=atom_edges)
    log_mass = np.log(lm_u.masses)[:, None] + np.log(lm_s.masses)[None, :]
    grid_u, grid_s = np.meshgrid(lm_u.midpoints, lm_s.midpoints, indexing="ij")
    params = np.column_stack([grid_u.ravel(), grid_s.ravel()])
    log_mass = log_mass.ravel()

    needs_points = phi.constant_value is None or base != chart_center
    if needs_points:
        u_pts = _interval_midpoints(map_spec, lm_u)
        s_pts = _interval_midpoints(map_spec, lm_s)
        atoms = bracket_points(
            map_spec, np.repeat(s_pts[None, :, :], cells, 0).reshape(-1, 2),
            np.repeat(u_pts[:, None, :], cells, 1).reshape(-1, 2), delta, delta,
        )
        if phi.constant_value is None:
            base_xy = base.as_array()
            log_mass -= omega_series(map_spec, phi, "unstable", base_xy, atoms, tail_tol, delta=delta).values
            log_mass -= omega_series(map_spec, phi, "stable", base_xy, atoms, tail_tol, delta=delta).values
            log_mass -= phi.evaluate(atoms)
        if base != chart_center:
            params = _chart_params(map_spec, chart, atoms, delta)
    if not np.all(np.isfinite(log_mass)):
        raise Overflow("Product density is not finite on the chart.")
    product = _bin_masses(params, _normalize_logs(log_mass), half_width, resolution)

    ens = ens if ens is not None else ensemble(map_spec, phi, n)
    nearby = _candidates(map_spec, chart_center, ens.points, 1.2 * half_width)
    ens_params = _chart_params(map_spec, chart, ens.points[nearby], delta)
    empirical = _bin_masses(ens_params, ens.weights[nearby], half_width, resolution)

    tv = total_variation(product.ravel(), empirical.ravel())
    logging.info(f"Product reconstruction at {resolution}x{resolution}, period {n}: TV = {tv:.3e}")
    return tv
