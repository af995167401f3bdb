"""Unstable and stable line fields, leafwise Jacobians, local leaves, the
bracket of the local product structure and holonomies between transversals.

Leaves are represented dynamically: a local unstable leaf through p is the
image under a^K of a short straight segment through a^-K(p) in the direction
of E^u there (a^-K for stable leaves). Transverse errors of the straight
segment are contracted by |lambda_s|^K, so points produced this way lie on the
leaf to rounding accuracy.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import LeafEscape, NoIntersection, OutOfChart
from src.torus_dynamics import (
    NEWTON_MAX_ITER,
    AnosovMapSpec,
    PeriodicSet,
    TorusPoint,
    matvec,
    reduce_mod1,
    solve2,
    torus_delta,
)

CHART_DELTA: float = 0.1
MAX_HALF_LENGTH: float = 0.2
CHART_DEPTH: int = 10
LEAF_DEPTH: int = 14
DIRECTION_DEPTH: int = 24
BRACKET_TOL: float = 1e-13
SIDES = ("unstable", "stable")


def _check_side(side: str) -> None:
    if side not in SIDES:
        raise ValueError(f"The 'side' parameter must be one of {SIDES}, got {side!r}.")


def _normalize(vecs: np.ndarray) -> np.ndarray:
    return vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)


def _orient(vecs: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Flip rows so that their dot product with `axis` is positive."""
    signs = np.where(vecs @ axis < 0.0, -1.0, 1.0)
    return vecs * signs[:, None]


def expand(map_spec: AnosovMapSpec, side: str, lifts: np.ndarray, steps: int) -> np.ndarray:
    """Apply the map expanding `side` leaves (a for unstable, a^-1 for stable) `steps` times."""
    x = np.atleast_2d(np.asarray(lifts, dtype=float))
    for _ in range(steps):
        x = map_spec.lift(x) if side == "unstable" else map_spec.inverse_lift(x)
    return x


def contract(map_spec: AnosovMapSpec, side: str, lifts: np.ndarray, steps: int) -> np.ndarray:
    """Apply the inverse of `expand`."""
    return expand(map_spec, "stable" if side == "unstable" else "unstable", lifts, steps)


def reduced_anchors(
    map_spec: AnosovMapSpec, side: str, lifts: np.ndarray, depth: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Contract `depth` steps and reduce mod 1.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Anchors in [0, 1)^2 and the integer
        offsets with expand^depth(anchor) + offset equal to the input lifts.
    """
    lifts = np.atleast_2d(np.asarray(lifts, dtype=float))
    anchors = reduce_mod1(contract(map_spec, side, lifts, depth))
    offsets = np.round(lifts - expand(map_spec, side, anchors, depth))
    return anchors, offsets


def expand_with_jacobian(
    map_spec: AnosovMapSpec, side: str, lifts: np.ndarray, steps: int
) -> Tuple[np.ndarray, np.ndarray]:
    """`expand` together with the Jacobian of the composition."""
    x = np.atleast_2d(np.asarray(lifts, dtype=float))
    jac = np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)).copy()
    for _ in range(steps):
        if side == "unstable":
            jac = np.einsum("nab,nbc->nac", map_spec.jacobians(x), jac)
            x = map_spec.lift(x)
        else:
            x = map_spec.inverse_lift(x)
            jac = np.einsum("nab,nbc->nac", np.linalg.inv(map_spec.jacobians(x)), jac)
    return x, jac


def _line_field(map_spec: AnosovMapSpec, side: str, points: np.ndarray, n_iter: int) -> np.ndarray:
    """Cocycle power iteration for E^u (or E^s with the inverse cocycle).

    The orbit is pulled back `n_iter` steps once; estimates pushed from depths
    20, 24, ... are compared and the loop stops when successive estimates
    agree to 1e-12 rad.
    """
    if n_iter < 20:
        raise ValueError("The 'n_iter' parameter must be at least 20.")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    e_u, e_s = map_spec.linear.eigenbasis()
    axis = e_u if side == "unstable" else e_s
    if map_spec.is_linear:
        return np.broadcast_to(axis, points.shape).copy()

    # orbit[k] is the k-th preimage under the expanding map; cocycle[k] maps
    # tangent vectors at orbit[k] to orbit[k - 1]
    orbit = [points]
    for _ in range(n_iter):
        orbit.append(reduce_mod1(contract(map_spec, side, orbit[-1], 1)))
    if side == "unstable":
        cocycle = [None] + [map_spec.jacobians(orbit[k]) for k in range(1, n_iter + 1)]
    else:
        cocycle = [None] + [np.linalg.inv(map_spec.jacobians(orbit[k - 1])) for k in range(1, n_iter + 1)]

    def pushed_from(depth: int) -> np.ndarray:
        vec = np.broadcast_to(axis, points.shape).copy()
        for k in range(depth, 0, -1):
            vec = _normalize(matvec(cocycle[k], vec))
        return _orient(vec, axis)

    estimate = pushed_from(min(20, n_iter))
    for depth in range(24, n_iter + 1, 4):
        refined = pushed_from(depth)
        change = np.arccos(np.clip(np.abs(np.sum(refined * estimate, axis=1)), 0.0, 1.0))
        estimate = refined
        if np.max(change) < 1e-12:
            break
    return estimate


def unstable_directions(map_spec: AnosovMapSpec, points: np.ndarray, n_iter: int = DIRECTION_DEPTH) -> np.ndarray:
    return _line_field(map_spec, "unstable", points, n_iter)


def stable_directions(map_spec: AnosovMapSpec, points: np.ndarray, n_iter: int = DIRECTION_DEPTH) -> np.ndarray:
    return _line_field(map_spec, "stable", points, n_iter)


def unstable_direction(map_spec: AnosovMapSpec, p: TorusPoint, n_iter: int = DIRECTION_DEPTH) -> np.ndarray:
    """Unit vector spanning E^u(p), oriented like the unstable eigenvector of A."""
    return unstable_directions(map_spec, p.as_array(), n_iter)[0]


def stable_direction(map_spec: AnosovMapSpec, p: TorusPoint, n_iter: int = DIRECTION_DEPTH) -> np.ndarray:
    return stable_directions(map_spec, p.as_array(), n_iter)[0]


def orbit_directions(map_spec: AnosovMapSpec, pset: PeriodicSet, side: str, n_sweeps: int = 40) -> np.ndarray:
    """E^u or E^s on a periodic set by power iteration along the permutation."""
    _check_side(side)
    e_u, e_s = map_spec.linear.eigenbasis()
    axis = e_u if side == "unstable" else e_s
    vec = np.broadcast_to(axis, pset.points.shape).copy()
    if map_spec.is_linear:
        return vec
    jac = map_spec.jacobians(pset.points)
    if side == "unstable":
        for _ in range(n_sweeps):
            pushed = _normalize(matvec(jac, vec))
            vec = np.empty_like(pushed)
            vec[pset.successor] = pushed
    else:
        inv = np.linalg.inv(jac)
        for _ in range(n_sweeps):
            vec = _normalize(matvec(inv, vec[pset.successor]))
    return _orient(vec, axis)


def log_unstable_jacobians(
    map_spec: AnosovMapSpec, points: np.ndarray, directions: Optional[np.ndarray] = None
) -> np.ndarray:
    """log J(p) = log |Da_p e_u(p)|."""
    points = np.atleast_2d(points)
    if directions is None:
        directions = unstable_directions(map_spec, points)
    return np.log(np.linalg.norm(matvec(map_spec.jacobians(points), directions), axis=1))


def log_stable_jacobians(
    map_spec: AnosovMapSpec, points: np.ndarray, directions: Optional[np.ndarray] = None
) -> np.ndarray:
    """log |Da_p e_s(p)|, negative on a certified map."""
    points = np.atleast_2d(points)
    if directions is None:
        directions = stable_directions(map_spec, points)
    return np.log(np.linalg.norm(matvec(map_spec.jacobians(points), directions), axis=1))


def log_unstable_jacobian(map_spec: AnosovMapSpec, p: TorusPoint) -> float:
    return float(log_unstable_jacobians(map_spec, p.as_array())[0])


@dataclass(frozen=True)
class SplittingSample:
    point: TorusPoint
    e_u: Tuple[float, float]
    e_s: Tuple[float, float]
    angle: float
    invariance_residual: float


def splitting_samples(map_spec: AnosovMapSpec, points: np.ndarray) -> list:
    """Line fields at `points` with the angle between them and the cocycle residual."""
    points = np.atleast_2d(points)
    e_u = unstable_directions(map_spec, points)
    e_s = stable_directions(map_spec, points)
    angle = np.arccos(np.clip(np.abs(np.sum(e_u * e_s, axis=1)), 0.0, 1.0))
    images = reduce_mod1(map_spec.lift(points))
    pushed = _normalize(matvec(map_spec.jacobians(points), e_u))
    target = unstable_directions(map_spec, images)
    residual = np.arccos(np.clip(np.abs(np.sum(pushed * target, axis=1)), 0.0, 1.0))
    return [
        SplittingSample(TorusPoint.from_array(p), tuple(u), tuple(s), float(a), float(r))
        for p, u, s, a, r in zip(points, e_u, e_s, angle, residual)
    ]


@dataclass(frozen=True, eq=False)
class LeafSegment:
    """Sampled local leaf W^side_loc(base).

    Point j is expand^depth(anchor + taus[j] * anchor_direction) + offset and
    sits at signed arclength params[j] from the base; `lifts` are continuous
    lifts around the base. The anchor is kept in [0, 1)^2 and the integer
    `offset` restores the lift, so the expanded curve keeps full precision.
    """

    base: TorusPoint
    side: str
    params: np.ndarray
    lifts: np.ndarray
    depth: int
    anchor: np.ndarray
    anchor_direction: np.ndarray
    taus: np.ndarray
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def points(self) -> np.ndarray:
        return reduce_mod1(self.lifts)

    @property
    def base_index(self) -> int:
        return int(np.argmin(np.abs(self.params)))

    @property
    def base_lift(self) -> np.ndarray:
        return self.lifts[self.base_index]

    @property
    def half_length(self) -> float:
        return float(min(-self.params[0], self.params[-1]))

    def to_frame(self) -> pd.DataFrame:
        pts = self.points
        return pd.DataFrame({"param": self.params, "x1": pts[:, 0], "x2": pts[:, 1]})


def segment_curve(map_spec: AnosovMapSpec, segment: LeafSegment, taus: np.ndarray) -> np.ndarray:
    """Lifted leaf points at anchor parameters `taus`."""
    starts = segment.anchor[None, :] + np.outer(taus, segment.anchor_direction)
    return expand(map_spec, segment.side, starts, segment.depth) + segment.offset


def segment_history(map_spec: AnosovMapSpec, segment: LeafSegment, taus: np.ndarray) -> np.ndarray:
    """(depth + 1, m, 2) lifts, up to integer translations; entry k is expand^k
    of the anchor-line point.

    Entry depth - i is the i-th preimage of the leaf point under the expanding
    map.
    """
    x = segment.anchor[None, :] + np.outer(taus, segment.anchor_direction)
    history = [x]
    for _ in range(segment.depth):
        history.append(expand(map_spec, segment.side, history[-1], 1))
    return np.stack(history)


def _curve_with_tangent(
    map_spec: AnosovMapSpec, segment: LeafSegment, taus: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    starts = segment.anchor[None, :] + np.outer(taus, segment.anchor_direction)
    pts, jac = expand_with_jacobian(map_spec, segment.side, starts, segment.depth)
    tangents = matvec(jac, np.broadcast_to(segment.anchor_direction, starts.shape))
    return pts + segment.offset, tangents


def _rk4_predictor(
    map_spec: AnosovMapSpec, side: str, base: np.ndarray, half_length: float, step: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate dz/dt = e_side(z) from the base in both directions."""

    def line(z: np.ndarray) -> np.ndarray:
        return _line_field(map_spec, side, reduce_mod1(z[None, :]), 20)[0]

    n_steps = int(round(half_length / step))
    forward, backward = [base], [base]
    for sign, path in ((1.0, forward), (-1.0, backward)):
        z = base.copy()
        for _ in range(n_steps):
            k1 = line(z)
            k2 = line(z + 0.5 * sign * step * k1)
            k3 = line(z + 0.5 * sign * step * k2)
            k4 = line(z + sign * step * k3)
            z = z + sign * step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            path.append(z)
    lifts = np.array(backward[:0:-1] + forward)
    params = step * np.arange(-n_steps, n_steps + 1, dtype=float)
    return lifts, params


def local_manifold(
    map_spec: AnosovMapSpec,
    p: TorusPoint,
    side: str,
    half_length: float,
    step: float,
    depth: int = LEAF_DEPTH,
    drift_tol: float = 1e-6,
) -> LeafSegment:
    """Trace W^side_loc(p) on [-half_length, half_length] with spacing `step`.

    A fourth-order Runge-Kutta integration of the line field predicts points
    at the nominal arclengths; each prediction is then re-projected onto the
    dynamically characterized leaf, the image of a straight segment at depth
    `depth`.

    Args:
        map_spec (AnosovMapSpec): Certified map.
        p (TorusPoint): Base point.
        side (str): `"unstable"` or `"stable"`.
        half_length (float): Arclength on each side, at most 0.2.
        step (float): Arclength spacing.
        depth (int, optional): Dynamical depth of the construction.
        drift_tol (float, optional): Allowed predictor-corrector distance.

    Returns:
        LeafSegment: The sampled leaf.

    Raises:
        LeafEscape: If a corrected point drifts more than `drift_tol` from its
            prediction.
    """
    _check_side(side)
    if not 0.0 < half_length <= MAX_HALF_LENGTH:
        raise ValueError(f"The 'half_length' parameter must lie in (0, {MAX_HALF_LENGTH}].")
    if not 0.0 < step <= half_length:
        raise ValueError("The 'step' parameter must lie in (0, half_length].")
    logging.info(f"Tracing {side} leaf at ({p.x1:.6f}, {p.x2:.6f}) with half length {half_length}")

    base = p.as_array()
    predicted, params = _rk4_predictor(map_spec, side, base, half_length, step)

    anchors, offsets = reduced_anchors(map_spec, side, base[None, :], depth)
    anchor, offset = anchors[0], offsets[0]
    axis = _line_field(map_spec, side, reduce_mod1(base[None, :]), DIRECTION_DEPTH)[0]
    direction = _line_field(map_spec, side, anchors, DIRECTION_DEPTH)[0]
    _, jac = expand_with_jacobian(map_spec, side, anchor[None, :], depth)
    if matvec(jac, direction[None, :])[0] @ axis < 0.0:
        direction = -direction
    segment = LeafSegment(
        base=p,
        side=side,
        params=params,
        lifts=predicted,
        depth=depth,
        anchor=anchor,
        anchor_direction=direction,
        taus=np.zeros_like(params),
        offset=offset,
    )

    # corrector: Newton on <curve(tau) - z, curve'(tau)> = 0
    gain = float(np.linalg.norm(matvec(jac, direction[None, :])[0]))
    taus = params / gain
    for _ in range(NEWTON_MAX_ITER):
        pts, tangents = _curve_with_tangent(map_spec, segment, taus)
        update = np.sum((pts - predicted) * tangents, axis=1) / np.sum(tangents * tangents, axis=1)
        taus = taus - update
        if np.all(np.abs(update) * np.linalg.norm(tangents, axis=1) < 1e-10):
            break
    corrected = segment_curve(map_spec, segment, taus)
    drift = float(np.max(np.linalg.norm(corrected - predicted, axis=1)))
    if drift > drift_tol:
        raise LeafEscape(
            f"Leaf re-projection drifted {drift:.2e} from the line-field prediction.",
            {"drift": drift, "tolerance": drift_tol, "side": side},
        )
    if np.any(np.diff(taus) <= 0.0):
        raise LeafEscape("Leaf parametrization is not monotone; reduce the half length.")
    return LeafSegment(
        base=p,
        side=side,
        params=params,
        lifts=corrected,
        depth=depth,
        anchor=anchor,
        anchor_direction=direction,
        taus=taus,
        offset=offset,
    )


def pushed_segment(map_spec: AnosovMapSpec, segment: LeafSegment) -> LeafSegment:
    """The image of a segment under its expanding map, with arclength params.

    The image keeps the anchor and the anchor parameters, one level deeper.
    """
    lifts = expand(map_spec, segment.side, segment.lifts, 1)
    linear = map_spec.linear if segment.side == "unstable" else map_spec.linear.inverse()
    chords = np.linalg.norm(np.diff(lifts, axis=0), axis=1)
    params = np.concatenate([[0.0], np.cumsum(chords)])
    params -= params[segment.base_index]
    base = TorusPoint.from_array(lifts[segment.base_index])
    return LeafSegment(
        base=base,
        side=segment.side,
        params=params,
        lifts=lifts,
        depth=segment.depth + 1,
        anchor=segment.anchor,
        anchor_direction=segment.anchor_direction,
        taus=segment.taus,
        offset=segment.offset @ linear.as_array().T,
    )


def leaf_distance(segment: LeafSegment, points: np.ndarray) -> np.ndarray:
    """Distance from torus points to the sampled polyline of a segment."""
    points = np.atleast_2d(points)
    base = segment.base_lift
    q = base + torus_delta(base, points)
    starts, ends = segment.lifts[:-1], segment.lifts[1:]
    chord = ends - starts
    rel = q[:, None, :] - starts[None, :, :]
    t = np.clip(np.sum(rel * chord[None], axis=2) / np.sum(chord * chord, axis=1)[None], 0.0, 1.0)
    nearest = starts[None] + t[..., None] * chord[None]
    return np.min(np.linalg.norm(q[:, None, :] - nearest, axis=2), axis=1)


def _bracket_newton(
    map_spec: AnosovMapSpec, x: np.ndarray, y_lift: np.ndarray, depth: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve a^K(x_K + tau d_u) = a^-K(y_K + sigma d_s) row by row.

    Anchors live in [0, 1)^2, which makes the reachable curve points discrete
    at about 1e-16 * |lambda_u|^K along each leaf, so a row also stops once
    the defect no longer halves.
    """
    anchor_u, offset_u = reduced_anchors(map_spec, "unstable", x, depth)
    anchor_s, offset_s = reduced_anchors(map_spec, "stable", y_lift, depth)
    d_u = unstable_directions(map_spec, anchor_u)
    d_s = stable_directions(map_spec, anchor_s)
    params = np.zeros((x.shape[0], 2))
    residual = np.full(x.shape[0], np.inf)
    result = x.copy()
    active = np.arange(x.shape[0])
    for _ in range(NEWTON_MAX_ITER):
        if active.size == 0:
            break
        tau, sigma = params[active, 0], params[active, 1]
        u_pts, u_jac = expand_with_jacobian(
            map_spec, "unstable", anchor_u[active] + tau[:, None] * d_u[active], depth
        )
        s_pts, s_jac = expand_with_jacobian(
            map_spec, "stable", anchor_s[active] + sigma[:, None] * d_s[active], depth
        )
        u_pts = u_pts + offset_u[active]
        s_pts = s_pts + offset_s[active]
        defect = u_pts - s_pts
        norm = np.linalg.norm(defect, axis=1)
        improved = norm < residual[active]
        stalled = ~(norm < 0.5 * residual[active]) & (residual[active] < 1e-9)
        rows = active[improved]
        residual[rows] = norm[improved]
        result[rows] = u_pts[improved]
        system = np.stack([matvec(u_jac, d_u[active]), -matvec(s_jac, d_s[active])], axis=2)
        step = solve2(system, defect)
        params[active] -= step
        done = (norm < BRACKET_TOL) | stalled | ~np.all(np.isfinite(step), axis=1)
        active = active[~done]
    return result, residual


def bracket_points(
    map_spec: AnosovMapSpec,
    xs: np.ndarray,
    ys: np.ndarray,
    delta: float = CHART_DELTA,
    half_length: float = MAX_HALF_LENGTH,
    depth: int = CHART_DEPTH,
) -> np.ndarray:
    """[x, y] = W^u_loc(x) ∩ W^s_loc(y), row by row.

    Raises:
        OutOfChart: If d(x, y) exceeds `delta`, Newton fails, or the
            intersection lies farther than `half_length` along a leaf.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    offsets = torus_delta(xs, ys)
    gaps = np.linalg.norm(offsets, axis=1)
    if np.any(gaps > delta):
        raise OutOfChart(
            f"Points are {np.max(gaps):.3f} apart, outside the chart size {delta}.",
            {"distance": float(np.max(gaps)), "delta": delta},
        )
    out = xs.copy()
    moving = gaps > 0.0
    if np.any(moving):
        pts, residual = _bracket_newton(map_spec, xs[moving], xs[moving] + offsets[moving], depth)
        if np.any(~(residual < 1e-9)):
            raise OutOfChart("Bracket intersection not found; the leaves leave the chart first.")
        reach = np.maximum(
            np.linalg.norm(pts - xs[moving], axis=1),
            np.linalg.norm(pts - xs[moving] - offsets[moving], axis=1),
        )
        if np.any(reach > half_length):
            raise OutOfChart(
                "Bracket intersection lies outside the local leaves.",
                {"reach": float(np.max(reach)), "half_length": half_length},
            )
        out[moving] = pts
    return reduce_mod1(out)


def bracket(map_spec: AnosovMapSpec, x: TorusPoint, y: TorusPoint, delta: float = CHART_DELTA) -> TorusPoint:
    """The local product [x, y] := W^u_loc(x) ∩ W^s_loc(y)."""
    return TorusPoint.from_array(bracket_points(map_spec, x.as_array(), y.as_array(), delta)[0])


def locate_on_segment(map_spec: AnosovMapSpec, segment: LeafSegment, points: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Arclength params of points lying on a segment, by bisection in tau.

    Raises:
        NoIntersection: If a point is off the leaf or beyond its ends.
    """
    base = segment.base_lift
    q = base + torus_delta(base, np.atleast_2d(points))
    lo = np.full(q.shape[0], segment.taus[0])
    hi = np.full(q.shape[0], segment.taus[-1])

    def side_of(taus: np.ndarray) -> np.ndarray:
        pts, tangents = _curve_with_tangent(map_spec, segment, taus)
        return np.sum((pts - q) * tangents, axis=1)

    if np.any(side_of(lo) > 0.0) or np.any(side_of(hi) < 0.0):
        raise NoIntersection("A leaf crosses the transversal beyond the sampled segment.")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ahead = side_of(mid) > 0.0
        hi = np.where(ahead, mid, hi)
        lo = np.where(ahead, lo, mid)
    taus = 0.5 * (lo + hi)
    miss = np.linalg.norm(segment_curve(map_spec, segment, taus) - q, axis=1)
    if np.any(miss > tol):
        raise NoIntersection(
            "A leaf misses the transversal segment.", {"miss": float(np.max(miss))}
        )
    return np.interp(taus, segment.taus, segment.params)


@dataclass(frozen=True)
class HolonomyMap:
    """Parameter correspondence between two transversals."""

    slide_side: str
    source_params: np.ndarray
    target_params: np.ndarray

    @property
    def monotone(self) -> bool:
        steps = np.diff(self.target_params)
        return bool(np.all(steps > 0.0) or np.all(steps < 0.0))

    def slopes(self) -> np.ndarray:
        return np.diff(self.target_params) / np.diff(self.source_params)

    def distortion(self) -> float:
        """max/min local slope ratio."""
        slopes = np.abs(self.slopes())
        return float(np.max(slopes) / np.min(slopes))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"param_from": self.source_params, "param_to": self.target_params})


def holonomy(
    map_spec: AnosovMapSpec,
    source: LeafSegment,
    target: LeafSegment,
    transversal_side: Optional[str] = None,
) -> HolonomyMap:
    """Slide the samples of `source` along the transverse foliation onto `target`.

    Stable transversals are joined along unstable leaves and vice versa.

    Raises:
        ValueError: If the two segments are not of the same side.
        NoIntersection: If a leaf does not cross `target`, or the leaves cross
            it out of order so the parameter map is not strictly monotone.
    """
    if source.side != target.side:
        raise ValueError("Holonomy needs two transversals of the same side.")
    if transversal_side is not None and transversal_side != source.side:
        raise ValueError("The 'transversal_side' parameter must match the segments' side.")
    pts = source.points
    anchor = np.broadcast_to(target.base.as_array(), pts.shape)
    if source.side == "stable":
        images = bracket_points(map_spec, pts, anchor, half_length=2 * MAX_HALF_LENGTH)
        slide = "unstable"
    else:
        images = bracket_points(map_spec, anchor, pts, half_length=2 * MAX_HALF_LENGTH)
        slide = "stable"
    result = HolonomyMap(slide, source.params.copy(), locate_on_segment(map_spec, target, images))
    if not result.monotone:
        raise NoIntersection(
            "Holonomy leaves cross the target out of order; the segments leave a common chart.",
            {"steps": int(np.count_nonzero(np.diff(result.target_params) <= 0.0))},
        )
    return result
