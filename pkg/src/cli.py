"""Command-line driver: one subcommand per report, CSV/JSON artifacts on disk."""

import argparse
import json
import logging
import sys
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.analysis.dimension_estimation import (
    AutomorphismMap,
    BallCounter,
    ShearMap,
    hausdorff_consistency,
    median_dimension,
    median_invariance_gap,
)
from src.config import SUBCOMMANDS, PotentialConfig, RunConfig, load_run_config, parse_run_config
from src.conjugacy import Conjugacy, apply_h_inverse_points, apply_h_points, compute_conjugacy, holder_estimate
from src.equilibrium.ensemble import (
    ExponentReport,
    OrbitEnsemble,
    ensemble,
    entropy,
    exponent_report,
    orbit_exponents,
)
from src.equilibrium.potentials import Potential, PotentialFactory
from src.equilibrium.seeding import default_finder
from src.errors import AnosovError, NotCertified, NumericalError
from src.export import save_conjugacy_grid, save_csv, save_json
from src.goldens import check_golden
from src.hyperbolic_splitting import local_manifold
from src.product_structure import (
    check_dynamical_jacobian,
    check_holonomy_jacobian,
    cocycle_identity_residuals,
    conditional_family,
    leaf_measure,
    product_reconstruction,
    pushforward_equivalence,
)
from src.reductions import configure_workers
from src.rigidity.centralizer import (
    affine_straightening_residual,
    centralizer_generator,
    commutant_candidates,
    estimate_translation_group,
    noise_floor,
    quotient_contraction,
)
from src.rigidity.entropy_functional import (
    entropy_spectrum,
    power_entropy,
    rigidity_hypotheses,
    signed_additivity_residual,
)
from src.torus_dynamics import TorusPoint, apply_points, linear_periodic_set, torus_distance, verify_anosov_cones

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
MATCH_PERIOD = 6
STRAIGHTENING_SAMPLES = 16
COCYCLE_TRIPLES = 100


class RunContext:
    """Lazily built map, potential, conjugacy and ensembles shared by the reports."""

    def __init__(self, config: RunConfig, out_dir: Path):
        self.config = config
        self.numerics = config.numerics
        self.out_dir = out_dir
        self.map_spec = config.map.to_map_spec()

    @cached_property
    def conjugacy(self) -> Conjugacy:
        return compute_conjugacy(
            self.map_spec, self.numerics.grid_n, self.numerics.conjugacy_tol, self.numerics.conjugacy_max_iter
        )

    def _build_potential(self, spec: PotentialConfig) -> Potential:
        inner = self._build_potential(spec.inner) if spec.inner is not None else None
        conjugacy = self.conjugacy if spec.kind == "pullback" else None
        return PotentialFactory.get_potential(
            spec.kind,
            self.map_spec,
            conjugacy=conjugacy,
            value=spec.value,
            terms=spec.terms,
            inner=inner,
            inverse=spec.inverse,
        )

    @cached_property
    def potential(self) -> Potential:
        return self._build_potential(self.config.potential)

    @cached_property
    def ensemble(self) -> OrbitEnsemble:
        return ensemble(self.map_spec, self.potential, self.numerics.period, cone=self.numerics.cone)

    @cached_property
    def exponents(self) -> ExponentReport:
        return exponent_report(
            self.map_spec, self.potential, self.numerics.period, self.numerics.coarse_period, cone=self.numerics.cone
        )

    def base_point(self) -> TorusPoint:
        """Heaviest atom of the ensemble; ties go to the first in enumeration order."""
        return TorusPoint.from_array(self.ensemble.points[int(np.argmax(self.ensemble.weights))])


def run_verify(ctx: RunContext) -> dict:
    n = ctx.numerics
    report = verify_anosov_cones(ctx.map_spec, *n.cone)
    record = report.to_record()
    save_json("verify", record, ctx.out_dir)
    if not report.passed:
        raise NotCertified("The map failed the Anosov cone check; reduce the perturbation.", record)
    return record


def run_conjugacy(ctx: RunContext) -> dict:
    c = ctx.conjugacy
    period = min(MATCH_PERIOD, ctx.numerics.period)
    linear = linear_periodic_set(ctx.map_spec.linear, period)
    periodic = default_finder().find_periodic_points(ctx.map_spec, period).points
    match = float(np.max(torus_distance(apply_h_points(c, periodic), linear.points)))
    pulled = apply_h_inverse_points(c, linear.points)
    round_trip = float(np.max(torus_distance(apply_h_points(c, pulled), linear.points)))
    frame = c.to_frame()
    frame["holder_estimate"] = holder_estimate(c)
    frame["periodic_match"] = match
    save_csv("conjugacy", frame, ctx.out_dir)
    save_conjugacy_grid("conjugacy_grid", c, ctx.out_dir)
    record = frame.iloc[0].to_dict()
    record.update({"match_period": period, "inverse_round_trip": round_trip})
    save_json("conjugacy", record, ctx.out_dir)
    return record


def run_equilibrium(ctx: RunContext) -> dict:
    e = ctx.ensemble
    save_csv("ensemble", e.to_frame(), ctx.out_dir)
    record = {
        "period": e.n,
        "atoms": len(e),
        "potential": ctx.potential.kind,
        "pressure": e.pressure_n,
        "entropy": entropy(e, ctx.map_spec),
    }
    save_json("equilibrium", record, ctx.out_dir)
    return record


def run_exponents(ctx: RunContext) -> dict:
    record = ctx.exponents.to_record()
    save_csv("orbit_exponents", orbit_exponents(ctx.map_spec, ctx.ensemble), ctx.out_dir)
    save_json("exponents", record, ctx.out_dir)
    return record


def run_dimension(ctx: RunContext) -> dict:
    e = ctx.ensemble
    counter = BallCounter.from_ensemble(e)
    median, estimates = median_dimension(e, ctx.numerics.dimension_centers, ctx.config.seed, counter)
    slopes = [est.slope for est in estimates]
    band = (float(min(slopes)), float(max(slopes)))
    report = ctx.exponents
    record = {
        "median_slope": median,
        "dim_total": report.dim_total,
        "dimension_gap": abs(median - report.dim_total),
        "slope_band": list(band),
        "unreliable_centers": sum(not est.reliable for est in estimates),
        "box_counting_slope": hausdorff_consistency(e, band=band),
        "invariance_gap_shear": median_invariance_gap(e, ShearMap(), ctx.numerics.dimension_centers, ctx.config.seed),
        "invariance_gap_automorphism": median_invariance_gap(
            e, AutomorphismMap(ctx.map_spec.linear), ctx.numerics.dimension_centers, ctx.config.seed
        ),
    }
    save_csv("dimension", pd.concat([est.to_frame() for est in estimates], ignore_index=True), ctx.out_dir)
    save_json("dimension", record, ctx.out_dir)
    return record


def _product_tv(ctx: RunContext, x: TorusPoint, base_point: Optional[TorusPoint]) -> float:
    n = ctx.numerics
    return product_reconstruction(
        ctx.map_spec,
        ctx.potential,
        x,
        n.product_resolution,
        n.period,
        base_point=base_point,
        step=n.leaf_step,
        ens=ctx.ensemble,
        tail_tol=n.omega_tol,
        chart_delta=n.chart_delta,
    )


def run_leaf(ctx: RunContext) -> dict:
    n, phi, map_spec = ctx.numerics, ctx.potential, ctx.map_spec
    x = ctx.base_point()
    generation = n.leaf_generation
    unstable = local_manifold(map_spec, x, "unstable", n.leaf_half_length, n.leaf_step)
    stable = local_manifold(map_spec, x, "stable", n.leaf_half_length, n.leaf_step)
    mu_u = leaf_measure(map_spec, phi, unstable, generation, n.leaf_resolution)
    mu_s = leaf_measure(map_spec, phi, stable, generation, n.leaf_resolution)
    refined = leaf_measure(map_spec, phi, unstable, generation + 2, n.leaf_resolution)

    x_s = TorusPoint.from_array(stable.points[int(np.searchsorted(stable.params, 0.5 * n.leaf_half_length))])
    rng = np.random.default_rng(ctx.config.seed)
    # x' on the stable leaf of x, y on its unstable leaf
    x_primes = stable.points[rng.integers(0, len(stable.params), size=COCYCLE_TRIPLES)]
    ys = unstable.points[rng.integers(0, len(unstable.params), size=COCYCLE_TRIPLES)]
    cocycle = cocycle_identity_residuals(
        map_spec, phi, np.broadcast_to(x.as_array(), ys.shape), x_primes, ys, n.omega_tol, n.chart_delta
    )

    family = conditional_family(
        map_spec, phi, unstable, (generation - 2, generation, generation + 2), n.omega_tol, n.chart_delta
    )
    product_tv = _product_tv(ctx, x, None)
    shifted_tv = _product_tv(ctx, x, x_s)
    record = {
        "base_point": [x.x1, x.x2],
        "generation": generation,
        "dynamical_jacobian_tv": check_dynamical_jacobian(map_spec, phi, mu_u),
        "dynamical_jacobian_tv_refined": check_dynamical_jacobian(map_spec, phi, refined),
        "stable_dynamical_jacobian_tv": check_dynamical_jacobian(map_spec, phi, mu_s),
        "pushforward_equivalence": pushforward_equivalence(map_spec, phi, mu_u).to_record(),
        "holonomy_jacobian_tv": check_holonomy_jacobian(
            map_spec,
            phi,
            x,
            x_s,
            generation,
            half_length=n.leaf_half_length,
            step=n.leaf_step,
            tail_tol=n.omega_tol,
            chart_delta=n.chart_delta,
        ),
        "cocycle_identity_residual": float(np.max(cocycle)),
        "conditional_family_tv": family["tv"].tolist(),
        "product_reconstruction_tv": product_tv,
        "product_reconstruction_tv_shifted_base": shifted_tv,
        "product_reconstruction_base_shift": abs(shifted_tv - product_tv),
    }
    save_csv("leaf_measure", mu_u.to_frame(), ctx.out_dir)
    save_csv("stable_leaf_measure", mu_s.to_frame(), ctx.out_dir)
    save_csv("conditional_family", family, ctx.out_dir)
    save_json("leaf", record, ctx.out_dir)
    return record


def _straightening_samples(ctx: RunContext) -> tuple:
    """Grid points q and their images h a h^-1 (q)."""
    ticks = (np.arange(STRAIGHTENING_SAMPLES) + 0.5) / STRAIGHTENING_SAMPLES
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    sources = np.stack([gx.ravel(), gy.ravel()], axis=1)
    c = ctx.conjugacy
    images = apply_h_points(c, apply_points(ctx.map_spec, apply_h_inverse_points(c, sources)))
    return sources, images


def run_rigidity(ctx: RunContext) -> dict:
    n, A = ctx.numerics, ctx.map_spec.linear
    data = centralizer_generator(A, n.centralizer_bound)
    H = estimate_translation_group(ctx.ensemble, ctx.conjugacy, n.max_denominator, n.mode_cap)
    commutant = commutant_candidates(A, data, H)
    sources, images = _straightening_samples(ctx)
    fit = affine_straightening_residual(sources, images, A)
    recovered = fit.integer_linear(tol=1e-6)
    record = {
        "centralizer": data.to_record(),
        "quotient_contraction": quotient_contraction(data.M, A),
        "noise_floor": noise_floor(ctx.ensemble),
        "commutant": commutant.to_record(),
        "straightening": fit.to_record(),
        "straightening_recovers_A": recovered == A,
        "conjugacy_residual": ctx.conjugacy.residual,
        "hypotheses": rigidity_hypotheses(ctx.exponents),
    }
    save_json("rigidity", record, ctx.out_dir)
    return record


def run_spectrum(ctx: RunContext) -> dict:
    n, report = ctx.numerics, ctx.exponents
    spectrum = entropy_spectrum(report, n.m_range)
    low, high = n.m_range
    additivity = max(
        signed_additivity_residual(report, m, k) for m in range(low, high + 1) for k in range(low, high + 1)
    )
    record = spectrum.to_record()
    record["signed_additivity_residual"] = additivity
    if n.period % 2 == 0:
        squared = power_entropy(ctx.map_spec, ctx.potential, 2, n.period // 2, cone=n.cone)
        gap = abs(squared - 2.0 * report.entropy)
        # a^2 at period n/2 against a at period n, each with its own refinement error
        tolerance = 3.0 * report.error_estimates.get("entropy", 0.0) + 1e-9
        record["square_entropy"] = squared
        record["square_entropy_gap"] = gap
        record["square_entropy_tolerance"] = tolerance
        record["square_entropy_consistent"] = bool(gap <= tolerance)
    save_csv("spectrum", pd.DataFrame(spectrum.entries, columns=["m", "entropy"]), ctx.out_dir)
    save_json("spectrum", record, ctx.out_dir)
    return record


COMMANDS: Dict[str, Callable[[RunContext], dict]] = {
    "verify": run_verify,
    "conjugacy": run_conjugacy,
    "equilibrium": run_equilibrium,
    "exponents": run_exponents,
    "dimension": run_dimension,
    "leaf": run_leaf,
    "rigidity": run_rigidity,
    "spectrum": run_spectrum,
}


def run_report(ctx: RunContext) -> dict:
    names = ctx.config.reports or list(SUBCOMMANDS)
    record = {"config": ctx.config.model_dump(mode="json"), "reports": {}}
    for name in names:
        record["reports"][name] = COMMANDS[name](ctx)
    save_json("report", record, ctx.out_dir)
    return record


COMMANDS["report"] = run_report


def _summary(name: str, record: dict) -> str:
    scalars = [f"{k}={v:.8g}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(record.items())
               if isinstance(v, (int, float, str, bool))]
    return f"{name}: " + ", ".join(scalars[:6])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anosov-rigidity",
        description="Equilibrium states of Anosov maps of the 2-torus and their measure rigidity.",
    )
    parser.add_argument("subcommand", choices=list(COMMANDS), help="Report to compute.")
    parser.add_argument("--config", required=True, help="Path to the JSON run config.")
    parser.add_argument("--out", default=None, help="Output directory; overrides the config.")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes for element-wise stages.")
    parser.add_argument("--seed-override", type=int, default=None, help="Replace the config seed.")
    parser.add_argument("--period-override", type=int, default=None, help="Replace numerics.period.")
    parser.add_argument("--golden-dir", default=None, help="Compare the report against goldens in this directory.")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Command-line overrides, validated again against the schema."""
    raw = config.model_dump(mode="json")
    if args.seed_override is not None:
        raw["seed"] = args.seed_override
    if args.period_override is not None:
        raw["numerics"]["period"] = args.period_override
    if args.out is not None:
        raw["output_dir"] = args.out
    return parse_run_config(raw)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and map errors to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        configure_workers(args.workers)
        config = _apply_overrides(load_run_config(args.config), args)
        ctx = RunContext(config, Path(config.output_dir))
        logging.info(f"Running '{args.subcommand}' with config {args.config}")
        record = COMMANDS[args.subcommand](ctx)
        if args.golden_dir is not None:
            # the nonlinear maximal-entropy exponents are recorded, not asserted
            exploratory = not ctx.map_spec.is_linear and ctx.potential.kind == "zero"
            result = check_golden(args.subcommand, record, args.golden_dir, exploratory=exploratory)
            if not result.passed:
                print(json.dumps(result.to_record(), sort_keys=True), file=sys.stderr)
                return EXIT_NUMERIC
    except NumericalError as exc:
        print(json.dumps(exc.to_record(), sort_keys=True), file=sys.stderr)
        return EXIT_NUMERIC
    except (AnosovError, ValueError) as exc:
        error = exc.to_record() if isinstance(exc, AnosovError) else {
            "error": "validation_error",
            "kind": type(exc).__name__,
            "message": str(exc),
            "details": {},
        }
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return EXIT_VALIDATION
    print(_summary(args.subcommand, record))
    return EXIT_OK


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
    sys.exit(run())
