import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from src.errors import ConfigError
from src.ingest_config import ConfigIngestorFactory
from src.torus_dynamics import MAX_PERIOD, AnosovMapSpec, IntMatrix2, PerturbationTerm

OUTPUT_DIR_ENV = "ANOSOV_OUTPUT_DIR"
SUBCOMMANDS = ("verify", "conjugacy", "equilibrium", "exponents", "dimension", "leaf", "rigidity", "spectrum")

Subcommand = Literal["verify", "conjugacy", "equilibrium", "exponents", "dimension", "leaf", "rigidity", "spectrum"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PerturbationConfig(_Strict):
    amplitude: float
    direction: Tuple[float, float]
    frequency: Tuple[int, int]
    phase: float = 0.0


class MapConfig(_Strict):
    matrix: Tuple[Tuple[int, int], Tuple[int, int]]
    perturbations: List[PerturbationConfig] = Field(default_factory=list)

    @field_validator("matrix")
    @classmethod
    def _unimodular(cls, matrix):
        det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0]
        if det not in (-1, 1):
            raise ValueError(f"determinant {det} is not +1 or -1")
        return matrix

    def to_map_spec(self) -> AnosovMapSpec:
        return AnosovMapSpec(
            linear=IntMatrix2.from_rows(self.matrix),
            perturbations=tuple(
                PerturbationTerm(
                    amplitude=t.amplitude, direction=t.direction, frequency=t.frequency, phase=t.phase
                )
                for t in self.perturbations
            ),
        )


class PotentialConfig(_Strict):
    kind: Literal["zero", "constant", "phi_u", "phi_s", "fourier", "pullback"]
    value: float = 0.0
    terms: List[Tuple[int, int, float, float]] = Field(default_factory=list)
    inner: Optional["PotentialConfig"] = None
    inverse: bool = True


PotentialConfig.model_rebuild()


class NumericsConfig(_Strict):
    period: int = Field(12, ge=1, le=MAX_PERIOD)
    coarse_period: Optional[int] = Field(None, ge=1, le=MAX_PERIOD)
    grid_n: PositiveInt = 1024
    conjugacy_tol: PositiveFloat = 1e-8
    conjugacy_max_iter: PositiveInt = 200
    cone_grid_n: PositiveInt = 128
    cone_halfwidth: PositiveFloat = 0.3
    cone_safety: PositiveFloat = 0.1
    chart_delta: PositiveFloat = 0.1
    leaf_generation: PositiveInt = 10
    leaf_resolution: Optional[PositiveInt] = None
    leaf_half_length: PositiveFloat = 0.1
    leaf_step: PositiveFloat = 0.005
    omega_tol: PositiveFloat = 1e-12
    product_resolution: PositiveInt = 32
    dimension_centers: PositiveInt = 20
    centralizer_bound: PositiveInt = 10
    m_range: Tuple[int, int] = (-5, 5)
    mode_cap: PositiveInt = 5
    max_denominator: PositiveInt = 12

    @field_validator("m_range")
    @classmethod
    def _ordered(cls, m_range):
        if m_range[0] > m_range[1]:
            raise ValueError("lower end exceeds upper end")
        return m_range

    @model_validator(mode="after")
    def _leaves_inside_the_chart(self):
        if self.leaf_half_length > self.chart_delta:
            raise ValueError(
                f"leaf_half_length {self.leaf_half_length} exceeds chart_delta {self.chart_delta}"
            )
        return self

    @property
    def cone(self) -> Tuple[int, float, float]:
        """(grid_n, half-width, safety) of the cone check."""
        return (self.cone_grid_n, self.cone_halfwidth, self.cone_safety)


class RunConfig(_Strict):
    seed: int
    map: MapConfig
    potential: PotentialConfig = PotentialConfig(kind="zero")
    numerics: NumericsConfig = NumericsConfig()
    reports: List[Subcommand] = Field(default_factory=list)
    output_dir: str = "results"


def _pointer(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def parse_run_config(raw: dict) -> RunConfig:
    """Validate a raw mapping against the run-config schema.

    Raises:
        ConfigError: Naming the dotted path of the first offending key.
    """
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        errors = exc.errors()
        first = errors[0]
        pointer = _pointer(first)
        raise ConfigError(
            f"Invalid config at '{pointer}': {first['msg']}",
            {"pointer": pointer, "errors": [{"pointer": _pointer(e), "message": e["msg"]} for e in errors]},
        ) from exc


def load_run_config(file_path: str) -> RunConfig:
    """Read, validate and apply the output-directory override of a run config."""
    ingestor = ConfigIngestorFactory.get_config_ingestor(Path(file_path).suffix)
    config = parse_run_config(ingestor.ingest(file_path))
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        logging.info(f"Output directory overridden by {OUTPUT_DIR_ENV}: {override}")
        config = config.model_copy(update={"output_dir": override})
    return config
