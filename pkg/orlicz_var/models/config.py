# orlicz_var/models/config.py
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.config import settings
from .problem import MODES, STANDARD

FamilyKind = Literal["power", "power-log", "tabulated"]
ComparisonKind = Literal["power", "power-log", "custom"]
FluxKind = Literal["model", "quotient", "custom"]


class _Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SolverOptions(_Block):
    grad_tol: float = Field(default=settings.GRAD_TOL, gt=0)
    max_iters: int = Field(default=settings.MAX_ITERS, ge=0)
    armijo_c: float = Field(default=settings.ARMIJO_C, gt=0, lt=1)
    backtrack: float = Field(default=settings.BACKTRACK, gt=0, lt=1)
    memory: int = Field(default=settings.MEMORY, ge=1)
    max_halvings: int = Field(default=settings.MAX_HALVINGS, ge=1)
    weak_test_count: int = Field(default=settings.WEAK_TEST_COUNT, ge=1)
    seed: int = Field(default=0, ge=0)


class ComponentConfig(_Block):
    """One phi_i: kind plus exponent expression in x1..xN"""
    kind: FamilyKind = "power"
    exponent: str
    scale: str = "1"


class FunctionConfig(_Block):
    """Comparison function; custom ones are expressions in x1..xN and t"""
    kind: ComparisonKind
    expression: str


class FluxConfig(_Block):
    kind: FluxKind = "model"
    expression: Optional[str] = None
    antiderivative: Optional[str] = None

    @model_validator(mode="after")
    def _custom_needs_expression(self):
        if self.kind == "custom" and not self.expression:
            raise ValueError("custom flux needs an expression")
        if self.kind != "custom" and (self.expression or self.antiderivative):
            raise ValueError(f"{self.kind} flux takes no expression")
        return self


class DataConfig(_Block):
    b: str = "1"
    b0: Optional[float] = Field(default=None, gt=0)
    f: str = "0"
    F: Optional[str] = None
    g: str = "0"
    G: Optional[str] = None
    mode: str = STANDARD
    M: Optional[FunctionConfig] = None
    H: Optional[FunctionConfig] = None
    R: Optional[FunctionConfig] = None
    D: Optional[str] = None
    P: Optional[Tuple[FunctionConfig, ...]] = None
    c: Optional[Tuple[float, ...]] = None
    d: Optional[Tuple[str, ...]] = None
    k1: float = Field(default=1.0, gt=0)
    k2: float = Field(default=1.0, gt=0)

    @field_validator("mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        return value


class ExperimentConfig(_Block):
    trials: int = Field(default=200, ge=1)
    starts: int = Field(default=5, ge=2)
    nu: Optional[float] = Field(default=None, gt=0)
    c0: float = Field(default=1.0, gt=0)
    component: int = Field(default=1, ge=1)
    point: Optional[Tuple[float, ...]] = None
    s_grid: Tuple[float, float, int] = (1e-2, 1e2, 50)

    @field_validator("s_grid")
    @classmethod
    def _ordered(cls, value):
        lo, hi, count = value
        if not 0 < lo < hi or count < 2:
            raise ValueError("s_grid needs 0 < lo < hi and at least 2 points")
        return value


class FieldConfig(_Block):
    expression: Optional[str] = None
    file: Optional[str] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.expression is None) == (self.file is None):
            raise ValueError("[field] needs exactly one of u or file")
        return self


class OutputConfig(_Block):
    dir: str = "out"


class Config(_Block):
    domain: Tuple[Tuple[float, float], ...]
    resolution: Tuple[int, ...]
    family: Tuple[ComponentConfig, ...]
    flux: Tuple[FluxConfig, ...] = ()
    data: DataConfig = DataConfig()
    solver: SolverOptions = SolverOptions()
    experiment: ExperimentConfig = ExperimentConfig()
    field: Optional[FieldConfig] = None
    output: OutputConfig = OutputConfig()

    @property
    def dimension(self) -> int:
        return len(self.domain)

    @model_validator(mode="after")
    def _consistent(self):
        n = len(self.domain)
        if n < 2:
            raise ValueError("at least two axes are required")
        if any(b <= a for a, b in self.domain):
            raise ValueError("every interval needs lo < hi")
        if len(self.resolution) != n:
            raise ValueError(f"resolution has {len(self.resolution)} axes, domain has {n}")
        if any(r < 3 for r in self.resolution):
            raise ValueError("resolution must be at least 3 per axis")
        if len(self.family) != n:
            raise ValueError(f"family has {len(self.family)} components, domain has {n} axes")
        if self.flux and len(self.flux) != n:
            raise ValueError(f"flux block has {len(self.flux)} entries, domain has {n} axes")
        for name in ("P", "c", "d"):
            values = getattr(self.data, name)
            if values is not None and len(values) != n:
                raise ValueError(f"{name} needs one entry per component")
        if self.experiment.component > n:
            raise ValueError(f"component must be between 1 and {n}")
        if self.experiment.point is not None and len(self.experiment.point) != n:
            raise ValueError("point needs one coordinate per axis")
        return self

    def fluxes(self) -> Tuple[FluxConfig, ...]:
        return self.flux or tuple(FluxConfig() for _ in self.domain)


BLOCKS = ("domain", "resolution", "family", "flux", "data", "solver", "experiment", "field", "output")
