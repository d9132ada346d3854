# orlicz_var/models/problem.py
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.config import settings
from ..utils.calculations import broadcast_points
from ..utils.quadrature import KRONROD_WEIGHTS, panel_nodes
from .grid import DiscreteField, Grid
from .mo_function import AnisotropicFamily, Coefficient, MOFunction, coefficient_field, power_function
from .verdict import Verdict

PointMap = Callable[[np.ndarray, np.ndarray], np.ndarray]

GRADIENT_TOL = "gradient_tol"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILURE = "line_search_failure"

STANDARD = "standard"
MANUFACTURED = "manufactured"
MODES = (STANDARD, MANUFACTURED)


def _unit_rule(panels: int) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, 1.0, panels + 1)
    nodes, half = panel_nodes(edges[:-1], edges[1:])
    return nodes.ravel(), (half[:, None] * KRONROD_WEIGHTS).ravel()


@dataclass(frozen=True)
class Nonlinearity:
    """s -> a(x, s) together with its primitive A(x, s) = int_0^s a(x, r) dr"""
    function: PointMap
    antiderivative: Optional[PointMap] = None
    name: str = ""

    def __call__(self, x, s) -> np.ndarray:
        x_b, s_b = broadcast_points(x, s)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.broadcast_to(np.asarray(self.function(x_b, s_b), dtype=float), s_b.shape)

    def primitive(self, x, s) -> np.ndarray:
        x_b, s_b = broadcast_points(x, s)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.antiderivative is not None:
                return np.broadcast_to(np.asarray(self.antiderivative(x_b, s_b), dtype=float), s_b.shape)
            # composite Gauss-Kronrod in the scaled variable r = s * tau
            tau, weights = _unit_rule(settings.ANTIDERIVATIVE_PANELS)
            values = np.broadcast_to(
                np.asarray(self.function(x_b[..., None, :], s_b[..., None] * tau), dtype=float),
                s_b.shape + tau.shape,
            )
            return s_b * (values @ weights)


def model_power_flux(exponent: Coefficient, name: str = "") -> Nonlinearity:
    """|s|^{p-2} s with primitive |s|^p / p"""
    p = coefficient_field(exponent)

    def function(x, s):
        return np.sign(s) * np.abs(s) ** (p(x) - 1.0)

    def antiderivative(x, s):
        px = p(x)
        return np.abs(s) ** px / px

    return Nonlinearity(function, antiderivative, name or "model")


def quotient_flux(phi: MOFunction, name: str = "") -> Nonlinearity:
    """a(x, s) = sign(s) phi(x, |s|) / |s|, so that a(x, s) s = phi(x, |s|)"""

    def function(x, s):
        magnitude = np.abs(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            quotient = phi(x, magnitude) / magnitude
        return np.where(magnitude > 0, np.sign(s) * quotient, 0.0)

    return Nonlinearity(function, None, name or f"quotient({phi.name})")


def constant_data(value: float, name: str = "") -> Nonlinearity:
    value = float(value)
    return Nonlinearity(lambda x, s: np.full(np.shape(s), value), lambda x, s: value * s, name or repr(value))


def field_data(fn: Callable[[np.ndarray], np.ndarray], name: str = "") -> Nonlinearity:
    """Data depending on x only; the primitive is exact"""
    return Nonlinearity(
        lambda x, s: np.broadcast_to(fn(x), np.shape(s)),
        lambda x, s: fn(x) * s,
        name or "field",
    )


@dataclass(frozen=True)
class Comparisons:
    """Growth comparison data of the structural conditions"""
    P: Optional[Tuple[MOFunction, ...]] = None
    c: Optional[Tuple[float, ...]] = None
    d: Optional[Tuple[Callable[[np.ndarray], np.ndarray], ...]] = None
    R: Optional[MOFunction] = None
    D: Optional[Callable[[np.ndarray], np.ndarray]] = None
    M: Optional[MOFunction] = None
    H: Optional[MOFunction] = None
    k1: float = 1.0
    k2: float = 1.0


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    family: AnisotropicFamily
    fluxes: Tuple[Nonlinearity, ...]
    grid: Grid
    b: Callable[[np.ndarray], np.ndarray]
    b0: float
    source: Nonlinearity
    boundary_data: Nonlinearity
    comparisons: Comparisons = field(default_factory=Comparisons)
    mode: str = STANDARD
    validation: Dict[str, Verdict] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fluxes", tuple(self.fluxes))
        if len(self.fluxes) != self.family.dimension:
            raise ValueError("one flux per family component is required")
        if self.grid.dimension != self.family.dimension:
            raise ValueError("grid dimension and family size differ")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def dimension(self) -> int:
        return self.family.dimension

    @cached_property
    def b_values(self) -> np.ndarray:
        values = np.broadcast_to(np.asarray(self.b(self.grid.points), dtype=float), self.grid.shape).copy()
        values.setflags(write=False)
        return values

    def with_validation(self, verdicts: Dict[str, Verdict]) -> "ProblemSpec":
        return replace(self, validation=dict(verdicts))

    def with_grid(self, grid: Grid) -> "ProblemSpec":
        return replace(self, grid=grid, validation={})


def model_problem(
    grid: Grid,
    exponents: Sequence[Coefficient],
    b: Union[float, Callable] = 1.0,
    source: Union[float, Nonlinearity] = 0.0,
    boundary: Union[float, Nonlinearity] = 0.0,
    comparisons: Optional[Comparisons] = None,
    mode: str = STANDARD,
) -> ProblemSpec:
    """Power family phi_i = |t|^p_i with the model fluxes |s|^{p_i - 2} s"""
    components = tuple(power_function(p, name=f"phi{i + 1}") for i, p in enumerate(exponents))
    fluxes = tuple(model_power_flux(p, name=f"a{i + 1}") for i, p in enumerate(exponents))
    b_field = coefficient_field(b)
    b0 = float(b) if not callable(b) else float(np.min(b_field(grid.points)))
    return ProblemSpec(
        family=AnisotropicFamily(components),
        fluxes=fluxes,
        grid=grid,
        b=b_field,
        b0=b0,
        source=source if isinstance(source, Nonlinearity) else constant_data(source, "f"),
        boundary_data=boundary if isinstance(boundary, Nonlinearity) else constant_data(boundary, "g"),
        comparisons=comparisons or Comparisons(),
        mode=mode,
    )


def manufactured_solution(points: np.ndarray) -> np.ndarray:
    """u*(x) = 2 + 0.1 cos(pi x1) cos(pi x2)"""
    return 2.0 + 0.1 * np.cos(np.pi * points[..., 0]) * np.cos(np.pi * points[..., 1])


def manufactured_problem(grid: Grid) -> ProblemSpec:
    """p_i = 2, b = 1, g = 0 and f = -Lap u* + 2 u* for the field above (x-only data)"""

    def source(x):
        wave = np.cos(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])
        return (0.2 * np.pi ** 2 + 0.2) * wave + 4.0

    return model_problem(grid, (2.0, 2.0), b=1.0, source=field_data(source, "f"), mode=MANUFACTURED)


@dataclass
class SolveReport:
    minimizer: DiscreteField
    energy_history: List[float]
    gradient_norm_history: List[float]
    termination: str
    weak_residual: float = float("nan")
    nonnegativity_violation: float = 0.0
    nonnegativity_checked: bool = True
    restart: Optional["SolveReport"] = None

    @property
    def iterations(self) -> int:
        return len(self.energy_history) - 1

    def to_dict(self, field_path: Optional[str] = None) -> Dict[str, Any]:
        data = {
            "minimizer": {
                "resolution": list(self.minimizer.grid.resolution),
                "domain": [list(interval) for interval in self.minimizer.grid.domain],
                "sup_norm": self.minimizer.sup_norm,
                "csv": field_path,
            },
            "energy_history": [float(e) for e in self.energy_history],
            "gradient_norm_history": [float(g) for g in self.gradient_norm_history],
            "termination": self.termination,
            "iterations": self.iterations,
            "weak_residual": float(self.weak_residual),
            "nonnegativity_violation": float(self.nonnegativity_violation),
            "nonnegativity_checked": self.nonnegativity_checked,
        }
        if self.restart is not None:
            data["restart"] = self.restart.to_dict()
        return data
