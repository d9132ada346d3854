# orlicz_var/models/grid.py
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Tuple

import numpy as np
from scipy import sparse


def _difference_matrix(count: int, spacing: float) -> sparse.csr_matrix:
    """Central differences inside, one-sided second-order rows at both ends"""
    main = sparse.lil_matrix((count, count))
    for i in range(1, count - 1):
        main[i, i - 1] = -0.5
        main[i, i + 1] = 0.5
    main[0, 0:3] = [-1.5, 2.0, -0.5]
    main[count - 1, count - 3:count] = [0.5, -2.0, 1.5]
    return (main / spacing).tocsr()


def _trapezoid_weights(count: int, spacing: float) -> np.ndarray:
    weights = np.full(count, spacing)
    weights[[0, -1]] = 0.5 * spacing
    return weights


def _outer(factors: List[np.ndarray]) -> np.ndarray:
    result = np.ones(())
    for factor in factors:
        result = np.multiply.outer(result, factor)
    return result


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on an axis-aligned rectangle"""
    domain: Tuple[Tuple[float, float], ...]
    resolution: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple((float(a), float(b)) for a, b in self.domain))
        object.__setattr__(self, "resolution", tuple(int(n) for n in self.resolution))
        if len(self.domain) != len(self.resolution):
            raise ValueError("domain and resolution disagree on the dimension")
        if any(n < 3 for n in self.resolution):
            raise ValueError("every axis needs at least 3 nodes")
        if any(b <= a for a, b in self.domain):
            raise ValueError("every interval needs lo < hi")

    @classmethod
    def unit(cls, *resolution: int) -> "Grid":
        return cls(tuple((0.0, 1.0) for _ in resolution), tuple(resolution))

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.domain, self.resolution))

    @property
    def widths(self) -> Tuple[float, ...]:
        return tuple(b - a for a, b in self.domain)

    @property
    def measure(self) -> float:
        return float(np.prod(self.widths))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, n) for (a, b), n in zip(self.domain, self.resolution))

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        points = np.ascontiguousarray(np.stack(mesh, axis=-1))
        points.setflags(write=False)
        return points

    @cached_property
    def weights(self) -> np.ndarray:
        weights = _outer([_trapezoid_weights(n, h) for n, h in zip(self.resolution, self.spacing)])
        weights.setflags(write=False)
        return weights

    def faces(self) -> List[Tuple[int, int]]:
        """(axis, side) pairs; side 0 is the lower face, its outer normal is -e_axis"""
        return [(axis, side) for axis in range(self.dimension) for side in (0, 1)]

    def face_index(self, axis: int, side: int) -> Tuple:
        index = [slice(None)] * self.dimension
        index[axis] = 0 if side == 0 else self.resolution[axis] - 1
        return tuple(index)

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """(N-1)-dimensional trapezoid per face accumulated on nodes; corners count once per face"""
        weights = np.zeros(self.resolution)
        for axis, side in self.faces():
            factors = [_trapezoid_weights(n, h) for k, (n, h) in enumerate(zip(self.resolution, self.spacing))
                       if k != axis]
            weights[self.face_index(axis, side)] += _outer(factors)
        weights.setflags(write=False)
        return weights

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = self.boundary_weights > 0
        mask.setflags(write=False)
        return mask

    @cached_property
    def boundary_points(self) -> np.ndarray:
        points = np.ascontiguousarray(self.points[self.boundary_mask])
        points.setflags(write=False)
        return points

    @property
    def boundary_measure(self) -> float:
        return float(self.boundary_weights.sum())

    @cached_property
    def _differences(self) -> Tuple[sparse.csr_matrix, ...]:
        return tuple(_difference_matrix(n, h) for n, h in zip(self.resolution, self.spacing))

    def partial(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Discrete d/dx_axis of nodal values"""
        return self._apply(self._differences[axis], values, axis)

    def partial_adjoint(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Transpose of `partial` in the plain Euclidean pairing"""
        return self._apply(self._differences[axis].T.tocsr(), values, axis)

    def _apply(self, matrix, values: np.ndarray, axis: int) -> np.ndarray:
        moved = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
        flat = matrix @ moved.reshape(moved.shape[0], -1)
        return np.moveaxis(flat.reshape(moved.shape), 0, axis)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def integrate_boundary(self, values: np.ndarray) -> float:
        return float(np.sum(self.boundary_weights * values))


@dataclass(frozen=True)
class BoundaryView:
    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Nodal values of a scalar field on a Grid"""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.shape != self.grid.shape:
            raise ValueError(f"expected {self.grid.shape} nodal values, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "DiscreteField":
        return cls(grid, np.broadcast_to(fn(grid.points), grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "DiscreteField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "DiscreteField":
        return cls(grid, np.full(grid.shape, float(value)))

    def with_values(self, values: np.ndarray) -> "DiscreteField":
        return DiscreteField(self.grid, values)

    def scaled(self, factor: float) -> "DiscreteField":
        return self.with_values(factor * self.values)

    def partial(self, axis: int) -> np.ndarray:
        return self.grid.partial(self.values, axis)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def boundary_view(self) -> BoundaryView:
        mask = self.grid.boundary_mask
        return BoundaryView(self.grid.boundary_points, self.values[mask], self.grid.boundary_weights[mask])


@dataclass(frozen=True)
class NormReport:
    value: float
    modular_at_value: float
    bisection_iterations: int
    bracket: Tuple[float, float]

    def to_dict(self):
        return {
            "value": self.value,
            "modular_at_value": self.modular_at_value,
            "bisection_iterations": self.bisection_iterations,
            "bracket": list(self.bracket),
        }
