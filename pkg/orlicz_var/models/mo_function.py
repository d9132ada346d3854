# orlicz_var/models/mo_function.py
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..utils.calculations import as_points

PointMap = Callable[[np.ndarray, np.ndarray], np.ndarray]
Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]

FAMILY_TAGS = ("power", "power-log", "tabulated", "custom", "envelope", "conjugate", "sobolev", "trace", "extremal")


def coefficient_field(value: Coefficient) -> Callable[[np.ndarray], np.ndarray]:
    """Turn a constant or a callable of x into a callable returning x.shape[:-1] arrays"""
    if callable(value):
        return lambda x: np.broadcast_to(np.asarray(value(x), dtype=float), x.shape[:-1])
    constant = float(value)
    return lambda x: np.full(x.shape[:-1], constant)


@dataclass(frozen=True)
class MOFunction:
    """x-dependent N-function phi(x, t), evaluated at |t|

    x has shape (..., N) and broadcasts against t.
    """
    evaluate: PointMap
    derivative: Optional[PointMap] = None
    inverse: Optional[PointMap] = None
    family_tag: str = "custom"
    derivable_in_t: bool = True
    lipschitz_in_x: bool = True
    convex: Optional[bool] = None
    name: str = ""

    def __call__(self, x, t) -> np.ndarray:
        x = as_points(x)
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(self.evaluate(x, t), dtype=float)

    @property
    def has_analytic_derivative(self) -> bool:
        return self.derivative is not None

    def diff(self, x, t) -> np.ndarray:
        """d/dt phi(x, t) at |t|; central differences when no derivative is attached"""
        x = as_points(x)
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(over="ignore", invalid="ignore"):
            if self.derivative is not None:
                return np.asarray(self.derivative(x, t), dtype=float)
            h = np.maximum(1e-6, 1e-6 * t)
            lo = np.maximum(t - h, 0.0)
            return (self.evaluate(x, t + h) - self.evaluate(x, lo)) / (t + h - lo)

    def signed_diff(self, x, s) -> np.ndarray:
        """Derivative of the even extension: sign(s) * phi'(x, |s|)"""
        s = np.asarray(s, dtype=float)
        return np.sign(s) * self.diff(x, s)


def power_function(exponent: Coefficient, coefficient: Coefficient = 1.0, name: str = "") -> MOFunction:
    """c(x) |t|^p(x)"""
    p = coefficient_field(exponent)
    c = coefficient_field(coefficient)

    def evaluate(x, t):
        return c(x) * t ** p(x)

    def derivative(x, t):
        px = p(x)
        return c(x) * px * t ** (px - 1.0)

    def inverse(x, s):
        return (np.asarray(s, dtype=float) / c(x)) ** (1.0 / p(x))

    return MOFunction(evaluate, derivative, inverse, family_tag="power", convex=True, name=name or "power")


def power_log_function(exponent: Coefficient, coefficient: Coefficient = 1.0, name: str = "") -> MOFunction:
    """c(x) |t|^p(x) log(e + |t|)"""
    p = coefficient_field(exponent)
    c = coefficient_field(coefficient)

    def evaluate(x, t):
        return c(x) * t ** p(x) * np.log(np.e + t)

    def derivative(x, t):
        px = p(x)
        return c(x) * (px * t ** (px - 1.0) * np.log(np.e + t) + t ** px / (np.e + t))

    return MOFunction(evaluate, derivative, None, family_tag="power-log", convex=True, name=name or "power-log")


@dataclass(frozen=True)
class ExponentTable:
    """Nodal exponent values on a rectangular lattice, bilinear in between"""
    axes: Tuple[np.ndarray, ...]
    values: np.ndarray

    @cached_property
    def interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(self.axes, self.values, method="linear", bounds_error=False, fill_value=None)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = self.interpolator(x.reshape(-1, x.shape[-1]))
        return flat.reshape(x.shape[:-1])


def tabulated_power_function(table: ExponentTable, coefficient: Coefficient = 1.0, name: str = "") -> MOFunction:
    base = power_function(table, coefficient)
    return MOFunction(
        base.evaluate, base.derivative, base.inverse, family_tag="tabulated", convex=True, name=name or "tabulated",
    )


def custom_function(evaluate: PointMap, derivative: Optional[PointMap] = None, name: str = "custom") -> MOFunction:
    return MOFunction(evaluate, derivative, None, family_tag="custom", name=name)


def _stack(functions: Sequence[MOFunction], method: str, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.stack([np.broadcast_to(getattr(fn, method)(x, t), np.broadcast_shapes(x.shape[:-1], t.shape))
                     for fn in functions])


@dataclass(frozen=True)
class AnisotropicFamily:
    components: Tuple[MOFunction, ...]

    def __post_init__(self):
        if len(self.components) < 2:
            raise ValueError("an anisotropic family needs N >= 2 components")
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def dimension(self) -> int:
        return len(self.components)

    def attaining_index(self, x, t, kind: str = "max") -> np.ndarray:
        """Index of the component attaining min/max; argmin/argmax keep the lowest index on ties"""
        x = as_points(x)
        t = np.abs(np.asarray(t, dtype=float))
        values = _stack(self.components, "__call__", x, t)
        return np.argmax(values, axis=0) if kind == "max" else np.argmin(values, axis=0)

    def _extremal(self, kind: str) -> MOFunction:
        components = self.components

        def pick(method):
            def chosen(x, t):
                values = _stack(components, "__call__", x, t)
                index = np.argmax(values, axis=0) if kind == "max" else np.argmin(values, axis=0)
                if method == "__call__":
                    source = values
                else:
                    source = _stack(components, method, x, t)
                return np.take_along_axis(source, index[None, ...], axis=0)[0]
            return chosen

        inverse = None
        if all(fn.inverse is not None for fn in components):
            # {min_i phi_i <= s} is the union of the component sublevel sets
            def inverse(x, s):
                shape = np.broadcast_shapes(x.shape[:-1], np.shape(s))
                values = np.stack([np.broadcast_to(fn.inverse(x, s), shape) for fn in components])
                return values.max(axis=0) if kind == "min" else values.min(axis=0)

        return MOFunction(
            pick("__call__"),
            pick("diff"),
            inverse,
            family_tag="extremal",
            convex=True if kind == "max" else None,
            lipschitz_in_x=all(fn.lipschitz_in_x for fn in components),
            name=f"phi_{kind}",
        )

    @cached_property
    def phi_min(self) -> MOFunction:
        return self._extremal("min")

    @cached_property
    def phi_max(self) -> MOFunction:
        return self._extremal("max")

    def phi_min_envelope(self, x_samples=None) -> MOFunction:
        """phi_min when it passes the convexity probe, its convex envelope otherwise"""
        # local import: the calculus module depends on this one
        from ..services.convex_calculus import envelope_function, is_convex_on_samples

        if all(fn is self.components[0] for fn in self.components):
            return self.components[0]
        if is_convex_on_samples(self.phi_min, x_samples):
            return self.phi_min
        return envelope_function(self.phi_min)
