# orlicz_var/services/sobolev_conjugate.py
import logging
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..core.config import settings
from ..core.errors import QuadratureDivergence
from ..models.mo_function import MOFunction, power_function
from ..models.verdict import FAILS, HOLDS, INCONCLUSIVE, Verdict
from ..utils.calculations import broadcast_points, expand_bracket, bisect_below, geometric_grid
from ..utils.quadrature import composite, panel_nodes, panel_rule
from .convex_calculus import generalized_inverse

logger = logging.getLogger(__name__)

_CHUNK = 64


def power_sobolev_exponent(p: float, dimension: int) -> float:
    """p_* = N p / (N - p) for p < N"""
    if not p < dimension:
        raise ValueError("the Sobolev exponent needs p < N")
    return dimension * p / (dimension - p)


def power_sobolev_forward(p: float, dimension: int) -> MOFunction:
    """Closed form (t / p_*)^p_* of the Sobolev conjugate of t^p"""
    p_star = power_sobolev_exponent(p, dimension)
    return power_function(p_star, (1.0 / p_star) ** p_star, name=f"sobolev(t^{p})")


@dataclass
class QuadratureReport:
    error_estimate: float = 0.0
    subdivisions: int = 0


@dataclass(frozen=True)
class ForwardTable:
    """Per-node log-log table of the forward transform on a uniform log t grid"""
    log_t0: float
    step: float
    log_values: np.ndarray

    def __call__(self, rows: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            position = (np.log(t) - self.log_t0) / self.step
        last = self.log_values.shape[1] - 2
        index = np.clip(np.floor(np.where(np.isfinite(position), position, 0.0)), 0, last).astype(int)
        frac = position - index
        left = self.log_values[rows, index]
        right = self.log_values[rows, index + 1]
        with np.errstate(over="ignore", invalid="ignore"):
            value = np.exp(left + frac * (right - left))
        return np.where(t > 0, value, 0.0)


def _extrapolated_interp(xq: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """np.interp with linear continuation past both ends"""
    out = np.interp(xq, xp, fp)
    low_slope = (fp[1] - fp[0]) / (xp[1] - xp[0])
    high_slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
    out = np.where(xq < xp[0], fp[0] + (xq - xp[0]) * low_slope, out)
    return np.where(xq > xp[-1], fp[-1] + (xq - xp[-1]) * high_slope, out)


class SobolevConjugate:
    """Sobolev conjugate of an N-function phi_mm in dimension N

    The inverse is the integral of phi_mm^{-1}(x, t) / t^{1 + 1/N} over (0, s]; the forward
    transform inverts it by bisection.
    """

    def __init__(self, phi_mm: MOFunction, dimension: int):
        if dimension < 2:
            raise ValueError("the Sobolev conjugate needs N >= 2")
        self.phi_mm = phi_mm
        self.dimension = dimension
        self.quadrature_report = QuadratureReport()
        self._tables: Dict[Tuple[bytes, Tuple[int, ...]], ForwardTable] = {}
        self._lock = threading.Lock()

    def _phi_inverse(self, x, t) -> np.ndarray:
        return generalized_inverse(self.phi_mm, x, t)

    # -- inverse transform ------------------------------------------------

    def inverse_transform(self, x, s) -> np.ndarray:
        x_b, s_b = broadcast_points(x, s)
        flat_x = x_b.reshape(-1, x_b.shape[-1])
        flat_s = s_b.reshape(-1)
        if np.any(flat_s < 0):
            raise ValueError("the inverse transform needs s >= 0")
        result = np.zeros(flat_s.shape)
        positive = flat_s > 0
        if np.any(positive):
            result[positive] = self._tau_quadrature(flat_x[positive], flat_s[positive])
        return result.reshape(s_b.shape)

    def _tau_quadrature(self, xs: np.ndarray, ss: np.ndarray) -> np.ndarray:
        # t = s e^{-tau} turns the singular head into a decaying integrand on [0, inf)
        panels = settings.QUAD_PANELS_PER_LEVEL
        while True:
            total, error, count = self._graded_levels(xs, ss, panels)
            relative = error / np.maximum(np.abs(total), 1e-300)
            if np.all(relative <= settings.QUAD_RTOL) or panels >= settings.QUAD_MAX_PANELS_PER_LEVEL:
                break
            panels *= 2
        worst = float(relative.max())
        if worst > settings.QUAD_RTOL:
            logger.warning("quadrature error estimate %.3g above tolerance %.1g", worst, settings.QUAD_RTOL)
        self.quadrature_report = QuadratureReport(worst, count)
        return total * ss ** (-1.0 / self.dimension)

    def _graded_levels(self, xs: np.ndarray, ss: np.ndarray, panels: int):
        inv_n = 1.0 / self.dimension
        total = np.zeros(ss.shape)
        error = np.zeros(ss.shape)
        active = np.ones(ss.shape, dtype=bool)
        count = 0
        for level in range(settings.QUAD_MAX_LEVELS):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            a = 0.0 if level == 0 else 2.0 ** (level - 1)
            edges = np.linspace(a, 2.0 ** level, panels + 1)
            nodes, half = panel_nodes(edges[:-1], edges[1:])
            t = ss[idx, None, None] * np.exp(-nodes)
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                values = self._phi_inverse(xs[idx, None, None, :], t) * np.exp(nodes * inv_n)
            values = np.where(t > 0, values, 0.0)
            if not np.all(np.isfinite(values)):
                raise QuadratureDivergence(f"non-finite integrand at quadrature level {level}")
            integral, err = panel_rule(values, half)
            contribution = integral.sum(axis=-1)
            total[idx] += contribution
            error[idx] += err.sum(axis=-1)
            count += panels
            if level >= 6:
                growing = values[:, -1, -1] > values[:, 0, 0] * (1.0 + 1e-12)
                if np.any(growing & (values[:, -1, -1] > 0)):
                    raise QuadratureDivergence(
                        f"integrand still growing at tau={2.0 ** level:g}; the head integral diverges"
                    )
            done = contribution <= settings.QUAD_TRUNCATION * total[idx]
            active[idx[done]] = False
            logger.debug("quadrature level %d: %d active", level, int(active.sum()))
        if np.any(active):
            raise QuadratureDivergence(f"no convergence within {settings.QUAD_MAX_LEVELS} levels")
        return total, error, count

    # -- forward transform ------------------------------------------------

    def forward(self, x, t) -> np.ndarray:
        """sup{s : inverse_transform(x, s) <= t} by geometric bisection"""
        x_b, t_b = broadcast_points(x, t)
        flat_x = x_b.reshape(-1, x_b.shape[-1])
        flat_t = t_b.reshape(-1)
        if np.any(flat_t < 0):
            raise ValueError("the forward transform needs t >= 0")
        result = np.zeros(flat_t.shape)
        positive = flat_t > 0
        if np.any(positive):
            result[positive] = self._invert(flat_x[positive], flat_t[positive])
        return result.reshape(t_b.shape)

    def _invert(self, xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        factor = 16.0
        start = np.ones(ts.shape)
        above = self.inverse_transform(xs, start) > ts
        hi = np.ones(ts.shape)
        lo = np.ones(ts.shape)
        if np.any(~above):
            up = ~above
            grown = expand_bracket(
                lambda s: self.inverse_transform(xs[up], s) > ts[up],
                start[up], factor=factor, cap=settings.FORWARD_BRACKET_CAP, what="forward transform",
            )
            hi[up] = grown
            lo[up] = grown / factor
        if np.any(above):
            shrink = expand_bracket(
                lambda r: self.inverse_transform(xs[above], 1.0 / r) <= ts[above],
                start[above], factor=factor, cap=1e300, what="forward transform",
            )
            lo[above] = 1.0 / shrink
            hi[above] = factor / shrink
        lo, _ = bisect_below(
            lambda s: self.inverse_transform(xs, s) <= ts, lo, hi,
            rtol=settings.FORWARD_RTOL, geometric=True,
        )
        return lo

    # -- tabulation -------------------------------------------------------

    def table(self, nodes: np.ndarray) -> ForwardTable:
        """Forward table for an array of nodes, memoized on the node coordinates"""
        nodes = np.ascontiguousarray(nodes, dtype=float)
        key = (nodes.tobytes(), nodes.shape)
        with self._lock:
            cached = self._tables.get(key)
        if cached is None:
            cached = self._build_table(nodes.reshape(-1, nodes.shape[-1]))
            with self._lock:
                self._tables[key] = cached
        return cached

    def _build_table(self, rows: np.ndarray) -> ForwardTable:
        s_grid = geometric_grid(settings.TABLE_S_MIN, settings.TABLE_S_MAX, settings.TABLE_S_PER_DECADE)
        log_s = np.log(s_grid)
        y_nodes, half = panel_nodes(log_s[:-1], log_s[1:])
        inv_n = 1.0 / self.dimension
        t_grid = geometric_grid(settings.TABLE_T_MIN, settings.TABLE_T_MAX, settings.TABLE_T_PER_DECADE)
        log_t = np.log(t_grid)
        log_forward = np.empty((rows.shape[0], t_grid.size))
        logger.debug("building forward table for %d nodes", rows.shape[0])
        for start in range(0, rows.shape[0], _CHUNK):
            chunk = rows[start:start + _CHUNK]
            head = self.inverse_transform(chunk, np.full(chunk.shape[0], s_grid[0]))
            # increments over [s_k, s_k+1] in the variable y = log t
            values = self._phi_inverse(chunk[:, None, None, :], np.exp(y_nodes)[None]) * np.exp(-y_nodes * inv_n)[None]
            increments, _ = panel_rule(values, half)
            cumulative = head[:, None] + np.concatenate(
                (np.zeros((chunk.shape[0], 1)), np.cumsum(increments, axis=1)), axis=1
            )
            log_i = np.log(cumulative)
            for r in range(chunk.shape[0]):
                log_forward[start + r] = _extrapolated_interp(log_t, log_i[r], log_s)
        return ForwardTable(float(log_t[0]), float(log_t[1] - log_t[0]), log_forward)

    # -- packaging --------------------------------------------------------

    def _forward_values(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        leading = x.shape[:-1]
        if x.ndim >= 2 and t.shape == leading and int(np.prod(leading)) >= settings.TABLE_MIN_NODES:
            rows = np.arange(int(np.prod(leading))).reshape(leading)
            return self.table(x)(rows, t)
        return self.forward(x, t)

    def as_mo_function(self) -> MOFunction:
        inv_n = 1.0 / self.dimension

        def derivative(x, t):
            value = self._forward_values(x, t)
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = value ** (1.0 + inv_n) / self._phi_inverse(x, value)
            return np.where(value > 0, slope, 0.0)

        return MOFunction(
            self._forward_values,
            derivative,
            self.inverse_transform,
            family_tag="sobolev",
            convex=True,
            lipschitz_in_x=self.phi_mm.lipschitz_in_x,
            name=f"({self.phi_mm.name})_*",
        )


def sobolev_conjugate_inverse(phi_mm: MOFunction, dimension: int, x, s) -> np.ndarray:
    return SobolevConjugate(phi_mm, dimension).inverse_transform(x, s)


def sobolev_conjugate_forward(sc: SobolevConjugate, x, t) -> np.ndarray:
    return sc.forward(x, t)


# ---------------------------------------------------------------------------
# Conditions on phi_mm and on its Sobolev conjugate
# ---------------------------------------------------------------------------

def _log_integrand(phi_mm: MOFunction, x: np.ndarray, dimension: int):
    inv_n = 1.0 / dimension
    return lambda y: generalized_inverse(phi_mm, x, np.exp(y)) * np.exp(-y * inv_n)


def _head_probe(phi_mm: MOFunction, dimension: int, x: np.ndarray) -> Dict:
    levels = settings.QUAD_MAX_LEVELS
    k = np.arange(levels)
    upper = -k * np.log(2.0)
    contributions, _ = composite(_log_integrand(phi_mm, x, dimension), upper - np.log(2.0), upper, 1)
    ratios = contributions[1:] / np.maximum(contributions[:-1], 1e-300)
    recent = ratios[-10:]
    stable = float(recent.max() - recent.min()) < 1e-3
    rate = float(recent.mean())
    if stable and recent.max() < 1.0 - 1e-3:
        value = float(contributions.sum() + contributions[-1] * rate / (1.0 - rate))
        return {"status": HOLDS, "ratio": rate, "value": value}
    if recent.min() >= 1.0 - 1e-3:
        return {"status": FAILS, "ratio": rate, "value": float("inf")}
    return {"status": INCONCLUSIVE, "ratio": rate, "value": float(contributions.sum())}


def _tail_probe(phi_mm: MOFunction, dimension: int, x: np.ndarray, decades: int = 12) -> Dict:
    lower = np.arange(decades) * np.log(10.0)
    increments, _ = composite(_log_integrand(phi_mm, x, dimension), lower, lower + np.log(10.0), 4)
    ratios = increments[1:] / np.maximum(increments[:-1], 1e-300)
    recent = ratios[-3:]
    if np.all(recent >= 0.999):
        status = HOLDS
    elif np.all(recent <= 0.9):
        status = FAILS
    else:
        status = INCONCLUSIVE
    return {"status": status, "ratios": recent}


def check_integrability(phi_mm: MOFunction, dimension: int, x_samples) -> Verdict:
    """Head integral finite near 0 and tail integral divergent at infinity"""
    if dimension < 2:
        raise ValueError("integrability conditions need N >= 2")
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    diagnostics = []
    undecided = False
    for x in xs:
        head = _head_probe(phi_mm, dimension, x)
        tail = _tail_probe(phi_mm, dimension, x)
        diagnostics.append({"x": x, "head": head, "tail": tail})
        if head["status"] == FAILS or tail["status"] == FAILS:
            part = "head" if head["status"] == FAILS else "tail"
            return Verdict(FAILS, {"x": x, "part": part}, {"samples": diagnostics})
        undecided = undecided or INCONCLUSIVE in (head["status"], tail["status"])
    return Verdict(INCONCLUSIVE if undecided else HOLDS, details={"samples": diagnostics})


def check_derivative_growth(
    sc: SobolevConjugate,
    nu: Optional[float] = None,
    c0: float = 1.0,
    x_samples=None,
    t_grid: Optional[Sequence[float]] = None,
    widths: Optional[Sequence[float]] = None,
) -> Verdict:
    """|d/dx_i F(x, t)| <= c0 [F + F^{1+nu}] by central differences in x"""
    n = sc.dimension
    nu = 0.9 / n if nu is None else nu
    if not 0.0 < nu < 1.0 / n:
        raise ValueError(f"nu must lie in (0, 1/{n})")
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    t = np.asarray(geometric_grid(1e-2, 1e2, 4) if t_grid is None else t_grid, dtype=float)
    steps = settings.DERIVATIVE_STEP * np.asarray(widths if widths is not None else np.ones(n), dtype=float)
    base = sc.forward(xs[:, None, :], t[None, :])
    bracket = c0 * (base + base ** (1.0 + nu))
    worst, witness = 0.0, None
    for axis in range(n):
        shift = np.zeros(n)
        shift[axis] = steps[axis]
        slope = (sc.forward((xs + shift)[:, None, :], t[None, :])
                 - sc.forward((xs - shift)[:, None, :], t[None, :])) / (2.0 * steps[axis])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bracket > 0, np.abs(slope) / bracket, 0.0)
        i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[i, j] > worst:
            worst = float(ratio[i, j])
            witness = {"x": xs[i], "t": t[j], "axis": axis, "ratio": worst}
    details = {"worst_ratio": worst, "nu": nu, "c0": c0}
    if worst <= 1.0:
        return Verdict(HOLDS, details=details)
    return Verdict(FAILS, witness, details)


@dataclass(frozen=True)
class TraceFunction:
    psi_min: MOFunction
    dimension: int


def build_trace_function(sc: SobolevConjugate) -> TraceFunction:
    """psi_min = F^{(N-1)/N} for the Sobolev conjugate F"""
    forward = sc.as_mo_function()
    power = (sc.dimension - 1.0) / sc.dimension

    def evaluate(x, t):
        return forward.evaluate(x, t) ** power

    def derivative(x, t):
        value = forward.evaluate(x, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = power * value ** (power - 1.0) * forward.derivative(x, t)
        return np.where(value > 0, slope, 0.0)

    psi = MOFunction(evaluate, derivative, None, family_tag="trace", convex=None,
                     lipschitz_in_x=forward.lipschitz_in_x, name=f"psi({sc.phi_mm.name})")
    return TraceFunction(psi, sc.dimension)
