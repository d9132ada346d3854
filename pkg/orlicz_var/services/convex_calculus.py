# orlicz_var/services/convex_calculus.py
import logging
import threading
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from ..core.config import settings
from ..core.errors import BracketFailure, DivergenceSuspected
from ..models.mo_function import MOFunction
from ..models.verdict import FAILS, HOLDS, INCONCLUSIVE, Verdict
from ..utils.calculations import (
    as_points,
    bisect_below,
    broadcast_points,
    decade_points,
    expand_bracket,
    geometric_grid,
)

logger = logging.getLogger(__name__)

ScalarMap = Callable[[np.ndarray, np.ndarray], np.ndarray]
DEFAULT_SAMPLES = ((0.0, 0.0),)

# coarse probes for the limits phi/t -> infinity and phi/t -> 0
_FAR_GRID = geometric_grid(1.0, 1e40, per_decade=4)
_NEAR_GRID = geometric_grid(1e-40, 1.0, per_decade=4)


def _evaluate(fn: Union[MOFunction, ScalarMap], x, t) -> np.ndarray:
    if isinstance(fn, MOFunction):
        return fn(x, t)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(fn(as_points(x), np.asarray(t, dtype=float)), dtype=float)


def _samples(x_samples) -> np.ndarray:
    return np.atleast_2d(np.asarray(DEFAULT_SAMPLES if x_samples is None else x_samples, dtype=float))


# ---------------------------------------------------------------------------
# Conjugation
# ---------------------------------------------------------------------------

def _conjugate_derivable(phi: MOFunction, x, s) -> Tuple[np.ndarray, np.ndarray]:
    """sup_t (st - phi) through phi'(x, t*) = s, bisection on the monotone derivative"""
    x_b, s_b = broadcast_points(x, s)
    if np.any(s_b < 0):
        raise ValueError("conjugate needs s >= 0")
    t_hi = expand_bracket(lambda t: phi.diff(x_b, t) >= s_b, np.ones(s_b.shape), what="conjugate")
    lo, hi = bisect_below(lambda t: phi.diff(x_b, t) < s_b, np.zeros(s_b.shape), t_hi)
    t_star = 0.5 * (lo + hi)
    value = s_b * t_star - phi(x_b, t_star)
    return np.maximum(value, 0.0), t_star


def _scan_sup(objective: Callable[[np.ndarray], np.ndarray], hi: float) -> Tuple[float, float]:
    """Maximize a concave-enough scalar objective on [0, hi]: grid scan then bounded refinement"""
    grid = np.concatenate(([0.0], geometric_grid(min(settings.T_MIN, hi * 1e-6), hi)))
    values = objective(grid)
    k = int(np.nanargmax(values))
    best_t, best_v = grid[k], values[k]
    lo, up = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if up > lo:
        result = minimize_scalar(
            lambda t: -float(objective(np.array([t]))[0]),
            bounds=(lo, up),
            method="bounded",
            options={"xatol": max(1e-15, 1e-12 * up)},
        )
        if -result.fun > best_v:
            best_t, best_v = float(result.x), -float(result.fun)
    return best_v, best_t


def _slice_conjugate(h_slice: Callable[[np.ndarray], np.ndarray], s: float) -> Tuple[float, float]:
    """sup_t (s t - h(t)) for a single x-slice without derivative information"""
    if s == 0.0:
        return 0.0, 0.0
    base = -float(h_slice(np.array([0.0]))[0])
    hi = 1.0
    while s * hi - float(h_slice(np.array([hi]))[0]) >= base:
        hi *= 2.0
        if hi > settings.BRACKET_CAP:
            raise BracketFailure(f"conjugate: objective still rising at t={hi:g}")
    value, t_star = _scan_sup(lambda t: s * t - h_slice(t), hi)
    return max(value, 0.0), t_star


def _conjugate_scan(h: Union[MOFunction, ScalarMap], x, s) -> Tuple[np.ndarray, np.ndarray]:
    x_b, s_b = broadcast_points(x, s)
    values = np.empty(s_b.shape)
    argmax = np.empty(s_b.shape)
    for index in np.ndindex(s_b.shape):
        point = x_b[index]
        values[index], argmax[index] = _slice_conjugate(lambda t: _evaluate(h, point, t), float(s_b[index]))
    return values, argmax


def _uses_derivative(fn) -> bool:
    return isinstance(fn, MOFunction) and fn.derivable_in_t and fn.convex is not False


def conjugate_with_argmax(phi: Union[MOFunction, ScalarMap], x, s) -> Tuple[np.ndarray, np.ndarray]:
    if _uses_derivative(phi):
        return _conjugate_derivable(phi, x, s)
    return _conjugate_scan(phi, x, s)


def conjugate(phi: Union[MOFunction, ScalarMap], x, s) -> np.ndarray:
    """Complementary function phi*(x, s) = sup_{t >= 0} (s t - phi(x, t))"""
    return conjugate_with_argmax(phi, x, s)[0]


def conjugate_function(phi: MOFunction) -> MOFunction:
    """phi* as an MOFunction; its derivative is the maximizer t*(x, s)"""
    return MOFunction(
        evaluate=lambda x, s: conjugate(phi, x, s),
        derivative=lambda x, s: conjugate_with_argmax(phi, x, s)[1],
        inverse=None,
        family_tag="conjugate",
        derivable_in_t=True,
        lipschitz_in_x=phi.lipschitz_in_x,
        convex=True,
        name=f"{phi.name}*",
    )


def biconjugate(h: Union[MOFunction, ScalarMap], x, t) -> np.ndarray:
    """h**(x, t), the largest convex minorant, by conjugating twice"""
    if _uses_derivative(h) and h.convex:
        return conjugate(conjugate_function(h), x, t)
    x_b, t_b = broadcast_points(x, t)
    result = np.empty(t_b.shape)
    for index in np.ndindex(t_b.shape):
        result[index] = _slice_biconjugate(lambda tau, p=x_b[index]: _evaluate(h, p, tau), float(t_b[index]))
    return result


def _slice_biconjugate(h_slice: Callable[[np.ndarray], np.ndarray], t: float) -> float:
    if t == 0.0:
        return 0.0

    def h_star(s: float) -> float:
        return _slice_conjugate(h_slice, s)[0]

    s_hi = 1.0
    while t * s_hi - h_star(s_hi) >= 0.0:
        s_hi *= 2.0
        if s_hi > settings.BRACKET_CAP:
            raise BracketFailure(f"biconjugate: outer objective still rising at s={s_hi:g}")

    # Localize with a discrete Legendre table, then refine with exact inner conjugates
    _, tau_hi = _slice_conjugate(h_slice, s_hi)
    tau = np.concatenate(([0.0], geometric_grid(settings.T_MIN, max(2.0 * tau_hi, 2.0 * t, settings.T_MIN * 10))))
    h_tau = h_slice(tau)
    slopes = np.concatenate(([0.0], geometric_grid(min(settings.T_MIN, s_hi * 1e-6), s_hi)))
    h_star_table = np.max(slopes[:, None] * tau[None, :] - h_tau[None, :], axis=1)
    outer = t * slopes - h_star_table
    k = int(np.argmax(outer))
    lo, up = slopes[max(k - 1, 0)], slopes[min(k + 1, slopes.size - 1)]
    best = t * slopes[k] - h_star(float(slopes[k]))
    if up > lo:
        result = minimize_scalar(
            lambda s: -(t * s - h_star(s)),
            bounds=(lo, up),
            method="bounded",
            options={"xatol": max(1e-14, 1e-12 * up)},
        )
        best = max(best, -float(result.fun))
    return max(best, 0.0)


# ---------------------------------------------------------------------------
# Convex envelope tabulation
# ---------------------------------------------------------------------------

def _lower_hull(t: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of the sampled graph (monotone chain)"""
    hull = []
    for i in range(t.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (t[b] - t[a]) * (values[i] - values[a]) - (values[b] - values[a]) * (t[i] - t[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return t[hull], values[hull]


def envelope_function(h: MOFunction, t_max: Optional[float] = None) -> MOFunction:
    """Tabulated convex envelope of h in t, built lazily per x-node

    On the sampled slice the double conjugate is the lower hull of the sample graph; values
    between vertices are linear, beyond t_max the slice is continued by h itself.
    """
    t_max = t_max or settings.ENVELOPE_T_MAX
    grid = np.concatenate(([0.0], geometric_grid(settings.T_MIN, t_max)))
    tables: Dict[bytes, Tuple[np.ndarray, np.ndarray]] = {}
    lock = threading.Lock()

    def table(point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        key = point.tobytes()
        with lock:
            cached = tables.get(key)
        if cached is None:
            cached = _lower_hull(grid, h(point, grid))
            with lock:
                tables[key] = cached
        return cached

    def rowwise(x, t, fn):
        x_b, t_b = broadcast_points(x, t)
        flat_x = x_b.reshape(-1, x_b.shape[-1])
        flat_t = t_b.reshape(-1)
        out = np.empty(flat_t.shape)
        rows, inverse_index = np.unique(flat_x, axis=0, return_inverse=True)
        inverse_index = inverse_index.reshape(-1)
        for r, row in enumerate(rows):
            mask = inverse_index == r
            out[mask] = fn(row, flat_t[mask], *table(np.ascontiguousarray(row)))
        return out.reshape(t_b.shape)

    def evaluate(x, t):
        def on_row(row, tt, knots, values):
            inside = np.interp(tt, knots, values)
            return np.where(tt <= t_max, inside, h(row, tt))
        return rowwise(x, t, on_row)

    def derivative(x, t):
        def on_row(row, tt, knots, values):
            slopes = np.diff(values) / np.diff(knots)
            index = np.clip(np.searchsorted(knots, tt, side="right") - 1, 0, slopes.size - 1)
            return np.where(tt <= t_max, slopes[index], h.diff(row, tt))
        return rowwise(x, t, on_row)

    def inverse(x, s):
        def on_row(row, ss, knots, values):
            # right end of flat pieces gives the supremum of the sublevel set
            last = np.searchsorted(values, ss, side="right") - 1
            last = np.clip(last, 0, values.size - 1)
            nxt = np.clip(last + 1, 0, values.size - 1)
            span = values[nxt] - values[last]
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(span > 0, (ss - values[last]) / span, 0.0)
            inside = knots[last] + np.clip(frac, 0.0, 1.0) * (knots[nxt] - knots[last])
            beyond = ss > values[-1]
            if not np.any(beyond):
                return inside
            # past the table the envelope is h itself
            return np.where(beyond, generalized_inverse(h, row, np.where(beyond, ss, values[-1])), inside)
        return rowwise(x, s, on_row)

    return MOFunction(evaluate, derivative, inverse, family_tag="envelope", convex=True,
                      lipschitz_in_x=h.lipschitz_in_x, name=f"{h.name}**")


# ---------------------------------------------------------------------------
# Inverses and probes
# ---------------------------------------------------------------------------

def generalized_inverse(phi: Union[MOFunction, ScalarMap], x, s) -> np.ndarray:
    """sup{tau >= 0 : phi(x, tau) <= s}"""
    if isinstance(phi, MOFunction) and phi.inverse is not None:
        x_b, s_b = broadcast_points(x, s)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return np.asarray(phi.inverse(x_b, s_b), dtype=float)
    x_b, s_b = broadcast_points(x, s)
    cap = settings.BRACKET_CAP
    hi = np.ones(s_b.shape)
    for _ in range(int(np.log2(cap)) + 1):
        short = _evaluate(phi, x_b, hi) <= s_b
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    hi = np.minimum(hi, cap)
    saturated = _evaluate(phi, x_b, hi) <= s_b
    lo, _ = bisect_below(lambda tau: _evaluate(phi, x_b, tau) <= s_b, np.zeros(s_b.shape), hi)
    return np.where(saturated, hi, lo)


def is_convex_on_samples(phi: MOFunction, x_samples=None, t_max: Optional[float] = None) -> bool:
    return _convexity_violation(phi, _samples(x_samples), t_max or 1e3) is None


def _convexity_violation(phi, xs: np.ndarray, t_max: float) -> Optional[Dict]:
    grid = geometric_grid(settings.T_MIN, t_max)
    a, b = grid[:-2], grid[2:]
    for x in xs:
        mid = _evaluate(phi, x, 0.5 * (a + b))
        chord = 0.5 * (_evaluate(phi, x, a) + _evaluate(phi, x, b))
        bad = mid > chord * (1.0 + settings.CONVEXITY_SLACK) + 1e-300
        if np.any(bad):
            k = int(np.argmax(bad))
            return {"x": x, "t": 0.5 * (a[k] + b[k]), "midpoint": mid[k], "chord": chord[k]}
    return None


def validate_mo_function(phi: MOFunction, x_samples=None, t_max: Optional[float] = None) -> Verdict:
    """Finite probes of the N-function axioms at the sampled x"""
    xs = _samples(x_samples)
    t_max = t_max or 1e6
    grid = geometric_grid(settings.T_MIN, t_max)
    for x in xs:
        zero = float(_evaluate(phi, x, 0.0))
        if zero != 0.0:
            return Verdict(FAILS, {"probe": "zero", "x": x, "value": zero})
        values = _evaluate(phi, x, grid)
        if not np.all(np.isfinite(values)):
            k = int(np.argmax(~np.isfinite(values)))
            return Verdict(FAILS, {"probe": "finite", "x": x, "t": grid[k]})
        if np.any(values <= 0):
            k = int(np.argmax(values <= 0))
            return Verdict(FAILS, {"probe": "positive", "x": x, "t": grid[k]})
        drops = np.diff(values) < 0
        if np.any(drops):
            k = int(np.argmax(drops))
            return Verdict(FAILS, {"probe": "monotone", "x": x, "t": grid[k + 1]})
        at_one = float(_evaluate(phi, x, 1.0))
        with np.errstate(over="ignore", invalid="ignore"):
            large = _evaluate(phi, x, _FAR_GRID) / _FAR_GRID
            small = _evaluate(phi, x, _NEAR_GRID) / _NEAR_GRID
        if not np.any(large >= settings.SUPERLINEAR_FACTOR * at_one):
            return Verdict(FAILS, {"probe": "superlinear", "x": x, "t": _FAR_GRID[-1]})
        if not np.any(small <= settings.SUBLINEAR_FACTOR * at_one):
            return Verdict(FAILS, {"probe": "sublinear", "x": x, "t": _NEAR_GRID[0]})
    violation = _convexity_violation(phi, xs, t_max)
    if violation is not None:
        return Verdict(FAILS, dict(violation, probe="convex"))
    inf_at_one = float(np.min(_evaluate(phi, xs, np.ones(len(xs)))))
    if inf_at_one <= 0:
        return Verdict(FAILS, {"probe": "inf_at_one", "value": inf_at_one})
    return Verdict(HOLDS, details={"inf_at_one": inf_at_one, "samples": len(xs)})


def grows_essentially_slower(
    psi: Union[MOFunction, ScalarMap],
    phi: Union[MOFunction, ScalarMap],
    c_grid: Sequence[float],
    t_max: float,
    x_samples=None,
) -> Verdict:
    """psi << phi probed through psi(x, t) / phi(x, c t) at the decade endpoints below t_max"""
    if len(c_grid) == 0:
        raise ValueError("c_grid must be nonempty")
    xs = _samples(x_samples)
    decades = decade_points(t_max, 3)
    decided = []
    for x in xs:
        for c in c_grid:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                ratios = _evaluate(psi, x, decades) / _evaluate(phi, x, c * decades)
            last, previous = ratios[-1], ratios[-2]
            if not np.isfinite(last) or (last >= previous * (1.0 - 1e-9) and last > settings.GROWTH_SMALL_RATIO):
                return Verdict(FAILS, {"x": x, "c": c, "t": t_max, "ratio": last},
                               {"ratios": ratios})
            decreasing = np.all(np.diff(ratios) < 0)
            shrinking = np.all(ratios[1:] <= ratios[:-1] * (1.0 - settings.GROWTH_DECADE_DECAY))
            decided.append(decreasing and (last < settings.GROWTH_SMALL_RATIO or shrinking))
    if all(decided):
        return Verdict(HOLDS, details={"t_max": t_max, "pairs": len(decided)})
    return Verdict(INCONCLUSIVE, details={"t_max": t_max, "undecided": decided.count(False)})


def delta2_check(phi: Union[MOFunction, ScalarMap], x_samples=None, t_max: float = 1e6) -> Verdict:
    """Doubling estimate k = max phi(2t)/phi(t) for t >= 1 with the t < 1 excess as h(x)"""
    xs = _samples(x_samples)
    grid = geometric_grid(1.0, t_max)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratios = np.stack([_evaluate(phi, x, 2.0 * grid) / _evaluate(phi, x, grid) for x in xs])
    k_of_t = np.max(np.where(np.isfinite(ratios), ratios, np.inf), axis=0)
    if not np.all(np.isfinite(k_of_t)):
        k = int(np.argmax(~np.isfinite(k_of_t)))
        worst = int(np.argmax(~np.isfinite(ratios[:, k])))
        return Verdict(FAILS, {"x": xs[worst], "t": grid[k], "ratio": float("inf")})
    middle = (grid >= t_max / 100.0) & (grid <= t_max / 10.0)
    top = grid >= t_max / 10.0
    k_middle, k_top = float(k_of_t[middle].max()), float(k_of_t[top].max())
    growth = (k_top - k_middle) / k_middle
    if growth >= settings.DELTA2_GROWTH_LIMIT:
        k = int(np.argmax(np.where(top, k_of_t, -np.inf)))
        worst = int(np.argmax(ratios[:, k]))
        return Verdict(FAILS, {"x": xs[worst], "t": grid[k], "ratio": ratios[worst, k]},
                       {"growth": growth})
    k_hat = float(k_of_t.max())
    small = geometric_grid(settings.T_MIN, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        excess = [np.max(np.maximum(_evaluate(phi, x, 2.0 * small) - k_hat * _evaluate(phi, x, small), 0.0))
                  for x in xs]
    return Verdict(HOLDS, details={"k_hat": k_hat, "h_sup": float(np.max(excess)), "growth": growth})


def epsilon_bound_constant(
    f: Union[MOFunction, ScalarMap],
    g: Union[MOFunction, ScalarMap],
    epsilon: float,
    x_samples=None,
    t_grid: Optional[np.ndarray] = None,
) -> float:
    """K0 = max over samples of (g - eps f)^+, so g <= eps f + K0 on the sample set"""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    xs = _samples(x_samples)
    t_grid = geometric_grid(settings.T_MIN, 1e6) if t_grid is None else np.asarray(t_grid, dtype=float)
    t_top = float(t_grid.max())
    probe = decade_points(t_top, 2)
    k0 = 0.0
    for x in xs:
        excess = np.maximum(_evaluate(g, x, t_grid) - epsilon * _evaluate(f, x, t_grid), 0.0)
        k0 = max(k0, float(np.max(excess)))
        tail = np.maximum(_evaluate(g, x, probe) - epsilon * _evaluate(f, x, probe), 0.0)
        if tail[2] > tail[1] > tail[0] and tail[2] > 0:
            raise DivergenceSuspected(
                f"(g - eps f)^+ still increasing at t={t_top:g} (x={x.tolist()}); f/g does not appear to diverge"
            )
    return k0
