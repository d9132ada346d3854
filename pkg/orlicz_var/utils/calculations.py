# orlicz_var/utils/calculations.py
from typing import Callable, Optional, Tuple

import numpy as np

from ..core.config import settings
from ..core.errors import BracketFailure


def geometric_grid(t_min: float, t_max: float, per_decade: Optional[int] = None) -> np.ndarray:
    """Geometric grid spanning [t_min, t_max] with a fixed number of points per decade"""
    per_decade = per_decade or settings.POINTS_PER_DECADE
    decades = np.log10(t_max) - np.log10(t_min)
    count = max(int(np.ceil(decades * per_decade)) + 1, 2)
    return np.geomspace(t_min, t_max, count)


def decade_points(t_max: float, decades: int = 3) -> np.ndarray:
    """t_max / 10^k for k = decades, ..., 0 in increasing order"""
    return t_max / 10.0 ** np.arange(decades, -1, -1)


def as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ValueError("a point needs at least one coordinate")
    return x


def broadcast_points(x, t) -> Tuple[np.ndarray, np.ndarray]:
    """Broadcast points (..., N) against arguments (...) to a common leading shape"""
    x = as_points(x)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], t.shape)
    return np.broadcast_to(x, shape + x.shape[-1:]), np.broadcast_to(t, shape)


def expand_bracket(
    reached: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    factor: float = 2.0,
    cap: Optional[float] = None,
    what: str = "bracket",
) -> np.ndarray:
    """Grow `start` elementwise by `factor` until `reached` is true everywhere

    Raises BracketFailure when an element passes the cap without reaching.
    """
    cap = settings.BRACKET_CAP if cap is None else cap
    hi = np.array(start, dtype=float, copy=True)
    done = reached(hi)
    while not np.all(done):
        hi = np.where(done, hi, hi * factor)
        if np.any(hi[~done] > cap):
            raise BracketFailure(f"{what}: no bracket below {cap:g}")
        done = done | reached(hi)
    return hi


def bisect_below(
    below: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    rtol: Optional[float] = None,
    max_iter: Optional[int] = None,
    geometric: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized bisection for the boundary of {tau : below(tau)} inside [lo, hi]

    `below` must be true at lo and false at hi. With geometric=True the midpoint is the
    geometric mean (lo > 0 required).
    """
    rtol = settings.BISECTION_RTOL if rtol is None else rtol
    max_iter = max_iter or settings.BISECTION_MAX_ITER
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(max_iter):
        if np.all(hi - lo <= rtol * np.abs(hi) + 1e-300):
            break
        mid = np.sqrt(lo * hi) if geometric else 0.5 * (lo + hi)
        inside = below(mid)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return lo, hi


def decade_trend(values: np.ndarray) -> np.ndarray:
    """Successive ratios v[k+1]/v[k] along the last axis (inf where v[k] == 0)"""
    values = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(values[..., :-1] > 0, values[..., 1:] / values[..., :-1], np.inf)


def shortest_repr(value) -> str:
    """Shortest round-trip decimal for floats, plain str otherwise"""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)
