# orlicz_var/services/function_spaces.py
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import settings
from ..core.errors import NonFiniteModular
from ..models.grid import DiscreteField, Grid, NormReport
from ..models.mo_function import AnisotropicFamily, MOFunction
from .convex_calculus import conjugate, conjugate_function
from .sobolev_conjugate import SobolevConjugate, TraceFunction

logger = logging.getLogger(__name__)


def _modular(phi: MOFunction, points: np.ndarray, values: np.ndarray, weights: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(weights * phi(points, np.abs(values))))


def modular(phi: MOFunction, u: DiscreteField) -> float:
    """Trapezoid quadrature of phi(x, |u(x)|)"""
    return _modular(phi, u.grid.points, u.values, u.grid.weights)


def _luxemburg(phi: MOFunction, points: np.ndarray, values: np.ndarray, weights: np.ndarray) -> NormReport:
    if not np.all(np.isfinite(values)):
        raise ValueError("Luxemburg norm of a non-finite field")
    if not np.any(values):
        return NormReport(0.0, 0.0, 0, (0.0, 0.0))

    def at(lam: float) -> float:
        return _modular(phi, points, values / lam, weights)

    base = at(1.0)
    hi = base + 1.0 if np.isfinite(base) else 1.0
    for _ in range(2100):
        value = at(hi)
        if np.isfinite(value) and value <= 1.0:
            break
        hi *= 2.0
    else:
        raise NonFiniteModular("modular stays infinite or above 1 for every probed lambda")
    lo = 0.5 * hi
    while at(lo) < 1.0:
        lo *= 0.5
        if lo < 1e-300:
            raise NonFiniteModular("modular does not reach 1 as lambda decreases")
    bracket = (lo, hi)

    iterations = 0
    mid, value = hi, at(hi)
    for iterations in range(1, settings.NORM_MAX_ITER + 1):
        mid = 0.5 * (lo + hi)
        value = at(mid)
        if abs(value - 1.0) <= settings.NORM_TOL or hi - lo <= 4.0 * np.spacing(hi):
            break
        if value > 1.0 or not np.isfinite(value):
            lo = mid
        else:
            hi = mid
    return NormReport(float(mid), float(value), iterations, bracket)


def luxemburg_norm(phi: MOFunction, u: DiscreteField) -> NormReport:
    """inf{lambda > 0 : modular(phi, u / lambda) <= 1} by bisection on lambda"""
    return _luxemburg(phi, u.grid.points, u.values, u.grid.weights)


def norm(phi: MOFunction, u: DiscreteField) -> float:
    return luxemburg_norm(phi, u).value


def holder_pairing(u: DiscreteField, v: DiscreteField, phi: MOFunction) -> Tuple[float, float]:
    """(integral |u v|, 2 ||u||_phi ||v||_phi*)"""
    if u.grid != v.grid:
        raise ValueError("Hoelder pairing needs fields on the same grid")
    lhs = u.grid.integrate(np.abs(u.values * v.values))
    if u.is_zero or v.is_zero:
        return lhs, 0.0
    rhs = 2.0 * norm(phi, u) * norm(conjugate_function(phi), v)
    return lhs, rhs


def anisotropic_norm(family: AnisotropicFamily, u: DiscreteField) -> float:
    """||u||_phi_max + sum_i ||d_i u||_phi_i"""
    grid = u.grid
    if grid.dimension != family.dimension:
        raise ValueError(f"family has {family.dimension} components, grid has {grid.dimension} axes")
    if u.is_zero:
        return 0.0
    total = norm(family.phi_max, u)
    for axis, phi in enumerate(family.components):
        total += _luxemburg(phi, grid.points, u.partial(axis), grid.weights).value
    return total


def boundary_norm(psi: MOFunction, u: DiscreteField) -> float:
    """Luxemburg norm of the trace with per-face trapezoid weights"""
    view = u.boundary_view
    return _luxemburg(psi, view.points, view.values, view.weights).value


def truncate(u: DiscreteField, n: float) -> DiscreteField:
    if n <= 0:
        raise ValueError("truncation level must be positive")
    return u.with_values(np.clip(u.values, -n, n))


# ---------------------------------------------------------------------------
# Random fields and experiments
# ---------------------------------------------------------------------------

def random_smooth_field(grid: Grid, seed, modes: Optional[int] = None, decay: Optional[float] = None) -> DiscreteField:
    """Cosine series with coefficients ~ N(0, 1) / (1 + |k|)^decay"""
    modes = settings.FOURIER_MODES if modes is None else modes
    decay = settings.FOURIER_DECAY if decay is None else decay
    rng = np.random.default_rng(seed)
    scaled = [(grid.points[..., i] - a) / (b - a) for i, (a, b) in enumerate(grid.domain)]
    values = np.zeros(grid.shape)
    for k in itertools.product(range(modes + 1), repeat=grid.dimension):
        coefficient = rng.standard_normal() / (1.0 + np.linalg.norm(k)) ** decay
        term = np.ones(grid.shape)
        for axis, wavenumber in enumerate(k):
            term = term * np.cos(np.pi * wavenumber * scaled[axis])
        values += coefficient * term
    return DiscreteField(grid, values)


def trial_seeds(seed, trials: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


@dataclass(frozen=True)
class ExperimentStats:
    max: float
    mean: float
    std: float
    ratios: np.ndarray = field(repr=False)
    skipped: int = 0

    def to_dict(self) -> Dict:
        return {"max": self.max, "mean": self.mean, "std": self.std,
                "trials": int(self.ratios.size), "skipped": self.skipped}


def _run_trials(ratio: Callable[[DiscreteField], Optional[float]], grid: Grid, trials: int, seed,
                workers: Optional[int] = None) -> ExperimentStats:
    fields = [random_smooth_field(grid, child) for child in trial_seeds(seed, trials)]
    workers = workers or settings.WORKERS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(ratio, fields))
    else:
        results = [ratio(u) for u in fields]
    ratios = np.array([r for r in results if r is not None], dtype=float)
    skipped = len(results) - ratios.size
    if ratios.size == 0:
        return ExperimentStats(0.0, 0.0, 0.0, ratios, skipped)
    return ExperimentStats(float(ratios.max()), float(ratios.mean()), float(ratios.std()), ratios, skipped)


def embedding_experiment(family: AnisotropicFamily, sc: SobolevConjugate, trials: int, seed, grid: Grid,
                         workers: Optional[int] = None) -> ExperimentStats:
    """||u||_(phi_min**)_* / ||u||_W1L over random smooth fields"""
    target = sc.as_mo_function()

    def ratio(u: DiscreteField) -> Optional[float]:
        if u.is_zero:
            return None
        return norm(target, u) / anisotropic_norm(family, u)

    stats = _run_trials(ratio, grid, trials, seed, workers)
    logger.info("embedding ratios on %s: max %.6g mean %.6g", grid.resolution, stats.max, stats.mean)
    return stats


def trace_experiment(family: AnisotropicFamily, tf: TraceFunction, trials: int, seed, grid: Grid,
                     workers: Optional[int] = None) -> ExperimentStats:
    """||u||_L_psi_min(boundary) / ||u||_W1L over random smooth fields"""

    def ratio(u: DiscreteField) -> Optional[float]:
        if u.is_zero or not np.any(u.boundary_view.values):
            return None
        return boundary_norm(tf.psi_min, u) / anisotropic_norm(family, u)

    stats = _run_trials(ratio, grid, trials, seed, workers)
    logger.info("trace ratios on %s: max %.6g mean %.6g", grid.resolution, stats.max, stats.mean)
    return stats


def l1_embedding_constant(phi: MOFunction, grid: Grid, trials: int, seed) -> float:
    """Empirical C in ||u||_L1 <= C ||u||_phi"""

    def ratio(u: DiscreteField) -> Optional[float]:
        if u.is_zero:
            return None
        return grid.integrate(np.abs(u.values)) / norm(phi, u)

    return _run_trials(ratio, grid, trials, seed).max


def conjugate_integrability_check(phi: MOFunction, u: DiscreteField) -> Tuple[float, float]:
    """(modular of phi* at phi'(x, |u|), modular of phi at 2u); the first never exceeds the second"""
    slopes = phi.diff(u.grid.points, np.abs(u.values))
    lhs = u.grid.integrate(conjugate(phi, u.grid.points, slopes))
    rhs = modular(phi, u.scaled(2.0))
    return lhs, rhs


@dataclass(frozen=True)
class RefinementReport:
    resolutions: Tuple[Tuple[int, ...], ...]
    values: Tuple[float, ...]

    @property
    def relative_changes(self) -> Tuple[float, ...]:
        v = np.asarray(self.values)
        return tuple(np.abs(np.diff(v)) / np.maximum(np.abs(v[1:]), 1e-300))


def refinement_study(norm_of: Callable[[DiscreteField], float], fn: Callable[[np.ndarray], np.ndarray],
                     domain: Sequence[Tuple[float, float]], resolutions: Sequence[Sequence[int]]) -> RefinementReport:
    """Norm values of one smooth field along a refinement family"""
    values = []
    for resolution in resolutions:
        grid = Grid(tuple(domain), tuple(resolution))
        values.append(norm_of(DiscreteField.from_function(grid, fn)))
    return RefinementReport(tuple(tuple(r) for r in resolutions), tuple(values))
