# orlicz_var/utils/quadrature.py
from typing import Callable, Tuple

import numpy as np

# Kronrod abscissae on [-1, 1]; the odd-indexed ones (from the outside) are the Gauss 7 nodes
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate((-_XGK[:-1], [0.0], _XGK[-2::-1]))
KRONROD_WEIGHTS = np.concatenate((_WGK[:-1], [_WGK[-1]], _WGK[-2::-1]))
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]


def panel_nodes(a, b) -> Tuple[np.ndarray, np.ndarray]:
    """Map the 15 Kronrod nodes onto [a, b]; returns (nodes[..., 15], half widths)"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    return center[..., None] + half[..., None] * NODES, half


def panel_rule(values: np.ndarray, half: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """K15 integral and |K15 - G7| error estimate from sampled panel values"""
    kronrod = half * (values @ KRONROD_WEIGHTS)
    gauss = half * (values @ GAUSS_WEIGHTS)
    return kronrod, np.abs(kronrod - gauss)


def composite(fn: Callable[[np.ndarray], np.ndarray], a, b, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Kronrod over `panels` equal panels of [a, b], vectorized over a and b"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    fractions = np.linspace(0.0, 1.0, panels + 1)
    left = a[..., None] + (b - a)[..., None] * fractions[:-1]
    right = a[..., None] + (b - a)[..., None] * fractions[1:]
    nodes, half = panel_nodes(left, right)
    integral, error = panel_rule(fn(nodes), half)
    return integral.sum(axis=-1), error.sum(axis=-1)
