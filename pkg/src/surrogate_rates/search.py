"""One-dimensional minimization for convex conditional risks."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10) -> float:
    """Return the abscissa of the minimum of a unimodal ``f`` on ``[a, b]``.

    The bracket is shrunk until its width is at most ``tol``; the midpoint of
    the final bracket is returned.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)
    c = a + INV_PHI_SQ * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    for _ in range(n):
        # ties go left so flat stretches resolve deterministically
        if yc <= yd:
            b, d, yd = d, c, yc
            h *= INV_PHI
            c = a + INV_PHI_SQ * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
    if yc <= yd:
        return 0.5 * (a + d)
    return 0.5 * (c + b)


def bracketed_minimize(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    scan_points: int = 65,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Minimize a convex ``f`` on ``[lo, hi]``; returns ``(z_min, f(z_min))``.

    ``f`` must accept arrays. A uniform scan picks the leftmost grid minimum,
    golden-section refines inside its two neighbours, and the best of the
    refined point and the scan points is returned (so a minimum sitting on
    the window edge is reported exactly).
    """
    if not lo < hi:
        raise ValueError(f"empty window [{lo}, {hi}]")
    grid = np.linspace(lo, hi, scan_points)
    values = np.asarray(f(grid), dtype=float)
    k = int(np.argmin(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, scan_points - 1)]
    z = golden_section(lambda t: float(f(np.array([t]))[0]), a, b, tol)
    fz = float(f(np.array([z]))[0])
    if values[k] < fz:
        return float(grid[k]), float(values[k])
    return float(z), fz
