"""Adaptive Gauss-Legendre quadrature by interval bisection.

Two flavours share one algorithm: :func:`integrate` works on vectorised
double-precision integrands (numpy in, numpy out), :func:`integrate_mp`
works on scalar mpmath integrands at the current working precision.

Each panel is integrated with an ``order``-point rule and with the same rule
on its two halves.  A panel is accepted when the two estimates agree to its
share of the tolerance; otherwise both halves are queued.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from functools import lru_cache

import mpmath as mp
import numpy as np

__all__ = ["QuadratureError", "integrate", "integrate_mp", "gl_rule"]


class QuadratureError(RuntimeError):
    """Raised when bisection hits the depth limit without meeting tolerance."""


@lru_cache(maxsize=None)
def gl_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1] in double precision."""
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=64)
def _gl_rule_mp(order: int, dps: int) -> tuple[tuple, tuple]:
    with mp.workdps(dps):
        x, w = mp.gauss_quadrature(order, "legendre")
        return tuple(x), tuple(w)


def _breaks(a, b, breakpoints: Sequence) -> list:
    pts = sorted(p for p in breakpoints if a < p < b)
    return [a, *pts, b]


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    *,
    rtol: float = 1e-10,
    atol: float = 0.0,
    order: int = 20,
    breakpoints: Sequence[float] = (),
    max_depth: int = 40,
) -> np.ndarray | complex | float:
    """Integrate a vectorised function over [a, b].

    ``f`` receives a 1-D array of abscissae and returns either a 1-D array of
    values or a 2-D array with one column per integrand component.  The
    relative tolerance is measured against the integral of ``|f|`` (per
    component), which keeps the criterion meaningful for integrals that
    cancel to nearly zero.

    Args:
        f: Vectorised integrand.
        a: Lower limit.
        b: Upper limit.
        rtol: Relative tolerance against the L1 mass of the integrand.
        atol: Absolute tolerance floor.
        order: Points per panel.
        breakpoints: Interior points where panels must start (kernel nodes,
            non-smooth points).
        max_depth: Bisection depth limit per initial panel.

    Returns:
        The integral, same trailing shape as one row of ``f``'s output.
    """
    if a == b:
        probe = np.asarray(f(np.array([float(a)])))
        return np.zeros_like(probe[0])
    if a > b:
        return -integrate(f, b, a, rtol=rtol, atol=atol, order=order,
                          breakpoints=breakpoints, max_depth=max_depth)
    xg, wg = gl_rule(order)

    def panel(lo: float, hi: float):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        vals = np.asarray(f(mid + half * xg))
        w = wg if vals.ndim == 1 else wg[:, None]
        return half * np.sum(w * vals, axis=0), half * np.sum(w * np.abs(vals), axis=0)

    edges = _breaks(a, b, breakpoints)
    queue = []
    total_mass = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        est, mass = panel(lo, hi)
        queue.append((lo, hi, est, 0))
        total_mass = total_mass + mass
    width = b - a
    result = 0.0
    while queue:
        lo, hi, coarse, depth = queue.pop()
        mid = 0.5 * (lo + hi)
        left, lmass = panel(lo, mid)
        right, rmass = panel(mid, hi)
        fine = left + right
        share = (hi - lo) / width
        tol = np.maximum(atol, rtol * total_mass) * share
        if np.all(np.abs(fine - coarse) <= tol):
            result = result + fine
            continue
        if depth >= max_depth:
            raise QuadratureError(
                f"no convergence on [{lo!r}, {hi!r}] after {max_depth} bisections"
            )
        queue.append((lo, mid, left, depth + 1))
        queue.append((mid, hi, right, depth + 1))
    return result


def integrate_mp(
    f: Callable,
    a,
    b,
    *,
    eps=None,
    order: int | None = None,
    breakpoints: Sequence = (),
    max_depth: int = 60,
):
    """Integrate a scalar mpmath function over [a, b] at working precision.

    ``eps`` defaults to ``10**-(dps - 3)`` relative to the integral of ``|f|``.
    """
    dps = mp.mp.dps
    if eps is None:
        eps = mp.mpf(10) ** (-(dps - 3))
    if order is None:
        order = max(20, dps // 2)
    a = mp.mpf(a)
    b = mp.mpf(b)
    if a == b:
        return mp.mpf(0)
    if a > b:
        return -integrate_mp(f, b, a, eps=eps, order=order,
                             breakpoints=breakpoints, max_depth=max_depth)
    xg, wg = _gl_rule_mp(order, dps)

    def panel(lo, hi):
        half = (hi - lo) / 2
        mid = (hi + lo) / 2
        vals = [f(mid + half * x) for x in xg]
        return (half * mp.fsum(w * v for w, v in zip(wg, vals)),
                half * mp.fsum(w * abs(v) for w, v in zip(wg, vals)))

    edges = _breaks(a, b, [mp.mpf(p) for p in breakpoints])
    queue = []
    mass = mp.mpf(0)
    for lo, hi in zip(edges[:-1], edges[1:]):
        est, m = panel(lo, hi)
        queue.append((lo, hi, est, 0))
        mass += m
    width = b - a
    parts = []
    while queue:
        lo, hi, coarse, depth = queue.pop()
        mid = (lo + hi) / 2
        left, _ = panel(lo, mid)
        right, _ = panel(mid, hi)
        fine = left + right
        if abs(fine - coarse) <= eps * mass * (hi - lo) / width:
            parts.append(fine)
            continue
        if depth >= max_depth:
            raise QuadratureError(
                f"no convergence on [{lo}, {hi}] after {max_depth} bisections"
            )
        queue.append((lo, mid, left, depth + 1))
        queue.append((mid, hi, right, depth + 1))
    return mp.fsum(parts)
