"""Adaptive Simpson quadrature, scalar and batched.

The batched form integrates many integrands that share the integration
interval (one per element of a parameter array). Each element follows
exactly the subdivision path a scalar run would take, so results do not
depend on which other elements share the batch.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import QuadratureError

DEFAULT_RTOL = 1e-9
DEFAULT_MAX_DEPTH = 40
MIN_DEPTH = 3


def adaptive_simpson_batch(
    func: Callable[[float, np.ndarray], np.ndarray],
    a: float,
    b: float,
    size: int,
    rtol: float = DEFAULT_RTOL,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> np.ndarray:
    """Integrate ``size`` real integrands over ``[a, b]``.

    Args:
        func: ``func(x, idx)`` returns the integrand values at abscissa ``x``
            for the elements listed in the integer array ``idx``.
        a, b: Integration limits.
        size: Number of integrands.
        rtol: Relative tolerance, referred to each element's coarse
            whole-interval Simpson estimate.
        max_depth: Maximum bisection depth.

    Returns:
        Array of ``size`` integrals.

    Raises:
        QuadratureError: if an element has not converged at ``max_depth``.
    """
    idx = np.arange(size)
    fa = np.asarray(func(a, idx), dtype=float)
    fb = np.asarray(func(b, idx), dtype=float)
    m = 0.5 * (a + b)
    fm = np.asarray(func(m, idx), dtype=float)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = np.abs(whole)
    tol = rtol * scale
    result = np.zeros(size)

    # depth-first, left before right: per-element accumulation order is fixed
    stack = [(a, b, fa, fm, fb, whole, tol, 0, idx)]
    while stack:
        lo, hi, f_lo, f_mid, f_hi, s_whole, s_tol, depth, sel = stack.pop()
        mid = 0.5 * (lo + hi)
        f_lm = np.asarray(func(0.5 * (lo + mid), sel), dtype=float)
        f_rm = np.asarray(func(0.5 * (mid + hi), sel), dtype=float)
        left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid)
        right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rm + f_hi)
        delta = left + right - s_whole
        ok = np.abs(delta) <= 15.0 * s_tol
        if depth < MIN_DEPTH:
            ok[:] = False
        elif depth >= max_depth and not ok.all():
            bad = ~ok
            denom = np.where(scale[sel[bad]] > 0, scale[sel[bad]], 1.0)
            achieved = float(np.max(np.abs(delta[bad]) / denom))
            raise QuadratureError(
                f"adaptive Simpson did not converge within depth {max_depth}", achieved
            )
        if ok.any():
            result[sel[ok]] += left[ok] + right[ok] + delta[ok] / 15.0
        if not ok.all():
            rest = ~ok
            sub = sel[rest]
            half_tol = 0.5 * s_tol[rest]
            stack.append((mid, hi, f_mid[rest], f_rm[rest], f_hi[rest], right[rest], half_tol, depth + 1, sub))
            stack.append((lo, mid, f_lo[rest], f_lm[rest], f_mid[rest], left[rest], half_tol, depth + 1, sub))
    return result


def adaptive_simpson(
    func: Callable[[float], float],
    a: float,
    b: float,
    rtol: float = DEFAULT_RTOL,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> float:
    """Integrate a scalar function over ``[a, b]`` by adaptive Simpson."""

    def batched(x, idx):
        return np.full(len(idx), float(func(x)))

    return float(adaptive_simpson_batch(batched, a, b, 1, rtol=rtol, max_depth=max_depth)[0])
