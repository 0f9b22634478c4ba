"""Quadrature and root bracketing used by the numeric analysis mode."""
from __future__ import annotations

from collections.abc import Callable, Iterable


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-9,
    max_depth: int = 50,
) -> float:
    """Integrate ``f`` over ``[a, b]`` by adaptive Simpson with Richardson correction.

    Args:
        f: Integrand, assumed smooth on the open interval.
        a: Lower bound.
        b: Upper bound.
        tol: Absolute error target for the whole interval.
        max_depth: Recursion cap; subintervals at this depth are accepted as is.
    """
    if a == b:
        return 0.0
    if a > b:
        return -adaptive_simpson(f, b, a, tol, max_depth)

    fa, fm, fb = f(a), f((a + b) / 2), f(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    # explicit stack; recursion on deep tolerances hits Python's limit
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = (a + b) / 2
        flm, frm = f((a + m) / 2), f((m + b) / 2)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15 * tol:
            total += left + right + delta / 15
        else:
            stack.append((a, m, fa, flm, fm, left, tol / 2, depth + 1))
            stack.append((m, b, fm, frm, fb, right, tol / 2, depth + 1))
    return total


def integrate_piecewise(
    f: Callable[[float], float],
    a: float,
    b: float,
    breakpoints: Iterable[float] = (),
    scale: float | None = None,
    tol: float = 1e-9,
) -> float:
    """Integrate a piecewise-smooth ``f`` over ``[a, b]``.

    The interval is cut at every breakpoint inside it (where ``f`` or its
    derivatives may jump). When ``scale`` is given each piece is further cut
    at geometrically growing offsets ``scale, 2*scale, 4*scale, ...`` so that
    sharp exponential decay near the left end is resolved before the long
    flat tail.
    """
    cuts = sorted({a, b, *(x for x in breakpoints if a < x < b)})
    pieces: list[tuple[float, float]] = []
    for lo, hi in zip(cuts, cuts[1:]):
        if scale is None:
            pieces.append((lo, hi))
            continue
        step, x = scale, lo
        while x + step < hi:
            pieces.append((x, x + step))
            x += step
            step *= 2
        pieces.append((x, hi))
    piece_tol = tol / max(len(pieces), 1)
    return sum(adaptive_simpson(f, lo, hi, piece_tol) for lo, hi in pieces)


def last_at_or_above(
    f: Callable[[float], float],
    level: float,
    lo: float,
    hi: float,
    tol: float = 1e-9,
) -> float:
    """Bisect a non-increasing ``f`` for the last point where ``f >= level``.

    Requires ``f(lo) >= level > f(hi)``. The returned point always satisfies
    ``f(x) >= level`` and lies within ``tol`` of the crossing.
    """
    if not f(lo) >= level:
        raise ValueError("f(lo) must be >= level")
    if not f(hi) < level:
        raise ValueError("f(hi) must be < level")
    while hi - lo > tol:
        mid = lo + (hi - lo) / 2
        if mid <= lo or mid >= hi:
            break
        if f(mid) >= level:
            lo = mid
        else:
            hi = mid
    return lo
