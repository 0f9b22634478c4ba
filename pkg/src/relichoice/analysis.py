"""Closed-form and numeric degradation parameters.

Every component decays exponentially from its installation time ``t0``::

    P(X_i survives past T) = exp(-lam_i * (T - t0_i))   for T >= t0_i
                           = 1                           for T <  t0_i

and survival composes through the tree exactly like static success
probability: product over a series, weighted mean over a choice.

Two formula modes exist. ``"paper"`` returns the textbook closed forms for
flat series and flat single-component parallel systems verbatim, including
the MTTF convention that measures each component's life from its own
installation time. ``"numeric"`` integrates the clamped survival above and is
self-consistent for every topology, nested ones included.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

from relichoice.model import (
    ComponentParams,
    Leaf,
    ProbChoice,
    RelichoiceError,
    Series,
    SystemExpr,
    SystemSpec,
    WeightVector,
    shape_of,
)
from relichoice.numeric import integrate_piecewise, last_at_or_above

MODES = ("paper", "numeric")
RTE_METHODS = ("auto", "closed-form", "quadratic", "numeric")

QUAD_TOL = 1e-13
RTE_TOL = 1e-9
HORIZON_SURVIVAL = 1e-18
HORIZON_CAP_MEANS = 60.0


class UnresolvedLeaf(RelichoiceError, KeyError):
    """A leaf has no probability in the supplied map."""


class ShapeUnsupported(RelichoiceError):
    """No closed form exists for this topology; use the numeric mode."""


class DomainError(RelichoiceError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class NoViablePath(RelichoiceError, ValueError):
    """Every path has zero success probability, so no weights can be assigned."""


# --- structural (time-independent) probability ------------------------------


def _evaluate(expr: SystemExpr, leaf_value: Callable[[str], float]):
    if isinstance(expr, Leaf):
        return leaf_value(expr.component)
    if isinstance(expr, Series):
        return math.prod(_evaluate(c, leaf_value) for c in expr.children)
    if isinstance(expr, ProbChoice):
        return sum(w * _evaluate(c, leaf_value) for w, c in expr.branches)
    raise TypeError(f"expression is not canonical: {expr!r}")


def success_probability(expr: SystemExpr, probs: Mapping[str, float]) -> float:
    """Probability that ``expr`` works given per-component success probabilities.

    Works with any numeric type that supports ``+`` and ``*`` (``Fraction``
    inputs give exact results).

    Raises:
        UnresolvedLeaf: if a leaf id is missing from ``probs``.
    """

    def lookup(cid: str) -> float:
        try:
            p = probs[cid]
        except KeyError:
            raise UnresolvedLeaf(f"no probability for leaf {cid}") from None
        if not 0 <= p <= 1:
            raise DomainError(f"probability of {cid} outside [0, 1]: {p}")
        return p

    return _evaluate(expr, lookup)


def failure_probability(expr: SystemExpr, probs: Mapping[str, float]) -> float:
    return 1 - success_probability(expr, probs)


def assign_weights(probs: Sequence[float]) -> WeightVector:
    """Selection weights proportional to each path's odds of success.

    A path with ``p == 1`` has infinite odds, so when any exist they share all
    of the weight equally. Paths with ``p == 0`` get weight 0.

    Raises:
        NoViablePath: if every probability is 0.
        DomainError: for fewer than two paths or probabilities outside [0, 1].
    """
    probs = list(probs)
    if len(probs) < 2:
        raise DomainError("need at least two paths")
    if any(not 0 <= p <= 1 for p in probs):
        raise DomainError(f"probabilities must lie in [0, 1]: {probs}")
    if all(p == 0 for p in probs):
        raise NoViablePath("every path has success probability 0")
    certain = [p == 1 for p in probs]
    if any(certain):
        k = sum(certain)
        return WeightVector(tuple(1.0 / k if c else 0.0 for c in certain))
    odds = [p / (1 - p) for p in probs]
    total = math.fsum(odds)
    return WeightVector(tuple(o / total for o in odds))


# --- time-dependent survival ------------------------------------------------


def leaf_survival(comp: ComponentParams, T: float) -> float:
    if T <= comp.t0:
        return 1.0
    return math.exp(-comp.lam * (T - comp.t0))


def _survival_at(spec: SystemSpec, T: float) -> float:
    comps = spec.components
    return _evaluate(spec.root, lambda cid: leaf_survival(comps[cid], T))


def _check_time(T: float) -> None:
    if not (math.isfinite(T) and T >= 0):
        raise DomainError(f"time must be finite and >= 0, got {T}")


def survival(spec: SystemSpec, T: float) -> float:
    """Probability that the system is still working at time ``T``."""
    _check_time(T)
    return _survival_at(spec, T)


def _survival_and_slope(
    expr: SystemExpr, comps: Mapping[str, ComponentParams], T: float
) -> tuple[float, float]:
    # exact right-derivative; a leaf starts decaying at T == t0
    if isinstance(expr, Leaf):
        c = comps[expr.component]
        if T < c.t0:
            return 1.0, 0.0
        s = math.exp(-c.lam * (T - c.t0))
        return s, -c.lam * s
    parts = [_survival_and_slope(child, comps, T) for child in expr.children]
    if isinstance(expr, ProbChoice):
        return (
            sum(w * s for w, (s, _) in zip(expr.weights, parts)),
            sum(w * d for w, (_, d) in zip(expr.weights, parts)),
        )
    s_total = math.prod(s for s, _ in parts)
    slope = 0.0
    for i, (_, d) in enumerate(parts):
        if d:
            slope += d * math.prod(s for j, (s, _) in enumerate(parts) if j != i)
    return s_total, slope


def _kinks(spec: SystemSpec) -> list[float]:
    return sorted({c.t0 for c in spec.leaves()})


def finite_difference_slope(
    f: Callable[[float], float], T: float, kinks: Sequence[float] = ()
) -> float:
    """Numerical derivative of ``f`` at ``T`` with step ``1e-6 * max(1, T)``.

    Central by default. Near a kink (and at ``T`` itself when ``T`` is one)
    a second-order one-sided stencil on the smooth side is used instead;
    kinks are treated with the right-derivative convention.
    """
    h = 1e-6 * max(1.0, T)

    def clear(lo: float, hi: float) -> bool:
        return not any(lo < k < hi for k in kinks)

    on_kink = any(k == T for k in kinks)
    if T - h >= 0 and clear(T - h, T) and clear(T, T + h) and not on_kink:
        return (f(T + h) - f(T - h)) / (2 * h)
    if clear(T, T + 2 * h):
        return (-3 * f(T) + 4 * f(T + h) - f(T + 2 * h)) / (2 * h)
    if T - 2 * h >= 0 and clear(T - 2 * h, T):
        return (3 * f(T) - 4 * f(T - h) + f(T - 2 * h)) / (2 * h)
    return (f(T + h) - f(T - h)) / (2 * h)


def _flat_terms(spec: SystemSpec) -> list[tuple[float, ComponentParams]]:
    root = spec.root
    if isinstance(root, Leaf):
        return [(1.0, spec.components[root.component])]
    if isinstance(root, ProbChoice):
        return [(w, spec.components[c.component]) for w, c in root.branches]
    return [(1.0, spec.components[c.component]) for c in root.children]


def pdf(spec: SystemSpec, T: float) -> float:
    """Failure-time density ``-dP/dT`` at ``T``.

    Flat shapes use the closed forms (only components already installed at
    ``T`` contribute); nested systems use a finite difference of survival.
    """
    _check_time(T)
    shape = shape_of(spec.root)
    if shape == "flat-series":
        terms = _flat_terms(spec)
        rate = math.fsum(c.lam for _, c in terms if T >= c.t0)
        return rate * math.exp(-math.fsum(c.lam * (T - c.t0) for _, c in terms if T >= c.t0))
    if shape == "flat-parallel":
        return math.fsum(
            w * c.lam * math.exp(-c.lam * (T - c.t0))
            for w, c in _flat_terms(spec)
            if T >= c.t0
        )
    slope = finite_difference_slope(lambda t: _survival_at(spec, t), T, _kinks(spec))
    return max(0.0, -slope)


def sfr(spec: SystemSpec, T: float) -> float:
    """System failure rate (hazard) ``-P'(T) / P(T)`` for ``T >= max t0``.

    Raises:
        DomainError: if ``T`` precedes the latest installation time, or the
            survival has underflowed to zero.
    """
    _check_time(T)
    t0_max = max(c.t0 for c in spec.leaves())
    if T < t0_max:
        raise DomainError(f"failure rate needs T >= max t0 = {t0_max}, got {T}")
    shape = shape_of(spec.root)
    if shape == "flat-series":
        return math.fsum(c.lam for _, c in _flat_terms(spec))
    if shape == "flat-parallel":
        # weighted mean of rates, weights psi * exp(-lam (T - t0)), in log space
        logs, rates = [], []
        for w, c in _flat_terms(spec):
            if w > 0:
                logs.append(math.log(w) - c.lam * (T - c.t0))
                rates.append(c.lam)
        top = max(logs)
        m = [math.exp(x - top) for x in logs]
        return math.fsum(mi * r for mi, r in zip(m, rates)) / math.fsum(m)
    p = _survival_at(spec, T)
    if p <= 0:
        raise DomainError(f"survival is zero at T = {T}; failure rate undefined")
    slope = finite_difference_slope(lambda t: _survival_at(spec, t), T, _kinks(spec))
    return -slope / p


# --- integrals ---------------------------------------------------------------


def horizon(spec: SystemSpec) -> float:
    """End of the integration range, standing in for "infinite" time.

    The first point (on a doubling grid past the latest installation time)
    where survival drops below ``HORIZON_SURVIVAL``, capped at
    ``max t0 + 60 / min lam``.
    """
    leaves = spec.leaves()
    t0_max = max(c.t0 for c in leaves)
    cap = t0_max + HORIZON_CAP_MEANS / min(c.lam for c in leaves)
    step = 1.0 / max(c.lam for c in leaves)
    while t0_max + step < cap:
        if _survival_at(spec, t0_max + step) < HORIZON_SURVIVAL:
            return t0_max + step
        step *= 2
    return cap


def _integrate(spec: SystemSpec, f: Callable[[float], float]) -> float:
    leaves = spec.leaves()
    return integrate_piecewise(
        f,
        0.0,
        horizon(spec),
        breakpoints=[c.t0 for c in leaves],
        scale=0.5 / max(c.lam for c in leaves),
        tol=QUAD_TOL,
    )


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _paper_terms(spec: SystemSpec, quantity: str) -> tuple[str, list[tuple[float, ComponentParams]]]:
    shape = shape_of(spec.root)
    if shape == "nested":
        raise ShapeUnsupported(f"no closed-form {quantity} for nested systems")
    terms = _flat_terms(spec)
    if shape == "flat-series" and len({c.t0 for _, c in terms}) > 1:
        raise ShapeUnsupported(
            f"closed-form series {quantity} assumes one common installation time"
        )
    return shape, terms


def mttf(spec: SystemSpec, mode: str = "numeric") -> float:
    """Mean time to failure.

    ``paper``: ``1 / sum(lam)`` for a series, ``sum(psi / lam)`` for a parallel
    choice. ``numeric``: integral of survival over ``[0, horizon]``.

    Raises:
        ShapeUnsupported: in paper mode for nested systems or series with
            unequal installation times.
    """
    _check_mode(mode)
    if mode == "numeric":
        return _integrate(spec, lambda t: _survival_at(spec, t))
    shape, terms = _paper_terms(spec, "MTTF")
    if shape == "flat-series":
        return 1.0 / math.fsum(c.lam for _, c in terms)
    return math.fsum(w / c.lam for w, c in terms)


def mtbf(spec: SystemSpec, mode: str = "numeric") -> float:
    """Mean time between failures, the expectation of the failure-time density.

    ``paper``: ``T0 + 1 / sum(lam)`` for a series with common installation time
    ``T0``, ``sum(psi * (t0 + 1 / lam))`` for a parallel choice.
    ``numeric``: integral of ``t * pdf(t)`` over ``[0, horizon]``.
    """
    _check_mode(mode)
    if mode == "numeric":
        comps = spec.components

        def integrand(t: float) -> float:
            return -t * _survival_and_slope(spec.root, comps, t)[1]

        return _integrate(spec, integrand)
    shape, terms = _paper_terms(spec, "MTBF")
    if shape == "flat-series":
        return terms[0][1].t0 + 1.0 / math.fsum(c.lam for _, c in terms)
    return math.fsum(w * (c.t0 + 1.0 / c.lam) for w, c in terms)


def mttr(spec: SystemSpec, mode: str = "numeric") -> float:
    """Mean time to repair, ``mtbf - mttf`` evaluated in one mode.

    Paper mode returns the difference in its simplified form, ``T0`` for a
    series and ``sum(psi * t0)`` for a parallel choice, free of cancellation.
    In numeric mode both terms equal the expected lifetime, so the result is
    zero up to quadrature error; differences below ``1e-9`` are reported as 0.
    """
    _check_mode(mode)
    if mode == "paper":
        shape, terms = _paper_terms(spec, "MTTR")
        if shape == "flat-series":
            return terms[0][1].t0
        return math.fsum(w * c.t0 for w, c in terms)
    diff = mtbf(spec, mode) - mttf(spec, mode)
    if -1e-9 < diff < 0:
        return 0.0
    return diff


# --- reliability time estimation ---------------------------------------------


@dataclass(frozen=True)
class QuadraticRoots:
    """Second-order Taylor solution of ``sum(psi * exp(-lam (t - t0))) = rho``.

    ``t2`` (the smaller root) is the usable bound; ``t1`` is where the
    upward-opening parabola climbs back above ``rho`` and has no reliability
    meaning. Both are ``None`` when ``Q < 0``.
    """

    Q: float
    t1: float | None
    t2: float | None
    a: float
    b: float
    c: float

    @property
    def real(self) -> bool:
        return self.t2 is not None


def quadratic_rte_roots(
    weights: Sequence[float],
    lambdas: Sequence[float],
    t0s: Sequence[float],
    rho: float,
) -> QuadraticRoots:
    """Roots of ``a t^2 - b t + c = rho`` from truncating each exponential at second order.

    The coefficients, with sums over the branches::

        a = sum(psi lam^2) / 2
        b = sum(psi lam^2 t0) + sum(psi lam)
        c = sum(psi lam^2 t0^2) / 2 + sum(psi lam t0) + 1
        Q = b^2 - 2 sum(psi lam^2) (c - rho)
    """
    if not (len(weights) == len(lambdas) == len(t0s) >= 1):
        raise DomainError("weights, lambdas and t0s must have equal nonzero length")
    if not 0 < rho <= 1:
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    rows = list(zip(weights, lambdas, t0s))
    s2 = math.fsum(w * lam * lam for w, lam, _ in rows)
    a = s2 / 2
    b = math.fsum(w * lam * lam * t0 for w, lam, t0 in rows) + math.fsum(w * lam for w, lam, _ in rows)
    c = (
        math.fsum(w * lam * lam * t0 * t0 for w, lam, t0 in rows) / 2
        + math.fsum(w * lam * t0 for w, lam, t0 in rows)
        + 1
    )
    Q = b * b - 2 * s2 * (c - rho)
    if Q < 0:
        return QuadraticRoots(Q, None, None, a, b, c)
    root = math.sqrt(Q)
    t1 = (b + root) / s2
    # same root as (b - sqrt(Q)) / s2, without the cancellation
    t2 = 2 * (c - rho) / (b + root)
    return QuadraticRoots(Q, t1, t2, a, b, c)


@dataclass(frozen=True)
class RteResult:
    rho: float
    reliable_until: float
    method: str
    quadratic_detail: QuadraticRoots | None = None
    notes: tuple[str, ...] = field(default=(), compare=False)


def _rte_bisect(spec: SystemSpec, rho: float) -> float:
    leaves = spec.leaves()
    lo = min(c.t0 for c in leaves)
    t0_max = max(c.t0 for c in leaves)
    step = 1.0 / min(c.lam for c in leaves)
    hi = t0_max + step
    f = lambda t: _survival_at(spec, t)  # noqa: E731
    for _ in range(2000):
        if f(hi) < rho:
            break
        step *= 2
        hi = t0_max + step
    else:
        raise DomainError(f"survival never drops below rho = {rho}")
    return last_at_or_above(f, rho, lo, hi, RTE_TOL)


def rte(
    spec: SystemSpec,
    rho: float,
    method: str = "auto",
    mode: str = "numeric",
) -> RteResult:
    """Latest time up to which survival stays at or above ``rho``.

    Methods:
        closed-form: exact inversion for a flat series, or a parallel choice
            whose components all share one rate and one installation time.
        quadratic: second-order approximation for any flat parallel choice;
            falls back to bisection when the approximation has no real root.
        numeric: bisection on the clamped survival to ``1e-9`` in time.
        auto: closed form when one applies, otherwise quadratic in paper mode
            and bisection in numeric mode.

    Raises:
        DomainError: ``rho`` outside ``(0, 1]``.
        ShapeUnsupported: an explicit method that does not fit the shape.
    """
    if not (isinstance(rho, (int, float)) and 0 < rho <= 1):
        raise DomainError(f"rho must lie in (0, 1], got {rho}")
    if method not in RTE_METHODS:
        raise ValueError(f"method must be one of {RTE_METHODS}, got {method!r}")
    _check_mode(mode)
    shape = shape_of(spec.root)

    if method == "numeric" or shape == "nested":
        if method in ("closed-form", "quadratic"):
            raise ShapeUnsupported(f"{method} RTE needs a flat system")
        return RteResult(rho, _rte_bisect(spec, rho), "numeric-bisection")

    terms = _flat_terms(spec)
    t0_max = max(c.t0 for _, c in terms)
    identical = len({(c.lam, c.t0) for _, c in terms}) == 1

    if method in ("auto", "closed-form"):
        closed = None
        if shape == "flat-series":
            total = math.fsum(c.lam for _, c in terms)
            weighted_t0 = math.fsum(c.lam * c.t0 for _, c in terms)
            closed = (RteResult(rho, (-math.log(rho) + weighted_t0) / total, "series-closed-form"))
        elif identical:
            lam, t0 = terms[0][1].lam, terms[0][1].t0
            closed = RteResult(rho, t0 - math.log(rho) / lam, "parallel-identical")
        if closed is not None:
            # below max t0 the unclamped series formula overstates survival
            if mode == "paper" or closed.reliable_until >= t0_max:
                return closed
            return RteResult(
                rho,
                _rte_bisect(spec, rho),
                "numeric-bisection",
                notes=("closed form falls before the last installation time",),
            )
        if method == "closed-form":
            raise ShapeUnsupported(
                "closed-form RTE needs a series or identical parallel components"
            )
        if mode == "numeric":
            return RteResult(rho, _rte_bisect(spec, rho), "numeric-bisection")

    if shape == "flat-series" and len(terms) > 1:
        raise ShapeUnsupported("quadratic RTE applies to parallel choices")
    roots = quadratic_rte_roots(
        [w for w, _ in terms], [c.lam for _, c in terms], [c.t0 for _, c in terms], rho
    )
    if roots.real:
        return RteResult(
            rho,
            roots.t2,
            "parallel-quadratic",
            roots,
            notes=(f"larger root t1 = {roots.t1!r} lies outside the approximation's validity",),
        )
    return RteResult(
        rho,
        _rte_bisect(spec, rho),
        "numeric-bisection",
        roots,
        notes=(f"quadratic approximation has no real root (Q = {roots.Q!r}); used bisection",),
    )
