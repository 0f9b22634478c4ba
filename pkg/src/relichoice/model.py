"""Components and system topology.

A system is an expression tree over four node kinds:

* ``Leaf`` references a declared component by id.
* ``Series`` fails as soon as any child fails.
* ``ProbChoice`` selects exactly one branch, branch ``k`` with weight ``w_k``.
* ``UniformChoice`` is sugar for a ``ProbChoice`` with equal weights.

All values are frozen dataclasses. Construction does no checking so that
``validate`` can report every problem at once; ``SystemSpec.create`` is the
checked entry point used by the loaders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

WEIGHT_TOLERANCE = 1e-9


class RelichoiceError(Exception):
    """Base class for all library errors."""


class MalformedExpression(RelichoiceError, ValueError):
    """An expression tree is structurally unusable (e.g. a one-branch choice)."""


class InvalidSpec(RelichoiceError, ValueError):
    """Raised by ``SystemSpec.create`` when ``validate`` finds violations."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class ComponentParams:
    id: str
    lam: float
    t0: float = 0.0
    static_p: float | None = None


@dataclass(frozen=True)
class Leaf:
    component: str


@dataclass(frozen=True)
class Series:
    children: tuple[SystemExpr, ...]

    def __init__(self, *children: SystemExpr):
        object.__setattr__(self, "children", tuple(children))


@dataclass(frozen=True)
class ProbChoice:
    branches: tuple[tuple[float, SystemExpr], ...]

    def __init__(self, *branches: tuple[float, SystemExpr]):
        object.__setattr__(self, "branches", tuple((w, e) for w, e in branches))

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for w, _ in self.branches)

    @property
    def children(self) -> tuple[SystemExpr, ...]:
        return tuple(e for _, e in self.branches)


@dataclass(frozen=True)
class UniformChoice:
    children: tuple[SystemExpr, ...]

    def __init__(self, *children: SystemExpr):
        object.__setattr__(self, "children", tuple(children))


SystemExpr = Union[Leaf, Series, ProbChoice, UniformChoice]


def binary_choice(psi: float, first: SystemExpr, second: SystemExpr) -> ProbChoice:
    """Two-path choice taking ``first`` with probability ``psi``."""
    return ProbChoice((psi, first), (1.0 - psi, second))


@dataclass(frozen=True)
class WeightVector:
    """Selection probabilities of a choice node, fully materialized."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(self.weights))
        problems = weight_problems(self.weights)
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def with_residual(cls, leading: Sequence[float]) -> WeightVector:
        """Build ``n`` weights from ``n - 1`` explicit ones plus the remainder."""
        leading = list(leading)
        return cls(tuple(leading) + (1.0 - math.fsum(leading),))

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self) -> Iterator[float]:
        return iter(self.weights)

    def __getitem__(self, i: int) -> float:
        return self.weights[i]


def weight_problems(weights: Sequence[float]) -> list[str]:
    problems = []
    for i, w in enumerate(weights):
        if not (0 <= w <= 1):
            problems.append(f"weight[{i}] = {_fmt(w)} outside [0, 1]")
    total = sum(weights)
    if abs(total - 1) > WEIGHT_TOLERANCE:
        problems.append(f"weights sum {_fmt(total)} ≠ 1")
    return problems


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


@dataclass(frozen=True)
class Violation:
    """One failed invariant; ``where`` names the offending node or field."""

    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


@dataclass(frozen=True)
class SystemSpec:
    components: Mapping[str, ComponentParams]
    root: SystemExpr
    name: str | None = field(default=None, compare=False)
    description: str | None = field(default=None, compare=False)
    _order: tuple[str, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        comps = dict(self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_order", tuple(comps))

    @classmethod
    def create(
        cls,
        components: Sequence[ComponentParams] | Mapping[str, ComponentParams],
        root: SystemExpr,
        name: str | None = None,
        description: str | None = None,
    ) -> SystemSpec:
        """Canonicalize ``root`` and return a spec, or raise ``InvalidSpec``."""
        if isinstance(components, Mapping):
            comp_list = list(components.values())
        else:
            comp_list = list(components)
        violations = _component_violations(comp_list)
        try:
            root = canonicalize(root)
        except MalformedExpression as exc:
            violations.append(Violation("system", str(exc)))
            raise InvalidSpec(violations) from None
        spec = cls({c.id: c for c in comp_list}, root, name, description)
        violations.extend(_expr_violations(spec.root, spec.components, "system"))
        if violations:
            raise InvalidSpec(violations)
        return spec

    def component_list(self) -> list[ComponentParams]:
        return [self.components[k] for k in self._order]

    def static_probabilities(self) -> dict[str, float]:
        """Map of component id to its static success probability, where set."""
        return {
            c.id: c.static_p for c in self.components.values() if c.static_p is not None
        }

    def leaves(self) -> list[ComponentParams]:
        """Components in leaf order; repeats appear once per occurrence."""
        return [self.components[leaf.component] for leaf in iter_leaves(self.root)]


def iter_leaves(expr: SystemExpr) -> Iterator[Leaf]:
    if isinstance(expr, Leaf):
        yield expr
    else:
        for child in expr.children:
            yield from iter_leaves(child)


def canonicalize(expr: SystemExpr) -> SystemExpr:
    """Flatten nested series and desugar uniform choices.

    Raises:
        MalformedExpression: for a series or choice with fewer than two
            children, or an unknown node type.
    """
    if isinstance(expr, Leaf):
        return expr
    if isinstance(expr, Series):
        if len(expr.children) < 2:
            raise MalformedExpression(
                f"series needs at least 2 children, got {len(expr.children)}"
            )
        flat: list[SystemExpr] = []
        for child in expr.children:
            child = canonicalize(child)
            if isinstance(child, Series):
                flat.extend(child.children)
            else:
                flat.append(child)
        return Series(*flat)
    if isinstance(expr, ProbChoice):
        if len(expr.branches) < 2:
            raise MalformedExpression(
                f"choice needs at least 2 branches, got {len(expr.branches)}"
            )
        return ProbChoice(*((w, canonicalize(e)) for w, e in expr.branches))
    if isinstance(expr, UniformChoice):
        n = len(expr.children)
        if n < 2:
            raise MalformedExpression(f"choice needs at least 2 branches, got {n}")
        return ProbChoice(*((1.0 / n, canonicalize(e)) for e in expr.children))
    raise MalformedExpression(f"not a system expression: {expr!r}")


def is_canonical(expr: SystemExpr) -> bool:
    if isinstance(expr, Leaf):
        return True
    if isinstance(expr, UniformChoice):
        return False
    if isinstance(expr, Series):
        if any(isinstance(c, Series) for c in expr.children):
            return False
    return len(expr.children) >= 2 and all(is_canonical(c) for c in expr.children)


def validate(spec: SystemSpec) -> list[Violation]:
    """Return every invariant violation in ``spec``; empty means valid."""
    violations = _component_violations(spec.component_list())
    violations.extend(_expr_violations(spec.root, spec.components, "system"))
    if not _has_malformed(spec.root) and not is_canonical(spec.root):
        violations.append(Violation("system", "expression is not canonical"))
    return violations


def _has_malformed(expr: SystemExpr) -> bool:
    if isinstance(expr, Leaf):
        return False
    children = getattr(expr, "children", None)
    if children is None:
        return True
    return len(children) < 2 or any(_has_malformed(c) for c in children)


def _component_violations(components: Sequence[ComponentParams]) -> list[Violation]:
    out = []
    seen: set[str] = set()
    for i, c in enumerate(components):
        where = f"components[{i}]"
        if not isinstance(c.id, str) or not c.id:
            out.append(Violation(f"{where}.id", "component id must be a non-empty string"))
        elif c.id in seen:
            out.append(Violation(f"{where}.id", f"duplicate component id {c.id}"))
        seen.add(c.id)
        if not (math.isfinite(c.lam) and c.lam > 0):
            out.append(Violation(f"{where}.lambda", f"failure rate must be finite and > 0, got {c.lam}"))
        if not (math.isfinite(c.t0) and c.t0 >= 0):
            out.append(Violation(f"{where}.t0", f"installation time must be finite and >= 0, got {c.t0}"))
        if c.static_p is not None and not (0 <= c.static_p <= 1):
            out.append(Violation(f"{where}.p", f"probability must lie in [0, 1], got {c.static_p}"))
    return out


def _expr_violations(
    expr: SystemExpr, components: Mapping[str, ComponentParams], where: str
) -> list[Violation]:
    if isinstance(expr, Leaf):
        if expr.component not in components:
            return [Violation(where, f"unresolved reference {expr.component}")]
        return []
    if isinstance(expr, Series):
        tag, children = "series", expr.children
    elif isinstance(expr, ProbChoice):
        tag, children = "choice", expr.children
    elif isinstance(expr, UniformChoice):
        tag, children = "uniform", expr.children
    else:
        return [Violation(where, f"not a system expression: {expr!r}")]
    out = []
    if len(children) < 2:
        out.append(Violation(where, f"{tag} needs at least 2 children, got {len(children)}"))
    if isinstance(expr, ProbChoice):
        out.extend(Violation(where, p) for p in weight_problems(expr.weights))
    for i, child in enumerate(children):
        out.extend(_expr_violations(child, components, f"{where}.{tag}[{i}]"))
    return out


def shape_of(expr: SystemExpr) -> str:
    """Classify a canonical expression as flat-series, flat-parallel, or nested.

    A lone leaf counts as a one-component series.
    """
    if isinstance(expr, Leaf):
        return "flat-series"
    if all(isinstance(c, Leaf) for c in expr.children):
        if isinstance(expr, Series):
            return "flat-series"
        if isinstance(expr, ProbChoice):
            return "flat-parallel"
    return "nested"
