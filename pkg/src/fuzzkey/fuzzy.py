"""Mamdani fuzzy inference over scalar domains.

Membership functions are trapezoids (a triangle is a trapezoid with
``b == c``). Rules combine ``variable is Term`` atoms with AND (min) and
OR (max); implication clips the consequent at the firing strength and
aggregation takes the pointwise max on a uniform output grid, which is
then collapsed by centroid defuzzification.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .errors import ConfigError

DEFAULT_GRID_POINTS = 1001


@dataclass(frozen=True)
class MembershipFunction:
    """Trapezoid ``[a, b, c, d]`` with ``a <= b <= c <= d``."""

    a: float
    b: float
    c: float
    d: float
    kind: str = "trapezoid"

    def __post_init__(self):
        params = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(p) for p in params):
            raise ConfigError(f"membership parameters must be finite: {params}")
        if not self.a <= self.b <= self.c <= self.d:
            raise ConfigError(f"membership parameters must satisfy a<=b<=c<=d: {params}")
        if self.kind not in ("trapezoid", "triangle"):
            raise ConfigError(f"unknown membership kind {self.kind!r}")
        if self.kind == "triangle" and self.b != self.c:
            raise ConfigError("a triangle needs b == c")

    @classmethod
    def trapezoid(cls, a: float, b: float, c: float, d: float) -> MembershipFunction:
        return cls(float(a), float(b), float(c), float(d))

    @classmethod
    def triangle(cls, a: float, peak: float, c: float) -> MembershipFunction:
        return cls(float(a), float(peak), float(peak), float(c), kind="triangle")

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def __call__(self, x: float) -> float:
        return eval_membership(self, x)

    def sample(self, xs: np.ndarray) -> np.ndarray:
        """Vectorised :func:`eval_membership` over an array of points."""
        a, b, c, d = self.params
        xs = np.asarray(xs, dtype=float)
        out = np.zeros_like(xs)
        if b > a:
            rising = (xs > a) & (xs < b)
            out[rising] = (xs[rising] - a) / (b - a)
        if d > c:
            falling = (xs > c) & (xs < d)
            out[falling] = (d - xs[falling]) / (d - c)
        out[(xs >= b) & (xs <= c)] = 1.0
        return out


def eval_membership(mf: MembershipFunction, x: float) -> float:
    """Degree of ``x`` in the trapezoid ``mf``.

    The plateau test runs first so a degenerate shoulder (``a == b`` or
    ``c == d``) keeps the value 1 on its closed boundary.
    """
    a, b, c, d = mf.a, mf.b, mf.c, mf.d
    if b <= x <= c:
        return 1.0
    if x <= a or x >= d:
        return 0.0
    if x < b:
        return (x - a) / (b - a)
    return (d - x) / (d - c)


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    domain: tuple[float, float]
    terms: Mapping[str, MembershipFunction]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.domain)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ConfigError(f"{self.name}: domain must be a finite interval lo < hi")
        if not self.terms:
            raise ConfigError(f"{self.name}: at least one term is required")
        for term, mf in self.terms.items():
            if mf.a < lo or mf.d > hi:
                raise ConfigError(f"{self.name}.{term}: support {mf.a, mf.d} outside domain {lo, hi}")
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "terms", MappingProxyType(dict(self.terms)))

    def clamp(self, x: float) -> float:
        lo, hi = self.domain
        return min(max(float(x), lo), hi)

    def __hash__(self):
        return hash((self.name, self.domain, tuple(self.terms.items())))


def fuzzify(var: FuzzyVariable, x: float) -> dict[str, float]:
    """Membership degree of ``x`` (clamped into the domain) in every term."""
    x = var.clamp(x)
    return {term: eval_membership(mf, x) for term, mf in var.terms.items()}


# --------------------------------------------------------------------------
# rule antecedents


@dataclass(frozen=True)
class Atom:
    variable: str
    term: str

    def degree(self, fuzzified: Mapping[str, Mapping[str, float]]) -> float:
        return fuzzified[self.variable][self.term]

    def atoms(self) -> Iterable[Atom]:
        yield self

    def __str__(self):
        return f"{self.variable} is {self.term}"


@dataclass(frozen=True)
class And:
    operands: tuple[Expr, ...]

    def degree(self, fuzzified):
        return min(op.degree(fuzzified) for op in self.operands)

    def atoms(self):
        for op in self.operands:
            yield from op.atoms()

    def __str__(self):
        return " and ".join(_wrap(op) for op in self.operands)


@dataclass(frozen=True)
class Or:
    operands: tuple[Expr, ...]

    def degree(self, fuzzified):
        return max(op.degree(fuzzified) for op in self.operands)

    def atoms(self):
        for op in self.operands:
            yield from op.atoms()

    def __str__(self):
        return " or ".join(_wrap(op) for op in self.operands)


Expr = Union[Atom, And, Or]


def _wrap(op: Expr) -> str:
    return f"({op})" if isinstance(op, Or) else str(op)


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([A-Za-z_][A-Za-z0-9_]*))")


def parse_antecedent(text: str) -> Expr:
    """Parse ``"cpu_usage is High or (timestamp_drift is Large and ...)"``.

    AND binds tighter than OR; keywords are case-insensitive.
    """
    tokens: list[str] = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ConfigError(f"unexpected character in rule at {pos}: {text!r}")
        tokens.append(m.group(m.lastindex))
        pos = m.end()
    parser = _Parser(tokens, text)
    expr = parser.parse_or()
    if parser.i != len(tokens):
        raise ConfigError(f"trailing tokens in rule: {text!r}")
    return expr


class _Parser:
    def __init__(self, tokens: list[str], text: str):
        self.tokens = tokens
        self.text = text
        self.i = 0

    def _peek(self) -> str | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _take(self) -> str:
        tok = self._peek()
        if tok is None:
            raise ConfigError(f"unexpected end of rule: {self.text!r}")
        self.i += 1
        return tok

    def parse_or(self) -> Expr:
        ops = [self.parse_and()]
        while (self._peek() or "").lower() == "or":
            self.i += 1
            ops.append(self.parse_and())
        return ops[0] if len(ops) == 1 else Or(tuple(ops))

    def parse_and(self) -> Expr:
        ops = [self.parse_primary()]
        while (self._peek() or "").lower() == "and":
            self.i += 1
            ops.append(self.parse_primary())
        return ops[0] if len(ops) == 1 else And(tuple(ops))

    def parse_primary(self) -> Expr:
        tok = self._take()
        if tok == "(":
            expr = self.parse_or()
            if self._take() != ")":
                raise ConfigError(f"unbalanced parentheses in rule: {self.text!r}")
            return expr
        if tok in ("(", ")") or tok.lower() in ("and", "or", "is"):
            raise ConfigError(f"expected a variable name, got {tok!r} in {self.text!r}")
        if self._take().lower() != "is":
            raise ConfigError(f"expected 'is' after {tok!r} in {self.text!r}")
        term = self._take()
        if term in ("(", ")"):
            raise ConfigError(f"expected a term name after 'is' in {self.text!r}")
        return Atom(tok, term)


@dataclass(frozen=True)
class Rule:
    antecedent: Expr
    consequent: str

    @classmethod
    def parse(cls, antecedent: str, consequent: str) -> Rule:
        return cls(parse_antecedent(antecedent), consequent)

    def __str__(self):
        return f"if {self.antecedent} then {self.consequent}"


@dataclass(frozen=True)
class RuleBase:
    """Input variables, ordered rules and the output variable of one FIS."""

    inputs: Mapping[str, FuzzyVariable]
    rules: tuple[Rule, ...]
    output: FuzzyVariable
    grid_points: int = DEFAULT_GRID_POINTS
    _grid: np.ndarray = field(init=False, repr=False, compare=False)
    _consequents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", MappingProxyType(dict(self.inputs)))
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ConfigError("a rule base needs at least one rule")
        if self.grid_points < 3:
            raise ConfigError("grid_points must be >= 3")
        for rule in self.rules:
            for atom in rule.antecedent.atoms():
                var = self.inputs.get(atom.variable)
                if var is None:
                    raise ConfigError(f"rule {rule} references unknown variable {atom.variable!r}")
                if atom.term not in var.terms:
                    raise ConfigError(f"rule {rule} references unknown term {atom.variable}.{atom.term}")
            if rule.consequent not in self.output.terms:
                raise ConfigError(f"rule {rule} has unknown output term {rule.consequent!r}")
        grid = np.linspace(*self.output.domain, self.grid_points)
        cons = np.stack([self.output.terms[r.consequent].sample(grid) for r in self.rules])
        grid.setflags(write=False)
        cons.setflags(write=False)
        object.__setattr__(self, "_grid", grid)
        object.__setattr__(self, "_consequents", cons)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    @property
    def consequent_samples(self) -> np.ndarray:
        """Array of shape (n_rules, grid_points): each rule's consequent term on the grid."""
        return self._consequents

    def with_grid(self, grid_points: int) -> RuleBase:
        return RuleBase(self.inputs, self.rules, self.output, grid_points)

    def referenced_variables(self) -> set[str]:
        return {a.variable for r in self.rules for a in r.antecedent.atoms()}

    def firing_strengths(self, inputs: Mapping[str, float]) -> np.ndarray:
        missing = self.referenced_variables() - set(inputs)
        if missing:
            raise ConfigError(f"missing input value(s) for {sorted(missing)}")
        fuzzified = {name: fuzzify(self.inputs[name], inputs[name]) for name in self.referenced_variables()}
        return np.array([r.antecedent.degree(fuzzified) for r in self.rules])


class AggregatedSet(NamedTuple):
    grid: np.ndarray
    degrees: np.ndarray


class Defuzzified(NamedTuple):
    value: float
    no_rule_fired: bool


def aggregate(rb: RuleBase, strengths: Sequence[float]) -> AggregatedSet:
    """Clip every consequent at its rule's strength and take the pointwise max."""
    strengths = np.clip(np.asarray(strengths, dtype=float), 0.0, 1.0)
    if strengths.shape != (len(rb.rules),):
        raise ConfigError(f"expected {len(rb.rules)} firing strengths, got {strengths.shape}")
    clipped = np.minimum(rb.consequent_samples, strengths[:, None])
    return AggregatedSet(rb.grid, clipped.max(axis=0))


def infer(rb: RuleBase, inputs: Mapping[str, float]) -> AggregatedSet:
    """Mamdani min/max inference of crisp ``inputs`` through ``rb``."""
    return aggregate(rb, rb.firing_strengths(inputs))


def defuzzify_centroid(agg: AggregatedSet) -> Defuzzified:
    """Centroid ``sum(x*mu)/sum(mu)`` of a sampled set.

    An all-zero set yields the grid midpoint with ``no_rule_fired`` set;
    callers should treat that as an indeterminate result.
    """
    grid, mu = agg
    total = float(mu.sum())
    if total <= 0.0:
        return Defuzzified((float(grid[0]) + float(grid[-1])) / 2.0, True)
    value = float(np.dot(grid, mu) / total)
    return Defuzzified(min(max(value, float(grid[0])), float(grid[-1])), False)
