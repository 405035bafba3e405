"""Exact sparse multivariate polynomial arithmetic and graded monomial bases.

Everything downstream (constraint generation, moment indexing, SDP assembly)
is built on the three value types here: :class:`Monomial`, :class:`Polynomial`
and :class:`Basis`, all defined over an append-only :class:`VariableRegistry`.

The global monomial order is graded lexicographic: monomials are sorted first
by total degree, then lexicographically with the lowest-index variable most
significant.  For two variables this lists ``1, x1, x2, x1^2, x1*x2, x2^2``,
which is the order used for all moment-matrix row labels, so keeping it fixed
here keeps moment indices stable across modules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

__all__ = [
    "Variable",
    "VariableRegistry",
    "Monomial",
    "Polynomial",
    "Basis",
    "monomial_basis",
    "grlex_key",
    "parse_polynomial",
]


@dataclass(frozen=True)
class Variable:
    """A scalar decision variable: positional index plus a human-readable name."""

    index: int
    name: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("variable index must be nonnegative")
        if not self.name:
            raise ValueError("variable name must be nonempty")

    def __repr__(self) -> str:
        return f"Variable({self.index}, {self.name!r})"


class VariableRegistry:
    """Append-only list of variables; indices are positional and never reused."""

    def __init__(self) -> None:
        self._vars: list[Variable] = []
        self._by_name: dict[str, Variable] = {}

    def add(self, name: str) -> Variable:
        if name in self._by_name:
            raise ValueError(f"variable name {name!r} already registered")
        v = Variable(len(self._vars), name)
        self._vars.append(v)
        self._by_name[name] = v
        return v

    def add_block(self, prefix: str, n: int) -> list[Variable]:
        """Register ``n`` variables named ``prefix0 .. prefix{n-1}``."""
        return [self.add(f"{prefix}{i}") for i in range(n)]

    def __len__(self) -> int:
        return len(self._vars)

    def __iter__(self) -> Iterator[Variable]:
        return iter(self._vars)

    def __getitem__(self, index: int) -> Variable:
        return self._vars[index]

    def by_name(self, name: str) -> Variable:
        return self._by_name[name]

    @property
    def variables(self) -> tuple[Variable, ...]:
        return tuple(self._vars)


class Monomial:
    """Product of variables with positive integer exponents, stored sparsely.

    ``exps`` is a tuple of ``(variable_index, exponent)`` pairs sorted by
    index; the empty tuple is the constant monomial 1.
    """

    __slots__ = ("exps", "_hash")

    def __init__(self, exps: Iterable[tuple[int, int]] = ()) -> None:
        items = sorted((int(i), int(e)) for i, e in exps if e != 0)
        for _, e in items:
            if e < 0:
                raise ValueError("monomial exponents must be positive")
        seen = [i for i, _ in items]
        if len(set(seen)) != len(seen):
            raise ValueError("duplicate variable in monomial")
        object.__setattr__(self, "exps", tuple(items))
        object.__setattr__(self, "_hash", hash(self.exps))

    def __setattr__(self, *_):  # immutable
        raise AttributeError("Monomial is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self.exps == other.exps

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.exps)

    def is_constant(self) -> bool:
        return not self.exps

    def exponent(self, index: int) -> int:
        for i, e in self.exps:
            if i == index:
                return e
        return 0

    def variables(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.exps)

    def mul(self, other: "Monomial") -> "Monomial":
        acc: dict[int, int] = dict(self.exps)
        for i, e in other.exps:
            acc[i] = acc.get(i, 0) + e
        return Monomial(acc.items())

    def __repr__(self) -> str:
        if not self.exps:
            return "1"
        return "*".join(f"x{i}" if e == 1 else f"x{i}^{e}" for i, e in self.exps)

    @staticmethod
    def of(var: Variable, exp: int = 1) -> "Monomial":
        return Monomial(((var.index, exp),))


ONE = Monomial()


def grlex_key(m: Monomial) -> tuple:
    """Sort key realizing graded lex order (degree, then low-index-first).

    Within one degree the monomial with the higher exponent on the earliest
    variable sorts first, matching the canonical basis listing.
    """
    return (m.degree, tuple((i, -e) for i, e in m.exps))


class Polynomial:
    """Sparse real-coefficient polynomial: a map from Monomial to coefficient.

    Zero coefficients are never stored; two polynomials are equal iff their
    term maps are equal.  The zero polynomial has an empty term map and is
    reported with ``degree == 0`` and ``is_zero() == True`` (no -inf sentinel).
    """

    __slots__ = ("registry", "terms")

    #: coefficients with |c| below this after arithmetic are pruned as zero
    ZERO_TOL = 0.0

    def __init__(self, registry: VariableRegistry, terms: Mapping[Monomial, float] | None = None):
        self.registry = registry
        self.terms: dict[Monomial, float] = {}
        if terms:
            for m, c in terms.items():
                c = float(c)
                if c != 0.0:
                    self.terms[m] = c

    # ---- constructors -------------------------------------------------

    @staticmethod
    def zero(registry: VariableRegistry) -> "Polynomial":
        return Polynomial(registry)

    @staticmethod
    def constant(registry: VariableRegistry, c: float) -> "Polynomial":
        return Polynomial(registry, {ONE: c})

    @staticmethod
    def variable(var: Variable, registry: VariableRegistry) -> "Polynomial":
        return Polynomial(registry, {Monomial.of(var): 1.0})

    # ---- queries -------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(m.degree for m in self.terms)

    def coefficient(self, m: Monomial) -> float:
        return self.terms.get(m, 0.0)

    def support_vars(self) -> frozenset[int]:
        """Indices of all variables appearing with nonzero coefficient."""
        out: set[int] = set()
        for m in self.terms:
            out.update(m.variables())
        return frozenset(out)

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self.terms.items(), key=lambda t: grlex_key(t[0]))

    # ---- arithmetic ----------------------------------------------------

    def _check(self, other: "Polynomial") -> None:
        if self.registry is not other.registry:
            raise ValueError("polynomials over different variable registries")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            v = acc.get(m, 0.0) + c
            if v == 0.0:
                acc.pop(m, None)
            else:
                acc[m] = v
        return Polynomial(self.registry, acc)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            v = acc.get(m, 0.0) - c
            if v == 0.0:
                acc.pop(m, None)
            else:
                acc[m] = v
        return Polynomial(self.registry, acc)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.registry, {m: -c for m, c in self.terms.items()})

    def scale(self, c: float) -> "Polynomial":
        c = float(c)
        if c == 0.0:
            return Polynomial.zero(self.registry)
        return Polynomial(self.registry, {m: c * v for m, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        self._check(other)
        acc: dict[Monomial, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = ma.mul(mb)
                v = acc.get(m, 0.0) + ca * cb
                if v == 0.0:
                    acc.pop(m, None)
                else:
                    acc[m] = v
        return Polynomial(self.registry, acc)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.registry is other.registry
            and self.terms == other.terms
        )

    def __hash__(self):
        raise TypeError("Polynomial is not hashable")

    # ---- evaluation and substitution ------------------------------------

    def evaluate(self, point: Mapping) -> float:
        """Evaluate at an assignment mapping Variable (or index) to value.

        Every variable in the support must be assigned.
        """
        lookup = _index_map(point)
        total = 0.0
        for m, c in self.terms.items():
            v = c
            for i, e in m.exps:
                if i not in lookup:
                    raise KeyError(f"no value assigned to variable index {i}")
                v *= lookup[i] ** e
            total += v
        return total

    def substitute(self, var: Variable, replacement: "Polynomial") -> "Polynomial":
        """Replace ``var`` by ``replacement`` everywhere, expanding products."""
        self._check(replacement)
        idx = var.index
        out = Polynomial.zero(self.registry)
        for m, c in self.terms.items():
            e = m.exponent(idx)
            if e == 0:
                out += Polynomial(self.registry, {m: c})
                continue
            rest = Monomial([(i, k) for i, k in m.exps if i != idx])
            piece = Polynomial(self.registry, {rest: c})
            for _ in range(e):
                piece = piece * replacement
            out += piece
        return out

    def gradient(self) -> dict[int, "Polynomial"]:
        """Partial derivatives keyed by variable index (support only)."""
        out: dict[int, Polynomial] = {}
        for m, c in self.terms.items():
            for i, e in m.exps:
                dm = Monomial([(j, k) for j, k in m.exps if j != i] + ([(i, e - 1)] if e > 1 else []))
                g = out.setdefault(i, Polynomial.zero(self.registry))
                g.terms[dm] = g.terms.get(dm, 0.0) + c * e
        for i in list(out):
            out[i].terms = {m: c for m, c in out[i].terms.items() if c != 0.0}
        return out

    # ---- text round-trip -------------------------------------------------

    def to_string(self) -> str:
        """Deterministic text form, terms in graded lex order.

        Format: ``coeff`` or ``coeff * x3^2*x7`` joined by `` + ``; the zero
        polynomial prints as ``0``.
        """
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            cs = repr(c)
            if m.is_constant():
                parts.append(cs)
            else:
                mono = "*".join(
                    self.registry[i].name if e == 1 else f"{self.registry[i].name}^{e}"
                    for i, e in m.exps
                )
                parts.append(f"{cs} * {mono}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()})"


def _index_map(point: Mapping) -> dict[int, float]:
    out: dict[int, float] = {}
    for k, v in point.items():
        if isinstance(k, Variable):
            out[k.index] = float(v)
        else:
            out[int(k)] = float(v)
    return out


def parse_polynomial(text: str, registry: VariableRegistry) -> Polynomial:
    """Inverse of :meth:`Polynomial.to_string`; names resolve via the registry."""
    text = text.strip()
    if text == "0":
        return Polynomial.zero(registry)
    terms: dict[Monomial, float] = {}
    for part in text.split(" + "):
        part = part.strip()
        if not part:
            raise ValueError("empty term in polynomial text")
        if " * " in part:
            coeff_s, mono_s = part.split(" * ", 1)
            coeff = float(coeff_s)
            exps: dict[int, int] = {}
            for factor in mono_s.split("*"):
                factor = factor.strip()
                if "^" in factor:
                    name, es = factor.split("^")
                    e = int(es)
                else:
                    name, e = factor, 1
                idx = registry.by_name(name).index
                exps[idx] = exps.get(idx, 0) + e
            m = Monomial(exps.items())
        else:
            coeff = float(part)
            m = ONE
        terms[m] = terms.get(m, 0.0) + coeff
    return Polynomial(registry, terms)


@dataclass(frozen=True)
class Basis:
    """All monomials of degree <= r over an ordered variable subset, in graded lex order."""

    elements: tuple[Monomial, ...]
    var_indices: tuple[int, ...]
    r: int

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self.elements)

    def __getitem__(self, i: int) -> Monomial:
        return self.elements[i]

    def index_of(self) -> dict[Monomial, int]:
        return {m: i for i, m in enumerate(self.elements)}

    def label(self, m: Monomial) -> str:
        """Moment label ``y_{a1,...,an}`` with exponents over this basis' variables."""
        exps = ",".join(str(m.exponent(i)) for i in self.var_indices)
        return f"y_{{{exps}}}"


def _monomials_of_degree(var_indices: Sequence[int], d: int) -> Iterator[Monomial]:
    # earliest variable's exponent decreases first: x1^2, x1*x2, x2^2
    if d == 0:
        yield ONE
        return
    if len(var_indices) == 1:
        yield Monomial(((var_indices[0], d),))
        return
    head, rest = var_indices[0], var_indices[1:]
    for e in range(d, -1, -1):
        for tail in _monomials_of_degree(rest, d - e):
            if e == 0:
                yield tail
            else:
                yield Monomial(((head, e),) + tail.exps)


def monomial_basis(variables: Sequence[Variable] | Sequence[int], r: int) -> Basis:
    """Graded lex basis of all monomials of degree <= r over the given variables."""
    if r < 0:
        raise ValueError("degree bound must be nonnegative")
    idxs = tuple(v.index if isinstance(v, Variable) else int(v) for v in variables)
    if not idxs:
        raise ValueError("variable set must be nonempty")
    if len(set(idxs)) != len(idxs):
        raise ValueError("duplicate variables in basis request")
    idxs = tuple(sorted(idxs))
    elems: list[Monomial] = []
    for d in range(r + 1):
        elems.extend(_monomials_of_degree(idxs, d))
    return Basis(tuple(elems), idxs, r)
