"""Moment relaxation of a planning program, dense or clique-sparse.

Lifting works in three stages:

1. Every equality constraint h == 0 is multiplied by all monomials of its
   owning clique up to the degree budget, and the resulting rows are folded
   into a linear *normal form*: each row eliminates its graded-lex-largest
   monomial, expressing that pseudo-moment as a combination of smaller kept
   ones.  This imposes the equality rows exactly while shrinking both the
   moment vector and the matrix bases.
2. Per clique, a moment matrix is built on the kept monomials of degree <=
   order, plus one localizing matrix per inequality on the kept monomials of
   degree <= order - ceil(deg g / 2).  Every matrix entry is an affine
   function of the canonical moment vector y.  Shared monomials of
   overlapping cliques resolve to a single y position (lowest clique wins),
   so cross-clique consistency is automatic.
3. The result bridges to the solver's primal standard form as its Lagrangian
   dual: moment matrices reappear as dual slacks and the moment vector as the
   dual multipliers.

Eliminating a monomial via its row is an exact reformulation: the feasible
moment vectors are unchanged, and the reduced-basis matrices are congruent
transforms of the full-basis ones (the full matrix is Z M_red Z^T for the
full-column-rank basis-change Z), so positive semidefiniteness of one is
equivalent to that of the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from lpp.planning import PlanningPOP, clique_partition
from lpp.poly import Monomial, Polynomial, Variable, grlex_key, monomial_basis
from lpp.sdp import ConicSDP

__all__ = [
    "LinComb",
    "MomentIndex",
    "MomentBlock",
    "MomentSDP",
    "RelaxationError",
    "dense_relaxation",
    "sparse_relaxation",
    "lift_functional",
    "assemble_moment_matrix",
    "reduced_moment_matrix",
    "moment_vector_from_point",
    "dump_symbolic_block",
]

_ONE = Monomial()

PIVOT_REL_TOL = 1e-8  # rows with a weaker leading coefficient are dropped, not pivoted
NOISE_REL_TOL = 1e-13  # coefficient pruning during reduction
ROW_FEAS_TOL = 1e-7  # |constant| above this in an empty row marks infeasibility


class RelaxationError(ValueError):
    pass


@dataclass
class LinComb:
    """Affine function of the canonical moment vector: sum coeffs[i] * y_i + const."""

    coeffs: dict[int, float]
    const: float

    def value(self, y) -> float:
        return self.const + sum(c * y[i] for i, c in self.coeffs.items())


class _Eliminator:
    """Incremental Gaussian elimination over monomial rows with graded-lex pivoting.

    Maintains ``nf``: eliminated monomial -> (expression over kept monomials,
    constant), always fully back-substituted, with every expression monomial
    strictly smaller than its pivot.
    """

    def __init__(self):
        self.nf: dict[Monomial, tuple[dict[Monomial, float], float]] = {}
        self._uses: dict[Monomial, set[Monomial]] = {}
        self.dropped_rows = 0
        self.n_rows = 0
        self.infeasible_reason: str | None = None

    def reduce_terms(self, terms) -> tuple[dict[Monomial, float], float]:
        """Substitute all eliminated monomials; returns (kept coeffs, const)."""
        out: dict[Monomial, float] = {}
        const = 0.0
        for m, v in terms:
            if m.is_constant():
                const += v
                continue
            e = self.nf.get(m)
            if e is None:
                out[m] = out.get(m, 0.0) + v
            else:
                expr, k = e
                const += v * k
                for mm, vv in expr.items():
                    out[mm] = out.get(mm, 0.0) + v * vv
        if out:
            scale = max(abs(c) for c in out.values())
            out = {m: c for m, c in out.items() if abs(c) > NOISE_REL_TOL * scale}
        return out, const

    def add_row(self, terms) -> None:
        self.n_rows += 1
        out, const = self.reduce_terms(terms)
        if not out:
            if abs(const) > ROW_FEAS_TOL:
                self.infeasible_reason = f"equality row reduced to {const!r} == 0"
            return
        scale = max(abs(c) for c in out.values())
        pivot = max(out, key=grlex_key)
        pc = out.pop(pivot)
        if abs(pc) < PIVOT_REL_TOL * scale:
            # unsafe division; dropping the row only loosens the relaxation
            self.dropped_rows += 1
            return
        expr = {m: -v / pc for m, v in out.items()}
        ec = -const / pc
        self.nf[pivot] = (expr, ec)
        for m in expr:
            self._uses.setdefault(m, set()).add(pivot)
        # keep existing entries fully substituted
        for key in self._uses.pop(pivot, ()):  # entries whose expression used the pivot
            coeffs, kc = self.nf[key]
            w = coeffs.pop(pivot, None)
            if w is None:
                continue
            kc += w * ec
            for mm, vv in expr.items():
                nv = coeffs.get(mm, 0.0) + w * vv
                if nv == 0.0:
                    coeffs.pop(mm, None)
                else:
                    coeffs[mm] = nv
                    self._uses.setdefault(mm, set()).add(key)
            self.nf[key] = (coeffs, kc)

    def resolve(self, m: Monomial) -> tuple[dict[Monomial, float], float]:
        if m.is_constant():
            return {}, 1.0
        e = self.nf.get(m)
        if e is None:
            return {m: 1.0}, 0.0
        return e


@dataclass
class MomentBlock:
    """One positive-semidefinite block of the relaxation."""

    clique_index: int
    kind: str  # "moment" or "localizing"
    inequality_index: int | None
    basis: tuple[Monomial, ...]
    entries: dict[tuple[int, int], LinComb]  # upper triangle, i <= j

    @property
    def size(self) -> int:
        return len(self.basis)


@dataclass
class MomentIndex:
    """Bijection between pseudo-moments and flat y positions, plus the normal form.

    ``y_monomials[i]`` is the canonical monomial for position ``i``; cliques
    are scanned in chain order and a monomial shared by several cliques is
    indexed where it first appears, which is the aliasing rule making shared
    moments automatically consistent.  Monomials eliminated by equality rows
    resolve through the normal form instead of owning a position.
    """

    order: int
    cliques: list[tuple[Variable, ...]]
    bases_full: list  # per clique: degree-order Basis over the clique variables
    bases_2k: list  # per clique: degree-2*order Basis (documented enumeration)
    y_monomials: list[Monomial] = field(default_factory=list)
    y_position: dict[Monomial, int] = field(default_factory=dict)
    _elim: _Eliminator = field(default_factory=_Eliminator)

    def resolve(self, m: Monomial) -> LinComb:
        expr, const = self._elim.resolve(m)
        coeffs = {}
        for mm, c in expr.items():
            pos = self.y_position.get(mm)
            if pos is None:
                raise RelaxationError(f"monomial {mm!r} has no moment position")
            coeffs[pos] = coeffs.get(pos, 0.0) + c
        return LinComb(coeffs, const)

    def lift(self, p: Polynomial) -> LinComb:
        coeffs: dict[int, float] = {}
        const = 0.0
        for m, c in p.terms.items():
            if m.degree > 2 * self.order:
                raise RelaxationError(
                    f"monomial of degree {m.degree} exceeds the moment budget {2 * self.order}"
                )
            expr, k = self._elim.resolve(m)
            const += c * k
            for mm, v in expr.items():
                pos = self.y_position.get(mm)
                if pos is None:
                    raise RelaxationError(f"monomial {mm!r} has no moment position")
                coeffs[pos] = coeffs.get(pos, 0.0) + c * v
        return LinComb(coeffs, const)

    def first_order(self, var: Variable) -> LinComb:
        return self.lift_monomial(Monomial.of(var))

    def lift_monomial(self, m: Monomial) -> LinComb:
        expr, k = self._elim.resolve(m)
        coeffs = {}
        for mm, v in expr.items():
            pos = self.y_position.get(mm)
            if pos is None:
                raise RelaxationError(f"monomial {mm!r} has no moment position")
            coeffs[pos] = v
        return LinComb(coeffs, k)

    @property
    def n_moments(self) -> int:
        return len(self.y_monomials)


@dataclass
class MomentSDP:
    """Block relaxation: PSD blocks affine in y, a linear objective, and the index."""

    index: MomentIndex
    blocks: list[MomentBlock]
    objective: LinComb
    pop: PlanningPOP
    n_equality_rows: int
    dropped_rows: int
    infeasible_reason: str | None

    def to_conic(self) -> ConicSDP:
        """Standard-form program whose Lagrangian dual is this relaxation.

        Slack of dual constraint b reproduces block b; the dual multiplier
        vector is the moment vector y; the relaxation optimum equals
        ``objective.const - primal_optimum``.
        """
        m = self.index.n_moments
        b = [0.0] * m
        for i, c in self.objective.coeffs.items():
            b[i] = -c
        sizes = []
        kinds = []
        consts = []
        coeff_entries = []  # per block: dict[(i,j)] -> list[(y_pos, value)]
        scalars = []  # collected 1x1 blocks into one diagonal block
        for blk in self.blocks:
            if blk.size == 1:
                scalars.append(blk)
                continue
            sizes.append(blk.size)
            kinds.append("psd")
            cmat = {}
            amat = {}
            for (i, j), lc in blk.entries.items():
                if lc.const != 0.0:
                    cmat[(i, j)] = lc.const
                for pos, v in lc.coeffs.items():
                    amat.setdefault((i, j), []).append((pos, -v))
            consts.append(cmat)
            coeff_entries.append(amat)
        if scalars:
            n = len(scalars)
            sizes.append(n)
            kinds.append("diag")
            cmat = {}
            amat = {}
            for t, blk in enumerate(scalars):
                lc = blk.entries[(0, 0)]
                if lc.const != 0.0:
                    cmat[(t, t)] = lc.const
                for pos, v in lc.coeffs.items():
                    amat.setdefault((t, t), []).append((pos, -v))
            consts.append(cmat)
            coeff_entries.append(amat)
        return ConicSDP.from_entries(sizes, kinds, consts, coeff_entries, b)

    def moment_optimum(self, conic_primal_objective: float) -> float:
        return self.objective.const - conic_primal_objective

    def scalar_block_order(self) -> list[int]:
        """Indices into ``blocks`` of the 1x1 blocks folded into the diag block."""
        return [i for i, blk in enumerate(self.blocks) if blk.size == 1]


def _degree_budget_ok(pop: PlanningPOP, order: int) -> None:
    d_g = 1
    for g in pop.inequalities:
        d_g = max(d_g, math.ceil(g.degree / 2))
    for h in pop.equalities:
        d_g = max(d_g, math.ceil(h.degree / 2))
    if order < d_g:
        raise RelaxationError(f"relaxation order {order} is below the minimum {d_g}")
    if pop.objective.degree > 2 * order:
        raise RelaxationError("objective degree exceeds the moment budget")


def _owning_clique(support: frozenset[int], clique_sets: list[frozenset[int]]) -> int:
    for k, cs in enumerate(clique_sets):
        if support <= cs:
            return k
    raise RelaxationError("constraint not supported by any clique")


def _relax(pop: PlanningPOP, order: int, cliques: list[tuple[Variable, ...]]) -> MomentSDP:
    _degree_budget_ok(pop, order)
    clique_sets = [frozenset(v.index for v in c) for c in cliques]

    bases_full = [monomial_basis(c, order) for c in cliques]
    bases_2k = [monomial_basis(c, 2 * order) for c in cliques]

    elim = _Eliminator()
    # equality rows h * x^beta, beta over the owning clique up to the budget
    for h in pop.equalities:
        if h.is_zero():
            continue
        k = _owning_clique(h.support_vars(), clique_sets)
        budget = 2 * order - h.degree
        if budget < 0:
            raise RelaxationError("equality degree exceeds the moment budget")
        for beta in monomial_basis(cliques[k], budget):
            elim.add_row(((m.mul(beta), c) for m, c in h.sorted_terms()))

    idx = MomentIndex(
        order=order,
        cliques=list(cliques),
        bases_full=bases_full,
        bases_2k=bases_2k,
        _elim=elim,
    )

    def register(m: Monomial) -> int:
        pos = idx.y_position.get(m)
        if pos is None:
            pos = len(idx.y_monomials)
            idx.y_monomials.append(m)
            idx.y_position[m] = pos
        return pos

    def lincomb_of(terms) -> LinComb:
        expr, const = elim.reduce_terms(terms)
        coeffs: dict[int, float] = {}
        for mm in sorted(expr, key=grlex_key):
            coeffs[register(mm)] = expr[mm]
        return LinComb(coeffs, const)

    blocks: list[MomentBlock] = []
    reduced_bases: list[list[Monomial]] = []
    for k, basis in enumerate(bases_full):
        kept = [m for m in basis if m.is_constant() or m not in elim.nf]
        reduced_bases.append(kept)
        entries: dict[tuple[int, int], LinComb] = {}
        for i in range(len(kept)):
            for j in range(i, len(kept)):
                entries[(i, j)] = lincomb_of(((kept[i].mul(kept[j]), 1.0),))
        blocks.append(
            MomentBlock(
                clique_index=k,
                kind="moment",
                inequality_index=None,
                basis=tuple(kept),
                entries=entries,
            )
        )

    for gi, g in enumerate(pop.inequalities):
        if g.is_zero():
            continue
        k = _owning_clique(g.support_vars(), clique_sets)
        d_i = max(1, math.ceil(g.degree / 2))
        loc_basis = [
            m
            for m in monomial_basis(cliques[k], order - d_i)
            if m.is_constant() or m not in elim.nf
        ]
        entries = {}
        gterms = g.sorted_terms()
        for i in range(len(loc_basis)):
            for j in range(i, len(loc_basis)):
                bb = loc_basis[i].mul(loc_basis[j])
                entries[(i, j)] = lincomb_of(((m.mul(bb), c) for m, c in gterms))
        blocks.append(
            MomentBlock(
                clique_index=k,
                kind="localizing",
                inequality_index=gi,
                basis=tuple(loc_basis),
                entries=entries,
            )
        )

    objective = lincomb_of(pop.objective.terms.items())

    return MomentSDP(
        index=idx,
        blocks=blocks,
        objective=objective,
        pop=pop,
        n_equality_rows=elim.n_rows,
        dropped_rows=elim.dropped_rows,
        infeasible_reason=pop.infeasible_reason or elim.infeasible_reason,
    )


def dense_relaxation(pop: PlanningPOP, order: int) -> MomentSDP:
    """Single-clique relaxation over all free variables at the given order."""
    all_vars = pop.free_variables
    if not all_vars:
        support = set()
        for p in [pop.objective, *pop.equalities, *pop.inequalities]:
            support |= p.support_vars()
        all_vars = tuple(pop.registry[i] for i in sorted(support))
    if not all_vars:
        raise RelaxationError("program has no variables")
    return _relax(pop, order, [tuple(all_vars)])


def sparse_relaxation(pop: PlanningPOP, order: int) -> MomentSDP:
    """Clique-sparse relaxation; the clique chain is validated first."""
    cliques = clique_partition(pop)
    return _relax(pop, order, [tuple(c) for c in cliques])


def lift_functional(p: Polynomial, idx: MomentIndex) -> LinComb:
    """Linear functional of the moment vector substituting pseudo-moments for monomials.

    Requires the support of ``p`` to lie inside one clique.
    """
    support = p.support_vars()
    if support and not any(
        support <= frozenset(v.index for v in c) for c in idx.cliques
    ):
        raise RelaxationError("polynomial support is not contained in any clique")
    return idx.lift(p)


def assemble_moment_matrix(y, clique_index: int, idx: MomentIndex):
    """Numeric full-basis moment matrix of one clique at the solved moment vector.

    Entry (a, b) is the value of the pseudo-moment of basis[a]*basis[b],
    resolved through the normal form; exact symmetry holds by construction.

    Raises :class:`RelaxationError` when an entry's pseudo-moment is left
    undetermined by the relaxation (possible when equality rows pin all
    low-degree moments but the degree budget truncates their high-degree
    consequences); certification then falls back to the reduced block, which
    is the object the solver actually constrained.
    """
    import numpy as np

    basis = idx.bases_full[clique_index]
    n = len(basis)
    M = np.empty((n, n))
    cache: dict[Monomial, float] = {}
    missing: list[Monomial] = []
    for i in range(n):
        for j in range(i, n):
            m = basis[i].mul(basis[j])
            val = cache.get(m)
            if val is None:
                try:
                    val = idx.lift_monomial(m).value(y)
                except RelaxationError:
                    missing.append(m)
                    val = float("nan")
                cache[m] = val
            M[i, j] = M[j, i] = val
    if missing:
        raise RelaxationError(
            f"{len(missing)} pseudo-moments of clique {clique_index} are not "
            f"determined by the relaxation (first: {missing[0]!r}); "
            "use the reduced moment block for certification"
        )
    return M


def reduced_moment_matrix(y, block: MomentBlock):
    """Numeric reduced-basis block at the solved moment vector."""
    import numpy as np

    n = block.size
    M = np.empty((n, n))
    for (i, j), lc in block.entries.items():
        v = lc.value(y)
        M[i, j] = M[j, i] = v
    return M


def moment_vector_from_point(idx: MomentIndex, point) -> list[float]:
    """Pseudo-moments of the point mass at the given assignment (a Dirac vector)."""
    y = []
    for m in idx.y_monomials:
        v = 1.0
        for i, e in m.exps:
            v *= point[i] ** e
        y.append(v)
    return y


def dump_symbolic_block(sdp: MomentSDP, block_index: int) -> str:
    """Deterministic text table of one block; pure pseudo-moment entries print
    as ``y_{alpha}`` with exponents over the owning clique's variables."""
    blk = sdp.blocks[block_index]
    basis2k = sdp.index.bases_2k[blk.clique_index]
    pos_label = {}
    for m in basis2k:
        pos = sdp.index.y_position.get(m)
        if pos is not None and pos not in pos_label:
            pos_label[pos] = basis2k.label(m)

    def fmt(lc: LinComb) -> str:
        parts = []
        if lc.const != 0.0 or not lc.coeffs:
            parts.append(repr(lc.const))
        for pos in sorted(lc.coeffs):
            c = lc.coeffs[pos]
            label = pos_label.get(pos, f"y[{pos}]")
            parts.append(label if c == 1.0 else f"{c!r}*{label}")
        return " + ".join(parts)

    n = blk.size
    rows = []
    for i in range(n):
        cells = []
        for j in range(n):
            key = (i, j) if i <= j else (j, i)
            cells.append(fmt(blk.entries[key]))
        rows.append(cells)
    width = max(len(c) for row in rows for c in row)
    return "\n".join("  ".join(c.rjust(width) for c in row) for row in rows)
