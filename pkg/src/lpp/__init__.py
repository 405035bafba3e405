"""Rigid-body motion planning as quadratic polynomial programs, solved by
moment relaxation and a built-in interior-point SDP solver."""

from lpp.poly import (
    Basis,
    Monomial,
    Polynomial,
    Variable,
    VariableRegistry,
    monomial_basis,
    parse_polynomial,
)

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "Monomial",
    "Polynomial",
    "Variable",
    "VariableRegistry",
    "monomial_basis",
    "parse_polynomial",
    "__version__",
]
