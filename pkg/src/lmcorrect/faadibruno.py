"""Terms of ``d^n/dt^n f(x(t))`` and the matching finite-step identities.

The n-th total derivative of a composition ``f(x(t))`` is a sum of terms

    coefficient * f^(d)[ x^(a_1), ..., x^(a_d) ]

with ``a_1 + ... + a_d = n`` (Faa di Bruno's formula).  The terms are built
here by repeatedly applying ``d/dt`` as a term-rewriting rule and collecting
like terms; an independent set-partition enumeration cross-checks the
coefficients in the test suite.

Substituting scaled step corrections ``c_k`` for the time derivatives turns
the same expansion into the identity used to solve for the order-n correction
of a finite optimization step; :func:`correction_identity_terms` produces it
with exact rational coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

__all__ = [
    "MAX_ORDER",
    "DerivativeTerm",
    "CorrectionTerm",
    "derivative_terms",
    "correction_identity_terms",
    "bell_number",
    "format_derivative_identity",
    "format_correction_formula",
]

# Term counts grow like Bell numbers; 12 keeps generation instant.
MAX_ORDER = 12


@dataclass(frozen=True)
class DerivativeTerm:
    """One collected term ``coefficient * f^(f_order)[x^(a) for a in x_orders]``."""

    coefficient: int
    f_order: int
    x_orders: tuple[int, ...]

    def __post_init__(self):
        if self.coefficient < 1:
            raise ValueError("coefficient must be a positive integer")
        if self.f_order != len(self.x_orders):
            raise ValueError("f_order must equal the number of x-derivative factors")
        if any(a < 1 for a in self.x_orders):
            raise ValueError("x-derivative orders must be >= 1")
        if tuple(sorted(self.x_orders)) != self.x_orders:
            raise ValueError("x_orders must be non-decreasing")

    @property
    def total_order(self) -> int:
        return sum(self.x_orders)


@dataclass(frozen=True)
class CorrectionTerm:
    """One term ``coefficient * f^(f_order)[c_k for k in c_orders]`` of the
    order-n finite-step identity."""

    coefficient: Fraction
    f_order: int
    c_orders: tuple[int, ...]

    def __post_init__(self):
        if self.coefficient <= 0:
            raise ValueError("coefficient must be positive")
        if self.f_order != len(self.c_orders):
            raise ValueError("f_order must equal the number of correction factors")


def _check_order(n: int, minimum: int) -> int:
    if not isinstance(n, int) or isinstance(n, bool):
        raise ValueError(f"order must be an integer, got {n!r}")
    if not minimum <= n <= MAX_ORDER:
        raise ValueError(f"order must be in [{minimum}, {MAX_ORDER}], got {n}")
    return n


def _sort_key(item):
    (f_order, x_orders), _ = item
    return (-f_order, x_orders)


def _differentiate(terms: dict) -> dict:
    """Apply d/dt to a collected term map {(f_order, x_orders): coefficient}."""
    out: dict = {}

    def add(f_order, x_orders, coeff):
        key = (f_order, tuple(sorted(x_orders)))
        out[key] = out.get(key, 0) + coeff

    for (f_order, x_orders), coeff in terms.items():
        # chain rule on f^(d): one extra first-derivative factor
        add(f_order + 1, x_orders + (1,), coeff)
        # product rule: bump each x-derivative factor in turn
        for i, a in enumerate(x_orders):
            add(f_order, x_orders[:i] + (a + 1,) + x_orders[i + 1 :], coeff)
    return out


def derivative_terms(n: int) -> list[DerivativeTerm]:
    """Collected terms of ``d^n/dt^n f(x(t))`` for ``1 <= n <= MAX_ORDER``.

    Terms are sorted by descending ``f_order`` then lexicographic
    ``x_orders``; the coefficient sum equals the n-th Bell number.
    """
    _check_order(n, 1)
    terms = {(1, (1,)): 1}
    for _ in range(n - 1):
        terms = _differentiate(terms)
    return [
        DerivativeTerm(coefficient=c, f_order=d, x_orders=xo)
        for (d, xo), c in sorted(terms.items(), key=_sort_key)
    ]


def correction_identity_terms(n: int) -> tuple[CorrectionTerm, list[CorrectionTerm]]:
    """Finite-step identity at order ``n``: ``lead + sum(rest) = 0``.

    Substituting ``a!-scaled`` corrections for the time derivatives multiplies
    each derivative-term coefficient by the product of factorials of its
    x-derivative orders.  ``lead`` is the unique ``n! * f^(1)[c_n]`` term;
    solving for ``c_n`` divides ``rest`` by ``-n!`` and applies ``J^{-1}``.
    """
    _check_order(n, 2)
    lead = None
    rest = []
    for term in derivative_terms(n):
        coeff = Fraction(term.coefficient)
        for a in term.x_orders:
            coeff *= factorial(a)
        cterm = CorrectionTerm(coefficient=coeff, f_order=term.f_order,
                               c_orders=term.x_orders)
        if term.f_order == 1 and term.x_orders == (n,):
            lead = cterm
        else:
            rest.append(cterm)
    assert lead is not None and lead.coefficient == factorial(n)
    return lead, rest


def bell_number(n: int) -> int:
    """Bell number B(n) via the Bell triangle (B(0) = 1)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for value in row:
            nxt.append(nxt[-1] + value)
        row = nxt
    return row[0]


def _format_factors(symbol: str, orders) -> str:
    return " ".join(f"{symbol}^({a})" for a in orders)


def format_derivative_identity(n: int) -> str:
    """Human-readable expansion of ``d^n/dt^n f(x(t)) = 0``."""
    parts = []
    for term in derivative_terms(n):
        coeff = "" if term.coefficient == 1 else f"{term.coefficient} "
        parts.append(f"{coeff}f^({term.f_order})[{_format_factors('x', term.x_orders)}]")
    return " + ".join(parts) + " = 0"


def format_correction_formula(n: int) -> str:
    """Human-readable solved form ``c_n = -1/n! Jinv(...)`` of the identity."""
    lead, rest = correction_identity_terms(n)
    parts = []
    for term in rest:
        coeff = "" if term.coefficient == 1 else f"{term.coefficient} "
        factors = " ".join(f"c_{a}" for a in term.c_orders)
        parts.append(f"{coeff}f^({term.f_order})[{factors}]")
    return f"c_{n} = -1/{lead.coefficient} Jinv( " + " + ".join(parts) + " )"
