"""Finite-difference corrections c2, c3, c4 to a first-order step c1.

A first-order step ``c1`` (Newton, Gauss-Newton or damped) follows the
tangent of the curved pathway along which all residual components shrink
proportionally.  The corrections computed here are the higher Taylor terms of
that pathway, estimated purely from residual evaluations at a small stencil
of offsets around the base point:

* order 2: one extra evaluation at ``x + c1``,
* order 3: four evaluations in two phases (c2 first, then the mixed term),
* order 4: eight evaluations in three phases.

The directional-derivative estimates combine values of the nonlinear defect
``f_nl(x + a) = f(x + a) - (f + J a)`` with fixed weights; each weight set
solves a small Taylor system exactly and is re-derived in exact rational
arithmetic at import time.

Offsets are cached under their exact rational multipliers of (c1, c2, c3) so
coincident stencil points are never evaluated twice.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "StencilEvaluationError",
    "StencilCache",
    "CorrectionSeries",
    "correct_order2",
    "correct_order3",
    "correct_order4",
    "correction_series",
    "pure_direction_estimates",
    "ORDER3_OFFSETS",
    "ORDER3_WEIGHTS",
    "ORDER4_OFFSETS",
    "ORDER4_WEIGHTS",
    "taylor_weight_matrix",
    "solve_exact",
    "STENCIL_EVALUATIONS",
    "WILD_CORRECTION_FACTOR",
]

# Corrections larger than this multiple of |c1| indicate the stencil has
# extrapolated into garbage (near-singular J); the series is truncated there.
WILD_CORRECTION_FACTOR = 1e3

# New residual evaluations consumed per correction series, by order.
STENCIL_EVALUATIONS = {1: 0, 2: 1, 3: 4, 4: 8}


class StencilEvaluationError(RuntimeError):
    """Residual evaluation failed at a stencil offset.

    Attributes
    ----------
    offset_key : tuple of Fraction
        Rational multipliers of (c1, c2, c3) identifying the stencil point.
    point : ndarray
        The input-space point at which evaluation failed.
    """

    def __init__(self, offset_key, point, cause):
        self.offset_key = offset_key
        self.point = point
        super().__init__(
            f"residual evaluation failed at stencil offset {offset_key}: {cause}"
        )


def _key(q1=0, q2=0, q3=0):
    return (Fraction(q1), Fraction(q2), Fraction(q3))


class StencilCache:
    """Residual evaluations keyed by exact rational stencil offsets.

    A key ``(q1, q2, q3)`` denotes the point ``x + q1 c1 + q2 c2 + q3 c3``.
    Rational keys (never floating-point positions) guarantee that coincident
    points across phases are reused; ``new_evaluations`` counts actual calls
    to the evaluator.
    """

    def __init__(self, x, f0, evaluator):
        self.x = np.asarray(x, dtype=float)
        self.f0 = np.asarray(f0, dtype=float)
        self.evaluator = evaluator
        self.directions: dict[int, np.ndarray] = {}
        self._values = {_key(): self.f0}
        self.new_evaluations = 0

    def set_direction(self, index: int, direction) -> None:
        """Bind direction ``index`` (1..3); rebinding to a different vector
        drops every cached entry that depends on it."""
        direction = np.asarray(direction, dtype=float)
        old = self.directions.get(index)
        if old is not None and not np.array_equal(old, direction):
            self._values = {
                key: value for key, value in self._values.items()
                if key[index - 1] == 0
            }
        self.directions[index] = direction

    def offset_vector(self, key) -> np.ndarray:
        offset = np.zeros_like(self.x)
        for q, index in zip(key, (1, 2, 3)):
            if q != 0:
                offset = offset + float(q) * self.directions[index]
        return offset

    def value(self, key) -> np.ndarray:
        """Residual at the offset ``key``, evaluating at most once per key."""
        cached = self._values.get(key)
        if cached is not None:
            return cached
        point = self.x + self.offset_vector(key)
        try:
            result = np.asarray(self.evaluator(point), dtype=float)
        except Exception as exc:
            raise StencilEvaluationError(key, point, exc) from exc
        self.new_evaluations += 1
        self._values[key] = result
        return result


@dataclass(frozen=True)
class CorrectionSeries:
    """Corrections ``[c1, c2, ...]`` for one candidate step.

    The corrected step is the sum of the corrections.  ``truncated`` is set
    when a wild intermediate correction stopped the series short of the
    requested order (see WILD_CORRECTION_FACTOR).
    """

    order: int
    corrections: tuple[np.ndarray, ...]
    evaluation_count: int
    truncated: bool = False

    @property
    def step(self) -> np.ndarray:
        total = self.corrections[0].copy()
        for c in self.corrections[1:]:
            total += c
        return total

    def norms(self) -> list[float]:
        return [float(np.linalg.norm(c)) for c in self.corrections]


def taylor_weight_matrix(offsets, n_derivatives: int):
    """Rows ``[a^2/2!, a^3/3!, ...]`` of the nonlinear-defect Taylor system.

    Row ``i`` holds the exact coefficients with which the pure derivative
    values ``f^(k+2)[c1 ...]`` enter ``f_nl(x + a_i c1)``, Fraction-exact.
    """
    rows = []
    for a in offsets:
        a = Fraction(a)
        fact = 2
        row = []
        power = a * a
        for k in range(n_derivatives):
            row.append(power / fact)
            power *= a
            fact *= k + 3
        rows.append(row)
    return rows


def solve_exact(matrix, rhs):
    """Exact Gaussian elimination over Fractions (tiny systems only)."""
    n = len(matrix)
    aug = [list(row) + [val] for row, val in zip(matrix, rhs)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = Fraction(1) / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [v - f * w for v, w in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def _derive_weights(offsets):
    """Weight tuples extracting each pure derivative from f_nl at ``offsets``."""
    matrix = taylor_weight_matrix(offsets, len(offsets))
    transposed = [[matrix[r][c] for r in range(len(offsets))]
                  for c in range(len(offsets))]
    weights = []
    for target in range(len(offsets)):
        rhs = [Fraction(int(i == target)) for i in range(len(offsets))]
        weights.append(tuple(solve_exact(transposed, rhs)))
    return tuple(weights)


# Hard-coded defect weights for the pure c1-direction derivatives:
# order 3 samples f_nl at offsets (1/2, 1), order 4 at (1/2, 1, 3/2).  Each
# tuple maps those f_nl values to one derivative f^(k)[c1 x k].
ORDER3_OFFSETS = (Fraction(1, 2), Fraction(1))
ORDER3_WEIGHTS = (
    (Fraction(16), Fraction(-2)),      # f^(2)[c1,c1]
    (Fraction(-48), Fraction(12)),     # f^(3)[c1,c1,c1]
)
ORDER4_OFFSETS = (Fraction(1, 2), Fraction(1), Fraction(3, 2))
ORDER4_WEIGHTS = (
    (Fraction(24), Fraction(-6), Fraction(8, 9)),      # f^(2)[c1,c1]
    (Fraction(-120), Fraction(48), Fraction(-8)),      # f^(3)[c1,c1,c1]
    (Fraction(192), Fraction(-96), Fraction(64, 3)),   # f^(4)[c1 x 4]
)

# Re-derive both weight sets exactly at import; a mismatch means the
# hard-coded stencil algebra has been corrupted.
assert _derive_weights(ORDER3_OFFSETS) == ORDER3_WEIGHTS
assert _derive_weights(ORDER4_OFFSETS) == ORDER4_WEIGHTS

_HALF = Fraction(1, 2)
_THREE_HALVES = Fraction(3, 2)


class _Stencil:
    """State for one correction computation: cache plus defect helpers."""

    def __init__(self, x, f0, J, inverse_apply, evaluator, c1, cache=None):
        self.J = np.asarray(J, dtype=float)
        self.inverse_apply = inverse_apply
        self.cache = cache if cache is not None else StencilCache(x, f0, evaluator)
        self.cache.set_direction(1, c1)
        self.c1 = np.asarray(c1, dtype=float)

    def f(self, q1=0, q2=0, q3=0):
        return self.cache.value(_key(q1, q2, q3))

    def f_nl(self, q1=0, q2=0, q3=0):
        """Nonlinear defect f(x+a) - (f + J a) at a rational stencil offset."""
        key = _key(q1, q2, q3)
        offset = self.cache.offset_vector(key)
        return self.cache.value(key) - (self.cache.f0 + self.J @ offset)

    # -- phase pieces ------------------------------------------------------

    def order2_c2(self):
        return -self.inverse_apply(self.f_nl(1))

    def order3_phase1(self):
        """(f^(2)[c1,c1], f^(3)[c1,c1,c1]) to third-order accuracy, and c2."""
        fnl = (self.f_nl(_HALF), self.f_nl(1))
        (w2, w3) = ORDER3_WEIGHTS
        f2_c1c1 = float(w2[0]) * fnl[0] + float(w2[1]) * fnl[1]
        f3_c1c1c1 = float(w3[0]) * fnl[0] + float(w3[1]) * fnl[1]
        c2 = -0.5 * self.inverse_apply(f2_c1c1)
        return f2_c1c1, f3_c1c1c1, c2

    def order3_phase2(self, f3_c1c1c1):
        """c3 from the 4-point mixed difference for f^(2)[c1,c2]."""
        f2_c1c2 = self.f(1, 1) - self.f(1) - self.f(0, 1) + self.cache.f0
        return -self.inverse_apply(f3_c1c1c1 + 6.0 * f2_c1c2) / 6.0

    def order4_phase1(self):
        """Pure c1-direction derivatives to fourth-order accuracy, and c2."""
        fnl = (self.f_nl(_HALF), self.f_nl(1), self.f_nl(_THREE_HALVES))
        (w2, w3, w4) = ORDER4_WEIGHTS
        f2_c1c1 = sum(float(w) * v for w, v in zip(w2, fnl))
        f3_c1c1c1 = sum(float(w) * v for w, v in zip(w3, fnl))
        f4_c1x4 = sum(float(w) * v for w, v in zip(w4, fnl))
        c2 = -0.5 * self.inverse_apply(f2_c1c1)
        return f2_c1c1, f3_c1c1c1, f4_c1x4, c2

    def order4_phase2(self, f3_c1c1c1):
        """Mixed c2 terms on the 3 x 2 grid; only x + c1/2 + c2 is new."""
        f0v = self.cache.f0
        f_c2, f_hc2, f_1c2 = self.f(0, 1), self.f(_HALF, 1), self.f(1, 1)
        f_h, f_1 = self.f(_HALF), self.f(1)
        f3_c1c1c2 = (4.0 * f_c2 - 8.0 * f_hc2 + 4.0 * f_1c2) \
            - (4.0 * f0v - 8.0 * f_h + 4.0 * f_1)
        f2_c1c2 = (-3.0 * f_c2 + 4.0 * f_hc2 - f_1c2) \
            - (-3.0 * f0v + 4.0 * f_h - f_1)
        f2_c2c2 = 2.0 * self.f_nl(0, 1)
        c3 = -self.inverse_apply(f3_c1c1c1 + 6.0 * f2_c1c2) / 6.0
        return f3_c1c1c2, f2_c2c2, c3

    def order4_phase3(self, f4_c1x4, f3_c1c1c2, f2_c2c2):
        """c4 after extending the stencil in the c3 direction."""
        f2_c1c3 = self.f(1, 0, 1) - self.f(0, 0, 1) - (self.f(1) - self.cache.f0)
        return -self.inverse_apply(
            f4_c1x4 + 12.0 * f3_c1c1c2 + 24.0 * f2_c1c3 + 12.0 * f2_c2c2
        ) / 24.0


def pure_direction_estimates(x, f0, J, evaluator, c1, scheme_order: int,
                             cache: StencilCache | None = None):
    """Stencil estimates of ``f^(k)[c1 x k]`` along the step direction.

    ``scheme_order`` 3 returns ``(f2, f3)`` from the two-offset stencil;
    4 returns ``(f2, f3, f4)`` from the three-offset stencil.  The estimates
    reproduce polynomials up to the scheme order exactly.
    """
    st = _Stencil(x, f0, J, lambda v: v, evaluator, c1, cache)
    if scheme_order == 3:
        offsets, weights = ORDER3_OFFSETS, ORDER3_WEIGHTS
    elif scheme_order == 4:
        offsets, weights = ORDER4_OFFSETS, ORDER4_WEIGHTS
    else:
        raise ValueError(f"scheme_order must be 3 or 4, got {scheme_order}")
    fnl = [st.f_nl(a) for a in offsets]
    return tuple(
        sum(float(w) * v for w, v in zip(tup, fnl)) for tup in weights
    )


def correct_order2(x, f0, J, inverse_apply, evaluator, c1, cache=None):
    """Second-order correction from a single extra evaluation at ``x + c1``.

    ``c2 = -Jinv f_nl(x + c1)``: the deviation of the residual at the
    uncorrected step end from its linear prediction, pulled back through the
    step's inverse-applier.  Exact on quadratic residual maps.
    """
    st = _Stencil(x, f0, J, inverse_apply, evaluator, c1, cache)
    return st.order2_c2()


def correct_order3(x, f0, J, inverse_apply, evaluator, c1, cache=None):
    """Corrections ``(c2, c3)`` from four extra evaluations in two phases.

    Phase 1 evaluates ``x + c1/2`` and ``x + c1`` and extracts the second-
    and third-derivative terms along c1 to third-order accuracy; phase 2
    adds ``x + c2`` and ``x + c1 + c2`` for the mixed term f^(2)[c1, c2].
    """
    st = _Stencil(x, f0, J, inverse_apply, evaluator, c1, cache)
    _, f3_c1c1c1, c2 = st.order3_phase1()
    st.cache.set_direction(2, c2)
    c3 = st.order3_phase2(f3_c1c1c1)
    return c2, c3


def correct_order4(x, f0, J, inverse_apply, evaluator, c1, cache=None):
    """Corrections ``(c2, c3, c4)`` from eight extra evaluations in three phases.

    Phase 1 extends the c1-direction stencil to ``x + 3 c1/2`` so the pure
    derivatives up to f^(4) reach fourth-order accuracy; phase 2 forms the
    mixed c2 terms; phase 3 extends in the c3 direction for f^(2)[c1, c3].
    """
    st = _Stencil(x, f0, J, inverse_apply, evaluator, c1, cache)
    _, f3_c1c1c1, f4_c1x4, c2 = st.order4_phase1()
    st.cache.set_direction(2, c2)
    f3_c1c1c2, f2_c2c2, c3 = st.order4_phase2(f3_c1c1c1)
    st.cache.set_direction(3, c3)
    c4 = st.order4_phase3(f4_c1x4, f3_c1c1c2, f2_c2c2)
    return c2, c3, c4


def _is_wild(c, c1_norm: float) -> bool:
    norm = float(np.linalg.norm(c))
    return not np.isfinite(norm) or norm > WILD_CORRECTION_FACTOR * c1_norm


def correction_series(x, f0, J, inverse_apply, evaluator, c1, order: int,
                      cache: StencilCache | None = None) -> CorrectionSeries:
    """Compute the correction series for one candidate step.

    Parameters
    ----------
    x, f0, J :
        Base point, residual and Jacobian at the base point.
    inverse_apply : callable
        ``v -> Jinv v`` used for every inverse occurrence in this series
        (the same applier that produced the step direction).
    evaluator : callable
        Residual evaluator; called only at stencil offsets.
    c1 : array
        First-order step.
    order : int
        Correction order in {1, 2, 3, 4}.
    cache : StencilCache, optional
        Shared evaluation cache; re-running with the same cache performs
        zero new evaluations.

    A correction whose norm exceeds ``WILD_CORRECTION_FACTOR * |c1|`` (or is
    non-finite) truncates the series at the previous order, skips the
    remaining phases and sets the ``truncated`` flag.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError(f"correction order must be in {{1, 2, 3, 4}}, got {order}")
    c1 = np.asarray(c1, dtype=float)
    if cache is None:
        cache = StencilCache(x, f0, evaluator)
    start = cache.new_evaluations
    kept = [c1]

    def series(truncated):
        return CorrectionSeries(
            order=order,
            corrections=tuple(kept),
            evaluation_count=cache.new_evaluations - start,
            truncated=truncated,
        )

    if order == 1:
        return series(False)
    c1_norm = float(np.linalg.norm(c1))
    st = _Stencil(x, f0, J, inverse_apply, evaluator, c1, cache)

    if order == 2:
        c2 = st.order2_c2()
        if _is_wild(c2, c1_norm):
            return series(True)
        kept.append(c2)
        return series(False)

    if order == 3:
        _, f3_c1c1c1, c2 = st.order3_phase1()
        if _is_wild(c2, c1_norm):
            return series(True)
        kept.append(c2)
        st.cache.set_direction(2, c2)
        c3 = st.order3_phase2(f3_c1c1c1)
        if _is_wild(c3, c1_norm):
            return series(True)
        kept.append(c3)
        return series(False)

    _, f3_c1c1c1, f4_c1x4, c2 = st.order4_phase1()
    if _is_wild(c2, c1_norm):
        return series(True)
    kept.append(c2)
    st.cache.set_direction(2, c2)
    f3_c1c1c2, f2_c2c2, c3 = st.order4_phase2(f3_c1c1c1)
    if _is_wild(c3, c1_norm):
        return series(True)
    kept.append(c3)
    st.cache.set_direction(3, c3)
    c4 = st.order4_phase3(f4_c1x4, f3_c1c1c2, f2_c2c2)
    if _is_wild(c4, c1_norm):
        return series(True)
    kept.append(c4)
    return series(False)
