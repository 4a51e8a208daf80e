"""Problem abstraction and the built-in benchmark problems.

A problem is just a residual evaluator ``x -> f(x)`` plus an analytic
Jacobian ``x -> J(x)``.  The benchmark family is the anisotropic curved
valley ``f(x, y) = (x + y^2, K (y - x^2))``: larger ``K`` makes the valley of
small ``|f|`` narrower while its curvature stays fixed, which is exactly the
regime where first-order damped steps crawl.

A seeded polynomial family with analytically known derivative tensors up to
order 4 backs the stencil oracle tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import as_vector

__all__ = [
    "Problem",
    "valley_eval",
    "valley_jacobian",
    "valley_problem",
    "affine_problem",
    "default_affine_problem",
    "PolynomialProblem",
    "polynomial_problem",
    "finite_difference_jacobian",
]


@dataclass(frozen=True)
class Problem:
    """Residual map with analytic Jacobian.

    ``evaluator`` maps a point in R^input_dim to a residual in R^output_dim;
    ``jacobian`` returns the (output_dim, input_dim) matrix of first partial
    derivatives at a point.  Both must be pure and safe to call concurrently.
    """

    input_dim: int
    output_dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    name: str = ""


def valley_eval(K: float, x: float, y: float) -> np.ndarray:
    """Residual ``(x + y^2, K (y - x^2))`` of the curved-valley problem."""
    return np.array([x + y * y, K * (y - x * x)])


def valley_jacobian(K: float, x: float, y: float) -> np.ndarray:
    """Analytic Jacobian ``[[1, 2y], [-2Kx, K]]`` of :func:`valley_eval`."""
    return np.array([[1.0, 2.0 * y], [-2.0 * K * x, K]])


def valley_problem(K: float) -> Problem:
    """Two-dimensional curved-valley benchmark with anisotropy factor ``K``."""
    if not K > 0:
        raise ValueError(f"anisotropy factor must be positive, got {K}")

    def evaluator(p):
        return valley_eval(K, p[0], p[1])

    def jacobian(p):
        return valley_jacobian(K, p[0], p[1])

    return Problem(2, 2, evaluator, jacobian, name=f"valley(K={K:g})")


def affine_problem(A, b, name: str = "affine") -> Problem:
    """Affine residual ``f(x) = A x - b`` (one exact Newton step to solve)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, p = A.shape
    return Problem(p, m, lambda x: A @ x - b, lambda x: A.copy(), name=name)


def default_affine_problem() -> Problem:
    """Small fixed nonsingular affine problem used by the CLI and tests."""
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    return affine_problem(A, b)


def _symmetrize(T: np.ndarray) -> np.ndarray:
    """Average a tensor over all permutations of its non-output axes."""
    axes = range(1, T.ndim)
    perms = list(itertools.permutations(axes))
    out = np.zeros_like(T)
    for perm in perms:
        out += np.transpose(T, (0,) + perm)
    return out / len(perms)


@dataclass(frozen=True)
class PolynomialProblem:
    """Polynomial residual map with exact derivative tensors.

    ``f(x) = b + A x + B[x,x] + C[x,x,x] + D[x,x,x,x]`` with symmetric
    coefficient tensors, so directional derivatives of any order up to 4 are
    available in closed form for oracle tests.  ``b`` is chosen so that
    ``f(0) = 0``: every instance has a root at the origin.
    """

    degree: int
    input_dim: int
    output_dim: int
    seed: int
    b: np.ndarray
    A: np.ndarray
    B: np.ndarray | None
    C: np.ndarray | None
    D: np.ndarray | None
    name: str = ""

    def evaluator(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        f = self.b + self.A @ x
        if self.B is not None:
            f = f + np.einsum("ijk,j,k->i", self.B, x, x)
        if self.C is not None:
            f = f + np.einsum("ijkl,j,k,l->i", self.C, x, x, x)
        if self.D is not None:
            f = f + np.einsum("ijklm,j,k,l,m->i", self.D, x, x, x, x)
        return f

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.A.copy()
        if self.B is not None:
            J = J + 2.0 * np.einsum("ijk,k->ij", self.B, x)
        if self.C is not None:
            J = J + 3.0 * np.einsum("ijkl,k,l->ij", self.C, x, x)
        if self.D is not None:
            J = J + 4.0 * np.einsum("ijklm,k,l,m->ij", self.D, x, x, x)
        return J

    def derivative_contraction(self, x, order: int, *vectors) -> np.ndarray:
        """Exact ``f^(order)[v_1, ..., v_order]`` at ``x``."""
        if order != len(vectors):
            raise ValueError("need exactly `order` direction vectors")
        x = np.asarray(x, dtype=float)
        vs = [np.asarray(v, dtype=float) for v in vectors]
        out = np.zeros(self.output_dim)
        if order == 1:
            return self.jacobian(x) @ vs[0]
        if order == 2:
            u, v = vs
            if self.B is not None:
                out += 2.0 * np.einsum("ijk,j,k->i", self.B, u, v)
            if self.C is not None:
                out += 6.0 * np.einsum("ijkl,j,k,l->i", self.C, x, u, v)
            if self.D is not None:
                out += 12.0 * np.einsum("ijklm,j,k,l,m->i", self.D, x, x, u, v)
            return out
        if order == 3:
            u, v, w = vs
            if self.C is not None:
                out += 6.0 * np.einsum("ijkl,j,k,l->i", self.C, u, v, w)
            if self.D is not None:
                out += 24.0 * np.einsum("ijklm,j,k,l,m->i", self.D, x, u, v, w)
            return out
        if order == 4:
            u, v, w, z = vs
            if self.D is not None:
                out += 24.0 * np.einsum("ijklm,j,k,l,m->i", self.D, u, v, w, z)
            return out
        raise ValueError(f"derivative order must be in [1, 4], got {order}")

    def as_problem(self) -> Problem:
        return Problem(self.input_dim, self.output_dim, self.evaluator,
                       self.jacobian, name=self.name)


def polynomial_problem(degree: int, dim: int, seed: int) -> PolynomialProblem:
    """Seeded polynomial map of total degree ``degree`` on R^dim -> R^dim.

    Coefficients are drawn uniformly from [-1, 1] with the given seed and the
    higher-order tensors are symmetrized; results are deterministic.
    """
    if not 1 <= degree <= 4:
        raise ValueError(f"degree must be in [1, 4], got {degree}")
    rng = np.random.default_rng(seed)

    def draw(*shape):
        return rng.uniform(-1.0, 1.0, size=shape)

    A = draw(dim, dim)
    B = _symmetrize(draw(dim, dim, dim)) if degree >= 2 else None
    C = _symmetrize(draw(dim, dim, dim, dim)) if degree >= 3 else None
    D = _symmetrize(draw(dim, dim, dim, dim, dim)) if degree >= 4 else None
    return PolynomialProblem(
        degree=degree,
        input_dim=dim,
        output_dim=dim,
        seed=seed,
        b=np.zeros(dim),
        A=A,
        B=B,
        C=C,
        D=D,
        name=f"poly(d={degree},p={dim},seed={seed})",
    )


def finite_difference_jacobian(problem: Problem, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, the test-time oracle for analytic ones."""
    x = as_vector(x)
    J = np.zeros((problem.output_dim, problem.input_dim))
    for j in range(problem.input_dim):
        h = rel_step * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (problem.evaluator(xp) - problem.evaluator(xm)) / (2.0 * h)
    return J
