"""Dense symmetric linear-algebra kernels.

Everything here works on plain float64 ``numpy`` arrays, row-major, dense.
Factorizations are delegated to LAPACK (via numpy/scipy); the wrappers add the
scale-relative positive-definiteness checks and the explicit symmetrization
the estimators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite, SingularInnerMatrix

# Relative tolerance for Cholesky pivots: a factorization whose smallest pivot
# falls below pd_tol(A) is treated as numerically indefinite.
PD_TOL = 1e-12
# Relative tolerance for the symmetry precondition checks.
SYM_TOL = 1e-8


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A^T)/2; controls round-off drift over long recursions."""
    return 0.5 * (a + a.T)


def _as_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def _check_symmetric(a: np.ndarray, name: str = "matrix") -> None:
    scale = 1.0 + float(np.max(np.abs(a))) if a.size else 1.0
    if a.size and float(np.max(np.abs(a - a.T))) > SYM_TOL * scale:
        raise DimensionMismatch(f"{name} is not symmetric within tolerance")


def pd_tolerance(a: np.ndarray) -> float:
    """Scale-relative pivot tolerance, 1e-12 * (1 + max diagonal entry)."""
    diag_max = float(np.max(np.diagonal(a))) if a.size else 0.0
    return PD_TOL * (1.0 + max(diag_max, 0.0))


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular factor L with A = L L^T and strictly positive diagonal."""

    lower: np.ndarray

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def chol_factor(a: np.ndarray, *, step: int | None = None, assume_symmetric: bool = False) -> CholFactor:
    """Cholesky factorization of a symmetric positive-definite matrix.

    Raises NotPositiveDefinite if LAPACK fails or any pivot is at or below the
    scale-relative tolerance.  Callers that just symmetrized their input can
    pass assume_symmetric to skip the O(n^2) symmetry check.
    """
    a = _as_square(a)
    if not assume_symmetric:
        _check_symmetric(a)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(step=step) from exc
    # LAPACK accepts arbitrarily tiny positive pivots; enforce the tolerance.
    if a.size and float(np.min(np.diagonal(lower)) ** 2) <= pd_tolerance(a):
        raise NotPositiveDefinite("matrix has a near-zero Cholesky pivot", step=step)
    return CholFactor(lower=lower)


def chol_solve(factor: CholFactor, b: np.ndarray) -> np.ndarray:
    """Solve A X = B given the Cholesky factor of A. B may be a vector or matrix."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(
            f"right-hand side has {b.shape[0]} rows, factor is {factor.n}x{factor.n}"
        )
    return scipy.linalg.cho_solve((factor.lower, True), b, check_finite=False)


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix, explicitly symmetrized."""
    f = chol_factor(a)
    inv = chol_solve(f, np.eye(f.n))
    return symmetrize(inv)


def mil_update(a_inv: np.ndarray, u: np.ndarray, c: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix inversion lemma: (A + U C V)^(-1) from A^(-1).

    Computes A_inv - A_inv U (C^(-1) + V A_inv U)^(-1) V A_inv.  Cost is
    O(q n^2) for U of width q.  Raises SingularInnerMatrix when C or the inner
    q x q matrix is (numerically) singular.
    """
    a_inv = _as_square(a_inv, "a_inv")
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    c = _as_square(np.atleast_2d(np.asarray(c, dtype=float)), "c")
    n = a_inv.shape[0]
    q = u.shape[1]
    if u.shape[0] != n or v.shape != (q, n) or c.shape != (q, q):
        raise DimensionMismatch(
            f"inconsistent MIL shapes: a_inv {a_inv.shape}, u {u.shape}, c {c.shape}, v {v.shape}"
        )
    c_inv = _solve_small(c, np.eye(q), what="weight block")
    au = a_inv @ u
    va = v @ a_inv
    inner = c_inv + v @ au
    x = _solve_small(inner, va, what="inner matrix")
    return a_inv - au @ x


def _solve_small(m: np.ndarray, rhs: np.ndarray, what: str = "inner matrix") -> np.ndarray:
    """Solve against a small q x q matrix, rejecting numerically singular ones."""
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] <= 1e-13 * max(s[0], 1.0):
        raise SingularInnerMatrix(f"{what} is numerically singular")
    return np.linalg.solve(m, rhs)


def quad_minimizer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unique global minimizer -A^(-1) b of x^T A x + 2 b^T x + c, A SPD."""
    b = np.asarray(b, dtype=float)
    f = chol_factor(a)
    if b.shape[0] != f.n:
        raise DimensionMismatch(f"b has length {b.shape[0]}, A is {f.n}x{f.n}")
    return chol_solve(f, -b)


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues sorted descending with matching orthonormal column vectors."""

    values: np.ndarray
    vectors: np.ndarray


def sym_eigen(a: np.ndarray) -> EigenPair:
    """Full symmetric eigendecomposition, eigenvalues descending."""
    a = _as_square(a)
    _check_symmetric(a)
    try:
        values, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence("symmetric eigensolver did not converge") from exc
    order = np.arange(values.shape[0])[::-1]  # eigh returns ascending order
    return EigenPair(values=values[order], vectors=vectors[:, order])


def lambda_extreme(a: np.ndarray) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric matrix."""
    pair = sym_eigen(a)
    return float(pair.values[-1]), float(pair.values[0])
