"""Small dense complex linear-algebra kernel used by the precoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalError",
    "SingularMatrixError",
    "IllConditionedError",
    "SingularTriple",
    "max_singular_triple",
    "invert_lower_triangular",
    "guarded_inverse",
    "DEFAULT_COND_LIMIT",
]

DEFAULT_COND_LIMIT = 1e8


class NumericalError(ArithmeticError):
    """Base class for numerical breakdowns."""


class SingularMatrixError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    def __init__(self, cond: float, limit: float):
        super().__init__(f"condition number {cond:.3g} exceeds limit {limit:.3g}")
        self.cond = cond
        self.limit = limit


@dataclass(frozen=True)
class SingularTriple:
    sigma: float
    u: np.ndarray
    v: np.ndarray


def _fix_phase(u: np.ndarray) -> complex:
    """Unit phasor that makes the largest-modulus entry of ``u`` real positive."""
    idx = int(np.argmax(np.abs(u)))
    mag = abs(u[idx])
    return 1.0 if mag == 0 else np.conj(u[idx]) / mag


def max_singular_triple(A) -> SingularTriple:
    """Dominant singular value and unit singular vectors of ``A``.

    Uses a Hermitian eigendecomposition of the smaller Gram matrix, which is
    cheap for the thin channel matrices used here. The largest-modulus entry
    of ``u`` is made real and nonnegative; ``v`` follows from ``A^H u / sigma``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    m, n = A.shape
    try:
        if m <= n:
            w, vecs = np.linalg.eigh(A @ A.conj().T)
            u = vecs[:, -1]
        else:
            w, vecs = np.linalg.eigh(A.conj().T @ A)
            x = A @ vecs[:, -1]
            nx = np.linalg.norm(x)
            u = x / nx if nx > 0 else np.eye(m, 1, dtype=complex)[:, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    u = u * _fix_phase(u)
    y = A.conj().T @ u
    sigma = float(np.linalg.norm(y))
    if sigma > 0:
        v = y / sigma
    else:
        v = np.zeros(n, dtype=complex)
        v[0] = 1.0
    return SingularTriple(sigma, u, v)


def invert_lower_triangular(L, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Inverse of a lower-triangular matrix by forward substitution.

    Entries above the diagonal are ignored; the result is exactly lower
    triangular.
    """
    L = np.asarray(L, dtype=complex)
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError(f"expected a square matrix, got {L.shape}")
    diag = np.diag(L)
    dmax = np.max(np.abs(diag)) if n else 0.0
    if n and (dmax == 0 or np.min(np.abs(diag)) < 1e-12 * dmax):
        raise SingularMatrixError("lower-triangular factor has a (near-)zero diagonal entry")
    if n and dmax / np.min(np.abs(diag)) > cond_limit:
        raise IllConditionedError(float(dmax / np.min(np.abs(diag))), cond_limit)
    X = np.zeros((n, n), dtype=complex)
    # row i of L X = I:  X[i, :] = (e_i - L[i, :i] X[:i, :]) / L[i, i]
    for i in range(n):
        rhs = -L[i, :i] @ X[:i, :]
        rhs[i] += 1.0
        X[i, :i + 1] = rhs[:i + 1] / L[i, i]
    return X


def guarded_inverse(A, cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Inverse of a square matrix, refusing ill-conditioned input.

    Raises
    ------
    IllConditionedError
        If the 2-norm condition number exceeds ``cond_limit``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got {A.shape}")
    cond = float(np.linalg.cond(A)) if A.size else 1.0
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(cond, cond_limit)
    return np.linalg.inv(A)
