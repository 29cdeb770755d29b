"""Small-matrix sample statistics and symmetric eigendecomposition.

Everything here operates on plain numpy arrays: vectors are 1-D arrays,
matrices 2-D.  Row dimension is always the observation index (n rows of
K components), and covariance denominators are ``n - 1`` throughout.

The eigensolver is a cyclic Jacobi iteration rather than a LAPACK call:
inputs in this package are covariance matrices of at most a few tens of
components, and Jacobi is simple, robust, and gives orthonormal vectors
to machine precision.  ``numpy.linalg.eigh`` is deliberately used only
as an oracle in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .exceptions import DomainError, NumericalError

__all__ = [
    "EigenPair",
    "sample_mean",
    "sample_covariance",
    "cross_covariance",
    "sym_eigendecompose",
    "scaled_rotation_factor",
]

#: Convergence target for the Jacobi sweep, relative to the Frobenius
#: norm of the input: iterate until off(A) <= JACOBI_TOL * ||M||_F.
JACOBI_TOL = 1e-14

#: Maximum number of full Jacobi sweeps before declaring failure.
JACOBI_MAX_SWEEPS = 100

#: Eigenvalues of a covariance matrix below -EIG_CLAMP_REL * max|eig|
#: indicate a corrupt (non-PSD beyond rounding) input.
EIG_CLAMP_REL = 1e-10


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues (descending) and matching orthonormal eigenvector columns."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]


def _as_rows(x, name: str) -> NDArray[np.float64]:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise DomainError(f"{name} must be a 2-D array of row observations, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def sample_mean(rows) -> NDArray[np.float64]:
    """Componentwise arithmetic mean of ``n >= 1`` row observations."""
    a = _as_rows(rows, "rows")
    if a.shape[0] < 1:
        raise DomainError("sample_mean needs at least one row")
    return a.mean(axis=0)


def sample_covariance(rows) -> NDArray[np.float64]:
    """Sample covariance (denominator n-1) of row observations.

    The result is exactly symmetric: the cross-product matrix is averaged
    with its transpose, which is a bitwise no-op for the diagonal and
    enforces ``C[i, j] == C[j, i]`` for the rest.
    """
    a = _as_rows(rows, "rows")
    n = a.shape[0]
    if n < 2:
        raise DomainError(f"sample_covariance needs at least two rows, got {n}")
    centered = a - a.mean(axis=0)
    c = np.einsum("nk,nl->kl", centered, centered, optimize=False) / (n - 1)
    return 0.5 * (c + c.T)


def cross_covariance(rows_a, rows_b) -> NDArray[np.float64]:
    """Sample cross-covariance of paired rows: Cov[a_i, b_i], denominator n-1.

    ``cross_covariance(a, b)`` equals ``cross_covariance(b, a).T`` exactly
    (same products summed in the same order), which the tests pin down.
    """
    a = _as_rows(rows_a, "rows_a")
    b = _as_rows(rows_b, "rows_b")
    if a.shape[0] != b.shape[0]:
        raise DomainError(f"paired inputs need equal row counts, got {a.shape[0]} and {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise DomainError(f"cross_covariance needs at least two rows, got {n}")
    ca = a - a.mean(axis=0)
    cb = b - b.mean(axis=0)
    return np.einsum("nk,nl->kl", ca, cb, optimize=False) / (n - 1)


def _check_symmetric(m, name: str) -> NDArray[np.float64]:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > 1e-12 * scale:
        raise DomainError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def sym_eigendecompose(m) -> EigenPair:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps row-by-row over the upper triangle, annihilating one
    off-diagonal entry per rotation, until the off-diagonal Frobenius norm
    falls below ``JACOBI_TOL`` times the Frobenius norm of the input (at
    most ``JACOBI_MAX_SWEEPS`` sweeps, else :class:`NumericalError`).

    Returns eigenvalues sorted descending with matching eigenvector
    columns; each column is sign-normalized so its largest-magnitude
    component is positive.
    """
    a = _check_symmetric(m, "matrix")
    k = a.shape[0]
    v = np.eye(k)
    target = JACOBI_TOL * float(np.linalg.norm(a))

    def offnorm(x: NDArray[np.float64]) -> float:
        off = x - np.diag(np.diag(x))
        return float(np.linalg.norm(off))

    a = a.copy()
    converged = offnorm(a) <= target
    for _ in range(JACOBI_MAX_SWEEPS):
        if converged:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Classic two-angle-free rotation: t = tan(theta) from the
                # stable quadratic root, then c = cos, s = sin.
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        converged = offnorm(a) <= target
    if not converged:
        raise NumericalError(
            f"Jacobi eigendecomposition did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )

    values = np.diag(a).copy()
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = v[:, order]
    # Sign convention: make the largest-magnitude component of each column
    # positive so the decomposition (and everything seeded from it) is unique.
    for j in range(k):
        lead = np.argmax(np.abs(vectors[:, j]))
        if vectors[lead, j] < 0.0:
            vectors[:, j] = -vectors[:, j]
    return EigenPair(values=values, vectors=vectors)


def scaled_rotation_factor(cov) -> NDArray[np.float64]:
    """Matrix square-root factor ``U @ diag(sqrt(d))`` of a covariance matrix.

    Eigenvalues in ``(-EIG_CLAMP_REL * max|d|, 0)`` are treated as rounding
    noise and clamped to zero; anything more negative means the input is
    not a covariance matrix and raises :class:`NumericalError`.
    """
    pair = sym_eigendecompose(cov)
    d = pair.values.copy()
    scale = float(np.abs(d).max()) if d.size else 0.0
    floor = -EIG_CLAMP_REL * scale
    if np.any(d < floor):
        raise NumericalError(
            f"covariance has eigenvalue {d.min():.3e} below the clamp threshold {floor:.3e}"
        )
    np.clip(d, 0.0, None, out=d)
    return pair.vectors * np.sqrt(d)[np.newaxis, :]
