"""Dense symmetric linear algebra for channel-covariance whitening.

Everything here works on small dense float64 matrices (channel counts are a
few dozen at most). The eigensolver is a cyclic Jacobi iteration: at these
sizes it is fast enough, keeps the eigenvector basis orthonormal to machine
precision, and resolves small eigenvalues with high *relative* accuracy,
which the inverse square root of a near-singular covariance needs.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NotPsdError, NumericalError

# Rotations are skipped once a pivot is negligible relative to its diagonal
# entries; this is what preserves the relative accuracy of tiny eigenvalues.
_ROTATION_TOL = 1e-15
_SYM_TOL = 1e-12


def as_sym_matrix(m, *, tol: float = _SYM_TOL) -> np.ndarray:
    """Validate a square symmetric matrix and return a float64 copy.

    Symmetry is enforced exactly on the returned copy (entries are averaged
    with their transpose); deviations beyond ``tol`` (absolute) raise.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValueError("matrix dimension must be >= 1")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    if np.max(np.abs(a - a.T)) > tol:
        raise ValueError("matrix is not symmetric within tolerance")
    return (a + a.T) / 2.0


def trial_covariance(trial: np.ndarray) -> np.ndarray:
    """Raw Gram matrix X X^T of a channels-by-time trial.

    Note the product is deliberately not divided by the number of time
    samples; whitening by the inverse square root is invariant to any common
    scalar factor, so the raw Gram convention is used throughout.
    """
    x = np.asarray(trial, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D channels-by-time matrix, got ndim {x.ndim}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"trial must have at least one channel and one sample, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("trial contains non-finite entries")
    g = x @ x.T
    return (g + g.T) / 2.0


def sym_eig(m, *, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors in the corresponding columns. Raises
    :class:`NumericalError` (carrying the residual) if the off-diagonal norm
    has not fallen below ``1e-12 * ||m||_F`` after ``max_sweeps`` sweeps.
    """
    a = as_sym_matrix(m)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a[0].copy(), v

    fro = float(np.linalg.norm(a))
    converged = fro == 0.0
    for _ in range(max_sweeps):
        if converged:
            break
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                thresh = _ROTATION_TOL * math.sqrt(abs(a[p, p] * a[q, q]))
                if abs(apq) <= thresh:
                    continue
                rotated = True
                app, aqq = a[p, p], a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                # The rotation zeroes the pivot by construction; writing the
                # closed forms avoids accumulating rounding on the diagonal.
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        # A sweep with no rotations means every pivot is negligible at the
        # relative level, which is stronger than the Frobenius criterion.
        converged = not rotated
    if not converged:
        off = off_diagonal_norm(a)
        if off > _SYM_TOL * fro:
            raise NumericalError(
                f"Jacobi eigendecomposition did not converge in {max_sweeps} sweeps "
                f"(off-diagonal residual {off:.3e})",
                residual=off,
            )

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def off_diagonal_norm(a: np.ndarray) -> float:
    d = np.diag(a)
    return float(math.sqrt(max(np.sum(a * a) - np.sum(d * d), 0.0)))


def default_ridge(m: np.ndarray) -> float:
    """Default regularizer for near-singular covariances: 1e-10 * trace / dim."""
    return 1e-10 * float(np.trace(m)) / m.shape[0]


def inv_sqrt(m, eps: float | None = None) -> np.ndarray:
    """Inverse matrix square root ``(m + eps*I)^(-1/2)`` of a symmetric PSD matrix.

    ``eps=None`` applies the default trace-scaled ridge, which keeps the
    result finite for rank-deficient inputs. Raises :class:`NotPsdError` if
    an eigenvalue is materially negative, or if ``m + eps*I`` is singular.
    """
    a = as_sym_matrix(m)
    if eps is None:
        eps = default_ridge(a)
    lam, vec = sym_eig(a)
    lam_max = float(np.max(np.abs(lam))) if lam.size else 0.0
    if lam[0] < -1e-9 * lam_max:
        raise NotPsdError(
            f"matrix has negative eigenvalue {lam[0]:.3e} (largest magnitude {lam_max:.3e})",
            residual=float(lam[0]),
        )
    shifted = np.maximum(lam, 0.0) + eps
    if np.any(shifted <= 0.0):
        raise NotPsdError(
            "matrix is singular within tolerance; pass a positive eps to regularize",
            residual=float(lam[0]),
        )
    w = (vec * shifted**-0.5) @ vec.T
    return (w + w.T) / 2.0
