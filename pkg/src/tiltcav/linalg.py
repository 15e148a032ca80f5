"""Cyclic Jacobi eigensolver for complex Hermitian matrices."""
from __future__ import annotations

import numpy as np

__all__ = ["NonHermitianError", "hermitian_eigenvalues", "jacobi_eigh"]


class NonHermitianError(ValueError):
    pass


def _check_hermitian(M: np.ndarray, tol: float) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    defect = float(np.abs(M - M.conj().T).max(initial=0.0))
    if defect > tol * scale:
        raise NonHermitianError(f"matrix is not Hermitian (defect {defect:.3e})")
    return 0.5 * (M + M.conj().T)


def jacobi_eigh(M, *, herm_tol: float = 1e-8, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Each rotation first removes the phase of ``M[p, q]`` and then applies the
    real symmetric Jacobi rotation that annihilates it.

    Returns
    -------
    values : ndarray
        Real eigenvalues in descending order.
    vectors : ndarray
        Unitary matrix whose columns are the matching eigenvectors.
    """
    a = _check_hermitian(M, herm_tol).copy()
    n = a.shape[0]
    V = np.eye(n, dtype=complex)
    scale = float(np.linalg.norm(a)) or 1.0

    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= 1e-300 or r <= 1e-18 * scale:
                    a[p, q] = a[q, p] = 0.0
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                theta = (aqq - app) / (2.0 * r)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                w = s * np.conj(phase)  # s e^{-i phi}
                cw = c * np.conj(phase)  # c e^{-i phi}

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - w * col_q
                a[:, q] = s * col_p + cw * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - np.conj(w) * row_q
                a[q, :] = s * row_p + np.conj(cw) * row_q
                a[p, q] = a[q, p] = 0.0
                a[p, p] = app - t * r
                a[q, q] = aqq + t * r

                v_p = V[:, p].copy()
                V[:, p] = c * v_p - w * V[:, q]
                V[:, q] = s * v_p + cw * V[:, q]
    values = np.diag(a).real.copy()
    order = np.argsort(values)[::-1]
    return values[order], V[:, order]


def hermitian_eigenvalues(M, *, herm_tol: float = 1e-8) -> np.ndarray:
    """Full spectrum of a Hermitian matrix, descending.

    Raises :class:`NonHermitianError` when ``M`` deviates from its adjoint by
    more than ``herm_tol`` (relative to its largest entry).
    """
    return jacobi_eigh(M, herm_tol=herm_tol)[0]
