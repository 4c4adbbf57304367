"""Polynomial chaos algebra for the affine (degree <= 1) basis.

Every random variable handled here is expanded in the orthonormal basis
``{1, xi_0^1, ..., xi_{N-1}^{n_w}}``, so an expansion is fully described by a
coefficient matrix whose column 0 is the mean and whose remaining columns
multiply the normalized disturbance components. No polynomial objects are
built; everything operates on these coefficient matrices.
"""

from __future__ import annotations

import numpy as np

SYM_TOL = 1e-10
CLAMP_REL = 1e-12
INDEFINITE_REL = 1e-8


class IndefiniteMatrixError(ValueError):
    """Raised when a matrix that must be PSD has a clearly negative eigenvalue."""


def _check_symmetric(M: np.ndarray, tol: float = SYM_TOL) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if np.linalg.norm(M - M.T) > tol * max(1.0, np.linalg.norm(M)):
        raise ValueError("matrix is not symmetric within tolerance")


def sqrt_psd(G: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues below ``1e-12 * lambda_max`` in magnitude (or slightly
    negative) are clamped to zero; anything below ``-1e-8 * lambda_max`` is
    treated as a genuinely indefinite input.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    _check_symmetric(G)
    G = 0.5 * (G + G.T)
    lam, V = np.linalg.eigh(G)
    scale = max(abs(lam).max(initial=0.0), np.finfo(float).tiny)
    if lam.min(initial=0.0) < -INDEFINITE_REL * scale:
        raise IndefiniteMatrixError(
            f"matrix is indefinite (min eigenvalue {lam.min():.3e})")
    lam = np.where(lam < CLAMP_REL * scale, 0.0, lam)
    S = (V * np.sqrt(lam)) @ V.T
    return 0.5 * (S + S.T)


def _inv_sqrt_pd(G: np.ndarray) -> np.ndarray:
    G = 0.5 * (G + G.T)
    lam, V = np.linalg.eigh(G)
    if lam.min() <= 1e-14 * max(lam.max(), 0.0) or lam.min() <= 0.0:
        raise np.linalg.LinAlgError(
            "anchor covariance is not invertible at working precision")
    S = (V / np.sqrt(lam)) @ V.T
    return 0.5 * (S + S.T)


def psi_map(G: np.ndarray, G_bar: np.ndarray) -> np.ndarray:
    """Generalized square root anchored at ``G_bar``.

    Returns ``G_bar^{-1/2} (G_bar^{1/2} G G_bar^{1/2})^{1/2}``, which factors
    ``G`` as ``Psi Psi^T`` and makes the Gelbrich distance to the anchor a
    Frobenius distance between coefficient matrices.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    G_bar = np.atleast_2d(np.asarray(G_bar, dtype=float))
    _check_symmetric(G_bar)
    inner_half = sqrt_psd(G_bar)
    inv_half = _inv_sqrt_pd(G_bar)
    middle = inner_half @ G @ inner_half
    return inv_half @ sqrt_psd(0.5 * (middle + middle.T))


def in_psi_image(W1: np.ndarray, G_bar_half: np.ndarray,
                 sym_tol: float = 1e-8, psd_tol: float = 1e-10) -> bool:
    """Whether ``G_bar^{1/2} W1`` is symmetric PSD (the image of ``psi_map``)."""
    P = G_bar_half @ W1
    scale = max(1.0, np.linalg.norm(P))
    if np.linalg.norm(P - P.T) > sym_tol * scale:
        return False
    lam = np.linalg.eigvalsh(0.5 * (P + P.T))
    return bool(lam.min() >= -psd_tol * scale)


def psi_inverse(W1: np.ndarray, G_bar: np.ndarray) -> np.ndarray:
    """Inverse of :func:`psi_map`: recover the covariance ``W1 W1^T``."""
    W1 = np.atleast_2d(np.asarray(W1, dtype=float))
    half = sqrt_psd(G_bar)
    if W1.shape != half.shape:
        raise ValueError(f"shape mismatch {W1.shape} vs {half.shape}")
    if not in_psi_image(W1, half):
        raise ValueError("W1 is not in the image of the generalized square root")
    G = W1 @ W1.T
    return 0.5 * (G + G.T)


def gelbrich_distance(m, G, m_bar, G_bar) -> float:
    """Gelbrich distance between the moment pairs ``(m, G)`` and ``(m_bar, G_bar)``."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    m_bar = np.atleast_1d(np.asarray(m_bar, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    G_bar = np.atleast_2d(np.asarray(G_bar, dtype=float))
    half = sqrt_psd(G_bar)
    cross = sqrt_psd(_sym(half @ G @ half))
    sqrt_psd(G)  # rejects indefinite G
    tr = np.trace(G + G_bar - 2.0 * cross)
    if tr < 0.0:
        if tr < -1e-10 * max(1.0, np.trace(G) + np.trace(G_bar)):
            raise IndefiniteMatrixError(f"negative trace term {tr:.3e}")
        tr = 0.0
    return float(np.sqrt(np.sum((m - m_bar) ** 2) + tr))


def _sym(M):
    return 0.5 * (M + M.T)


def coeff_distance(W01: np.ndarray, anchor: np.ndarray) -> float:
    """Frobenius distance between two ``n_w x (n_w + 1)`` coefficient matrices."""
    W01 = np.asarray(W01, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if W01.shape != anchor.shape:
        raise ValueError(f"shape mismatch {W01.shape} vs {anchor.shape}")
    return float(np.linalg.norm(W01 - anchor))


def disturbance_coeffs(m, G, G_bar) -> np.ndarray:
    """Coefficient matrix ``[m | Psi(G)]`` for a disturbance with moments (m, G)."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    return np.column_stack([m, psi_map(G, G_bar)])


def stack_disturbance(W01: np.ndarray, N: int) -> np.ndarray:
    """Coefficients of the i.i.d. sequence ``W_0..W_{N-1}``.

    Returns the ``N*n_w x (N*n_w + 1)`` matrix ``[1_N (x) w0, I_N (x) W1]``.
    """
    if N < 1:
        raise ValueError("horizon N must be >= 1")
    W01 = np.atleast_2d(np.asarray(W01, dtype=float))
    n_w = W01.shape[0]
    if W01.shape[1] != n_w + 1:
        raise ValueError(f"expected an n_w x (n_w+1) matrix, got {W01.shape}")
    w0, W1 = W01[:, 0], W01[:, 1:]
    return np.hstack([np.tile(w0, N)[:, None], np.kron(np.eye(N), W1)])


def moments_from_pce(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a variable from its coefficients (orthonormal basis)."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[1] < 1:
        raise ValueError("coefficient matrix needs at least one column")
    rest = V[:, 1:]
    return V[:, 0].copy(), rest @ rest.T
