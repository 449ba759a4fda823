"""Eigenvalue bounds on trace/determinant combinations of Hermitian pairs.

These three inequalities are what make the closed-form precoder unitaries
optimal: the trace of a product and the determinant of a sum of Hermitian
matrices are extremized exactly when the matrices commute with eigenvalues
paired in sorted order.  Arrow conventions: "same order" means both vectors
descending, "opposite order" one descending and one ascending.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HermitianPair",
    "hermitian_pair",
    "trace_product_bounds",
    "det_sum_bounds",
    "det_identity_inverse_bounds",
]

_HERMITIAN_TOL = 1e-10
_PSD_CLAMP = 1e-10


@dataclass(frozen=True)
class HermitianPair:
    a: np.ndarray
    b: np.ndarray
    eig_a: np.ndarray  # real, descending
    eig_b: np.ndarray


def hermitian_pair(a: np.ndarray, b: np.ndarray) -> HermitianPair:
    """Validate and package two Hermitian matrices with their spectra."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrices must be square and of equal shape")
    for name, m in (("a", a), ("b", b)):
        if np.linalg.norm(m - m.conj().T) >= _HERMITIAN_TOL * max(1.0, np.linalg.norm(m)):
            raise ValueError(f"matrix {name} is not Hermitian")
    eig_a = np.sort(np.linalg.eigvalsh(a))[::-1]
    eig_b = np.sort(np.linalg.eigvalsh(b))[::-1]
    return HermitianPair(a=a, b=b, eig_a=eig_a, eig_b=eig_b)


def _clamped_psd_eigs(eigs: np.ndarray, name: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(eigs), initial=0.0)))
    if np.min(eigs) < -_PSD_CLAMP * scale:
        raise ValueError(f"matrix {name} is not positive semidefinite")
    return np.maximum(eigs, 0.0)


def trace_product_bounds(p: HermitianPair) -> tuple[float, float, float]:
    """Bounds on tr(AB): sum of eigenvalues paired opposite/same order."""
    lam, gam = p.eig_a, p.eig_b
    lower = float(np.dot(lam, gam[::-1]))
    upper = float(np.dot(lam, gam))
    value = float(np.trace(p.a @ p.b).real)
    return lower, value, upper


def det_sum_bounds(p: HermitianPair) -> tuple[float, float, float]:
    """Bounds on det(A+B) for PSD A, B: products of sorted eigenvalue sums."""
    lam = _clamped_psd_eigs(p.eig_a, "a")
    gam = _clamped_psd_eigs(p.eig_b, "b")
    lower = float(np.prod(lam + gam))
    upper = float(np.prod(lam + gam[::-1]))
    value = float(np.linalg.det(p.a + p.b).real)
    return lower, value, upper


def det_identity_inverse_bounds(p: HermitianPair) -> tuple[float, float, float]:
    """Bounds on det(I + A^{-1}B) for PD A and PSD B."""
    lam = p.eig_a
    if np.min(lam) < 1e-12:
        raise ValueError("matrix a must be positive definite")
    gam = _clamped_psd_eigs(p.eig_b, "b")
    lower = float(np.prod(1.0 + gam / lam))
    upper = float(np.prod(1.0 + gam[::-1] / lam))
    n = p.a.shape[0]
    value = float(np.linalg.det(np.eye(n) + np.linalg.solve(p.a, p.b)).real)
    return lower, value, upper
