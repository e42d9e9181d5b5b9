"""Dense complex Hermitian linear algebra.

Everything here works on plain ``numpy`` arrays.  The one structured value is
:class:`EigenDecomposition`, which carries the rank partition (which
eigenvalues count as exactly zero) that the rest of the package keys off.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, InvariantViolation, NotHermitian, NotPSD

TOL_ZERO = 1e-10
HERMITIAN_TOL = 1e-8


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def hermitize(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``(m + m^dagger) / 2``; raise if ``m`` was not Hermitian to ``tol``."""
    m = _as_square(m)
    residual = np.max(np.abs(m - m.conj().T), initial=0.0) / 2
    if residual > tol:
        raise NotHermitian(f"matrix is not Hermitian (residual {residual:.3e})")
    return (m + m.conj().T) / 2


def zero_threshold(m: np.ndarray, tol_zero: float) -> float:
    # tolerance is relative to the trace; traceless input falls back to absolute
    scale = abs(np.trace(m).real)
    return tol_zero * scale if scale > 1e-300 else tol_zero


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues, unitary eigenvector columns and the rank partition."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    tol_zero: float = TOL_ZERO
    zero_set: np.ndarray = field(init=False, repr=False)
    positive_set: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        zero = np.flatnonzero(self.eigenvalues == 0.0)
        pos = np.flatnonzero(self.eigenvalues != 0.0)
        object.__setattr__(self, "zero_set", zero)
        object.__setattr__(self, "positive_set", pos)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def rank(self) -> int:
        return len(self.positive_set)

    def vector(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, k]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def to_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        """Matrix elements ``<k|m|l>`` in this eigenbasis."""
        v = self.eigenvectors
        return v.conj().T @ m @ v


def eigh(m, tol_zero: float = TOL_ZERO) -> EigenDecomposition:
    """Eigendecompose a Hermitian matrix and clamp near-zero eigenvalues.

    Eigenvalues within ``tol_zero`` (scaled by the trace) of zero are set to
    exactly ``0.0``; these define ``zero_set``.
    """
    h = hermitize(m)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    thr = zero_threshold(h, tol_zero)
    w = np.where(np.abs(w) <= thr, 0.0, w)
    return EigenDecomposition(w, v, tol_zero)


def psd_sqrt(m, tol_zero: float = TOL_ZERO) -> np.ndarray:
    """Principal square root of a Hermitian positive semi-definite matrix."""
    es = eigh(m, tol_zero)
    if es.eigenvalues[0] < 0:
        raise NotPSD(f"minimum eigenvalue {es.eigenvalues[0]:.3e} is below -tol")
    v = es.eigenvectors
    return (v * np.sqrt(es.eigenvalues)) @ v.conj().T


def kernel_projector(es: EigenDecomposition) -> np.ndarray:
    v = es.eigenvectors[:, es.zero_set]
    return v @ v.conj().T


def support_projector(es: EigenDecomposition) -> np.ndarray:
    v = es.eigenvectors[:, es.positive_set]
    return v @ v.conj().T


def min_eigenvalue(m) -> float:
    return float(np.linalg.eigvalsh(hermitize(m))[0])


def is_psd(m, tol: float = 1e-8) -> bool:
    """True iff the smallest eigenvalue of Hermitian ``m`` is at least ``-tol``."""
    m = np.asarray(m)
    if m.ndim == 0:
        return bool(m.real >= -tol)
    return min_eigenvalue(m) >= -tol


def check_density_matrix(rho, herm_tol: float = 1e-12, trace_tol: float = 1e-10,
                         psd_tol: float = 1e-10) -> np.ndarray:
    """Validate a density matrix and return it as a Hermitian complex array."""
    rho = _as_square(rho)
    herm = np.max(np.abs(rho - rho.conj().T), initial=0.0)
    if herm > herm_tol:
        raise InvariantViolation(f"density matrix not Hermitian (residual {herm:.3e})")
    rho = (rho + rho.conj().T) / 2
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise InvariantViolation(f"density matrix trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -psd_tol:
        raise InvariantViolation(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho
