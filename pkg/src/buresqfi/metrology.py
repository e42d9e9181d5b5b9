"""Closed-form metrology quantities at a single parameter point.

Every function here consumes a :class:`~buresqfi.families.DerivativeBundle`
and works in the eigenbasis of ``rho``.  With ``A_i = <k|d_i rho|l>`` and
``T_ij[k, l] = Re(A_i[k, l] A_j[l, k])`` the quantities differ only in which
eigenvalue pairs ``(p_k, p_l)`` they sum over:

* ``qfi_spectral``      all pairs with ``p_k + p_l > 0``
* ``truncated_metric``  pairs with both ``p_k, p_l > 0``
* ``continuous_qfi``    pairs with both positive, plus ``2 tr[P0 d_ij rho]``
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (BasisMismatch, DimensionMismatch, DomainError, InvariantViolation,
                     MissingSecondDerivatives)
from .extrapolation import richardson
from .families import DerivativeBundle, FiniteDifferenceConfig, StateFamily, as_point
from .hermitian import TOL_ZERO, hermitize, kernel_projector, psd_sqrt

QFI_H = "QFI_H"
CONTINUOUS_QFI = "continuous_QFI_Hc"
TRUNCATED_METRIC = "truncated_metric_4g"
HESSIAN_SUM = "hessian_sum"
JUMP_DELTA = "jump_delta"

PSD_TOL = 1e-8


@dataclass(frozen=True)
class MetricMatrix:
    """Real symmetric ``n x n`` matrix tagged with what it represents."""

    values: np.ndarray
    role: str
    point: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        asym = np.max(np.abs(v - v.T), initial=0.0)
        if asym > 1e-9 * max(1.0, np.max(np.abs(v), initial=0.0)):
            raise InvariantViolation(f"{self.role} matrix is not symmetric ({asym:.3e})")
        object.__setattr__(self, "values", (v + v.T) / 2)

    def __getitem__(self, idx):
        return self.values[idx]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])


def _psd_guarded(values, role, bundle: DerivativeBundle, **diag) -> MetricMatrix:
    m = MetricMatrix(values, role, bundle.point, diag)
    scale = max(1.0, float(np.max(np.abs(m.values), initial=0.0)))
    if m.min_eigenvalue < -PSD_TOL * scale:
        raise InvariantViolation(
            f"{role} has negative eigenvalue {m.min_eigenvalue:.3e} at {bundle.point.tolist()}")
    return m


def _pair_terms(bundle: DerivativeBundle):
    """Return ``(A, T, psum, both_pos, mixed, both_zero)`` in the eigenbasis.

    ``A[i]`` is ``d_i rho`` in the eigenbasis, ``T[i, j, k, l]`` the real pair
    products and ``psum[k, l] = p_k + p_l``.
    """
    es = bundle.spectrum
    v = es.eigenvectors
    a = np.einsum("xk,ixy,yl->ikl", v.conj(), bundle.d1, v)
    t = np.einsum("ikl,jkl->ijkl", a, a.conj()).real
    p = es.eigenvalues
    pos = p != 0.0
    both_pos = pos[:, None] & pos[None, :]
    both_zero = ~pos[:, None] & ~pos[None, :]
    mixed = ~both_pos & ~both_zero
    psum = p[:, None] + p[None, :]
    return a, t, psum, both_pos, mixed, both_zero


def _masked_sum(t, psum, mask):
    safe = np.where(mask, psum, 1.0)
    return np.einsum("ijkl->ij", np.where(mask, t / safe, 0.0))


def _kernel_trace_d2(bundle: DerivativeBundle) -> np.ndarray:
    if bundle.d2 is None:
        raise MissingSecondDerivatives("bundle has no second derivatives")
    p0 = kernel_projector(bundle.spectrum)
    return np.einsum("xy,ijyx->ij", p0, bundle.d2).real


# --- SLD and QFI --------------------------------------------------------------

@dataclass(frozen=True)
class SLDSet:
    """Symmetric logarithmic derivatives ``L_i`` (in the computational basis)."""

    operators: np.ndarray
    basis: object
    bundle: DerivativeBundle = field(repr=False)
    residual: float = 0.0


def sld(bundle: DerivativeBundle) -> SLDSet:
    """``L_i = 2 sum_{p_k + p_l > 0} <k|d_i rho|l> / (p_k + p_l) |k><l|``."""
    a, _, psum, both_pos, mixed, both_zero = _pair_terms(bundle)
    reach = ~both_zero
    coeff = np.where(reach, 2.0 / np.where(reach, psum, 1.0), 0.0)
    l_eig = a * coeff[None]
    v = bundle.spectrum.eigenvectors
    ops = np.einsum("xk,ikl,yl->ixy", v, l_eig, v.conj())
    ops = (ops + np.swapaxes(ops.conj(), -1, -2)) / 2
    # residual of (L rho + rho L)/2 = d rho on the reachable block
    p = bundle.spectrum.eigenvalues
    lhs = l_eig * (psum[None] / 2)
    resid = float(np.max(np.abs(np.where(reach[None], lhs - a, 0.0)), initial=0.0))
    return SLDSet(ops, bundle.spectrum, bundle, resid)


def qfi_spectral(bundle: DerivativeBundle) -> MetricMatrix:
    """Quantum Fisher information matrix from the spectral sum over ``p_k + p_l > 0``."""
    _, t, psum, _, _, both_zero = _pair_terms(bundle)
    h = 2.0 * _masked_sum(t, psum, ~both_zero)
    excluded = int(np.count_nonzero(both_zero))
    return _psd_guarded(h, QFI_H, bundle, excluded_pairs=excluded, route="spectral")


def qfi_from_sld(bundle: DerivativeBundle, slds: SLDSet) -> MetricMatrix:
    """``H_ij = 1/2 tr[(L_i L_j + L_j L_i) rho]``."""
    same = slds.bundle is bundle or (
        np.array_equal(slds.basis.eigenvectors, bundle.spectrum.eigenvectors)
        and np.array_equal(slds.basis.eigenvalues, bundle.spectrum.eigenvalues))
    if not same:
        raise BasisMismatch("SLDs were built from a different bundle")
    ls = slds.operators
    prod = np.einsum("ixy,jyz,zx->ij", ls, ls, bundle.rho)
    h = (prod + prod.T).real / 2
    return _psd_guarded(h, QFI_H, bundle, route="sld")


# --- fidelity -----------------------------------------------------------------

def _as_state(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return hermitize(m)


def root_fidelity(a, b, tol_zero: float = TOL_ZERO) -> float:
    """``sqrt(F) = tr sqrt(sqrt(a) b sqrt(a))``.

    Evaluated as the nuclear norm of ``sqrt(a) sqrt(b)``, which is the same
    quantity but avoids square roots of rounding-level eigenvalues of the
    product.
    """
    a, b = _as_state(a), _as_state(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"states have shapes {a.shape} and {b.shape}")
    sa = psd_sqrt(a, tol_zero)
    sb = psd_sqrt(b, tol_zero)
    s = np.linalg.svd(sa @ sb, compute_uv=False)
    return float(min(max(np.sum(s), 0.0), 1.0))


def uhlmann_fidelity(a, b, tol_zero: float = TOL_ZERO) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(a) b sqrt(a)))**2``."""
    return root_fidelity(a, b, tol_zero) ** 2


def bures_distance_sq(a, b, tol_zero: float = TOL_ZERO) -> float:
    return 2.0 * (1.0 - root_fidelity(a, b, tol_zero))


# --- Bures metric ---------------------------------------------------------------

def continuous_qfi(bundle: DerivativeBundle) -> MetricMatrix:
    """Four times the Bures metric.

    Computed from ``2 sum_{p_k, p_l > 0} T / (p_k + p_l) + 2 tr[P0 d_ij rho]``,
    which needs no eigenvalue tracking.
    """
    _, t, psum, both_pos, _, _ = _pair_terms(bundle)
    hc = 2.0 * _masked_sum(t, psum, both_pos) + 2.0 * _kernel_trace_d2(bundle)
    return _psd_guarded(hc, CONTINUOUS_QFI, bundle, route="kernel-trace")


def truncated_metric(bundle: DerivativeBundle) -> MetricMatrix:
    """Support-only sum (misses the mixed ``p_k > 0, p_l = 0`` terms), times four."""
    _, t, psum, both_pos, _, _ = _pair_terms(bundle)
    return _psd_guarded(2.0 * _masked_sum(t, psum, both_pos), TRUNCATED_METRIC, bundle)


def kernel_hessian_sum(bundle: DerivativeBundle) -> MetricMatrix:
    """Sum of the Hessians of all vanishing eigenvalues, ``(H_c - H) / 2``.

    The independent route ``tr[P0 d_ij rho] - 2 sum_{p_k>0, p_l=0} T / (p_k + p_l)``
    is evaluated too; its discrepancy is in ``diagnostics['route_discrepancy']``.
    """
    hc = continuous_qfi(bundle).values
    h = qfi_spectral(bundle).values
    by_difference = (hc - h) / 2
    _, t, psum, _, _, _ = _pair_terms(bundle)
    pos = bundle.spectrum.eigenvalues != 0.0
    sup_ker = pos[:, None] & ~pos[None, :]
    by_trace = _kernel_trace_d2(bundle) - 2.0 * _masked_sum(t, psum, sup_ker)
    disc = float(np.max(np.abs(by_difference - by_trace), initial=0.0))
    return MetricMatrix(by_difference, HESSIAN_SUM, bundle.point,
                        {"route_discrepancy": disc, "trace_route": by_trace})


# --- fidelity-based oracle -------------------------------------------------------

def _directional_metric(fam, p, u, rho_p, steps, rtol):
    def dist(s, sign):
        q = p + sign * s * u
        fam.check_domain(q)
        return bures_distance_sq(rho_p, fam.rho(q)) / s**2

    try:
        vals = [dist(s, 1.0) for s in steps]
    except DomainError:
        vals = [dist(s, -1.0) for s in steps]
    return richardson(steps, vals, power=1, rtol=rtol)


def numeric_bures_metric(fam: StateFamily, p, fd: Optional[FiniteDifferenceConfig] = None,
                         rtol: float = 1e-3) -> MetricMatrix:
    """Four times the Bures metric from fidelities of nearby states.

    ``u^T g u`` is ``d_B^2(rho(p), rho(p + h u)) / h^2`` extrapolated to ``h -> 0``
    over ``h, h/2, h/4, ...``; off-diagonal entries come from the direction
    ``e_i + e_j`` by polarization.  Steps that leave the domain are taken in
    the opposite direction.
    """
    fd = fd or FiniteDifferenceConfig(h=1e-3, richardson_levels=2)
    p = as_point(p, fam.n_params)
    rho_p = fam.density(p)
    n = fam.n_params
    eye = np.eye(n)
    steps = fd.steps
    g = np.zeros((n, n))
    changes = {}
    for i in range(n):
        ex = _directional_metric(fam, p, eye[i], rho_p, steps, rtol)
        g[i, i] = float(ex.value)
        changes[(i, i)] = ex.relative_change
    for i in range(n):
        for j in range(i + 1, n):
            ex = _directional_metric(fam, p, eye[i] + eye[j], rho_p, steps, rtol)
            g[i, j] = g[j, i] = (float(ex.value) - g[i, i] - g[j, j]) / 2
            changes[(i, j)] = ex.relative_change
    return MetricMatrix(4.0 * g, CONTINUOUS_QFI, p,
                        {"provenance": "numeric", "steps": steps,
                         "relative_change": max(changes.values())})


# --- Cramer-Rao -----------------------------------------------------------------

@dataclass(frozen=True)
class CramerRaoBound:
    """Covariance lower bound; ``null_directions`` are unestimable directions."""

    bound: np.ndarray
    singular: bool
    null_directions: np.ndarray


def cramer_rao_lower_bound(h, tol: float = 1e-10) -> CramerRaoBound:
    """Inverse QFI, or its pseudo-inverse on the support with a singular flag."""
    m = np.atleast_2d(np.asarray(h.values if isinstance(h, MetricMatrix) else h, dtype=float))
    m = (m + m.T) / 2
    w, v = np.linalg.eigh(m)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    keep = w > tol * scale
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    bound = (v * inv_w) @ v.T
    return CramerRaoBound((bound + bound.T) / 2, bool(not np.all(keep)), v[:, ~keep].T)
