"""Rank-change points: vanishing-eigenvalue Hessians, directional jumps of the
continuous QFI, directional limits, continuity verdicts and regularization."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (DegenerateKernelNeedsDirection, DomainError, InvalidNu, InvariantViolation,
                     MissingSecondDerivatives, NotCoDiagonal, RefusedPathologicalPoint,
                     Rho0NotFullRank)
from .extrapolation import richardson
from .families import (DerivativeBundle, FiniteDifferenceConfig, StateFamily, as_point,
                       evaluate_bundle)
from .hermitian import TOL_ZERO, check_density_matrix, hermitize
from .metrology import (JUMP_DELTA, QFI_H, MetricMatrix, continuous_qfi, kernel_hessian_sum,
                        qfi_spectral)

JUMP_TOL_REL = 1e-10
JUMP_TOL_ABS = 1e-12
DEFAULT_LIMIT_SCHEDULE = tuple(1e-2 / 2**k for k in range(5))
DEFAULT_NU_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
COMMUTATOR_TOL = 1e-8


def unit_direction(u, n: Optional[int] = None) -> np.ndarray:
    """Normalize ``u`` to a real unit vector of length ``n``."""
    u = as_point(u, n)
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        raise ValueError("direction must be non-zero")
    return u / norm


# --- branch Hessians -----------------------------------------------------------

@dataclass(frozen=True)
class BranchHessian:
    """Hessian ``d_i d_j p_k`` of one vanishing eigenvalue branch."""

    branch_index: int
    hessian: np.ndarray
    kernel_vector: np.ndarray

    def curvature(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.hessian @ u)

    @property
    def is_psd(self) -> bool:
        return bool(np.linalg.eigvalsh(self.hessian)[0] >= -1e-7)


def kernel_second_order_forms(bundle: DerivativeBundle) -> np.ndarray:
    """``M[i, j]``: second-order forms on the kernel, shape ``(n, n, m, m)``.

    ``<l|M[i, j]|l> = <l|d_ij rho|l> - 2 sum_{p_k > 0} Re(<l|d_i rho|k><k|d_j rho|l>) / p_k``
    for any unit kernel vector ``l``.
    """
    if bundle.d2 is None:
        raise MissingSecondDerivatives("branch Hessians need second derivatives")
    es = bundle.spectrum
    v0 = es.eigenvectors[:, es.zero_set]
    vp = es.eigenvectors[:, es.positive_set]
    pp = es.eigenvalues[es.positive_set]
    d2k = np.einsum("xa,ijxy,yb->ijab", v0.conj(), bundle.d2, v0)
    b = np.einsum("xa,ixy,yk->iak", v0.conj(), bundle.d1, vp)
    schur = np.einsum("iak,jbk,k->ijab", b, b.conj(), 1.0 / pp)
    m = d2k - schur - np.swapaxes(schur, 0, 1)
    return (m + np.conj(np.swapaxes(m, -1, -2))) / 2


def _rotated_kernel(bundle: DerivativeBundle, u: Optional[np.ndarray]):
    """Kernel basis (columns), forms ``M`` in that basis, and ``M(u)`` eigenvalues."""
    es = bundle.spectrum
    m = kernel_second_order_forms(bundle)
    v0 = es.eigenvectors[:, es.zero_set]
    dim_k = v0.shape[1]
    if u is None:
        if dim_k > 1:
            raise DegenerateKernelNeedsDirection(
                f"kernel has dimension {dim_k}; a direction is needed to pick branches")
        return v0, m, None
    mu = hermitize(np.einsum("s,t,stab->ab", u, u, m), tol=1e-6)
    lam, w = np.linalg.eigh(mu)
    m_rot = np.einsum("ak,ijab,bl->ijkl", w.conj(), m, w)
    return v0 @ w, m_rot, lam


def vanishing_branch_hessians(bundle: DerivativeBundle, u=None) -> list[BranchHessian]:
    """One :class:`BranchHessian` per vanishing eigenvalue.

    When the kernel is more than one-dimensional, its basis is rotated to
    diagonalize ``sum_st u_s u_t M[s, t]`` so that each branch is the
    eigenvalue that grows quadratically along ``u``.
    """
    if len(bundle.spectrum.zero_set) == 0:
        return []
    u = None if u is None else unit_direction(u, bundle.n_params)
    vecs, m, _ = _rotated_kernel(bundle, u)
    out = []
    for k, idx in enumerate(bundle.spectrum.zero_set):
        hk = m[:, :, k, k].real
        out.append(BranchHessian(int(idx), (hk + hk.T) / 2, vecs[:, k]))
    return out


# --- jumps -------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionalLimit:
    """``lim_{h -> 0+} H_c(p + h u)`` and its comparison with ``H_c(p) + Delta_u(p)``."""

    limit: MetricMatrix
    expected: np.ndarray
    residual: float
    steps: tuple
    values: list
    relative_change: float
    coupled_residual: float = 0.0


@dataclass(frozen=True)
class JumpReport:
    point: np.ndarray
    direction: np.ndarray
    delta: MetricMatrix
    contributing_branches: list
    excluded_branches: list
    kernel_coupling: np.ndarray
    numeric_confirmation: Optional[DirectionalLimit] = None

    @property
    def coupled_delta(self) -> np.ndarray:
        """Jump including cross terms between distinct kernel branches.

        Equal to ``delta`` for a one-dimensional kernel; for larger kernels it
        is the exact directional limit of ``H_c`` minus ``H_c(p)``.
        """
        return self.delta.values + self.kernel_coupling


def jump(bundle: DerivativeBundle, u, fam: Optional[StateFamily] = None,
         schedule: Optional[Sequence[float]] = None) -> JumpReport:
    """Jump ``Delta_u = 2 sum_k [(H_k u)(H_k u)^T / (u^T H_k u) - H_k]``.

    Branches with ``u^T H_k u <= 1e-10 * |H_k| + 1e-12`` are excluded and listed.
    Passing ``fam`` also runs :func:`directional_limit` as a numeric check.
    """
    n = bundle.n_params
    u = unit_direction(u, n)
    delta = np.zeros((n, n))
    coupling = np.zeros((n, n))
    used, excluded = [], []
    if len(bundle.spectrum.zero_set):
        _, m, lam = _rotated_kernel(bundle, u)
        for k, idx in enumerate(bundle.spectrum.zero_set):
            hk = m[:, :, k, k].real
            hk = (hk + hk.T) / 2
            c = float(u @ hk @ u)
            tol = JUMP_TOL_REL * float(np.linalg.norm(hk, 2)) + JUMP_TOL_ABS
            if c > tol:
                hu = hk @ u
                delta += 2.0 * (np.outer(hu, hu) / c - hk)
                used.append((int(idx), c))
            else:
                excluded.append((int(idx), c))
        coupling = _kernel_coupling(m, u, lam)
    report = JumpReport(bundle.point, u, MetricMatrix(delta, JUMP_DELTA, bundle.point),
                        used, excluded, coupling)
    if fam is not None:
        conf = directional_limit(fam, bundle.point, u, schedule, bundle=bundle, report=report)
        report = replace(report, numeric_confirmation=conf)
    return report


def _kernel_coupling(m, u, lam) -> np.ndarray:
    # cross-branch part of the kernel-block QFI approached along u
    a = np.einsum("m,imkl->ikl", u, m)
    dim_k = len(lam)
    n = a.shape[0]
    out = np.zeros((n, n))
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    for k in range(dim_k):
        for l in range(dim_k):
            s = lam[k] + lam[l]
            if k != l and s > JUMP_TOL_REL * scale:
                out += 4.0 * np.real(np.outer(a[:, k, l], a[:, l, k])) / s
    return (out + out.T) / 2


def directional_limit(fam: StateFamily, p, u, schedule: Optional[Sequence[float]] = None,
                      fd: Optional[FiniteDifferenceConfig] = None, rtol: float = 1e-3,
                      bundle: Optional[DerivativeBundle] = None,
                      report: Optional[JumpReport] = None) -> DirectionalLimit:
    """Extrapolate ``H_c(p + h u)`` to ``h -> 0+`` over ``schedule``.

    The leading correction is ``O(h)``.  The residual compares the limit with
    ``H_c(p) + Delta_u(p)``; ``coupled_residual`` uses the coupled jump.
    """
    p = as_point(p, fam.n_params)
    u = unit_direction(u, fam.n_params)
    steps = tuple(float(h) for h in (schedule or DEFAULT_LIMIT_SCHEDULE))
    if any(h <= 0 for h in steps) or any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("schedule must be positive and strictly decreasing")
    for h in steps:
        if not fam.in_domain(p + h * u):
            raise DomainError(f"p + {h:g} u leaves the domain of {fam.name}")
    values = [continuous_qfi(evaluate_bundle(fam, p + h * u, fd)).values for h in steps]
    ex = richardson(steps, values, power=1, rtol=rtol)
    bundle = bundle or evaluate_bundle(fam, p, fd)
    report = report or jump(bundle, u)
    hc = continuous_qfi(bundle).values
    expected = hc + report.delta.values
    limit = MetricMatrix(ex.value, QFI_H, p, {"direction": u})
    res = float(np.max(np.abs(limit.values - expected)))
    cres = float(np.max(np.abs(limit.values - hc - report.coupled_delta)))
    return DirectionalLimit(limit, expected, res, steps, values, ex.relative_change, cres)


# --- continuity ----------------------------------------------------------------

@dataclass(frozen=True)
class ContinuityVerdict:
    """Per-element continuity of ``H_c`` along one axis, plus the ``H`` vs ``H_c`` gap."""

    axis: int
    delta: np.ndarray
    continuous: np.ndarray
    qfi_gap: np.ndarray
    qfi_continuous: bool
    tol: float

    @property
    def all_continuous(self) -> bool:
        return bool(np.all(self.continuous))


def continuity_verdict(bundle: DerivativeBundle, axis: int, tol: float = 1e-8) -> ContinuityVerdict:
    if not bundle.regular:
        raise RefusedPathologicalPoint(
            f"{bundle.family_name} is not twice continuously differentiable at "
            f"{bundle.point.tolist()}")
    n = bundle.n_params
    if not 0 <= axis < n:
        raise ValueError(f"axis {axis} out of range for {n} parameters")
    e = np.zeros(n)
    e[axis] = 1.0
    rep = jump(bundle, e)
    gap = kernel_hessian_sum(bundle).values
    d = rep.delta.values
    return ContinuityVerdict(axis, d, np.abs(d) <= tol, gap,
                             bool(np.max(np.abs(gap), initial=0.0) <= tol), tol)


# --- regularization --------------------------------------------------------------

def _check_nu(nu: float) -> float:
    nu = float(nu)
    if not 0.0 < nu < 1.0:
        raise InvalidNu(f"nu must lie in (0, 1), got {nu!r}")
    return nu


def _anchor(rho0, dim: int) -> np.ndarray:
    if rho0 is None:
        return np.eye(dim, dtype=complex) / dim
    r = check_density_matrix(rho0)
    if r.shape[0] != dim:
        raise Rho0NotFullRank(f"rho0 has dimension {r.shape[0]}, family has {dim}")
    if np.linalg.eigvalsh(r)[0] <= 1e-12:
        raise Rho0NotFullRank("rho0 must be full rank")
    return r


def regularize(fam: StateFamily, rho0=None, nu: float = 1e-3) -> StateFamily:
    """The family ``(1 - nu) rho(p) + nu rho0`` (``rho0 = I/dim`` by default).

    ``rho0`` must commute with every ``rho(p)`` that gets evaluated; this is
    checked at evaluation time.
    """
    nu = _check_nu(nu)
    r0 = _anchor(rho0, fam.dim)
    trivial = rho0 is None

    def rho(q):
        r = fam.rho(q)
        if not trivial:
            comm = np.linalg.norm(r @ r0 - r0 @ r)
            if comm > COMMUTATOR_TOL:
                raise NotCoDiagonal(f"rho0 does not commute with rho at {list(q)} ({comm:.2e})")
        return (1 - nu) * r + nu * r0

    d1 = None if fam.d1 is None else (lambda q: (1 - nu) * np.asarray(fam.d1(q)))
    d2 = None if fam.d2 is None else (lambda q: (1 - nu) * np.asarray(fam.d2(q)))
    return replace(fam, name=f"{fam.name}[nu={nu:g}]", rho=rho, d1=d1, d2=d2,
                   description=f"{fam.description} mixed with weight {nu:g}")


@dataclass(frozen=True)
class RegularizationTrace:
    nu_schedule: tuple
    qfi_values: list
    extrapolated_limit: MetricMatrix
    rho0_description: str
    qfi_at_point: MetricMatrix
    hessian_sum: MetricMatrix
    continuous_qfi_at_point: MetricMatrix
    min_eigenvalues: tuple
    relative_change: float = 0.0

    @property
    def reconstructed_hc(self) -> np.ndarray:
        """``limit + 2 * kernel_hessian_sum``, which should equal ``H_c``."""
        return self.extrapolated_limit.values + 2.0 * self.hessian_sum.values

    @property
    def limit_residual(self) -> float:
        return float(np.max(np.abs(self.extrapolated_limit.values - self.qfi_at_point.values)))

    @property
    def hc_residual(self) -> float:
        return float(np.max(np.abs(self.reconstructed_hc - self.continuous_qfi_at_point.values)))


def regularization_limit(fam: StateFamily, p, rho0=None,
                         schedule: Sequence[float] = DEFAULT_NU_SCHEDULE,
                         fd: Optional[FiniteDifferenceConfig] = None,
                         rtol: float = 1e-3) -> RegularizationTrace:
    """QFI of the regularized family along a decreasing ``nu`` schedule, extrapolated to 0."""
    sched = tuple(_check_nu(v) for v in schedule)
    if len(sched) < 2 or any(b >= a for a, b in zip(sched, sched[1:])):
        raise InvalidNu("nu schedule needs at least two strictly decreasing values")
    if sched[-1] < 1e-8:
        raise InvalidNu("smallest nu must be at least 1e-8")
    p = as_point(p, fam.n_params)
    r0 = _anchor(rho0, fam.dim)
    base = evaluate_bundle(fam, p, fd)
    comm = np.linalg.norm(base.rho @ r0 - r0 @ base.rho)
    if comm > COMMUTATOR_TOL:
        raise NotCoDiagonal(f"rho0 does not commute with rho(p) ({comm:.2e})")
    floor0 = float(np.linalg.eigvalsh(r0)[0])
    values, mins = [], []
    for nu in sched:
        b = evaluate_bundle(regularize(fam, rho0, nu), p, fd)
        lo = float(np.linalg.eigvalsh(b.rho)[0])
        if lo < nu * floor0 - 1e-12:
            raise InvariantViolation(f"regularized state at nu={nu:g} has eigenvalue {lo:.3e}")
        mins.append(lo)
        values.append(qfi_spectral(b))
    ex = richardson(sched, [v.values for v in values], power=1, rtol=rtol)
    desc = "I/dim" if rho0 is None else "user-supplied full-rank rho0"
    return RegularizationTrace(sched, values, MetricMatrix(ex.value, QFI_H, p), desc,
                               qfi_spectral(base), kernel_hessian_sum(base),
                               continuous_qfi(base), tuple(mins), ex.relative_change)


# --- zeroth-order directional Taylor approximation ---------------------------------

def directional_taylor_zeroth(bundle_at_base: DerivativeBundle, u_tilde,
                              n_estimation: Optional[int] = None) -> MetricMatrix:
    """Approximate ``H`` just off a rank-change point by ``H_c + Delta_u`` at the point.

    ``u_tilde`` points from the base into the region of interest in the
    extended parameter space; the result is the leading ``n_estimation``
    block (all but the last coordinate by default).
    """
    n = bundle_at_base.n_params
    k = n - 1 if n_estimation is None else int(n_estimation)
    if not 1 <= k <= n:
        raise ValueError(f"n_estimation must lie in [1, {n}]")
    rep = jump(bundle_at_base, u_tilde)
    hc = continuous_qfi(bundle_at_base).values
    approx = (hc + rep.delta.values)[:k, :k]
    coupled = (hc + rep.coupled_delta)[:k, :k]
    return MetricMatrix(approx, QFI_H, bundle_at_base.point,
                        {"continuous_qfi": hc, "jump": rep, "coupled": coupled})


# --- eigenvalue-tracking oracle ---------------------------------------------------

@dataclass(frozen=True)
class TrackedBranch:
    branch_index: int
    fitted_curvature: float
    predicted_curvature: float
    steps: tuple
    eigenvalues: tuple

    @property
    def error(self) -> float:
        return abs(self.fitted_curvature - self.predicted_curvature)


def track_vanishing_branches(fam: StateFamily, p, u, h0: float = 1e-3, levels: int = 6,
                             fd: Optional[FiniteDifferenceConfig] = None) -> list[TrackedBranch]:
    """Fit ``u^T H_k u`` from the eigenvalues of ``rho(p + h u)`` for small ``h``.

    Branches are followed by maximal eigenvector overlap starting from the
    (rotated) kernel vectors, and each is fitted by
    ``a1 h + a2 h^2 + a3 h^3 + a4 h^4``; the curvature is ``2 a2``.
    """
    p = as_point(p, fam.n_params)
    u = unit_direction(u, fam.n_params)
    bundle = evaluate_bundle(fam, p, fd)
    branches = vanishing_branch_hessians(bundle, u)
    steps = tuple(h0 / 2**k for k in range(levels))
    refs = [b.kernel_vector for b in branches]
    tracks = [[] for _ in branches]
    for h in sorted(steps):
        q = p + h * u
        fam.check_domain(q)
        w, v = np.linalg.eigh(hermitize(fam.rho(q)))
        for t, ref in enumerate(refs):
            j = int(np.argmax(np.abs(v.conj().T @ ref)))
            tracks[t].append((h, w[j]))
            refs[t] = v[:, j]
    out = []
    for b, tr in zip(branches, tracks):
        hs = np.array([h for h, _ in tr])
        ps = np.array([x for _, x in tr])
        design = np.stack([hs, hs**2, hs**3, hs**4], axis=1)
        coef, *_ = np.linalg.lstsq(design, ps, rcond=None)
        out.append(TrackedBranch(b.branch_index, float(2 * coef[1]), b.curvature(u),
                                 tuple(hs), tuple(ps)))
    return out
