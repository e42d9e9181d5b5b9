"""Parameterized density-matrix families and their derivative bundles.

A :class:`StateFamily` maps a parameter vector to a density matrix, optionally
with closed-form first and second derivatives.  :func:`evaluate_bundle` turns a
family and a point into a :class:`DerivativeBundle` (the state, all first and
second derivatives, and its spectrum), which is all the metrology code needs.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InvariantViolation, UnknownFamily
from .extrapolation import richardson
from .hermitian import TOL_ZERO, EigenDecomposition, check_density_matrix, eigh

Array = np.ndarray


@dataclass(frozen=True)
class FiniteDifferenceConfig:
    h: float = 1e-4
    scheme: str = "central"
    richardson_levels: int = 2

    def __post_init__(self):
        if not (0 < self.h < 1e-1):
            raise ValueError(f"finite-difference step must lie in (0, 0.1), got {self.h}")
        if self.scheme != "central":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if int(self.richardson_levels) != self.richardson_levels or self.richardson_levels < 0:
            raise ValueError("richardson_levels must be a non-negative integer")

    @property
    def steps(self) -> list[float]:
        return [self.h / 2**k for k in range(self.richardson_levels + 1)]


def as_point(p, n_params: Optional[int] = None) -> Array:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.ndim != 1 or p.size == 0:
        raise ValueError("a parameter point is a non-empty vector")
    if not np.all(np.isfinite(p)):
        raise ValueError("parameter point has non-finite coordinates")
    if n_params is not None and p.size != n_params:
        raise ValueError(f"expected {n_params} parameters, got {p.size}")
    return p


@dataclass(frozen=True)
class StateFamily:
    """A parameterized density matrix ``rho(eps)``.

    ``d1(eps)`` returns an ``(n, dim, dim)`` array of first derivatives and
    ``d2(eps)`` an ``(n, n, dim, dim)`` array of second derivatives; either may
    be ``None`` and is then computed by finite differences.  ``domain`` holds
    inclusive ``(lo, hi)`` bounds per parameter (``None`` for unbounded).
    ``singular_points`` lists points where the family is not twice
    continuously differentiable.
    """

    name: str
    dim: int
    n_params: int
    rho: Callable[[Array], Array]
    d1: Optional[Callable[[Array], Array]] = None
    d2: Optional[Callable[[Array], Array]] = None
    domain: Optional[tuple] = None
    default_range: Optional[tuple] = None
    singular_points: tuple = ()
    landmarks: dict = field(default_factory=dict)
    description: str = ""
    derivative_provenance: str = "analytic"

    @property
    def smoothness_class(self) -> str:
        return "C2-except-at-listed-points" if self.singular_points else "C2"

    def in_domain(self, p: Array) -> bool:
        if self.domain is None:
            return True
        for x, bounds in zip(p, self.domain):
            if bounds is None:
                continue
            lo, hi = bounds
            if (lo is not None and x < lo) or (hi is not None and x > hi):
                return False
        return True

    def check_domain(self, p: Array) -> None:
        if not self.in_domain(p):
            raise DomainError(f"point {p.tolist()} is outside the domain of {self.name}")

    def density(self, p) -> Array:
        """Evaluate and validate ``rho`` at ``p``."""
        p = as_point(p, self.n_params)
        self.check_domain(p)
        return check_density_matrix(self.rho(p))

    def is_regular(self, p, atol: float = 1e-12) -> bool:
        p = as_point(p, self.n_params)
        return not any(np.max(np.abs(p - np.asarray(s, dtype=float))) <= atol
                       for s in self.singular_points)


@dataclass(frozen=True)
class DerivativeBundle:
    """State, derivatives and spectrum of a family at one parameter point."""

    point: Array
    rho: Array
    d1: Array
    d2: Array
    spectrum: EigenDecomposition
    provenance: str
    regular: bool = True
    family_name: str = ""
    # max_k,i |<k|d_i rho|k>| over the kernel; nonzero only where a vanishing
    # eigenvalue is not at an interior minimum (e.g. on a domain boundary)
    kernel_gradient: float = 0.0

    @property
    def n_params(self) -> int:
        return len(self.point)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def tol_zero(self) -> float:
        return self.spectrum.tol_zero


def _fd_derivatives(fam: StateFamily, p: Array, fd: FiniteDifferenceConfig,
                    want_d1: bool = True):
    n = fam.n_params
    eye = np.eye(n)

    def ev(q):
        fam.check_domain(q)
        r = np.asarray(fam.rho(q), dtype=complex)
        # rounding-level anti-Hermitian parts would be amplified by 1/h^2
        return (r + r.conj().T) / 2

    rho0 = ev(p)
    d1_levels, d2_levels = [], []
    for s in fd.steps:
        plus = [ev(p + s * eye[i]) for i in range(n)]
        minus = [ev(p - s * eye[i]) for i in range(n)]
        d1 = np.array([(plus[i] - minus[i]) / (2 * s) for i in range(n)])
        d2 = np.empty((n, n) + rho0.shape, dtype=complex)
        for i in range(n):
            d2[i, i] = (plus[i] - 2 * rho0 + minus[i]) / s**2
            for j in range(i + 1, n):
                cross = (ev(p + s * (eye[i] + eye[j])) - ev(p + s * (eye[i] - eye[j]))
                         - ev(p - s * (eye[i] - eye[j])) + ev(p - s * (eye[i] + eye[j])))
                d2[i, j] = d2[j, i] = cross / (4 * s**2)
        d1_levels.append(d1)
        d2_levels.append(d2)

    def extrap(levels):
        re_ = richardson(fd.steps, [lv.real for lv in levels], power=2).value
        im_ = richardson(fd.steps, [lv.imag for lv in levels], power=2).value
        return re_ + 1j * im_

    return (extrap(d1_levels) if want_d1 else None), extrap(d2_levels)


def _hermitian_part(a: Array, what: str, tol: float = 1e-8) -> Array:
    resid = np.max(np.abs(a - np.swapaxes(a.conj(), -1, -2)), initial=0.0)
    if resid > tol:
        raise InvariantViolation(f"{what} is not Hermitian (residual {resid:.3e})")
    return (a + np.swapaxes(a.conj(), -1, -2)) / 2


def evaluate_bundle(fam: StateFamily, p, fd: Optional[FiniteDifferenceConfig] = None,
                    tol_zero: float = TOL_ZERO) -> DerivativeBundle:
    """Evaluate ``rho``, all first and all second derivatives of ``fam`` at ``p``.

    Closed-form derivatives are used when the family has them; otherwise central
    differences with Richardson extrapolation (``fd``).
    """
    fd = fd or FiniteDifferenceConfig()
    p = as_point(p, fam.n_params)
    rho = fam.density(p)
    n = fam.n_params
    provenance = fam.derivative_provenance
    d1 = None if fam.d1 is None else np.asarray(fam.d1(p), dtype=complex)
    d2 = None if fam.d2 is None else np.asarray(fam.d2(p), dtype=complex)
    if d1 is None or d2 is None:
        fd_d1, fd_d2 = _fd_derivatives(fam, p, fd, want_d1=d1 is None)
        d1 = fd_d1 if d1 is None else d1
        d2 = fd_d2 if d2 is None else d2
        provenance = f"finite-difference(h={fd.h:g}, levels={fd.richardson_levels})"
    d1 = d1.reshape((n,) + rho.shape)
    d2 = d2.reshape((n, n) + rho.shape)

    d1 = _hermitian_part(d1, "first derivative")
    d2 = _hermitian_part(d2, "second derivative", tol=1e-7)
    d2 = (d2 + np.swapaxes(d2, 0, 1)) / 2
    for i in range(n):
        tr = abs(np.trace(d1[i]))
        if tr > 1e-8:
            raise InvariantViolation(f"trace of d_{i} rho is {tr:.3e}, expected 0")

    es = eigh(rho, tol_zero)
    kgrad = 0.0
    if len(es.zero_set):
        vk = es.eigenvectors[:, es.zero_set]
        diag = np.einsum("ak,iab,bk->ik", vk.conj(), d1, vk)
        kgrad = float(np.max(np.abs(diag)))
    return DerivativeBundle(point=p, rho=rho, d1=d1, d2=d2, spectrum=es,
                            provenance=provenance, regular=fam.is_regular(p),
                            family_name=fam.name, kernel_gradient=kgrad)


# --- coordinate changes -----------------------------------------------------

@dataclass(frozen=True)
class CoordinateMap:
    """Smooth map ``eps = phi(eps')`` with Jacobian ``J[i, a] = d phi_i / d eps'_a``
    and Hessian ``K[i, a, b] = d^2 phi_i / d eps'_a d eps'_b``."""

    phi: Callable[[Array], Array]
    jacobian: Callable[[Array], Array]
    hessian: Callable[[Array], Array]
    n_params: int
    name: str = "map"


def identity_map(n: int) -> CoordinateMap:
    return CoordinateMap(lambda q: np.array(q, dtype=float), lambda q: np.eye(n),
                         lambda q: np.zeros((n, n, n)), n, "identity")


def scaling_map(factors: Sequence[float]) -> CoordinateMap:
    f = np.asarray(factors, dtype=float)
    n = len(f)
    return CoordinateMap(lambda q: f * q, lambda q: np.diag(f),
                         lambda q: np.zeros((n, n, n)), n, f"scale{f.tolist()}")


def square_coordinate_map(n: int, index: int) -> CoordinateMap:
    """``eps_index = eps'_index ** 2``, other coordinates unchanged."""

    def phi(q):
        out = np.array(q, dtype=float)
        out[index] = q[index] ** 2
        return out

    def jac(q):
        j = np.eye(n)
        j[index, index] = 2 * q[index]
        return j

    def hess(q):
        k = np.zeros((n, n, n))
        k[index, index, index] = 2.0
        return k

    return CoordinateMap(phi, jac, hess, n, f"square[{index}]")


def reparametrize(fam: StateFamily, cmap: CoordinateMap, name: Optional[str] = None,
                  domain: Optional[tuple] = None) -> StateFamily:
    """Family ``eps' -> rho(phi(eps'))`` with chain-rule derivatives."""

    def inner(q):
        x = np.asarray(cmap.phi(as_point(q)), dtype=float)
        fam.check_domain(x)
        return x

    def rho(q):
        return fam.rho(inner(q))

    d1 = d2 = None
    if fam.d1 is not None:
        def d1(q):
            j = np.asarray(cmap.jacobian(q), dtype=float)
            return np.einsum("ia,ixy->axy", j, fam.d1(inner(q)))

    if fam.d1 is not None and fam.d2 is not None:
        def d2(q):
            x = inner(q)
            j = np.asarray(cmap.jacobian(q), dtype=float)
            k = np.asarray(cmap.hessian(q), dtype=float)
            return (np.einsum("ia,jb,ijxy->abxy", j, j, fam.d2(x))
                    + np.einsum("iab,ixy->abxy", k, fam.d1(x)))

    return StateFamily(
        name=name or f"{fam.name}@{cmap.name}", dim=fam.dim, n_params=cmap.n_params,
        rho=rho, d1=d1, d2=d2, domain=domain,
        description=f"{fam.name} in coordinates {cmap.name}",
        derivative_provenance=fam.derivative_provenance)


# --- diagnostics ------------------------------------------------------------

@dataclass
class FamilyReport:
    max_hermiticity_error: float = 0.0
    max_trace_error: float = 0.0
    max_psd_violation: float = 0.0
    ranks: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def rank_profile(self) -> dict:
        prof: dict = {}
        for pt, r in self.ranks:
            prof.setdefault(r, []).append(pt)
        return prof

    @property
    def violations(self) -> list[str]:
        out = []
        if self.max_hermiticity_error > 1e-12:
            out.append(f"hermiticity {self.max_hermiticity_error:.3e}")
        if self.max_trace_error > 1e-10:
            out.append(f"trace {self.max_trace_error:.3e}")
        if self.max_psd_violation > 1e-10:
            out.append(f"negative eigenvalue {-self.max_psd_violation:.3e}")
        out.extend(f"{pt}: {msg}" for pt, msg in self.failures)
        return out


def validate_family(fam: StateFamily, probe_points, tol_zero: float = TOL_ZERO) -> FamilyReport:
    """Report Hermiticity, trace and positivity violations and the rank at each probe."""
    rep = FamilyReport()
    for q in probe_points:
        q = as_point(q, fam.n_params)
        key = tuple(q.tolist())
        try:
            fam.check_domain(q)
            m = np.asarray(fam.rho(q), dtype=complex)
        except Exception as exc:  # reporting only
            rep.failures.append((key, str(exc)))
            continue
        rep.max_hermiticity_error = max(rep.max_hermiticity_error,
                                        float(np.max(np.abs(m - m.conj().T))))
        rep.max_trace_error = max(rep.max_trace_error, abs(np.trace(m).real - 1))
        h = (m + m.conj().T) / 2
        w = np.linalg.eigvalsh(h)
        rep.max_psd_violation = max(rep.max_psd_violation, float(-w[0]))
        thr = tol_zero * max(abs(np.trace(h).real), 1e-300)
        rep.ranks.append((key, int(np.sum(w > thr))))
    return rep


# --- builtin families -------------------------------------------------------

def _diag_family(name, ps, dps, ddps, n_params, **kw) -> StateFamily:
    """Family whose state is diagonal in a fixed basis."""

    def rho(q):
        return np.diag(ps(q)).astype(complex)

    def d1(q):
        return np.array([np.diag(v) for v in dps(q)], dtype=complex)

    def d2(q):
        dd = ddps(q)
        return np.array([[np.diag(dd[i][j]) for j in range(n_params)]
                         for i in range(n_params)], dtype=complex)

    dim = len(ps(np.zeros(n_params)))
    return StateFamily(name=name, dim=dim, n_params=n_params, rho=rho, d1=d1, d2=d2, **kw)


def example1() -> StateFamily:
    def ps(q):
        e = q[0]
        return [math.sin(e) ** 2, math.cos(e) ** 2]

    def dps(q):
        s = math.sin(2 * q[0])
        return [[s, -s]]

    def ddps(q):
        c = 2 * math.cos(2 * q[0])
        return [[[c, -c]]]

    return _diag_family("example1", ps, dps, ddps, 1, default_range=((0.0, math.pi),),
                        description="sin^2(e)|0><0| + cos^2(e)|1><1| (purity-encoding qubit)")


def example2() -> StateFamily:
    def ps(q):
        a, b = q
        return [(math.sin(a) ** 2 + math.sin(b) ** 2) / 2, math.cos(a) ** 2 / 2,
                math.cos(b) ** 2 / 2]

    def dps(q):
        sa, sb = math.sin(2 * q[0]) / 2, math.sin(2 * q[1]) / 2
        return [[sa, -sa, 0.0], [sb, 0.0, -sb]]

    def ddps(q):
        ca, cb = math.cos(2 * q[0]), math.cos(2 * q[1])
        return [[[ca, -ca, 0.0], [0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0], [cb, 0.0, -cb]]]

    return _diag_family("example2", ps, dps, ddps, 2, default_range=((-1.0, 1.0), (-1.0, 1.0)),
                        description="two-parameter qutrit with a vanishing eigenvalue at (0, 0)")


def example3_regularized() -> StateFamily:
    def ps(q):
        e, nu = q
        return [(1 - nu) * math.sin(e) ** 2 + nu / 2, (1 - nu) * math.cos(e) ** 2 + nu / 2]

    def dps(q):
        e, nu = q
        s = math.sin(2 * e)
        c2 = math.cos(e) ** 2 - 0.5
        return [[(1 - nu) * s, -(1 - nu) * s], [c2, -c2]]

    def ddps(q):
        e, nu = q
        c, s = 2 * math.cos(2 * e), math.sin(2 * e)
        return [[[(1 - nu) * c, -(1 - nu) * c], [-s, s]], [[-s, s], [0.0, 0.0]]]

    return _diag_family(
        "example3-regularized", ps, dps, ddps, 2, domain=(None, (0.0, 1.0)),
        default_range=((0.0, math.pi), (0.0, 1.0)),
        description="(1-nu)(sin^2 e|0><0| + cos^2 e|1><1|) + nu I/2, parameters (e, nu)")


def _fig2_f(e):
    if e == 0:
        return 0.0, 0.0, 0.0
    s, c = math.sin(1 / e), math.cos(1 / e)
    s2 = math.sin(2 / e)
    f = e**4 * s * s
    df = 4 * e**3 * s * s - e**2 * s2
    ddf = 12 * e**2 * s * s - 6 * e * s2 + 2 * math.cos(2 / e)
    return f, df, ddf


def fig2_pathological() -> StateFamily:
    def ps(q):
        f = _fig2_f(q[0])[0]
        return [f, 1 - f]

    def dps(q):
        df = _fig2_f(q[0])[1]
        return [[df, -df]]

    def ddps(q):
        ddf = _fig2_f(q[0])[2]
        return [[[ddf, -ddf]]]

    return _diag_family(
        "fig2-pathological", ps, dps, ddps, 1, domain=((-1.0, 1.0),),
        default_range=((-1.0, 1.0),), singular_points=((0.0,),),
        description="e^4 sin^2(1/e)|0><0| + (1 - ...)|1><1|; second derivative discontinuous at 0")


def pure_qubit_rotation() -> StateFamily:
    def rho(q):
        c, s = math.cos(q[0]), math.sin(q[0])
        return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)

    def d1(q):
        c, s = math.cos(2 * q[0]), math.sin(2 * q[0])
        return np.array([[[-s, c], [c, s]]], dtype=complex)

    def d2(q):
        c, s = 2 * math.cos(2 * q[0]), 2 * math.sin(2 * q[0])
        return np.array([[[[-c, -s], [-s, c]]]], dtype=complex)

    return StateFamily("pure-qubit-rotation", 2, 1, rho, d1, d2,
                       default_range=((0.0, math.pi),),
                       description="projector onto cos(e)|0> + sin(e)|1>")


def constant(dim: int = 2, n_params: int = 1) -> StateFamily:
    dim, n_params = int(dim), int(n_params)
    m = np.eye(dim, dtype=complex) / dim
    z1 = np.zeros((n_params, dim, dim), dtype=complex)
    z2 = np.zeros((n_params, n_params, dim, dim), dtype=complex)
    return StateFamily("constant", dim, n_params, lambda q: m.copy(), lambda q: z1.copy(),
                       lambda q: z2.copy(), default_range=((0.0, 1.0),) * n_params,
                       description="maximally mixed state I/dim, independent of the parameters")


def _complex_gaussian(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def gram_family(name: str, a0: Array, a1: Array, a2: Array, center: Array,
                **kw) -> StateFamily:
    """``rho = A A^dagger / tr(A A^dagger)`` with
    ``A(eps) = a0 + sum_m x_m a1[m] + 1/2 sum_mn x_m x_n a2[m, n]``, ``x = eps - center``.

    ``a2`` must be symmetric in its first two indices.
    """
    n = a1.shape[0]
    center = np.asarray(center, dtype=float)

    def amat(q):
        x = np.asarray(q, dtype=float) - center
        a = a0 + np.einsum("m,mxy->xy", x, a1) + 0.5 * np.einsum("m,n,mnxy->xy", x, x, a2)
        da = a1 + np.einsum("n,mnxy->mxy", x, a2)
        return a, da

    def parts(q):
        a, da = amat(q)
        nmat = a @ a.conj().T
        dn = np.einsum("mxz,yz->mxy", da, a.conj()) + np.einsum("xz,myz->mxy", a, da.conj())
        ddn = (np.einsum("mnxz,yz->mnxy", a2, a.conj())
               + np.einsum("mxz,nyz->mnxy", da, da.conj())
               + np.einsum("nxz,myz->mnxy", da, da.conj())
               + np.einsum("xz,mnyz->mnxy", a, a2.conj()))
        s = np.trace(nmat).real
        ds = np.einsum("mxx->m", dn).real
        dds = np.einsum("mnxx->mn", ddn).real
        return nmat, dn, ddn, s, ds, dds

    def rho(q):
        a, _ = amat(q)
        nmat = a @ a.conj().T
        return nmat / np.trace(nmat).real

    def d1(q):
        nmat, dn, _, s, ds, _ = parts(q)
        return dn / s - nmat[None] * (ds / s**2)[:, None, None]

    def d2(q):
        nmat, dn, ddn, s, ds, dds = parts(q)
        out = ddn / s
        out -= (dn[:, None] * ds[None, :, None, None] + dn[None, :] * ds[:, None, None, None]) / s**2
        out -= nmat[None, None] * (dds / s**2)[:, :, None, None]
        out += 2 * nmat[None, None] * (np.outer(ds, ds) / s**3)[:, :, None, None]
        return out

    return StateFamily(name, a0.shape[0], n, rho, d1, d2, **kw)


def random_full_rank(dim: int = 3, seed: int = 0, n_params: int = 2) -> StateFamily:
    """Seeded full-rank family on ``[-1, 1]^n``: smallest singular value of ``A`` stays >= 1/8."""
    dim, seed, n = int(dim), int(seed), int(n_params)
    rng = np.random.default_rng([seed, dim, n, 1])
    q, _ = np.linalg.qr(_complex_gaussian(rng, dim, dim))
    a0 = q @ np.diag(rng.uniform(0.5, 1.5, dim))
    g1 = _complex_gaussian(rng, n, dim, dim)
    a1 = np.array([0.25 / n * g / np.linalg.norm(g, 2) for g in g1])
    g2 = _complex_gaussian(rng, n, n, dim, dim)
    g2 = (g2 + np.swapaxes(g2, 0, 1)) / 2
    a2 = np.array([[0.25 / n**2 * g2[i, j] / max(np.linalg.norm(g2[i, j], 2), 1e-12)
                    for j in range(n)] for i in range(n)])
    return gram_family(f"random-full-rank({dim},{seed})", a0, a1, a2, np.zeros(n),
                       domain=((-1.0, 1.0),) * n, default_range=((-1.0, 1.0),) * n,
                       description="seeded random full-rank family")


def random_rank_deficient(dim: int = 3, rank: int = 1, seed: int = 0,
                          n_params: int = 2) -> StateFamily:
    """Seeded family whose rank drops to ``rank`` at ``landmarks['rank_change']``
    and is full rank at generic nearby points."""
    dim, rank, seed, n = int(dim), int(rank), int(seed), int(n_params)
    if not 1 <= rank < dim:
        raise ValueError("rank must satisfy 1 <= rank < dim")
    rng = np.random.default_rng([seed, dim, n, rank, 2])
    b = _complex_gaussian(rng, dim, rank)
    c = _complex_gaussian(rng, dim, rank)
    a0 = b @ c.conj().T
    a0 /= np.linalg.norm(a0, 2)
    a1 = _complex_gaussian(rng, n, dim, dim) / math.sqrt(dim)
    a2 = _complex_gaussian(rng, n, n, dim, dim) / math.sqrt(dim)
    a2 = (a2 + np.swapaxes(a2, 0, 1)) / 2
    center = rng.uniform(-0.5, 0.5, n)
    return gram_family(f"random-rank-deficient({dim},{rank},{seed})", a0, a1, a2, center,
                       landmarks={"rank_change": center},
                       default_range=tuple((float(c0) - 1, float(c0) + 1) for c0 in center),
                       description=f"seeded random family of rank {rank} at its rank-change point")


BUILTINS: dict[str, Callable[..., StateFamily]] = {
    "example1": example1,
    "example2": example2,
    "example3-regularized": example3_regularized,
    "fig2-pathological": fig2_pathological,
    "pure-qubit-rotation": pure_qubit_rotation,
    "random-full-rank": random_full_rank,
    "random-rank-deficient": random_rank_deficient,
    "constant": constant,
}

# positional argument order for the parameterized builtins
_ARGS = {
    "random-full-rank": ("dim", "seed", "n_params"),
    "random-rank-deficient": ("dim", "rank", "seed", "n_params"),
    "constant": ("dim", "n_params"),
}

_SPEC_RE = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*(?:\((.*)\))?\s*$")


def builtin_family(name: str, **bindings) -> StateFamily:
    """Look up a builtin family.

    ``name`` may carry arguments, e.g. ``"random-full-rank(3, 7)"`` or
    ``"random-full-rank(dim=3, seed=7)"``; keyword ``bindings`` are merged in.
    """
    m = _SPEC_RE.match(name)
    if not m:
        raise UnknownFamily(f"cannot parse family name {name!r}")
    base, argstr = m.group(1), m.group(2)
    if base not in BUILTINS:
        raise UnknownFamily(f"unknown family {base!r}; known: {', '.join(sorted(BUILTINS))}")
    kwargs = {}
    if argstr and argstr.strip():
        positional = _ARGS.get(base, ())
        for k, tok in enumerate(t.strip() for t in argstr.split(",")):
            if "=" in tok:
                key, val = (s.strip() for s in tok.split("=", 1))
            else:
                if k >= len(positional):
                    raise UnknownFamily(f"too many arguments for {base!r}")
                key, val = positional[k], tok
            kwargs[key.replace("-", "_")] = int(val)
    kwargs.update({k.replace("-", "_"): v for k, v in bindings.items()})
    try:
        return BUILTINS[base](**kwargs)
    except TypeError as exc:
        raise UnknownFamily(f"bad bindings for {base!r}: {exc}") from exc
