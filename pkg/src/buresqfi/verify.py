"""Seeded property suite over random families, used by ``buresqfi verify``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discontinuity import jump, track_vanishing_branches, unit_direction, vanishing_branch_hessians
from .errors import ValidationError
from .families import evaluate_bundle, random_full_rank, random_rank_deficient
from .metrology import (bures_distance_sq, continuous_qfi, kernel_hessian_sum,
                        numeric_bures_metric, qfi_from_sld, qfi_spectral, sld, truncated_metric,
                        uhlmann_fidelity)


@dataclass
class PropertyResult:
    name: str
    tol: float
    worst: float = 0.0
    checks: int = 0

    @property
    def passed(self) -> bool:
        return self.checks > 0 and self.worst <= self.tol

    def record(self, residual: float) -> None:
        self.worst = max(self.worst, float(residual))
        self.checks += 1

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: worst {self.worst:.3e} (tol {self.tol:.0e}, {self.checks} checks)"


def _maxabs(a) -> float:
    return float(np.max(np.abs(np.asarray(a)), initial=0.0))


def steep_direction(hessian: np.ndarray, rng, tries: int = 50) -> np.ndarray:
    """A random unit direction along which ``hessian`` has non-negligible curvature."""
    n = hessian.shape[0]
    top = float(np.linalg.eigvalsh(hessian)[-1])
    for _ in range(tries):
        u = unit_direction(rng.normal(size=n))
        if u @ hessian @ u >= 0.1 * top:
            return u
    return np.linalg.eigh(hessian)[1][:, -1]


def run_properties(seed: int = 0, trials: int = 20) -> list[PropertyResult]:
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    props = {name: PropertyResult(name, tol) for name, tol in [
        ("two-path QFI", 1e-8),
        ("full-rank collapse", 1e-9),
        ("PSD ordering", 1e-8),
        ("oracle equivalence", 1e-5),
        ("branch-sum identity", 1e-6),
        ("jump sign", 1e-7),
        ("jump consistency", 1e-3),
        ("eigenvalue tracking", 1e-4),
        ("fidelity axioms", 1e-9),
    ]}
    for t in range(trials):
        s = seed * 1000 + t
        rng = np.random.default_rng([seed, t])
        dim = 2 + t % 4
        n = 1 + t % 3
        full = random_full_rank(dim, s, n)
        p = rng.uniform(-0.8, 0.8, n)
        bf = evaluate_bundle(full, p)
        h = qfi_spectral(bf).values
        props["two-path QFI"].record(_maxabs(qfi_from_sld(bf, sld(bf)).values - h))
        props["PSD ordering"].record(
            max(0.0, -float(np.linalg.eigvalsh(continuous_qfi(bf).values - h)[0])))
        props["full-rank collapse"].record(max(_maxabs(continuous_qfi(bf).values - h),
                                               _maxabs(truncated_metric(bf).values - h)))
        props["oracle equivalence"].record(
            _maxabs(numeric_bures_metric(full, p).values - continuous_qfi(bf).values))

        a, b = full.density(p), full.density(rng.uniform(-0.8, 0.8, n))
        props["fidelity axioms"].record(max(abs(uhlmann_fidelity(a, b) - uhlmann_fidelity(b, a)),
                                            abs(uhlmann_fidelity(a, a) - 1.0),
                                            max(0.0, -bures_distance_sq(a, b)),
                                            max(0.0, bures_distance_sq(a, b) - 2.0)))

        # rank-deficient family, with a one-dimensional kernel every other trial
        rank = dim - 1 if t % 2 == 0 else 1 + t % (dim - 1)
        fam = random_rank_deficient(dim, rank, s, n)
        pc = fam.landmarks["rank_change"]
        bd = evaluate_bundle(fam, pc)
        hd, hcd = qfi_spectral(bd).values, continuous_qfi(bd).values
        props["two-path QFI"].record(_maxabs(qfi_from_sld(bd, sld(bd)).values - hd))
        props["PSD ordering"].record(max(0.0, -float(np.linalg.eigvalsh(hcd - hd)[0])))
        props["oracle equivalence"].record(_maxabs(numeric_bures_metric(fam, pc).values - hcd))

        khs = kernel_hessian_sum(bd).values
        u = steep_direction(khs, rng)
        branches = vanishing_branch_hessians(bd, u)
        props["branch-sum identity"].record(_maxabs(sum(x.hessian for x in branches) - khs))
        rep = jump(bd, u, fam=fam if bd.dim - bd.spectrum.rank == 1 else None)
        props["jump sign"].record(max(0.0, float(np.linalg.eigvalsh(rep.delta.values)[-1])))
        if rep.numeric_confirmation is not None:
            props["jump consistency"].record(rep.numeric_confirmation.residual)
        for tb in track_vanishing_branches(fam, pc, u):
            props["eigenvalue tracking"].record(tb.error)
    return list(props.values())
