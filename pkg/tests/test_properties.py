"""Randomized invariants over the seeded random families."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from buresqfi.discontinuity import (jump, regularize, track_vanishing_branches,
                                    vanishing_branch_hessians)
from buresqfi.families import evaluate_bundle, random_full_rank, random_rank_deficient
from buresqfi.metrology import (bures_distance_sq, continuous_qfi, kernel_hessian_sum,
                                qfi_from_sld, qfi_spectral, sld, truncated_metric,
                                uhlmann_fidelity)
from buresqfi.verify import steep_direction

from conftest import random_density

seeds = st.integers(0, 10_000)
dims = st.integers(2, 5)
nparams = st.integers(1, 3)
coords = st.floats(-0.8, 0.8)


@st.composite
def rank_deficient(draw):
    dim = draw(dims)
    rank = draw(st.integers(1, dim - 1))
    fam = random_rank_deficient(dim, rank, draw(seeds), draw(nparams))
    return fam, fam.landmarks["rank_change"]


@st.composite
def full_rank(draw):
    fam = random_full_rank(draw(dims), draw(seeds), draw(nparams))
    p = np.array([draw(coords) for _ in range(fam.n_params)])
    return fam, p


any_point = st.one_of(full_rank(), rank_deficient())


@given(any_point)
def test_two_path_qfi(fp):
    b = evaluate_bundle(*fp)
    np.testing.assert_allclose(qfi_from_sld(b, sld(b)).values, qfi_spectral(b).values, atol=1e-8)


@given(full_rank())
def test_full_rank_collapse(fp):
    b = evaluate_bundle(*fp)
    h = qfi_spectral(b).values
    np.testing.assert_allclose(continuous_qfi(b).values, h, atol=1e-9)
    np.testing.assert_allclose(truncated_metric(b).values, h, atol=1e-9)
    assert np.max(np.abs(kernel_hessian_sum(b).values)) <= 1e-9


@given(any_point)
def test_psd_ordering(fp):
    b = evaluate_bundle(*fp)
    h, hc, tr = (qfi_spectral(b).values, continuous_qfi(b).values, truncated_metric(b).values)
    khs = kernel_hessian_sum(b).values
    assert np.linalg.eigvalsh(hc - h)[0] >= -1e-8
    assert np.linalg.eigvalsh(h - tr)[0] >= -1e-8
    np.testing.assert_allclose(hc - h, 2 * khs, atol=1e-9)
    if b.spectrum.rank == b.dim:
        assert np.max(np.abs(hc - h)) <= 1e-8


@given(rank_deficient(), seeds)
def test_branch_sum_and_jump_sign(fp, s):
    fam, p = fp
    b = evaluate_bundle(fam, p)
    khs = kernel_hessian_sum(b).values
    u = steep_direction(khs, np.random.default_rng(s))
    branches = vanishing_branch_hessians(b, u)
    assert len(branches) == b.dim - b.spectrum.rank
    np.testing.assert_allclose(sum(x.hessian for x in branches), khs, atol=1e-6)
    assert all(x.is_psd for x in branches)
    delta = jump(b, u).delta.values
    assert np.linalg.eigvalsh(delta)[-1] <= 1e-7
    # the jump only removes branches, so it never exceeds the full gap
    assert np.linalg.eigvalsh(delta + 2 * khs)[0] >= -1e-7


@given(rank_deficient(), seeds)
def test_tracked_curvatures(fp, s):
    fam, p = fp
    b = evaluate_bundle(fam, p)
    u = steep_direction(kernel_hessian_sum(b).values, np.random.default_rng(s))
    for tb in track_vanishing_branches(fam, p, u):
        assert tb.error <= 1e-4


@given(seeds, dims, st.floats(1e-6, 0.5))
def test_regularized_spectrum_bounded_below(s, dim, nu):
    fam = random_rank_deficient(dim, 1, s)
    p = fam.landmarks["rank_change"]
    reg = regularize(fam, nu=nu)
    lam = np.linalg.eigvalsh(reg.density(p))
    assert lam[0] >= nu / dim - 1e-12
    b = evaluate_bundle(reg, p)
    np.testing.assert_allclose(continuous_qfi(b).values, qfi_spectral(b).values, atol=1e-8)


@given(seeds, dims, st.integers(1, 5), st.integers(1, 5))
def test_fidelity_axioms(s, dim, ra, rb):
    rng = np.random.default_rng(s)
    a = random_density(rng, dim, min(ra, dim))
    b = random_density(rng, dim, min(rb, dim))
    f = uhlmann_fidelity(a, b)
    assert abs(f - uhlmann_fidelity(b, a)) <= 1e-9
    assert -1e-12 <= f <= 1 + 1e-9
    assert abs(uhlmann_fidelity(a, a) - 1) <= 1e-9
    d2 = bures_distance_sq(a, b)
    assert -1e-12 <= d2 <= 2 + 1e-12
    assert abs(bures_distance_sq(a, a)) <= 1e-9
