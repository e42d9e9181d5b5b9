import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from buresqfi.errors import InvariantViolation, NotHermitian, NotPSD
from buresqfi.hermitian import (check_density_matrix, eigh, hermitize, is_psd,
                                kernel_projector, psd_sqrt, support_projector)

from conftest import random_density, random_unitary


def test_scalar_matrix_has_no_kernel():
    es = eigh(np.eye(2) / 2)
    np.testing.assert_allclose(es.eigenvalues, [0.5, 0.5])
    assert es.zero_set.size == 0
    assert es.rank == 2


def test_diagonal_partition():
    es = eigh(np.diag([0.0, 1.0]), tol_zero=1e-12)
    assert es.zero_set.tolist() == [0]
    assert es.positive_set.tolist() == [1]


def test_known_spectrum_recovered(rng):
    d = np.array([-1.5, 0.2, 0.7, 3.0])
    u = random_unitary(rng, 4)
    es = eigh((u * d) @ u.conj().T)
    np.testing.assert_allclose(es.eigenvalues, d, atol=1e-10)


def test_near_zero_eigenvalues_clamped():
    es = eigh(np.diag([1e-13, -1e-13, 1.0]))
    assert es.eigenvalues[:2].tolist() == [0.0, 0.0]
    assert es.zero_set.tolist() == [0, 1]


def test_non_hermitian_rejected():
    with pytest.raises(NotHermitian):
        eigh(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_hermitize_tolerates_rounding():
    m = np.array([[1.0, 0.5 + 1e-12j], [0.5, 2.0]])
    h = hermitize(m)
    np.testing.assert_allclose(h, h.conj().T, atol=0)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_psd_sqrt_examples(rng):
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    a = b.conj().T @ b
    s = psd_sqrt(a)
    assert np.linalg.norm(s @ s - a) < 1e-9
    assert is_psd(s)


def test_psd_sqrt_rejects_negative():
    with pytest.raises(NotPSD):
        psd_sqrt(np.diag([1.0, -0.1]))


def test_kernel_projector_examples():
    np.testing.assert_allclose(kernel_projector(eigh(np.eye(2) / 2)), np.zeros((2, 2)))
    np.testing.assert_allclose(kernel_projector(eigh(np.diag([0.0, 1.0]))), np.diag([1.0, 0.0]))
    # purity-encoding qubit at e = 0 is diag(0, 1): the kernel is |0>
    rho = np.diag([np.sin(0.0) ** 2, np.cos(0.0) ** 2])
    p0 = kernel_projector(eigh(rho))
    np.testing.assert_allclose(p0, np.diag([1.0, 0.0]))


def test_projectors_complementary(rng):
    es = eigh(random_density(rng, 4, rank=2))
    np.testing.assert_allclose(kernel_projector(es) + support_projector(es), np.eye(4),
                               atol=1e-12)


def test_is_psd_examples():
    assert is_psd(np.diag([1.0, 2.0]))
    assert not is_psd(np.diag([1.0, -1.0]))
    # H_c - H = 4 - 0 for the purity-encoding qubit at its rank-change point
    assert is_psd(np.array([[4.0 - 0.0]]))
    with pytest.raises(NotHermitian):
        is_psd(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_density_checks():
    check_density_matrix(np.diag([0.3, 0.7]))
    with pytest.raises(InvariantViolation):
        check_density_matrix(np.diag([0.3, 0.6]))
    with pytest.raises(InvariantViolation):
        check_density_matrix(np.diag([1.1, -0.1]))


hermitian_seeds = st.tuples(st.integers(1, 6), st.integers(0, 2**32 - 1))


@given(hermitian_seeds)
def test_eigh_reconstructs_and_is_orthonormal(args):
    d, seed = args
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = z + z.conj().T
    es = eigh(m)
    scale = max(np.linalg.norm(m), 1.0)
    assert np.linalg.norm(es.reconstruct() - m) / scale < 1e-10
    v = es.eigenvectors
    assert np.max(np.abs(v.conj().T @ v - np.eye(d))) < 1e-10
    assert np.all(np.diff(es.eigenvalues) >= 0)
    assert sorted(es.zero_set.tolist() + es.positive_set.tolist()) == list(range(d))
    again = eigh(m)
    assert np.array_equal(again.eigenvalues, es.eigenvalues)


@given(hermitian_seeds, st.integers(0, 5))
def test_sqrt_squares_back_and_projector_idempotent(args, rank):
    d, seed = args
    rank = min(rank, d)
    rng = np.random.default_rng(seed)
    rho = random_density(rng, d, rank) if rank else np.eye(d) / d
    s = psd_sqrt(rho)
    assert np.linalg.norm(s @ s - rho) < 1e-9
    es = eigh(rho)
    p0 = kernel_projector(es)
    assert np.max(np.abs(p0 @ p0 - p0)) < 1e-10
    assert abs(np.trace(p0).real - len(es.zero_set)) < 1e-10
