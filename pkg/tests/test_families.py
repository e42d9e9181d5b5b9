import dataclasses
import math

import numpy as np
import pytest

from buresqfi.errors import DomainError, InvariantViolation, UnknownFamily
from buresqfi.families import (BUILTINS, FiniteDifferenceConfig, StateFamily, builtin_family,
                               constant, evaluate_bundle, example1, example2,
                               example3_regularized, fig2_pathological, identity_map,
                               pure_qubit_rotation, random_full_rank, random_rank_deficient,
                               reparametrize, scaling_map, square_coordinate_map, validate_family)
from buresqfi.metrology import qfi_spectral


def fd_copy(fam):
    return dataclasses.replace(fam, d1=None, d2=None)


def test_fd_config_guards():
    with pytest.raises(ValueError):
        FiniteDifferenceConfig(h=0.0)
    with pytest.raises(ValueError):
        FiniteDifferenceConfig(h=0.2)
    with pytest.raises(ValueError):
        FiniteDifferenceConfig(scheme="forward")
    assert FiniteDifferenceConfig().steps == [1e-4, 5e-5, 2.5e-5]


def test_example1_derivative_at_quarter_pi():
    b = evaluate_bundle(example1(), [math.pi / 4])
    np.testing.assert_allclose(b.d1[0], np.diag([1.0, -1.0]), atol=1e-15)
    bf = evaluate_bundle(fd_copy(example1()), [math.pi / 4])
    np.testing.assert_allclose(bf.d1[0], np.diag([1.0, -1.0]), atol=1e-9)
    assert bf.provenance.startswith("finite-difference")
    assert b.provenance == "analytic"


def test_constant_family_has_zero_derivatives():
    b = evaluate_bundle(constant(), [0.3])
    assert np.all(b.d1 == 0) and np.all(b.d2 == 0)
    bf = evaluate_bundle(fd_copy(constant()), [0.3])
    assert np.max(np.abs(bf.d1)) < 1e-12 and np.max(np.abs(bf.d2)) < 1e-6


def test_example2_second_derivative_of_vanishing_eigenvalue():
    b = evaluate_bundle(example2(), [0.0, 0.0])
    assert b.d2[0, 0][0, 0].real == pytest.approx(1.0, abs=1e-12)
    bf = evaluate_bundle(fd_copy(example2()), [0.0, 0.0])
    assert bf.d2[0, 0][0, 0].real == pytest.approx(1.0, abs=1e-6)


def test_builtin_states():
    np.testing.assert_allclose(example1().density([math.pi / 2]), np.diag([1.0, 0.0]),
                               atol=1e-15)
    np.testing.assert_allclose(example3_regularized().density([0.0, 0.5]), np.diag([0.25, 0.75]),
                               atol=1e-15)
    np.testing.assert_allclose(pure_qubit_rotation().density([0.0]), np.diag([1.0, 0.0]))


def test_builtin_lookup():
    assert builtin_family("example1").name == "example1"
    fam = builtin_family("random-full-rank(4, 9)")
    assert fam.dim == 4
    assert builtin_family("random-full-rank(dim=4, seed=9)").name == fam.name
    assert builtin_family("random-full-rank", dim=4, seed=9).name == fam.name
    with pytest.raises(UnknownFamily):
        builtin_family("no-such-family")
    with pytest.raises(UnknownFamily):
        builtin_family("example1(3)")


def test_random_full_rank_reproducible():
    a, b = random_full_rank(3, 5), random_full_rank(3, 5)
    p = np.array([0.2, -0.3])
    assert np.array_equal(a.rho(p), b.rho(p))
    assert not np.array_equal(a.rho(p), random_full_rank(3, 6).rho(p))


def test_random_rank_deficient_has_rank_change():
    fam = random_rank_deficient(4, 2, 3)
    c = fam.landmarks["rank_change"]
    assert evaluate_bundle(fam, c).spectrum.rank == 2
    assert evaluate_bundle(fam, c + 0.1).spectrum.rank == 4


def test_domain_enforced():
    with pytest.raises(DomainError):
        evaluate_bundle(fig2_pathological(), [1.5])
    with pytest.raises(DomainError):
        evaluate_bundle(example3_regularized(), [0.1, -0.01])


def test_fig2_family_declares_its_bad_point():
    fam = fig2_pathological()
    assert fam.smoothness_class == "C2-except-at-listed-points"
    assert not evaluate_bundle(fam, [0.0]).regular
    assert evaluate_bundle(fam, [0.5]).regular
    assert example1().smoothness_class == "C2"


def test_trace_violation_detected():
    bad = StateFamily("bad", 2, 1, lambda q: np.diag([0.5, 0.4]).astype(complex))
    rep = validate_family(bad, [[0.0], [1.0]])
    assert any("trace" in v for v in rep.violations)
    with pytest.raises(InvariantViolation):
        evaluate_bundle(bad, [0.0])


def test_validate_example1_rank_profile():
    # 101 points so that pi/2 is a grid point
    pts = [[x] for x in np.linspace(0, math.pi, 101)]
    rep = validate_family(example1(), pts)
    assert rep.violations == []
    ones = sorted(p[0] for p in rep.rank_profile[1])
    np.testing.assert_allclose(ones, [0.0, math.pi / 2, math.pi], atol=1e-15)
    assert len(rep.rank_profile[2]) == 98


def test_validate_example1_even_grid_misses_midpoint():
    rep = validate_family(example1(), [[x] for x in np.linspace(0, math.pi, 100)])
    assert rep.violations == []
    assert sorted(p[0] for p in rep.rank_profile[1]) == [0.0, math.pi]


def test_validate_constant():
    rep = validate_family(constant(), [[x] for x in np.linspace(0, 1, 5)])
    assert set(rep.rank_profile) == {2}


@pytest.mark.parametrize("name", ["example1", "example2", "example3-regularized",
                                  "pure-qubit-rotation", "random-full-rank(3, 2)",
                                  "random-rank-deficient(4, 2, 1)", "fig2-pathological"])
def test_fd_agrees_with_closed_form(name):
    fam = builtin_family(name)
    rng = np.random.default_rng(7)
    fd = fd_copy(fam)
    for _ in range(20):
        p = rng.uniform(0.05, 0.9, fam.n_params)
        a, b = evaluate_bundle(fam, p), evaluate_bundle(fd, p)
        assert np.max(np.abs(a.d1 - b.d1)) < 1e-6
        assert np.max(np.abs(a.d2 - b.d2)) < 1e-6


def test_bundle_invariants_hold_at_rank_change_points():
    for fam, p in [(example1(), [0.0]), (example2(), [0.0, 0.0]),
                   (random_rank_deficient(3, 1, 4), None)]:
        p = fam.landmarks["rank_change"] if p is None else p
        b = evaluate_bundle(fam, p)
        assert b.kernel_gradient < 1e-6
        assert np.max(np.abs(np.trace(b.d1, axis1=1, axis2=2))) < 1e-8
        assert np.max(np.abs(b.d2 - np.swapaxes(b.d2, 0, 1))) < 1e-7


def test_boundary_rank_change_reports_gradient():
    # at nu = 0 the vanishing eigenvalue grows linearly in nu
    b = evaluate_bundle(example3_regularized(), [0.0, 0.0])
    assert b.kernel_gradient == pytest.approx(0.5)


def test_identity_reparametrization():
    fam = example2()
    same = reparametrize(fam, identity_map(2))
    for p in ([0.1, 0.2], [0.0, 0.0], [-0.4, 0.7]):
        a, b = evaluate_bundle(fam, p), evaluate_bundle(same, p)
        assert np.array_equal(a.rho, b.rho)
        np.testing.assert_allclose(a.d2, b.d2)


def test_square_root_coordinate_hessian():
    fam = reparametrize(example3_regularized(), square_coordinate_map(2, 1))
    b = evaluate_bundle(fam, [0.0, 0.0])
    k = b.spectrum.zero_set[0]
    hess = np.array([[b.d2[i, j][k, k].real for j in range(2)] for i in range(2)])
    np.testing.assert_allclose(hess, np.diag([2.0, 1.0]), atol=1e-12)


def test_scaling_reparametrization_scales_qfi():
    fam = reparametrize(example1(), scaling_map([2.0]))
    for q in (0.1, 0.3, 0.6):
        h_new = qfi_spectral(evaluate_bundle(fam, [q])).values[0, 0]
        h_old = qfi_spectral(evaluate_bundle(example1(), [2 * q])).values[0, 0]
        assert h_new == pytest.approx(4 * h_old, rel=1e-12)


def test_all_builtins_construct():
    for name, make in BUILTINS.items():
        fam = make()
        p = np.full(fam.n_params, 0.3)
        assert fam.density(p).shape == (fam.dim, fam.dim)
