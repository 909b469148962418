import numpy as np
import pytest

from phaserig.errors import BranchPointNotFoundError, InvalidInputError, LeadThresholdError
from phaserig.heff import (
    build_heff,
    find_branch_point,
    pair_discriminant,
    phase_rigidity_state,
    solve_poles,
)
from phaserig.models import ModelSpec, build_closed_hamiltonian
from phaserig.spectral import eig_complex_symmetric

U = np.sqrt(2) / 16


def test_closed_chain_heff_is_hermitian():
    spec = ModelSpec.chain(6, 0.0)
    H = build_heff(spec, 0.3).matrix
    assert np.array_equal(H, build_closed_hamiltonian(spec))
    assert np.all(eig_complex_symmetric(H).eigenvalues.imag == 0)


def test_chain_heff_band_centre():
    spec = ModelSpec.chain(6, 0.5)
    H = build_heff(spec, 0.0).matrix
    expect = build_closed_hamiltonian(spec).astype(complex)
    expect[0, 0] = expect[5, 5] = -0.25j
    assert np.allclose(H, expect, atol=1e-16)


def test_sparse_and_dense_assembly_agree():
    spec = ModelSpec.billiard(4, 2.0)
    a = build_heff(spec, 0.5).matrix
    b = build_heff(spec, 0.5, sparse=True).matrix.toarray()
    assert np.array_equal(a, b)
    assert np.max(np.abs(a - a.T)) == 0


def test_coupling_vectors_reproduce_self_energy():
    # -Im Sigma = pi * sum_m a_m a_m^T with w = i a
    spec = ModelSpec.billiard(8, 0.0)
    E = 0.9
    h = build_heff(spec, E)
    W = h.coupling_vectors["L"]
    H_B = build_closed_hamiltonian(spec)
    gamma = -(h.matrix - H_B).imag
    left = np.zeros_like(gamma)
    left[: len(gamma) // 2] = gamma[: len(gamma) // 2]
    a = (W / 1j).real
    assert np.allclose(np.pi * a @ a.T, np.where(np.abs(W.sum(1))[:, None] > 0, gamma, 0), atol=1e-12)


def test_heff_threshold_raises():
    with pytest.raises(LeadThresholdError):
        build_heff(ModelSpec.chain(6, 0.5), 2.0)


def test_double_dot_at_branch_point():
    z = eig_complex_symmetric(build_heff(ModelSpec.double_dot(U, 0.5), 0.0).matrix).eigenvalues
    z = z[np.argsort(z.imag)]
    assert np.allclose(z, [-0.25j, -0.125j, -0.125j], atol=1e-7)


def test_double_dot_poles_one_iteration():
    states = solve_poles(ModelSpec.double_dot(U, 0.3))
    assert len(states) == 3
    assert all(s.iterations == 1 and s.converged for s in states)
    for s in states:
        assert s.energy == s.eigenvalue.real


def test_chain_poles_width_pattern():
    states = solve_poles(ModelSpec.chain(6, 0.5))
    assert len(states) == 6 and all(s.converged for s in states)
    E = np.array([s.energy for s in states])
    G = np.array([s.width for s in states])
    assert np.all(np.abs(E) < 2)
    centre = np.argsort(np.abs(E))[:2]
    edge = np.argsort(2 - np.abs(E))[:2]
    assert G[centre].min() > G[edge].max()
    # fixed point: E = Re z(E)
    for s in states:
        z = eig_complex_symmetric(build_heff(ModelSpec.chain(6, 0.5), s.energy).matrix).eigenvalues
        assert np.min(np.abs(z - s.eigenvalue)) < 1e-12
        assert abs(s.eigenvalue.real - s.energy) < 1e-10


def test_single_site_pole_closed_form():
    # H_eff = 2 v^2 sigma(E) with Re sigma = E/2: E = v^2 E -> E = 0, Gamma = 4 v^2
    v = 0.6
    (s,) = solve_poles(ModelSpec.chain(1, v))
    assert s.converged
    assert abs(s.energy) < 1e-10
    assert abs(s.width - 4 * v**2) < 1e-10


def test_closed_system_poles():
    for spec in (ModelSpec.chain(6, 0.0), ModelSpec.double_dot(U, 0.0)):
        for s in solve_poles(spec):
            assert abs(s.width) < 1e-12 and s.rigidity > 1 - 1e-12


def test_phase_rigidity_state_examples():
    assert phase_rigidity_state(np.array([0.3, -2.0, 1.0])) == pytest.approx(1.0)
    assert phase_rigidity_state(np.array([1, 1j]) / np.sqrt(2)) == pytest.approx(0.0, abs=1e-16)
    phi = np.array([1 + 2j, 0.5 - 1j, 3j])
    assert phase_rigidity_state(phi) == pytest.approx(phase_rigidity_state(7.3j * phi), rel=1e-14)
    with pytest.raises(InvalidInputError):
        phase_rigidity_state(np.zeros(2))


def test_phase_rigidity_decomposition():
    phi = np.array([1 + 2j, 0.5 - 1j, 3j, -0.2])
    d = phase_rigidity_state(phi, decompose=True)
    rot = phi * np.exp(-1j * d.theta)
    assert abs(rot.real @ rot.imag) < 1e-12
    assert d.rigidity == pytest.approx((d.re_norm2 - d.im_norm2) / (d.re_norm2 + d.im_norm2))


def test_phase_rigidity_equals_inverse_a_norm():
    es = eig_complex_symmetric(build_heff(ModelSpec.double_dot(U, 0.4), 0.0).matrix)
    for k in range(3):
        phi = es.right_vectors[:, k]
        assert phase_rigidity_state(phi) == pytest.approx(1 / np.vdot(phi, phi).real, rel=1e-10)


def _block_rigidity(v, u=U):
    # symmetric block [[-i v^2, sqrt2 u], [sqrt2 u, 0]]: eigenvectors (z, sqrt2 u)
    a = np.sqrt(2) * u
    z = -0.5j * v**2 + np.sqrt(complex(a * a - v**4 / 4))
    return abs(z * z + a * a) / (abs(z) ** 2 + a * a)


@pytest.mark.parametrize("v", [0.3, 0.45, 0.49, 0.499])
def test_mixed_pair_rigidity_matches_analytic(v):
    es = eig_complex_symmetric(build_heff(ModelSpec.double_dot(U, v), 0.0).matrix)
    r = sorted(phase_rigidity_state(es.right_vectors[:, k]) for k in range(3))
    assert r[0] == pytest.approx(_block_rigidity(v), rel=1e-9)
    assert r[1] == pytest.approx(_block_rigidity(v), rel=1e-9)
    assert r[2] == pytest.approx(1.0)


def test_mixed_pair_rigidity_vanishes_at_branch_point():
    r = [_block_rigidity(0.5 - d) for d in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(a > b for a, b in zip(r, r[1:]))
    assert r[1] < 0.15 and r[-1] < 0.01


def test_branch_point_double_dot():
    bp = find_branch_point(ModelSpec.double_dot(U, 0.3), (0.3, 0.7), (-0.2, 0.2))
    assert abs(bp.v_c - 0.5) < 1e-6 and abs(bp.E_c) < 1e-6
    assert bp.gap < 1e-8
    assert bp.chirality_error < 1e-6
    assert max(bp.rigidities) < 1e-6


@pytest.mark.parametrize("u", [np.sqrt(2) / 8, 0.05])
def test_branch_point_analytic_condition(u):
    bp = find_branch_point(ModelSpec.double_dot(u, 0.3), (0.05, 0.9), (-0.5, 0.5))
    assert abs(bp.v_c - np.sqrt(2 * np.sqrt(2) * u)) < 1e-6


def test_branch_point_not_found():
    with pytest.raises(BranchPointNotFoundError) as info:
        find_branch_point(ModelSpec.double_dot(U, 0.3), (0.05, 0.3), (-0.5, 0.5))
    assert info.value.best_gap > 1e-4


def test_two_site_chain_has_constant_gap():
    # symmetric leads shift both states by v^2 sigma: the gap is always 2
    spec = ModelSpec.chain(2, 0.5)
    for v in (0.1, 0.7, 1.5):
        for E in (-1.0, 0.3, 2.5):
            D = pair_discriminant(spec, v, E)[0]
            assert abs(np.sqrt(abs(D)) - 2) < 1e-12
    with pytest.raises(BranchPointNotFoundError):
        find_branch_point(spec, (0.1, 1.5), (-1.9, 1.9), grid=(15, 15))


def test_branch_point_bad_window():
    with pytest.raises(InvalidInputError):
        find_branch_point(ModelSpec.double_dot(U, 0.3), (0.7, 0.3), (-0.2, 0.2))
