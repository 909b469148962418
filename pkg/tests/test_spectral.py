import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phaserig.errors import DefectiveSystemError, InvalidInputError
from phaserig.spectral import (
    EigenSystem,
    c_normalize,
    eig_complex_symmetric,
    overlaps,
    track_pairing,
)

U = np.sqrt(2) / 16


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.T) / 2


def dd_block(v, u=U):
    # symmetric block of the double dot in the basis ((d1+d3)/sqrt2, wire)
    return np.array([[-1j * v**2, np.sqrt(2) * u], [np.sqrt(2) * u, 0]])


def test_diagonal():
    es = eig_complex_symmetric(np.diag([1.0, 2.0]))
    assert np.allclose(es.eigenvalues, [1, 2])
    assert np.allclose(es.right_vectors, np.eye(2))
    assert not es.defective


def test_double_eigenvalue_flagged():
    es = eig_complex_symmetric(dd_block(0.5))
    assert np.allclose(es.eigenvalues, [-0.125j, -0.125j], atol=1e-7)
    assert es.defective


@pytest.mark.parametrize("seed", range(5))
def test_random_residual_and_biorthogonality(seed):
    M = random_symmetric(6, seed)
    es = eig_complex_symmetric(M)
    V, z = es.right_vectors, es.eigenvalues
    assert len(z) == 6
    assert np.all(np.linalg.norm(M @ V - V * z, axis=0) < 1e-10)
    assert np.all(np.diff(z.real) >= 0)
    G = V.T @ V
    assert np.allclose(np.diag(G), 1, atol=1e-10)
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_property_biorthogonal(n, seed):
    es = eig_complex_symmetric(random_symmetric(n, seed))
    V = es.right_vectors[:, es.c_norms_ok]
    G = V.T @ V
    assert np.allclose(np.diag(G), 1, atol=1e-10)
    if not es.defective:
        assert np.max(np.abs(G - np.eye(n))) < 1e-8


def test_degenerate_real_eigenspace_is_orthogonalized():
    M = np.diag([1.0, 1.0, 1.0, 2.0]).astype(complex)
    M[3, 3] += 0.1j
    es = eig_complex_symmetric(M)
    G = es.right_vectors.T @ es.right_vectors
    assert np.allclose(G, np.eye(4), atol=1e-12)


def test_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        eig_complex_symmetric(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        eig_complex_symmetric(np.array([[0, 1], [2, 0]], dtype=complex))
    assert len(eig_complex_symmetric(np.zeros((0, 0)))) == 0


def test_c_normalize_examples():
    v, ok = c_normalize(np.array([0.6, 0.8]))
    assert ok and np.allclose(v, [0.6, 0.8])
    v, ok = c_normalize(np.array([1, 1j]) / np.sqrt(2))
    assert not ok and np.allclose(v, np.array([1, 1j]) / np.sqrt(2))
    v, ok = c_normalize(np.array([2.0, 0.0]))
    assert ok and np.allclose(v, [1, 0])
    with pytest.raises(InvalidInputError):
        c_normalize(np.zeros(3))


def test_c_normalize_phase_convention():
    v, ok = c_normalize(np.array([-3.0, 1.0]))
    assert ok
    assert np.allclose(v @ v, 1)
    j = np.argmax(np.abs(v))
    assert -np.pi / 2 < np.angle(v[j]) <= np.pi / 2


def test_overlaps_hermitian_limit():
    Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(4, 4)))
    es = eig_complex_symmetric(Q @ np.diag([1.0, 2, 3, 4]) @ Q.T)
    rep = overlaps(es)
    assert np.allclose(rep.a_norm, 1)
    assert np.allclose(rep.cross_overlaps, np.eye(4), atol=1e-12)


def test_overlaps_mixed_states_and_divergence():
    rep = overlaps(eig_complex_symmetric(dd_block(0.4)))
    assert np.all(rep.a_norm > 1)
    a = [overlaps(eig_complex_symmetric(dd_block(0.5 - d))).a_norm.max() for d in (1e-2, 1e-4, 1e-6)]
    assert a[0] < a[1] < a[2] and a[2] > 100


def test_overlaps_defective_raises():
    with pytest.raises(DefectiveSystemError):
        overlaps(eig_complex_symmetric(dd_block(0.5)))


def test_track_pairing_identity_and_swap():
    es = eig_complex_symmetric(random_symmetric(5, 3))
    assert np.array_equal(track_pairing(es, es), np.arange(5))
    idx = np.array([0, 2, 1, 3, 4])
    swapped = EigenSystem(es.eigenvalues[idx], es.right_vectors[:, idx], es.c_norms_ok[idx])
    assert np.array_equal(track_pairing(es, swapped), idx)


def test_track_pairing_continuity_double_dot():
    from phaserig.heff import build_heff
    from phaserig.models import ModelSpec

    prev = None
    for v in np.arange(0.40, 0.41 + 1e-12, 1e-3):
        es = eig_complex_symmetric(build_heff(ModelSpec.double_dot(U, v), 0.0).matrix)
        if prev is not None:
            perm = track_pairing(prev, es)
            P = prev.unit_vectors()
            N = es.unit_vectors()
            ov = np.abs(np.sum(P.conj() * N[:, perm], axis=0))
            assert np.all(ov > 0.9)
            es = EigenSystem(es.eigenvalues[perm], es.right_vectors[:, perm], es.c_norms_ok[perm])
        prev = es


def test_track_pairing_dimension_mismatch():
    a = eig_complex_symmetric(np.eye(2))
    b = eig_complex_symmetric(np.eye(3))
    with pytest.raises(InvalidInputError):
        track_pairing(a, b)
