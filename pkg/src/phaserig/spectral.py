"""Eigendecomposition of complex-symmetric matrices with bilinear (c-product) normalization.

For a complex-symmetric matrix ``M = M.T`` the left eigenvectors are the
transposes of the right ones, so a single set of right eigenvectors ``phi``
normalized with the bilinear product ``phi.T @ phi = 1`` is biorthogonal:
``phi_a.T @ phi_b = delta_ab``.  The Hermitian norm ``A = phi^H phi`` is then
``>= 1`` and diverges where two eigenvectors coalesce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DefectiveSystemError, InvalidInputError, NumericalFailureError

__all__ = [
    "EigenSystem",
    "OverlapReport",
    "eig_complex_symmetric",
    "c_normalize",
    "overlaps",
    "track_pairing",
    "SYMMETRY_TOL",
    "DEFECT_TOL",
]

SYMMETRY_TOL = 1e-12
DEFECT_TOL = 1e-8
# eigenvalues closer than this (relative to ||M||) are treated as one cluster
_CLUSTER_TOL = 1e-9
_RESIDUAL_FAIL = 1e-6
# an exact coalescence is split by rounding to ~sqrt(eps)*||M||; such a pair with
# parallel eigenvectors is defective even if |phi.T phi| lands just above DEFECT_TOL
_SPLIT_TOL = 1e-7
_PARALLEL_TOL = 1e-8


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs ``(z_k, phi_k)`` sorted by ascending ``Re z`` (ties by ``Im z``).

    ``right_vectors[:, k]`` is c-normalized when ``c_norms_ok[k]`` is set and
    left unscaled otherwise.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    c_norms_ok: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def defective(self) -> bool:
        return not bool(np.all(self.c_norms_ok))

    def unit_vectors(self) -> np.ndarray:
        """Columns rescaled to unit Hermitian norm (phase kept)."""
        return self.right_vectors / np.linalg.norm(self.right_vectors, axis=0)

    def min_gap(self):
        """Smallest ``|z_a - z_b|`` and the index pair ``(a, b)`` attaining it."""
        z = self.eigenvalues
        if len(z) < 2:
            return np.inf, (0, 0)
        d = np.abs(z[:, None] - z[None, :])
        d[np.diag_indices_from(d)] = np.inf
        a, b = np.unravel_index(np.argmin(d), d.shape)
        a, b = sorted((int(a), int(b)))
        return float(d[a, b]), (a, b)


@dataclass(frozen=True)
class OverlapReport:
    """Hermitian norms ``A_k = <phi_k|phi_k>`` and moduli ``|<phi_a|phi_b>|``."""

    a_norm: np.ndarray
    cross_overlaps: np.ndarray


def _check_square(M):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    return M


def _sort_order(z):
    return np.lexsort((z.imag, z.real))


def _phase_fix(v):
    """Flip sign so the largest-modulus component has phase in (-pi/2, pi/2]."""
    mod = np.abs(v)
    # first index within rounding of the maximum, so ties resolve by position
    j = int(np.flatnonzero(mod >= mod.max() * (1 - 1e-9))[0])
    phase = np.angle(v[j])
    if phase > np.pi / 2 or phase <= -np.pi / 2:
        return -v
    return v


def c_normalize(vectors, tol=DEFECT_TOL):
    """Scale vectors so that ``phi.T @ phi = 1``.

    Parameters
    ----------
    vectors : array_like
        A single vector or a matrix whose columns are the vectors.
    tol : float
        A vector with ``|phi.T phi| / ||phi||^2 < tol`` is near self-orthogonal;
        it is returned unscaled and its flag is cleared.

    Returns
    -------
    normalized : ndarray
        Same shape as the input, complex.
    flags : ndarray of bool or bool
        True where c-normalization succeeded.
    """
    arr = np.asarray(vectors, dtype=complex)
    single = arr.ndim == 1
    cols = arr[:, None] if single else arr
    out = np.empty_like(cols)
    flags = np.ones(cols.shape[1], dtype=bool)
    for k in range(cols.shape[1]):
        v = cols[:, k]
        h = np.vdot(v, v).real
        if h == 0.0:
            raise InvalidInputError("cannot c-normalize a zero vector")
        c = v @ v
        if abs(c) / h < tol:
            flags[k] = False
            out[:, k] = v
            continue
        out[:, k] = _phase_fix(v / np.sqrt(c))
    if single:
        return out[:, 0], bool(flags[0])
    return out, flags


def _c_orthogonalize_cluster(V):
    """Bilinear Gram-Schmidt inside a degenerate eigenspace, pivoting on |v.T v|."""
    V = V.copy()
    m = V.shape[1]
    done = []
    remaining = list(range(m))
    while remaining:
        scores = []
        for k in remaining:
            v = V[:, k]
            scores.append(abs(v @ v) / np.vdot(v, v).real)
        k = remaining.pop(int(np.argmax(scores)))
        v = V[:, k]
        if abs(v @ v) / np.vdot(v, v).real < DEFECT_TOL:
            return None
        V[:, k] = v / np.sqrt(v @ v)
        done.append(k)
        for j in remaining:
            V[:, j] = V[:, j] - (V[:, k] @ V[:, j]) * V[:, k]
    return V


def eig_complex_symmetric(M) -> EigenSystem:
    """Full eigendecomposition of a complex-symmetric matrix.

    Real-symmetric input is routed through ``eigh`` so the Hermitian limit is
    exact.  Right eigenvectors are c-normalized; within clusters of
    degenerate (but non-defective) eigenvalues they are c-orthogonalized.

    Raises
    ------
    InvalidInputError
        Non-square input or ``max|M - M.T| >= 1e-12``.
    NumericalFailureError
        LAPACK did not converge, or the eigenpair residual is unacceptable.
    """
    M = _check_square(M)
    n = M.shape[0]
    if n and np.max(np.abs(M - M.T)) >= SYMMETRY_TOL:
        raise InvalidInputError(
            f"matrix is not complex symmetric (defect {np.max(np.abs(M - M.T)):.3e})"
        )
    if n == 0:
        return EigenSystem(np.zeros(0, complex), np.zeros((0, 0), complex), np.zeros(0, bool))
    M = M.astype(complex)
    try:
        if not np.any(M.imag):
            w, V = la.eigh(M.real)
            w = w.astype(complex)
            V = V.astype(complex)
        else:
            w, V = la.eig(M, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise NumericalFailureError(f"eigensolver failed: {exc}") from exc

    order = _sort_order(w)
    w = w[order]
    V = V[:, order]

    scale = max(np.linalg.norm(M, 2) if n <= 64 else np.linalg.norm(M, 1), 1e-300)
    resid = np.linalg.norm(M @ V - V * w, axis=0) / np.linalg.norm(V, axis=0)
    worst = float(resid.max())
    if not np.isfinite(worst) or worst > _RESIDUAL_FAIL * scale:
        raise NumericalFailureError(
            f"eigenpair residual {worst:.3e} too large", residual=worst
        )

    V, flags = c_normalize(V)

    # degenerate eigenvalues: eig returns an arbitrary basis of the eigenspace
    gaps = np.abs(np.diff(w))
    k = 0
    while k < n - 1:
        if gaps[k] > _CLUSTER_TOL * scale:
            k += 1
            continue
        end = k + 1
        while end < n - 1 and gaps[end] <= _CLUSTER_TOL * scale:
            end += 1
        block = slice(k, end + 1)
        U = V[:, block] / np.linalg.norm(V[:, block], axis=0)
        # a genuine eigenspace has a well-conditioned basis; a coalescing pair does not
        if np.linalg.svd(U, compute_uv=False).min() > 1e-3:
            W = _c_orthogonalize_cluster(V[:, block])
            if W is not None:
                for j in range(W.shape[1]):
                    W[:, j] = _phase_fix(W[:, j])
                V[:, block] = W
                flags[block] = True
        k = end + 1

    _flag_coalesced(w, V, flags, scale)
    return EigenSystem(w, V, flags)


def _flag_coalesced(w, V, flags, scale):
    d = np.abs(w[:, None] - w[None, :])
    a, b = np.nonzero(np.triu(d < _SPLIT_TOL * scale, 1))
    if len(a) == 0:
        return
    U = V / np.linalg.norm(V, axis=0)
    for i, j in zip(a, b):
        if 1.0 - abs(np.vdot(U[:, i], U[:, j])) < _PARALLEL_TOL:
            flags[i] = flags[j] = False


def overlaps(eigsys: EigenSystem) -> OverlapReport:
    """Hermitian norms ``A_k`` and overlap moduli of a c-normalized system.

    Raises ``DefectiveSystemError`` if any vector could not be c-normalized.
    """
    if eigsys.defective:
        bad = np.flatnonzero(~eigsys.c_norms_ok).tolist()
        raise DefectiveSystemError(f"vectors {bad} are self-orthogonal; A is unbounded")
    V = eigsys.right_vectors
    gram = V.conj().T @ V
    return OverlapReport(a_norm=np.real(np.diag(gram)).copy(), cross_overlaps=np.abs(gram))


def _tracking_basis(eigsys):
    V = eigsys.right_vectors.copy()
    bad = ~eigsys.c_norms_ok
    if np.any(bad):
        V[:, bad] = V[:, bad] / np.linalg.norm(V[:, bad], axis=0)
    return V


def track_pairing(prev: EigenSystem, next: EigenSystem) -> np.ndarray:
    """Match eigenpairs of two nearby systems.

    Returns ``perm`` with ``next`` index ``perm[i]`` continuing ``prev`` index
    ``i``.  Pairs are assigned greedily by decreasing ``|phi_prev.T phi_next|``;
    equal overlaps resolve by ascending ``(i, j)``.
    """
    n = len(prev)
    if len(next) != n:
        raise InvalidInputError(f"dimension mismatch {n} vs {len(next)}")
    O = np.abs(_tracking_basis(prev).T @ _tracking_basis(next))
    ii, jj = np.indices(O.shape)
    order = np.lexsort((jj.ravel(), ii.ravel(), -O.ravel()))
    perm = np.full(n, -1, dtype=int)
    used = np.zeros(n, dtype=bool)
    assigned = 0
    for flat in order:
        i, j = divmod(int(flat), n)
        if perm[i] >= 0 or used[j]:
            continue
        perm[i] = j
        used[j] = True
        assigned += 1
        if assigned == n:
            break
    return perm
