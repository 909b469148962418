"""Transmission, interior scattering wavefunction and its phase rigidity.

Two independent routes give the transmission amplitude:

* :func:`transmission_direct` solves ``(E - H_eff) x = b`` and applies the
  Fisher-Lee relation ``t = 2i v^2 sqrt(sin k_out sin k_in) chi_out^T G chi_in``;
* :func:`transmission_spectral` sums over the biorthogonal eigenpairs of
  ``H_eff(E)``: ``t = -2 pi i sum_k (w_R.phi_k)(phi_k.w_L) / (E - z_k)``.

They agree to rounding error wherever the eigensystem is non-defective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DefectiveSystemError, InvalidInputError, NoChannelError, SingularSolveError
from .heff import build_heff
from .models import ModelSpec, _closed_cached, channel_data, lead_self_energy
from .spectral import EigenSystem, eig_complex_symmetric

__all__ = [
    "ScatteringSolution",
    "SpectralExpansion",
    "solve_scattering",
    "transmission_direct",
    "transmission_spectral",
    "scattering_wavefunction",
    "spectral_expansion",
    "phase_rigidity_wave",
    "double_pole_profile",
    "COALESCENCE_GAP",
]

COALESCENCE_GAP = 1e-6
_DENSE_MAX = 200


@dataclass(frozen=True)
class ScatteringSolution:
    """Scattering state for a wave incident in ``channel`` of ``incoming_lead``.

    ``t`` and ``r_amp`` are the leading elements of ``t_matrix`` (outgoing x
    incoming channels) and ``r_matrix``.  ``abs_t`` is the Frobenius norm of
    ``t_matrix``, i.e. ``sqrt`` of the total transmission.
    """

    t: complex
    r_amp: complex
    psi_interior: np.ndarray
    rho: complex
    theta: float
    energy: float
    incoming_lead: str
    t_matrix: np.ndarray
    r_matrix: np.ndarray

    @property
    def abs_t(self) -> float:
        return float(np.linalg.norm(self.t_matrix))


def _other(lead):
    if lead not in ("L", "R"):
        raise InvalidInputError(f"lead must be 'L' or 'R', got {lead!r}")
    return "R" if lead == "L" else "L"


def _contacts(spec, E):
    ch = channel_data(spec, E)
    if ch.n_open == 0:
        raise NoChannelError(f"no propagating channel at E={E!r}")
    blocks = {b.name: b.sites for b in lead_self_energy(spec, E)}
    # s = v sqrt(sin k) chi on the contact sites, one column per channel
    s = float(spec.coupling_v) * ch.profiles * np.sqrt(ch.group_factors)
    return blocks, s


def _solve(H, E, rhs):
    n = H.shape[0]
    try:
        if n > _DENSE_MAX:
            A = (E * _sparse_identity(n) - H).tocsc()
            X = spla.splu(A).solve(np.ascontiguousarray(rhs))
        else:
            X = la.solve(E * np.eye(n) - H, rhs, check_finite=True)
    except (RuntimeError, la.LinAlgError) as exc:
        raise SingularSolveError(f"E - H_eff is singular at E={E!r}: {exc}") from exc
    if not np.all(np.isfinite(X)):
        raise SingularSolveError(f"E - H_eff is singular at E={E!r}")
    return X


def _sparse_identity(n):
    return sp.identity(n, dtype=complex, format="csc")


def solve_scattering(spec: ModelSpec, E: float, lead: str = "L", channel: int = 0) -> ScatteringSolution:
    """Direct (eigendecomposition-free) scattering solution at energy ``E``."""
    out = _other(lead)
    blocks, s = _contacts(spec, E)
    n_ch = s.shape[1]
    if not 0 <= channel < n_ch:
        raise InvalidInputError(f"channel {channel} not open ({n_ch} open)")
    n = _closed_cached(spec).shape[0]
    heff = build_heff(spec, E, sparse=n > _DENSE_MAX)
    if float(spec.coupling_v) == 0.0:
        zero = np.zeros((n_ch, n_ch), dtype=complex)
        return ScatteringSolution(0j, -1 + 0j, np.zeros(n, complex), complex(np.nan), np.nan,
                                  float(E), lead, zero, -np.eye(n_ch, dtype=complex))
    rhs = np.zeros((n, n_ch), dtype=complex)
    rhs[blocks[lead], :] = s
    X = _solve(heff.matrix, E, rhs)
    t_mat = 2j * s.T @ X[blocks[out], :]
    r_mat = -np.eye(n_ch) + 2j * s.T @ X[blocks[lead], :]
    # interior wave driven by the coupling vector i s / sqrt(pi)
    psi = X[:, channel] * (1j / np.sqrt(np.pi))
    rho, theta = phase_rigidity_wave(psi)
    return ScatteringSolution(
        t=complex(t_mat[0, 0]),
        r_amp=complex(r_mat[0, 0]),
        psi_interior=psi,
        rho=rho,
        theta=theta,
        energy=float(E),
        incoming_lead=lead,
        t_matrix=t_mat,
        r_matrix=r_mat,
    )


def transmission_direct(spec: ModelSpec, E: float, full: bool = False):
    """Transmission amplitude L -> R from a linear solve.

    Returns the leading element, or the full ``(n_out, n_in)`` matrix when
    ``full`` is set.
    """
    sol = solve_scattering(spec, E)
    return sol.t_matrix if full else sol.t


def scattering_wavefunction(spec: ModelSpec, E: float, lead: str = "L", channel: int = 0):
    """Interior wavefunction ``(E - H_eff)^-1 w`` for a wave incident from ``lead``."""
    return solve_scattering(spec, E, lead, channel).psi_interior


def _checked_eigensystem(H):
    es = eig_complex_symmetric(H)
    if es.defective:
        raise DefectiveSystemError("eigensystem of H_eff is defective at this energy")
    z = es.eigenvalues
    if len(z) > 1:
        U = es.unit_vectors()
        d = np.abs(z[:, None] - z[None, :])
        a, b = np.nonzero(np.triu(d < COALESCENCE_GAP, 1))
        for i, j in zip(a, b):
            if abs(np.vdot(U[:, i], U[:, j])) > 0.9:
                raise DefectiveSystemError(
                    f"eigenvalues {i},{j} within {d[i, j]:.1e} of coalescence"
                )
    return es


def transmission_spectral(spec: ModelSpec, E: float, full: bool = False):
    """Transmission amplitude L -> R as a sum over resonance states.

    Raises
    ------
    NoChannelError
        No open channel at ``E``.
    DefectiveSystemError
        ``H_eff(E)`` is at (or within ``1e-6`` of) an eigenvalue coalescence.
    """
    if channel_data(spec, E).n_open == 0:
        raise NoChannelError(f"no propagating channel at E={E!r}")
    heff = build_heff(spec, E)
    es = _checked_eigensystem(heff.matrix)
    V = es.right_vectors
    wl = heff.coupling_vectors["L"]
    wr = heff.coupling_vectors["R"]
    t = -2j * np.pi * (wr.T @ V) @ ((V.T @ wl) / (E - es.eigenvalues)[:, None])
    return t if full else complex(t[0, 0])


@dataclass(frozen=True)
class SpectralExpansion:
    """Resonance expansion of the interior scattering wave.

    ``coefficients[k] = (phi_k . w) / (E - z_k)``; ``order`` sorts the terms
    by decreasing weight ``|c_k| * ||phi_k||``.
    """

    eigensystem: EigenSystem
    coefficients: np.ndarray
    order: np.ndarray

    def partial_sum(self, n_terms):
        idx = self.order[:n_terms]
        V = self.eigensystem.right_vectors
        return V[:, idx] @ self.coefficients[idx]

    def full_sum(self):
        return self.partial_sum(len(self.order))


def spectral_expansion(spec: ModelSpec, E: float, lead: str = "L", channel: int = 0) -> SpectralExpansion:
    """Expand the interior wave in eigenfunctions of ``H_eff(E)`` (diagnostic)."""
    _other(lead)
    heff = build_heff(spec, E)
    W = heff.coupling_vectors[lead]
    if W.shape[1] <= channel:
        raise NoChannelError(f"channel {channel} not open at E={E!r}")
    es = eig_complex_symmetric(heff.matrix)
    if es.defective:
        raise DefectiveSystemError("eigensystem of H_eff is defective at this energy")
    V = es.right_vectors
    c = (V.T @ W[:, channel]) / (E - es.eigenvalues)
    weight = np.abs(c) * np.linalg.norm(V, axis=0)
    order = np.lexsort((np.arange(len(c)), -weight))
    return SpectralExpansion(es, c, order)


def phase_rigidity_wave(psi):
    """Phase rigidity ``rho = sum psi^2 / sum |psi|^2`` and rotation angle ``theta``.

    ``theta`` in ``[0, pi)`` satisfies ``rho = exp(2i theta) |rho|``, so the
    real and imaginary parts of ``exp(-i theta) psi`` are orthogonal.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    h = np.vdot(psi, psi).real
    if h == 0.0:
        raise InvalidInputError("phase rigidity of a zero wavefunction is undefined")
    c = psi @ psi
    rho = c / h
    if abs(rho) > 1.0:
        rho = rho / abs(rho)
    theta = float(np.angle(c) / 2.0) % np.pi
    if theta >= np.pi:  # -0 rounds up to pi
        theta = 0.0
    return complex(rho), theta


def double_pole_profile(E, E_d, gamma_d):
    """S-matrix line shape of two coalesced resonances at ``E_d - i gamma_d / 2``."""
    if not np.all(np.asarray(gamma_d) > 0):
        raise InvalidInputError("gamma_d must be positive")
    x = np.asarray(E, dtype=float) - E_d + 0.5j * gamma_d
    return 1.0 - 2j * gamma_d / x - gamma_d ** 2 / x ** 2
