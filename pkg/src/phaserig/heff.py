"""Effective non-Hermitian Hamiltonian, resonance poles and branch points.

``H_eff(E) = H_B + sum_C Sigma_C(E)`` where ``Sigma_C`` is the retarded self
energy of lead ``C``.  The coupling vectors returned with ``H_eff`` satisfy

    -Im Sigma_C = pi * sum_m a_m a_m^T,   w_m = i a_m,   a_m = v sqrt(sin k_m / pi) chi_m

so that ``t = -2 pi i w_R^T (E - H_eff)^-1 w_L`` is the transmission amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .errors import BranchPointNotFoundError, InvalidInputError, LeadThresholdError
from .models import (
    THRESHOLD_NUDGE,
    ModelSpec,
    _closed_cached,
    channel_data,
    closed_hamiltonian_sparse,
    lead_self_energy,
)
from .spectral import EigenSystem, eig_complex_symmetric, track_pairing

__all__ = [
    "EffectiveHamiltonian",
    "ResonanceState",
    "BranchPoint",
    "build_heff",
    "coupling_vectors",
    "solve_poles",
    "phase_rigidity_state",
    "RigidityDecomposition",
    "pair_discriminant",
    "find_branch_point",
    "POLE_TOL",
    "POLE_MAX_ITER",
]

POLE_TOL = 1e-10
POLE_MAX_ITER = 200
BRANCH_GAP_TOL = 1e-8
BRANCH_NOT_FOUND = 1e-4


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """``H_eff`` at one real energy plus the per-lead coupling vectors.

    ``coupling_vectors[lead]`` has one column per open channel of that lead.
    ``matrix`` is dense unless assembled with ``sparse=True``.
    """

    matrix: object
    energy: float
    coupling_vectors: Dict[str, np.ndarray]

    @property
    def dim(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ResonanceState:
    energy: float
    width: float
    eigenvalue: complex
    eigenvector: np.ndarray
    a_norm: float
    rigidity: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class BranchPoint:
    v_c: float
    E_c: float
    gap: float
    chirality_error: float
    chirality_sign: int
    eigenvalue: complex
    pair: Tuple[int, int]
    rigidities: Tuple[float, float]


@dataclass(frozen=True)
class RigidityDecomposition:
    """Rotated real/imaginary parts of a vector (second form of the rigidity).

    After rotation by ``exp(-i theta)`` the real and imaginary parts are
    orthogonal and ``r = (re_norm2 - im_norm2) / (re_norm2 + im_norm2)``.
    """

    rigidity: float
    theta: float
    re_norm2: float
    im_norm2: float


def coupling_vectors(spec: ModelSpec, E: float, n: Optional[int] = None):
    """Interior coupling vectors for the open channels of both leads."""
    ch = channel_data(spec, E)
    blocks = lead_self_energy(spec, E)
    if n is None:
        n = _closed_cached(spec).shape[0]
    out = {}
    amp = 1j * float(spec.coupling_v) * np.sqrt(ch.group_factors / np.pi)
    for blk in blocks:
        W = np.zeros((n, ch.n_open), dtype=complex)
        W[blk.sites, :] = ch.profiles * amp
        out[blk.name] = W
    return out


def build_heff(spec: ModelSpec, E: float, sparse: bool = False) -> EffectiveHamiltonian:
    """Assemble ``H_eff(E)``.

    Raises ``LeadThresholdError`` when ``E`` sits on a lead band edge.
    """
    H_B = _closed_cached(spec)  # read-only; every branch below builds a new matrix
    blocks = lead_self_energy(spec, E)
    if sparse:
        rows, cols, vals = [], [], []
        for blk in blocks:
            r, c = np.meshgrid(blk.sites, blk.sites, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(blk.sigma.ravel())
        extra = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=H_B.shape
        )
        H = (H_B.astype(complex) + extra).tocsc()
    else:
        H = H_B.toarray().astype(complex)
        for blk in blocks:
            H[np.ix_(blk.sites, blk.sites)] += blk.sigma
    return EffectiveHamiltonian(H, float(E), coupling_vectors(spec, E, H.shape[0]))


def heff_matrix(spec, E):
    """Dense ``H_eff(E)``, nudging off a lead threshold if necessary."""
    try:
        return build_heff(spec, E).matrix
    except LeadThresholdError:
        return build_heff(spec, E + THRESHOLD_NUDGE).matrix


def phase_rigidity_state(phi, decompose=False):
    """Phase rigidity ``r = |phi.T phi| / (phi^H phi)`` of a single vector.

    Independent of the normalization of ``phi``; equals ``1/A`` for a
    c-normalized vector.  With ``decompose=True`` a
    :class:`RigidityDecomposition` is returned instead of a float.
    """
    phi = np.asarray(phi, dtype=complex).ravel()
    h = np.vdot(phi, phi).real
    if h == 0.0:
        raise InvalidInputError("rigidity of a zero vector is undefined")
    c = phi @ phi
    r = min(abs(c) / h, 1.0)
    if not decompose:
        return float(r)
    theta = float(np.angle(c) / 2.0) % np.pi
    if theta >= np.pi:  # -0 rounds up to pi
        theta = 0.0
    rot = phi * np.exp(-1j * theta)
    re2 = float(np.sum(rot.real ** 2))
    im2 = float(np.sum(rot.imag ** 2))
    return RigidityDecomposition(float(r), theta, re2, im2)


def _seeds(spec):
    w = np.linalg.eigvalsh(closed_hamiltonian_sparse(spec).toarray())
    # split exact degeneracies so tracking stays well defined
    for k in range(1, len(w)):
        if w[k] - w[k - 1] < 1e-8:
            w[k] = w[k - 1] + 1e-8
    return w


def _state(es: EigenSystem, idx, E, converged, iterations):
    z = complex(es.eigenvalues[idx])
    phi = es.right_vectors[:, idx]
    ok = bool(es.c_norms_ok[idx])
    a = float(np.vdot(phi, phi).real) if ok else np.inf
    return ResonanceState(
        energy=float(E),
        width=float(-2.0 * z.imag),
        eigenvalue=z,
        eigenvector=phi.copy(),
        a_norm=a,
        rigidity=phase_rigidity_state(phi),
        converged=converged,
        iterations=iterations,
    )


def _follow_pole(spec, H_B_sys, idx, seed, tol, max_iter):
    E = float(seed)
    prev = H_B_sys
    step = 1.0
    last_dE = np.inf
    es = None
    for it in range(1, max_iter + 1):
        es = eig_complex_symmetric(heff_matrix(spec, E))
        idx = int(track_pairing(prev, es)[idx])
        target = float(es.eigenvalues[idx].real)
        dE = target - E
        if abs(dE) < tol:
            return _state(es, idx, E, True, it)
        if abs(dE) > abs(last_dE):
            # oscillating fixed point: damp the update
            step *= 0.5
        last_dE = dE
        E = E + step * dE
        prev = es
    return _state(es, idx, E, False, max_iter)


def solve_poles(spec: ModelSpec, tol=POLE_TOL, max_iter=POLE_MAX_ITER) -> List[ResonanceState]:
    """Solve ``E = Re z(E)`` for every interior state, seeded at the eigenvalues of ``H_B``.

    Each branch is followed by eigenvector tracking between successive
    iterates.  Non-converged states are returned with ``converged=False``.
    """
    if not spec.energy_dependent:
        es = eig_complex_symmetric(build_heff(spec, 0.0).matrix)
        states = [_state(es, k, es.eigenvalues[k].real, True, 1) for k in range(len(es))]
        return sorted(states, key=lambda s: (s.energy, s.width))
    seeds = _seeds(spec)
    H_B_sys = eig_complex_symmetric(closed_hamiltonian_sparse(spec).toarray())
    states = [
        _follow_pole(spec, H_B_sys, k, seeds[k], tol, max_iter) for k in range(len(seeds))
    ]
    return sorted(states, key=lambda s: (s.energy, s.width))


# -- branch points ---------------------------------------------------------


def _spectrum(spec, v, E):
    return eig_complex_symmetric(heff_matrix(spec.with_param("coupling_v", v), E))


def pair_discriminant(spec, v, E, pair=None):
    """``(z_a - z_b)^2`` and mean eigenvalue of the closest (or given) pair at ``(v, E)``."""
    es = _spectrum(spec, v, E)
    if pair is None:
        _, pair = es.min_gap()
    za, zb = es.eigenvalues[pair[0]], es.eigenvalues[pair[1]]
    return complex((za - zb) ** 2), complex((za + zb) / 2), pair, es


def _objective(spec, x):
    v, E = x
    d, zbar, _, _ = pair_discriminant(spec, max(v, 0.0), E)
    # squared gap is linear near a coalescence; the second term asks E to be the pair's own energy
    return abs(d) + (E - zbar.real) ** 2


def _gauss_newton(spec, v, E, pair, bounds, steps=8):
    """Polish (v, E) on Re D = Im D = 0, E = Re zbar with a least-squares Newton step."""

    def F(x):
        d, zbar, _, _ = pair_discriminant(spec, x[0], x[1], pair)
        return np.array([d.real, d.imag, x[1] - zbar.real])

    x = np.array([v, E], dtype=float)
    f = F(x)
    for _ in range(steps):
        h = 1e-7
        J = np.empty((3, 2))
        for j in range(2):
            dx = np.zeros(2)
            dx[j] = h
            J[:, j] = (F(x + dx) - F(x - dx)) / (2 * h)
        step, *_ = np.linalg.lstsq(J, -f, rcond=1e-10)
        x_new = np.clip(x + step, [bounds[0][0], bounds[1][0]], [bounds[0][1], bounds[1][1]])
        f_new = F(x_new)
        if np.linalg.norm(f_new) >= np.linalg.norm(f):
            break
        x, f = x_new, f_new
    return x


def _ulp_polish(spec, v, E, pair, span=4):
    """Pick the float within a few ulps of ``v`` with the smallest |discriminant|."""
    cands = [v]
    lo = hi = v
    for _ in range(span):
        lo = np.nextafter(lo, -np.inf)
        hi = np.nextafter(hi, np.inf)
        cands += [lo, hi]
    return float(min(cands, key=lambda c: abs(pair_discriminant(spec, c, E, pair)[0])))


def _chirality(es, pair):
    a, b = pair
    vecs = []
    for k in (a, b):
        phi = es.right_vectors[:, k]
        c = phi @ phi
        if c == 0:
            return np.nan, 0
        phi = phi / np.sqrt(c)
        vecs.append(phi / np.linalg.norm(phi))
    errs = [np.linalg.norm(vecs[0] - s * 1j * vecs[1]) for s in (1, -1)]
    k = int(np.argmin(errs))
    return float(errs[k]), (1, -1)[k]


_N_CANDIDATES = 4


def _grid_minima(gaps, vs, Es):
    """Grid points that are local minima of the gap, best first."""
    pts = []
    nv, ne = gaps.shape
    for i in range(nv):
        for j in range(ne):
            g = gaps[i, j]
            nb = gaps[max(i - 1, 0): i + 2, max(j - 1, 0): j + 2]
            if g <= nb.min():
                pts.append((g, i, j))
    pts.sort()
    return [(float(vs[i]), float(Es[j])) for _, i, j in pts]


def _refine(spec, vb, Eb, bounds, grid):
    (v0, v1), (e0, e1) = bounds
    dv = max((v1 - v0) / max(grid[0] - 1, 1), 1e-6)
    dE = max((e1 - e0) / max(grid[1] - 1, 1), 1e-6)
    simplex = np.array([[vb, Eb], [min(vb + dv, v1), Eb], [vb, min(Eb + dE, e1)]])
    if simplex[1, 0] == vb:
        simplex[1, 0] = vb - dv
    if simplex[2, 1] == Eb:
        simplex[2, 1] = Eb - dE
    res = minimize(
        lambda x: _objective(spec, x),
        np.array([vb, Eb]),
        method="Nelder-Mead",
        bounds=bounds,
        options={"initial_simplex": simplex, "xatol": 1e-11, "fatol": 1e-20,
                 "maxiter": 600, "maxfev": 1200},
    )
    v, E = res.x
    _, _, pair, _ = pair_discriminant(spec, v, E)
    v, E = _gauss_newton(spec, v, E, pair, bounds)
    return _ulp_polish(spec, v, E, pair), float(E)


def find_branch_point(spec: ModelSpec, v_range, E_range, grid=(41, 41)) -> BranchPoint:
    """Locate a coalescence of two eigenvalues of ``H_eff`` in the ``(v, E)`` plane.

    A grid scan of the minimal pair gap selects a start point, a bounded
    Nelder-Mead search refines it, and a Gauss-Newton polish drives the pair
    discriminant to zero.  ``E_c`` is the self-consistent energy
    ``E_c = Re z`` of the coalesced eigenvalue.

    Raises
    ------
    BranchPointNotFoundError
        The smallest gap in the window stays above ``1e-4``.
    """
    (v0, v1), (e0, e1) = map(tuple, (v_range, E_range))
    if not (v0 < v1 and e0 <= e1):
        raise InvalidInputError(f"bad search window v={v_range}, E={E_range}")
    vs = np.linspace(v0, v1, grid[0])
    Es = np.linspace(e0, e1, grid[1]) if e1 > e0 else np.array([e0])
    if not spec.energy_dependent:
        # eigenvalues do not depend on E: scan v only, E follows from self-consistency
        Es_scan = Es[:1]
    else:
        Es_scan = Es
    gaps = np.array([[_spectrum(spec, v, E).min_gap()[0] for E in Es_scan] for v in vs])
    bounds = [(v0, v1), (e0, e1)]
    best = None
    for vb, Eb in _grid_minima(gaps, vs, Es_scan)[:_N_CANDIDATES]:
        if not spec.energy_dependent:
            Eb = float(np.clip(pair_discriminant(spec, vb, Eb)[1].real, e0, e1))
        v, E = _refine(spec, vb, Eb, bounds, grid)
        d = pair_discriminant(spec, v, E)[0]
        if best is None or abs(d) < best[0]:
            best = (abs(d), v, E)
        if np.sqrt(abs(d)) < BRANCH_GAP_TOL:
            break
    _, v, E = best

    d, zbar, pair, es = pair_discriminant(spec, v, E)
    gap = float(np.sqrt(abs(d)))
    if gap > BRANCH_NOT_FOUND:
        raise BranchPointNotFoundError(
            f"no coalescence in v={tuple(v_range)}, E={tuple(E_range)}; smallest gap {gap:.3e}",
            best_gap=gap,
        )
    err, sign = _chirality(es, pair)
    rig = tuple(phase_rigidity_state(es.right_vectors[:, k]) for k in pair)
    return BranchPoint(
        v_c=float(v),
        E_c=float(E),
        gap=gap,
        chirality_error=err,
        chirality_sign=sign,
        eigenvalue=zbar,
        pair=pair,
        rigidities=rig,
    )
