"""Model systems: closed Hamiltonians, lead self-energies and channel data.

Three systems are provided:

``chain``
    N sites, hopping -1, zero onsite energy, attached at sites 1 and N to
    semi-infinite 1-D leads of the same lattice through a hopping ``v``.
    Lead band ``[-2, 2]``.
``double_dot``
    Sites ``(dot_L, wire, dot_R)`` with internal coupling ``u`` and a
    wide-band (energy independent) self-energy ``-i v^2`` on both dots.
``billiard2d``
    Square lattice, onsite +4 and hopping -1, Dirichlet walls, sites inside a
    circular disk removed.  Two stripe leads of width ``w`` attach to the
    columns ``x = 0`` and ``x = nx - 1``, centred in ``y``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, LeadThresholdError

__all__ = [
    "ModelSpec",
    "ChannelData",
    "LeadBlock",
    "BilliardGeometry",
    "build_closed_hamiltonian",
    "closed_hamiltonian_sparse",
    "lead_self_energy",
    "channel_data",
    "surface_green_1d",
    "THRESHOLD_NUDGE",
    "KINDS",
]

KINDS = ("chain", "double_dot", "billiard2d")
THRESHOLD_NUDGE = 1e-9
_THRESHOLD_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one model system.

    ``n_sites`` is used by the chain, ``internal_u`` by the double dot, and
    ``dims``, ``lead_width``, ``disk_radius`` and ``disk_center`` by the
    billiard.  A billiard with ``dims=None`` is a ``4w x 5w`` rectangle; a
    ``disk_center`` of ``None`` puts the disk ``(w/4, w/4)`` sites off the
    rectangle centre.
    """

    kind: str = "chain"
    n_sites: int = 6
    coupling_v: float = 0.5
    internal_u: float = float(np.sqrt(2) / 16)
    dims: Optional[Tuple[int, int]] = None
    lead_width: int = 8
    disk_radius: float = 0.0
    disk_center: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if not np.isfinite(self.coupling_v) or self.coupling_v < 0:
            raise InvalidInputError(f"coupling_v must be >= 0, got {self.coupling_v}")
        if self.kind == "chain" and int(self.n_sites) < 1:
            raise InvalidInputError("chain needs n_sites >= 1")
        if self.kind == "billiard2d":
            if self.dims is not None:
                object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
            if self.disk_center is not None:
                object.__setattr__(self, "disk_center", tuple(float(c) for c in self.disk_center))
            nx, ny = self.shape
            w = int(self.lead_width)
            if w < 1:
                raise InvalidInputError("lead_width must be >= 1")
            if nx < 1 or ny < 1:
                raise InvalidInputError(f"bad billiard dims {self.dims}")
            if w > ny:
                raise InvalidInputError(f"lead_width {w} exceeds ny={ny}")
            r = float(self.disk_radius)
            if r < 0:
                raise InvalidInputError("disk_radius must be >= 0")
            cx, cy = self.center
            if r > 0 and (cx - r < 0 or cx + r > nx - 1 or cy - r < 0 or cy + r > ny - 1):
                raise InvalidInputError(
                    f"disk (centre {(cx, cy)}, radius {r}) does not fit in {nx}x{ny}"
                )

    @classmethod
    def chain(cls, n_sites=6, v=0.5):
        return cls(kind="chain", n_sites=int(n_sites), coupling_v=float(v))

    @classmethod
    def double_dot(cls, u=float(np.sqrt(2) / 16), v=0.5):
        return cls(kind="double_dot", n_sites=3, coupling_v=float(v), internal_u=float(u))

    @classmethod
    def billiard(cls, lead_width=8, disk_radius=0.0, v=1.0, dims=None, disk_center=None):
        return cls(
            kind="billiard2d",
            coupling_v=float(v),
            lead_width=int(lead_width),
            disk_radius=float(disk_radius),
            dims=dims,
            disk_center=disk_center,
        )

    @property
    def shape(self):
        if self.dims is not None:
            return tuple(self.dims)
        w = int(self.lead_width)
        return (4 * w, 5 * w)

    @property
    def center(self):
        if self.disk_center is not None:
            return tuple(self.disk_center)
        nx, ny = self.shape
        w = int(self.lead_width)
        return ((nx - 1) / 2 + w / 4, (ny - 1) / 2 + w / 4)

    @property
    def energy_dependent(self) -> bool:
        return self.kind != "double_dot"

    def with_param(self, name, value):
        """Copy with one swept parameter replaced (``coupling_v`` or ``disk_radius``)."""
        if name == "none":
            return self
        if name not in ("coupling_v", "disk_radius", "internal_u"):
            raise InvalidInputError(f"cannot sweep {name!r}")
        return replace(self, **{name: float(value)})

    def to_dict(self):
        d = asdict(self)
        if self.kind == "billiard2d":
            d["dims"] = list(self.shape)
            d["disk_center"] = list(self.center)
        return d


@dataclass(frozen=True)
class ChannelData:
    """Propagating channels of one lead at a fixed energy.

    ``profiles[:, m]`` is the transverse wavefunction of channel ``m`` on the
    contact sites (a single ``1.0`` for 1-D leads).  ``thresholds`` lists the
    band edges of every transverse mode of the lead, open or not.
    """

    energy: float
    wavenumbers: np.ndarray
    group_factors: np.ndarray
    thresholds: np.ndarray
    profiles: np.ndarray
    mode_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    @property
    def n_open(self) -> int:
        return len(self.wavenumbers)


@dataclass(frozen=True)
class LeadBlock:
    """Self-energy ``sigma`` of one lead acting on interior ``sites``."""

    name: str
    sites: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class BilliardGeometry:
    """Site bookkeeping for the lattice billiard."""

    nx: int
    ny: int
    mask: np.ndarray          # (nx, ny) True where a site exists
    index: np.ndarray         # (nx, ny) interior basis index or -1
    coords: np.ndarray        # (n, 2) integer (x, y) per basis index
    left_contact: np.ndarray  # basis indices at x = 0, ordered by y
    right_contact: np.ndarray

    @classmethod
    def from_spec(cls, spec: ModelSpec):
        nx, ny = spec.shape
        w = int(spec.lead_width)
        xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        mask = np.ones((nx, ny), dtype=bool)
        r = float(spec.disk_radius)
        if r > 0:
            cx, cy = spec.center
            mask &= (xs - cx) ** 2 + (ys - cy) ** 2 >= r * r
        y0 = (ny - w) // 2
        rows = np.arange(y0, y0 + w)
        if not (mask[0, rows].all() and mask[nx - 1, rows].all()):
            raise InvalidInputError("disk covers a lead contact site")
        index = np.full((nx, ny), -1, dtype=int)
        # x-major ordering: basis index = running count over (x, y)
        index[mask] = np.arange(int(mask.sum()))
        coords = np.argwhere(mask)
        return cls(nx, ny, mask, index, coords, index[0, rows], index[nx - 1, rows])


@lru_cache(maxsize=64)
def _geometry(spec):
    return BilliardGeometry.from_spec(spec)


def closed_hamiltonian_sparse(spec: ModelSpec) -> sp.csr_matrix:
    """Closed-system Hamiltonian as a CSR matrix (all model kinds)."""
    return _closed_cached(spec).copy()


@lru_cache(maxsize=64)
def _closed_cached(spec):
    if spec.kind == "chain":
        n = int(spec.n_sites)
        off = -np.ones(n - 1)
        return sp.diags([off, off], [-1, 1], shape=(n, n), format="csr")
    if spec.kind == "double_dot":
        u = float(spec.internal_u)
        H = np.array([[0, u, 0], [u, 0, u], [0, u, 0]], dtype=float)
        return sp.csr_matrix(H)
    geo = _geometry(spec)
    n = len(geo.coords)
    rows, cols = [], []
    for dx, dy in ((1, 0), (0, 1)):
        a = geo.index[: geo.nx - dx, : geo.ny - dy]
        b = geo.index[dx:, dy:]
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    hop = sp.coo_matrix((-np.ones(len(r)), (r, c)), shape=(n, n))
    H = hop + hop.T + 4.0 * sp.identity(n)
    return H.tocsr()


def build_closed_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """Dense real-symmetric Hamiltonian of the closed system."""
    return closed_hamiltonian_sparse(spec).toarray()


def surface_green_1d(x: float) -> complex:
    """Retarded surface Green function of a semi-infinite chain with hopping -1.

    ``x`` is the energy measured from the chain's onsite energy.  Inside the
    band ``x = -2 cos k`` and the result is ``-exp(ik)``; outside it is the
    real evanescent root with modulus below one.
    """
    d = abs(x) - 2.0
    if abs(d) < _THRESHOLD_TOL:
        raise LeadThresholdError(f"energy {x!r} sits on a lead band edge", energy=x)
    if d < 0:
        k = np.arccos(-x / 2.0)
        return complex(-np.exp(1j * k))
    return complex((x - np.sign(x) * np.sqrt(x * x - 4.0)) / 2.0)


def _transverse_modes(w):
    y = np.arange(1, w + 1)
    m = np.arange(1, w + 1)
    chi = np.sqrt(2.0 / (w + 1)) * np.sin(np.pi * np.outer(y, m) / (w + 1))
    onsite = 4.0 - 2.0 * np.cos(np.pi * m / (w + 1))
    return chi, onsite


def lead_self_energy(spec: ModelSpec, E: float):
    """Self-energy blocks of the left and right leads at real energy ``E``.

    Returns
    -------
    list of LeadBlock
        ``[left, right]``; for a single-site chain both act on site 0.
    """
    E = float(E)
    v2 = float(spec.coupling_v) ** 2
    if spec.kind == "chain":
        s = v2 * surface_green_1d(E)
        n = int(spec.n_sites)
        return [
            LeadBlock("L", np.array([0]), np.array([[s]])),
            LeadBlock("R", np.array([n - 1]), np.array([[s]])),
        ]
    if spec.kind == "double_dot":
        s = -1j * v2
        return [
            LeadBlock("L", np.array([0]), np.array([[s]])),
            LeadBlock("R", np.array([2]), np.array([[s]])),
        ]
    geo = _geometry(spec)
    chi, onsite = _transverse_modes(int(spec.lead_width))
    g = np.array([surface_green_1d(E - e) for e in onsite])
    block = v2 * (chi * g) @ chi.T
    block = 0.5 * (block + block.T)  # exact symmetry despite rounding in the product
    return [
        LeadBlock("L", geo.left_contact, block),
        LeadBlock("R", geo.right_contact, block.copy()),
    ]


def channel_data(spec: ModelSpec, E: float) -> ChannelData:
    """Open channels of a lead at energy ``E`` (both leads are identical)."""
    E = float(E)
    if spec.kind == "double_dot":
        # wide-band lead: one channel at every energy with unit group factor
        return ChannelData(E, np.array([np.pi / 2]), np.ones(1), np.zeros(0),
                           np.ones((1, 1)), np.array([1]))
    if spec.kind == "chain":
        thresholds = np.array([-2.0, 2.0])
        if abs(E) < 2.0:
            k = np.arccos(-E / 2.0)
            return ChannelData(E, np.array([k]), np.array([np.sin(k)]), thresholds,
                               np.ones((1, 1)), np.array([1]))
        return ChannelData(E, np.zeros(0), np.zeros(0), thresholds, np.zeros((1, 0)),
                           np.zeros(0, int))
    w = int(spec.lead_width)
    chi, onsite = _transverse_modes(w)
    x = E - onsite
    open_ = np.abs(x) < 2.0
    k = np.arccos(-x[open_] / 2.0)
    thresholds = np.sort(np.concatenate([onsite - 2.0, onsite + 2.0]))
    return ChannelData(E, k, np.sin(k), thresholds, chi[:, open_],
                       np.flatnonzero(open_) + 1)
