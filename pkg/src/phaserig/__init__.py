"""Phase rigidity of open quantum systems: resonance states, branch points and transport.

The package builds the non-Hermitian effective Hamiltonian of a small
tight-binding system coupled to leads, locates its resonance poles and
exceptional points, and computes transmission together with the phase
rigidity of the interior scattering wavefunction.
"""

__version__ = "0.1.0"

from .errors import (
    BranchPointNotFoundError,
    DefectiveSystemError,
    InsufficientDataError,
    InvalidInputError,
    LeadThresholdError,
    NoChannelError,
    NumericalFailureError,
    PhaseRigError,
    SingularSolveError,
)
from .heff import (
    BranchPoint,
    EffectiveHamiltonian,
    ResonanceState,
    build_heff,
    find_branch_point,
    phase_rigidity_state,
    solve_poles,
)
from .models import ModelSpec, build_closed_hamiltonian, channel_data, lead_self_energy
from .scattering import (
    ScatteringSolution,
    double_pole_profile,
    phase_rigidity_wave,
    solve_scattering,
    transmission_direct,
    transmission_spectral,
)
from .spectral import EigenSystem, c_normalize, eig_complex_symmetric, overlaps, track_pairing
from .sweep import SweepPlan, SweepTable, correlate, run_sweep

__all__ = [
    "__version__",
    "PhaseRigError",
    "InvalidInputError",
    "NumericalFailureError",
    "DefectiveSystemError",
    "LeadThresholdError",
    "NoChannelError",
    "SingularSolveError",
    "BranchPointNotFoundError",
    "InsufficientDataError",
    "EigenSystem",
    "eig_complex_symmetric",
    "c_normalize",
    "overlaps",
    "track_pairing",
    "ModelSpec",
    "build_closed_hamiltonian",
    "lead_self_energy",
    "channel_data",
    "EffectiveHamiltonian",
    "ResonanceState",
    "BranchPoint",
    "build_heff",
    "solve_poles",
    "phase_rigidity_state",
    "find_branch_point",
    "ScatteringSolution",
    "solve_scattering",
    "transmission_direct",
    "transmission_spectral",
    "phase_rigidity_wave",
    "double_pole_profile",
    "SweepPlan",
    "SweepTable",
    "run_sweep",
    "correlate",
]
