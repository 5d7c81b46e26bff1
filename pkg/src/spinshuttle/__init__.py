"""Electron-spin shuttling through disordered valley landscapes.

Simulation and trajectory-optimization toolkit for conveyor-mode Si/SiGe
devices: generates position-dependent intervalley couplings from atomistic
alloy disorder, propagates the joint valley-spin open-system dynamics along
a moving dot, and optimizes few-parameter sine corrections to the dot
trajectory to minimize the spin-transport infidelity.
"""

from .analysis import (
    EnsembleStats,
    HotspotParams,
    dephasing_channel_fidelity,
    ensemble_percentiles,
    entangled_spin_purity,
    envelope_overlap,
    hotspot_infidelity,
    hotspot_rate,
    motional_narrowing_Tphi,
    qd_sigma_from_orbital,
)
from .dynamics import (
    DEFAULT_STEP_POLICY,
    LocalOperators,
    SimulationResult,
    StepPolicy,
    build_hamiltonian,
    initial_state,
    load_result,
    propagate_step,
    save_result,
    simulate,
    timestep_for_speed,
)
from .fidelity import (
    FidelityContext,
    average_gate_fidelity,
    entanglement_fidelity,
    excited_population,
    general_entanglement_fidelity,
    purities,
)
from .landscape import (
    CrystalRegion,
    EnvelopeError,
    LandscapeStats,
    MemoryBudgetError,
    ValleyLandscape,
    ValleySample,
    build_crystal,
    confinement_potential,
    generate_landscape,
    intervalley_coupling,
    landscape_stats,
    load_landscape,
    local_concentration,
    mean_concentration_profile,
    save_landscape,
    solve_envelope,
)
from .optimize import (
    OptimizationProblem,
    OptimizationResult,
    cost,
    gradient,
    gradient_fd,
    optimize,
)
from .params import (
    CONSTANTS,
    Config,
    Constants,
    OptimizerSettings,
    PhysicalParams,
    SimulationSettings,
    WellParams,
    derive_kappa_z,
    load_config,
    params_digest,
    zeeman_energy,
)
from .trajectory import ShuttleTrajectory, TrajectoryDomainError, basis_frequencies

__version__ = "0.1.0"
