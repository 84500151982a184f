"""Hubbard-chain ground states from sample-based subspace diagonalization,
with configurations sampled from a simulated Rydberg-atom preparation of the
perturbatively related anisotropic Heisenberg chain."""

from .fock import (
    Determinant,
    FermionHamiltonianSpec,
    SectorBasis,
    apply_hop,
    build_hubbard_matrix,
    enumerate_sector,
    hubbard_action,
)
from .models import (
    HeisenbergParams,
    HubbardParams,
    SpinHamiltonianSpec,
    build_spin_hamiltonian,
    effective_couplings,
    hubbard_hamiltonian_spec,
    perturbative_energy_estimate,
    spin_matrix,
    spin_to_hubbard_config,
)
from .oracles import (
    EnergyTable,
    chemical_potential,
    exact_ground_state,
    fidelity,
    lanczos_ground_state,
    perturbation_validator,
)
from .rydberg import AtomGeometry, PulseSchedule, evolve, sample, vdw_matrix
from .sqd import (
    ConfigurationSet,
    SqdConfig,
    SubspaceResult,
    average_occupancies,
    davidson_ground_state,
    partition_batches,
    project_hamiltonian,
    recover_configurations,
    sqd_run,
)
from .vqite import (
    CONVERGED_THETA,
    INITIAL_THETA,
    AnalogAnsatz,
    VqiteConfig,
    VqiteResult,
    extrapolate_hyperparameters,
    mclachlan_system,
    run_vqite,
    vqite_step,
)

__version__ = "0.1.0"

__all__ = [
    "Determinant",
    "FermionHamiltonianSpec",
    "SectorBasis",
    "apply_hop",
    "build_hubbard_matrix",
    "enumerate_sector",
    "hubbard_action",
    "HeisenbergParams",
    "HubbardParams",
    "SpinHamiltonianSpec",
    "build_spin_hamiltonian",
    "effective_couplings",
    "hubbard_hamiltonian_spec",
    "perturbative_energy_estimate",
    "spin_matrix",
    "spin_to_hubbard_config",
    "EnergyTable",
    "chemical_potential",
    "exact_ground_state",
    "fidelity",
    "lanczos_ground_state",
    "perturbation_validator",
    "AtomGeometry",
    "PulseSchedule",
    "evolve",
    "sample",
    "vdw_matrix",
    "ConfigurationSet",
    "SqdConfig",
    "SubspaceResult",
    "average_occupancies",
    "davidson_ground_state",
    "partition_batches",
    "project_hamiltonian",
    "recover_configurations",
    "sqd_run",
    "CONVERGED_THETA",
    "INITIAL_THETA",
    "AnalogAnsatz",
    "VqiteConfig",
    "VqiteResult",
    "extrapolate_hyperparameters",
    "mclachlan_system",
    "run_vqite",
    "vqite_step",
    "__version__",
]
