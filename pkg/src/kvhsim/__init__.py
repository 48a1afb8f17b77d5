"""Koopman wavefunction solvers for classical and hybrid quantum-classical dynamics."""

__version__ = "0.1.0"

from .config import ExperimentConfig, emit_config, load_config, parse_config, preset_config
from .errors import (BoundaryMassExceeded, CFLViolation, ConfigError, GridError, GridMismatchError,
                     HamiltonianError, IncompatibleTransformError, InvariantViolation, KvhError,
                     OddSizeError, TruncationError)
from .grid import PhaseSpaceGrid, boundary_mass, make_grid, polar_decompose
from .hamiltonian import PAULI, HamiltonianFunction, HybridHamiltonian
from .hybrid import (QCWEStepper, bloch_and_purity, diagonal_channel_solve, hybrid_classical_density,
                     hybrid_energy, qcwe_rhs, qcwe_step, quantum_density)
from .koopman import (KoopmanStepper, VanHoveTransform, characteristics_oracle, kvh_classical_density,
                      kvh_rhs, kvn_classical_density, kvn_rhs, momentum_map_density,
                      momentum_map_pairing_check, step, van_hove_act)
from .nonlinear import NQCLE, density_from_wavefunction, mean_velocity, nqcle_rhs, nqcle_step
from .states import GaussianState, HybridState, MatchedState, normalized
