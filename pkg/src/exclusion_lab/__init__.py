"""Simulation lab for one-dimensional exclusion processes, second-class
particles, growth interfaces and last-passage percolation."""

__version__ = "0.1.0"

from .clock import ClockRealization, HorizonError
from .core import (
    Audit, CoupledState, CurrentTally, EventLog, Occupancy, WindowError, evolve,
    evolve_coupled, run, sample_equilibrium, track_current,
)
from .kernel import JumpKernel, KernelError, derive_pprime
from .lpp import (
    DomainError, PassageTable, WeightGrid, brute_force_three_step, brute_force_upright,
    corner_passage, hitting_time_passage, interface_hits, lpp_three_step, lpp_upright, psi,
    psi_inverse, shape_g, shape_gamma,
)
from .variational import (
    CertificateError, HeightProfile, Interface, envelope, evolve_height, evolve_interface,
    finite_k_window, height_from_occupancy, occupancy_from_height, run_variational,
    second_class_variational,
)
from .stats.estimators import EnsembleEstimate
from .stats.local import LocalFunction, decompose, monotone_split
from .config import ConfigError, ExperimentConfig, parse_config
