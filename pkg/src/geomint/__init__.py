"""Symplectic and presymplectic integrators from lifted discretization maps."""
from .config import SolverConfig
from .expr import parse, diff, evaluate, jacobian
from .maps import DiscretizationMap, LiftedMap, cotangent_lift
from .hamiltonian import HamiltonianSystem, Trajectory, integrate, symplectic_step
from .ocp import (
    OCPDefinition, PontryaginSystem, build_pontryagin, classify_regularity,
    constraint_algorithm, integrate_ocp, morse_family_check, presymplectic_step,
)

__version__ = "0.1.0"
