"""Adiabatic evolution under the nonlinear Schroedinger equation.

The quantum state is reduced to canonical coordinates on the projective
space, where the dynamics is that of a classical Hamiltonian system.
Eigenstates become fixed points, Aharonov-Anandan phases become actions.
"""

from .adiabatic import (SweepRecord, SweepSpec, eigenstate_following, invariance_report, sweep,
                        tunneling_probability)
from .dynamics import IntegratorConfig, Trajectory, evolve_classical, evolve_quantum, period_detect
from .errors import *  # noqa: F401,F403
from .geometry import Orbit, aa_phase, action, compute_orbit, linear_actions
from .models import LinearModel, Model, TwoLevelModel
from .state import PhaseLedger, ProjectiveCoords, StateVector, reconstruct, reduce
from .stationary import (BranchDiagram, FixedPoint, classify, continue_branches, detect_collision,
                         find_fixed_points)

__version__ = "0.1.0"
