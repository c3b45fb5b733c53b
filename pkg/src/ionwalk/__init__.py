"""Coined quantum walk of a trapped ion's motional state.

Submodules:

``fock``         truncated oscillator space, operators and moments
``walker``       coin (x) walker space and the ideal step
``lattice``      discrete-lattice reference walk
``iontrap``      Lamb-Dicke operator product and direct Hamiltonian integration
``decoherence``  random coin phases, trajectory ensembles, power-law fits
``readout``      phonon-number readout from shelving signals
``wigner``       phase-space grids and metrics
``estimators``   scikit-learn style wrappers
``cli``          command-line front end (``ionwalk``)
"""
from .errors import (
    ConfigError,
    ConvergenceError,
    CoverageError,
    DomainError,
    IonWalkError,
    NumericError,
    ResolvabilityError,
    TruncationError,
)
from .fock import FockState, MomentSet, TruncationConfig, displacement, moments
from .iontrap import REFERENCE_PARAMS, IonParams, IonStepper, direct_integrate, full_step, ion_walk
from .walker import CoinWalkerState, IdealStepper, coin_matrix, ideal_step, initial_state, reduce_walker

__all__ = [
    "CoinWalkerState",
    "ConfigError",
    "ConvergenceError",
    "CoverageError",
    "DomainError",
    "REFERENCE_PARAMS",
    "FockState",
    "IdealStepper",
    "IonParams",
    "IonStepper",
    "IonWalkError",
    "MomentSet",
    "NumericError",
    "ResolvabilityError",
    "TruncationConfig",
    "TruncationError",
    "coin_matrix",
    "direct_integrate",
    "displacement",
    "full_step",
    "ideal_step",
    "initial_state",
    "ion_walk",
    "moments",
    "reduce_walker",
]
