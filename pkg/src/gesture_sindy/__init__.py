"""Sparse model discovery for articulatory speech gestures.

The package simulates task-dynamic oscillator models of speech
gestures, extracts gesture tokens from articulatory pellet recordings,
and recovers sparse symbolic equations of motion from the kinematics
by sequentially thresholded least squares or constrained relaxed
regression over polynomial feature libraries. Analysis helpers
quantify how linear each gesture's restoring force is and where its
dynamical target lies.

Submodules
----------
oscillators
    Damped mass-spring gesture models and activation schedules.
trajectory
    Uniformly sampled time series and their CSV round trip.
integrate
    Adaptive Dormand-Prince integration (compiled or pure Python).
features
    Polynomial feature libraries over (x, x').
optimizers
    Ridge, sequentially thresholded least squares, constrained SR3.
kinematics
    Pellet recordings, channel signals, segmentation, exclusions.
pipeline
    Token fitting, ensembles, library comparison, synthetic corpora.
analysis
    Restoring-force linearity, portraits, target inference.
cli
    The gesture-sindy command line.
"""

__version__ = "0.1.0"

from . import analysis, features, integrate, kinematics, optimizers, oscillators, pipeline
from .errors import (
    ConfigError,
    DataError,
    DataFormatError,
    DegenerateTrackError,
    EmptyModelError,
    IllConditionedError,
    InfeasibleConstraintsError,
    IntegrationError,
    InvalidStateError,
    NumericalError,
    ToolkitError,
)
from .trajectory import Trajectory

__all__ = [
    "__version__",
    "analysis",
    "features",
    "integrate",
    "kinematics",
    "optimizers",
    "oscillators",
    "pipeline",
    "Trajectory",
    "ToolkitError",
    "ConfigError",
    "DataError",
    "DataFormatError",
    "DegenerateTrackError",
    "NumericalError",
    "InvalidStateError",
    "IntegrationError",
    "IllConditionedError",
    "EmptyModelError",
    "InfeasibleConstraintsError",
]
