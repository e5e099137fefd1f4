"""Mode-by-mode analysis of linearized kinetic plasma models.

Hermite velocity discretization, per-wave-vector generators, Hermitian
Lyapunov forms, exact propagation and decay-rate synthesis.
"""

from .velocity_basis import VelocityBasis, build_basis, build_collision, collision_frequency
from .spectral_generator import (
    MODELS,
    Generator,
    ModelSpec,
    ModeState,
    assemble_generator,
    make_admissible,
    spectral_abscissa,
)
from .lyapunov import FunctionalCoefficients, tune_constants, verify_lyapunov
from .propagator import Trajectory, propagate, propagate_with_source
from .decay_analysis import compare_models, fit_exponent, phi, theoretical_rate
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
