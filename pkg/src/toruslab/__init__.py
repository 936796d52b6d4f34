"""Numerical laboratory for Schrodinger observability and control on rectangular 2-tori."""

__version__ = "0.1.0"

from .torus import FourierField, GridFunction, ObservationRegion, TorusGeometry, lp_norm, rng  # noqa: E402
from .floquet import build_floquet, free_dispersive_identity, observability_constant_1d  # noqa: E402
from .hamiltonian import build_hamiltonian, propagate, split_step  # noqa: E402
from .observability import build_gramian, observability_constant  # noqa: E402
from .control import synthesize_control, verify_terminal  # noqa: E402

__all__ = [
    "FourierField", "GridFunction", "ObservationRegion", "TorusGeometry", "lp_norm", "rng",
    "build_floquet", "free_dispersive_identity", "observability_constant_1d",
    "build_hamiltonian", "propagate", "split_step",
    "build_gramian", "observability_constant",
    "synthesize_control", "verify_terminal",
]
