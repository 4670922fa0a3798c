"""Fourier-spectral simulator for the almost Hermitian-Einstein flow on flat
Kähler 2-tori, with independent numerical checks of its structural identities.
"""

__version__ = "0.1.0"

from .grid import TorusGeometry  # noqa: E402
from .bundle import MetricField, PositivityError, curvature  # noqa: E402
from .topology import char_numbers, euler_char  # noqa: E402
from .moment import evaluate  # noqa: E402
from .flow import FlowConfig, flow_rhs, run, step  # noqa: E402
from .functional import ExponentialPath, dk_hamiltonian, dk_secondary  # noqa: E402

__all__ = [
    "TorusGeometry",
    "MetricField",
    "PositivityError",
    "curvature",
    "char_numbers",
    "euler_char",
    "evaluate",
    "FlowConfig",
    "flow_rhs",
    "run",
    "step",
    "ExponentialPath",
    "dk_hamiltonian",
    "dk_secondary",
]
