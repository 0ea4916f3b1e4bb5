"""Motion of eigenvalues of smoothly varying real matrices."""

from .errors import *  # noqa: F401,F403
from .forces import (
    ForceReport,
    Interaction,
    acceleration,
    classify_interaction,
    couplings,
    eigvec_derivatives,
    force_decomposition,
    velocity,
)
from .spectral import EigenSystem, conjugate_partner, decompose, load_matrix, save_matrix

__version__ = "0.1.0"
