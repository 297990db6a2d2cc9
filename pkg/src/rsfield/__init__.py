"""Extended reduced state of the field for open multimode bosonic dynamics."""
from .core import (Bipartition, ReducedState, TwoQuditState, TracelessState, compose_product,
                   expectation, normalize_projected, partial_transpose_second,
                   project_bipartition, swap_matrix, tau_left, tau_right, two_qudit)
from .evolution import (GeneratorSpec, PiecewiseGenerator, ThermalBathSpec, bath_to_gamma,
                        integrate, rhs, rhs_projected)
from .states import build, reduce_from_fock

__all__ = [
    "Bipartition", "ReducedState", "TwoQuditState", "TracelessState", "compose_product",
    "expectation", "normalize_projected", "partial_transpose_second", "project_bipartition",
    "swap_matrix", "tau_left", "tau_right", "two_qudit", "GeneratorSpec",
    "PiecewiseGenerator", "ThermalBathSpec", "bath_to_gamma", "integrate", "rhs",
    "rhs_projected", "build", "reduce_from_fock",
]
__version__ = "0.1.0"
