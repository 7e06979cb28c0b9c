"""Dense matrix arithmetic with gradient recording and seeded sampling."""

from . import ops
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .rng import Rng, derive_seed, sample_gaussian
from .tape import Matrix, Node, Tape, as_matrix, backward

__all__ = [
    "Matrix",
    "Node",
    "Rng",
    "Tape",
    "as_matrix",
    "backward",
    "check_gradients",
    "derive_seed",
    "numeric_gradient",
    "ops",
    "relative_error",
    "sample_gaussian",
]
