"""Nonparametric modern Hopfield retrieval.

Dense, sparse-structured, linear-kernel, positive-random-feature and
multi-head retrieval dynamics, closed-form retrieval guarantees, a layer
forward pass and a benchmark harness.
"""

__version__ = "0.1.0"

from .bounds import (
    bound_report,
    capacity_lower_bound,
    check_error_bound_dominates,
    dense_error_bound,
    lambert_w0,
    retrieval_error_bound,
    well_separation,
)
from .dynamics import (
    Dense,
    DynamicsConfig,
    Linear,
    MultiHead,
    Prf,
    RetrievalOutcome,
    Sparse,
    energy,
    retrieve,
    step,
    step_dense,
    step_linear,
    step_multihead,
    step_prf,
    step_sparse,
)
from .errors import FormatError, NPHError, ValidationError
from .kernels import PrfConfig, default_beta, lse, softmax
from .layers import LayerWeights, nph_forward
from .masks import SupportMask, mask_full, mask_random, mask_topk, mask_window
from .patterns import MemoryStore, geometry_stats, in_sphere

__all__ = [name for name in dir() if not name.startswith("_")]
