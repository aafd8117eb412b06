"""Sparse nonnegative CP factorization of (term x location x time) corpora.

The package turns a short-text corpus with location and time metadata into
a sparse count tensor, factorizes it under nonnegativity constraints with
cyclic coordinate descent (optionally with saturating selective updates),
and extracts mutually associated topic / spatial / temporal patterns. An
NMF-on-flattened-matrices baseline quantifies what the tensor coupling
buys.
"""

__version__ = "0.1.0"

from .tensor import (  # noqa: F401
    CPModel,
    SparseTensor3,
    build_coo,
    frobenius_sq,
    gram_hadamard,
    matricize_index,
    mttkrp,
    read_tensor,
    reconstruct_entry,
    residual_sq,
    write_tensor,
)
from .solver import (  # noqa: F401
    ActiveSet,
    SolverConfig,
    SolverTrace,
    ccd_sweep_mode,
    factorize,
    init_factors,
    objective,
    select_active,
)
from .nmf import (  # noqa: F401
    NMFModel,
    SparseMatrix,
    flatten_location,
    flatten_time,
    nmf_factorize,
)
from .patterns import (  # noqa: F401
    ComponentReport,
    association_loss_report,
    component_report,
    factor_match_score,
    normalize_components,
    top_terms,
)
from .synth import PlantedSpec, plant_corpus, plant_model  # noqa: F401
