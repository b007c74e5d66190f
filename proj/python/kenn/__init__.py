"""W2 surrogate toolkit: exact optimal transport on pixel grids plus fast
learned distance models for pairwise-matrix pipelines."""

from kenn._core import (
    DataError,
    GridMeasure,
    GroundCost,
    InputError,
    Model,
    NumericError,
    __version__,
    assignment_oracle,
    exact_w2,
    exact_w2_with_plan,
    ground_cost,
    isomap_embed,
    load_checkpoint,
    make_model,
    normalize_image,
    pairwise_exact,
    save_checkpoint,
)

__all__ = [
    "DataError",
    "GridMeasure",
    "GroundCost",
    "InputError",
    "Model",
    "NumericError",
    "__version__",
    "assignment_oracle",
    "exact_w2",
    "exact_w2_with_plan",
    "ground_cost",
    "isomap_embed",
    "load_checkpoint",
    "make_model",
    "normalize_image",
    "pairwise_exact",
    "save_checkpoint",
]
