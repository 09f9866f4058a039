"""Time-compressed dictionary learning for multi-record matrix data.

The pipeline: per-record low-rank time compression (reduction), online
sparse dictionary learning on the concatenation (dictlearn), and
permutation-invariant comparison of the resulting spatial map sets
(correspondence). synth generates controlled ground-truth data, bench
orchestrates the reference/tradeoff/stabilization protocols, and the
tcdl CLI binds everything together.
"""

from .data import Dataset, Decomposition, RecordMatrix, RngSpec, concatenate
from .errors import (
    DataError,
    DimensionError,
    FormatError,
    GenerationError,
    NumericalError,
    TcdlError,
    UsageError,
)
from .io import read_dataset, read_matrix, write_csv, write_dataset, write_matrix
from .reduction import (
    ReductionPlan,
    ReductionResult,
    reduce_dataset,
    reduce_exact_svd,
    reduce_range_finder,
    reduce_record,
    reduce_subsample,
)
from .correspondence import (
    MapSet,
    Matching,
    concat_map_sets,
    corr,
    d_l,
    match_maps,
    median_matched_pair,
)
from .dictlearn import (
    DLConfig,
    DLState,
    FitInfo,
    dictionary_update,
    factorization_objective,
    fit,
    fit_reduced,
    init_temporal_atoms,
    lasso_code,
    lasso_kkt_violation,
    surrogate_objective,
)
from .synth import GroundTruth, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Decomposition",
    "RecordMatrix",
    "RngSpec",
    "concatenate",
    "TcdlError",
    "UsageError",
    "DataError",
    "DimensionError",
    "FormatError",
    "NumericalError",
    "GenerationError",
    "read_dataset",
    "write_dataset",
    "read_matrix",
    "write_matrix",
    "write_csv",
    "ReductionPlan",
    "ReductionResult",
    "reduce_exact_svd",
    "reduce_range_finder",
    "reduce_subsample",
    "reduce_record",
    "reduce_dataset",
    "MapSet",
    "Matching",
    "corr",
    "match_maps",
    "concat_map_sets",
    "d_l",
    "median_matched_pair",
    "DLConfig",
    "DLState",
    "FitInfo",
    "init_temporal_atoms",
    "lasso_code",
    "lasso_kkt_violation",
    "dictionary_update",
    "surrogate_objective",
    "factorization_objective",
    "fit",
    "fit_reduced",
    "SynthConfig",
    "GroundTruth",
    "generate",
    "__version__",
]
