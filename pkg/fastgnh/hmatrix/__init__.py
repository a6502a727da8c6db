from .oracle import DEFAULT_LAMBDA, EntryOracle, distance, distances_from
from .tree import IndexTree, TreeNode, build_tree
from .compress import (
    PRESETS,
    HMatrix,
    LowRankBlock,
    Preset,
    build_hmatrix,
    compress,
    hmat_matvec,
    probe_error,
    recount_storage,
    resolve_preset,
)
from .factor import HFactorization, factorize, solve
