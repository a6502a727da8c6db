"""
Weak-admissibility (HODLR) compression.

Every leaf keeps its dense diagonal block. Every internal node keeps a
low-rank factorization U V^T of the block coupling its left child (rows)
to its right child (columns); the opposite block is the mirror V U^T, so
the represented operator is symmetric by construction.

Off-diagonal blocks are compressed from entries only: a random subset of
columns spans the range, its truncated SVD fixes the rank, and a pivoted
QR of the basis picks skeleton rows I, giving U = Q (Q[I])^-1 and
V^T = A[I, :].
"""
import logging
import time

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..exceptions import ConfigError, ShapeError
from ..operators import ApproximateOperator
from ..util import rng_stream
from .oracle import EntryOracle
from .tree import IndexTree


logger = logging.getLogger(__name__)

OVERSAMPLE = 10


@dataclass(frozen=True)
class Preset(object):
    name: str
    leaf_size: int
    max_rank: int
    tol: float

    def scaled(self, size):
        """
        Shrinks leaf size and rank cap proportionally when N < 4 m; the
        tolerance never changes.
        """
        if size >= 4 * self.leaf_size:
            return self
        factor = size / (4.0 * self.leaf_size)
        return Preset(
            self.name,
            max(2, int(round(self.leaf_size * factor))),
            max(1, int(round(self.max_rank * factor))),
            self.tol,
        )


PRESETS = {
    "low": Preset("low", 128, 128, 5e-2),
    "high": Preset("high", 1024, 1024, 1e-5),
}


def resolve_preset(name, size, leaf_size=None, max_rank=None, tol=None):
    """
    A preset scaled to N, or a "custom" one when all three controls are
    given. Explicit controls override the named preset.
    """
    if name == "custom" or name is None:
        if None in (leaf_size, max_rank, tol):
            raise ConfigError("A custom preset needs leaf_size, max_rank and tol")
        return Preset("custom", int(leaf_size), int(max_rank), float(tol))
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}'. Choose from low, high, custom")
    preset = PRESETS[name].scaled(size)
    return Preset(
        preset.name,
        preset.leaf_size if leaf_size is None else int(leaf_size),
        preset.max_rank if max_rank is None else int(max_rank),
        preset.tol if tol is None else float(tol),
    )


@dataclass(frozen=True)
class LowRankBlock(object):
    """A[left, right] ~= u @ vt"""

    u: np.ndarray
    vt: np.ndarray
    capped: bool = False

    @property
    def rank(self):
        return self.u.shape[1]


class HMatrix(ApproximateOperator):
    """
    Attributes
    ----------
    tree: IndexTree
    leaf_blocks: Dict[int, np.ndarray]
        Dense symmetric diagonal block per leaf node id
    offdiag: Dict[int, LowRankBlock]
        Upper coupling block per internal node id
    lam: float
    settings: dict
        leaf_size, max_rank, tol, preset, seed and oracle mode
    timings: dict
        Seconds spent building the tree and compressing
    """

    name = "hmatrix"

    def __init__(self, tree: IndexTree, leaf_blocks, offdiag, lam, settings=None, timings=None):
        self.tree = tree
        self.leaf_blocks = dict(leaf_blocks)
        self.offdiag = dict(offdiag)
        self.lam = float(lam)
        self.settings = dict(settings or {})
        self.timings = dict(timings or {})
        self._factorization = None

    def __repr__(self):
        return (
            f"HMatrix(N={self.size}, leaves={len(self.leaf_blocks)}, "
            f"%K={100 * self.compression_rate:.2f})"
        )

    @property
    def size(self):
        return self.tree.size

    @property
    def ranks(self):
        return {node_id: block.rank for node_id, block in self.offdiag.items()}

    @property
    def stored_entries(self):
        """sum over leaves of size^2 plus sum over nodes of rank (rows + cols)"""
        total = sum(block.size for block in self.leaf_blocks.values())
        for node_id, block in self.offdiag.items():
            total += block.u.size + block.vt.size
        return int(total)

    def level_ranks(self):
        levels = {}
        for node_id, block in sorted(self.offdiag.items()):
            levels.setdefault(self.tree.nodes[node_id].level, []).append(block.rank)
        return [levels[level] for level in sorted(levels)]

    def stats(self):
        ranks = list(self.ranks.values())
        return {
            "N": self.size,
            "stored_entries": self.stored_entries,
            "compression_rate": self.compression_rate,
            "percent_k": 100.0 * self.compression_rate,
            "leaves": len(self.leaf_blocks),
            "depth": self.tree.depth,
            "max_rank_used": max(ranks) if ranks else 0,
            "rank_cap_hits": sum(1 for b in self.offdiag.values() if b.capped),
            "level_ranks": self.level_ranks(),
            "lam": self.lam,
            **self.settings,
            **{f"t_{key}": value for key, value in self.timings.items()},
        }

    def matvec(self, x):
        return hmat_matvec(self, x)

    def to_dense(self):
        """The represented operator in original index order"""
        return hmat_matvec(self, np.eye(self.size))

    def factorize(self):
        from .factor import factorize

        if self._factorization is None:
            self._factorization = factorize(self)
        return self._factorization

    def solve(self, b):
        return self.factorize().solve(b)


def _interpolative(oracle, rows, cols, max_rank, tol, rng, oversample):
    """Low-rank block for A = H[rows, cols] from sampled columns"""
    if max_rank < 1 or len(rows) == 0 or len(cols) == 0:
        return LowRankBlock(np.zeros((len(rows), 0)), np.zeros((0, len(cols))))
    count = min(max_rank + oversample, len(cols))
    picked = np.sort(rng.choice(len(cols), size=count, replace=False))
    sample = oracle.block(rows, cols[picked])
    basis, sigma, _ = np.linalg.svd(sample, full_matrices=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return LowRankBlock(np.zeros((len(rows), 0)), np.zeros((0, len(cols))))
    cutoff = max(tol, np.finfo(float).eps) * sigma[0]
    numerical = int(np.sum(sigma > cutoff))
    rank = min(numerical, max_rank, len(rows))
    basis = basis[:, :rank]
    _, _, pivots = scipy.linalg.qr(basis.T, mode="economic", pivoting=True)
    skeleton = np.sort(pivots[:rank])
    u = scipy.linalg.solve(basis[skeleton].T, basis.T).T
    vt = oracle.block(rows[skeleton], cols)
    return LowRankBlock(u, vt, numerical > max_rank)


def compress(
    oracle: EntryOracle,
    tree: IndexTree,
    max_rank,
    tol,
    seed,
    oversample=OVERSAMPLE,
    threads=1,
    preset="custom",
) -> HMatrix:
    """
    Builds the H-matrix of the oracle's regularized matrix on `tree`.

    Parameters
    ----------
    max_rank: int
        Rank cap r_o of every off-diagonal block; reaching it is recorded in
        the stats, not raised
    tol: float
        Relative singular value cutoff
    seed: int
        Column sampling for node j uses the stream keyed by (seed, j)
    threads: int
        Workers for independent blocks
    """
    if tree.size != oracle.size:
        raise ShapeError(f"Tree covers {tree.size} indices but the oracle has {oracle.size}")
    if tol < 0:
        raise ConfigError(f"Tolerance must be non-negative, got {tol}")
    start = time.perf_counter()

    def leaf(node):
        idx = tree.indices(node)
        block = oracle.block(idx, idx)
        return node.node_id, 0.5 * (block + block.T)

    def coupling(node):
        left, right = tree.children_of(node)
        rng = rng_stream(seed, node.node_id)
        block = _interpolative(
            oracle, tree.indices(left), tree.indices(right), max_rank, tol, rng, oversample
        )
        logger.debug("Node %d: rank %d", node.node_id, block.rank)
        return node.node_id, block

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        leaves = dict(pool.map(leaf, tree.leaves))
        offdiag = dict(pool.map(coupling, tree.internal))
    elapsed = time.perf_counter() - start

    settings = {
        "leaf_size": tree.leaf_size,
        "max_rank": int(max_rank),
        "tol": float(tol),
        "preset": preset,
        "seed": int(seed),
        "oracle": oracle.mode,
    }
    hm = HMatrix(tree, leaves, offdiag, oracle.lam, settings, {"compress": elapsed})
    logger.info("Compressed N=%d to %.2f%%K in %.3fs", hm.size, 100 * hm.compression_rate, elapsed)
    return hm


def build_hmatrix(oracle: EntryOracle, preset: Preset, seed, metric="angle", threads=1):
    """Tree construction plus compression with timing of both phases"""
    from .tree import build_tree

    start = time.perf_counter()
    tree = build_tree(oracle, preset.leaf_size, seed, metric)
    tree_seconds = time.perf_counter() - start
    hm = compress(oracle, tree, preset.max_rank, preset.tol, seed, threads=threads, preset=preset.name)
    hm.timings["tree"] = tree_seconds
    return hm


def hmat_matvec(hm: HMatrix, x):
    """
    Applies the represented operator to a vector (N,) or a block (N, p).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != hm.size or x.ndim > 2:
        raise ShapeError(f"Expected {hm.size} rows, got shape {x.shape}")
    tree = hm.tree
    xp = x[tree.permutation]
    yp = np.zeros_like(xp)
    for node in tree.nodes:
        if node.is_leaf:
            yp[node.start : node.stop] += hm.leaf_blocks[node.node_id] @ xp[node.start : node.stop]
            continue
        block = hm.offdiag[node.node_id]
        if block.rank == 0:
            continue
        left, right = tree.children_of(node)
        lo, hi = slice(left.start, left.stop), slice(right.start, right.stop)
        yp[lo] += block.u @ (block.vt @ xp[hi])
        yp[hi] += block.vt.T @ (block.u.T @ xp[lo])
    y = np.empty_like(yp)
    y[tree.permutation] = yp
    return y


def probe_error(hm, reference_matvec, probes=128, seed=0):
    """
    ||H x - H~ x||_F / ||H x||_F for a Gaussian block x of `probes` columns.

    `hm` is anything with a `matvec`; `reference_matvec` applies the matrix
    being approximated to an (N, probes) block.
    """
    x = rng_stream(seed).standard_normal((hm.size, probes))
    reference = np.asarray(reference_matvec(x))
    denom = np.linalg.norm(reference)
    if denom == 0.0:
        return float(np.linalg.norm(hm.matvec(x)))
    return float(np.linalg.norm(reference - hm.matvec(x)) / denom)


def recount_storage(hm: HMatrix):
    """Independent stored-entry count from the tree ranges and ranks"""
    total = 0
    for node in hm.tree.nodes:
        if node.is_leaf:
            total += node.size ** 2
        else:
            left, right = hm.tree.children_of(node)
            total += hm.offdiag[node.node_id].rank * (left.size + right.size)
    return total
