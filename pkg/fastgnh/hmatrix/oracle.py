"""
Entry-wise access to the regularized GNH H + lam I.

Compression only ever asks for sub-blocks H[rows, cols]; an EntryOracle
answers those either exactly from the C tensors, by Monte Carlo estimation,
or from an explicit matrix (tests and constructed examples).
"""
import logging
import threading

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..exceptions import ConfigError
from ..precompute import GnhPrecomp, column_norms, gnh_diagonal
from ..sampling import EstimatorConfig, entry_estimate


logger = logging.getLogger(__name__)

# lam^2 is roughly the double precision unit roundoff
DEFAULT_LAMBDA = 2.0 ** -26

BLOCK_CHUNK = 256
METRICS = ("angle", "euclidean")


class EntryOracle(object):
    """
    Symmetric entry access with `lam` added on the diagonal.

    Parameters
    ----------
    size: int
        Matrix dimension N
    block_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
        Returns the unregularized block for two index arrays
    diagonal: np.ndarray
        The unregularized diagonal
    lam: float
    mode: str
        "exact", "sampled" or "dense"
    """

    def __init__(self, size, block_fn, diagonal, lam=DEFAULT_LAMBDA, mode="exact"):
        if lam < 0:
            raise ConfigError(f"Regularization must be non-negative, got {lam}")
        self.size = int(size)
        self.lam = float(lam)
        self.mode = mode
        self._block_fn = block_fn
        diagonal = np.asarray(diagonal, dtype=float) + self.lam
        diagonal.setflags(write=False)
        self._diagonal = diagonal
        self._lock = threading.Lock()
        self.evaluations = 0

    def __repr__(self):
        return f"EntryOracle(N={self.size}, mode='{self.mode}', lam={self.lam:g})"

    @classmethod
    def exact(cls, pre: GnhPrecomp, lam=DEFAULT_LAMBDA):
        """Entries from entry_exact, evaluated block-wise as v-vector inner products"""

        def block_fn(rows, cols):
            out = np.empty((len(rows), len(cols)))
            for c0 in range(0, len(cols), BLOCK_CHUNK):
                vc = pre.v_block(cols[c0 : c0 + BLOCK_CHUNK]).reshape(
                    -1, pre.n * pre.output_dim
                )
                for r0 in range(0, len(rows), BLOCK_CHUNK):
                    vr = pre.v_block(rows[r0 : r0 + BLOCK_CHUNK]).reshape(
                        -1, pre.n * pre.output_dim
                    )
                    out[r0 : r0 + BLOCK_CHUNK, c0 : c0 + BLOCK_CHUNK] = vr @ vc.T
            return out

        return cls(pre.size, block_fn, gnh_diagonal(pre), lam, "exact")

    @classmethod
    def sampled(cls, pre: GnhPrecomp, cfg: EstimatorConfig, lam=DEFAULT_LAMBDA, threads=1):
        """
        Off-diagonal entries from entry_estimate. Every unordered pair is
        evaluated as (min, max), so the oracle stays symmetric.
        """
        norms = column_norms(pre)

        def estimate_row(k, cols):
            return [
                entry_estimate(pre, min(k, m), max(k, m), cfg, norms=norms).value
                for m in cols
            ]

        def block_fn(rows, cols):
            cols = [int(m) for m in cols]
            with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
                values = list(pool.map(lambda k: estimate_row(int(k), cols), rows))
            return np.array(values, dtype=float).reshape(len(rows), len(cols))

        return cls(pre.size, block_fn, gnh_diagonal(pre), lam, "sampled")

    @classmethod
    def from_dense(cls, matrix, lam=0.0):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigError(f"Expected a square matrix, got shape {matrix.shape}")
        matrix.setflags(write=False)

        def block_fn(rows, cols):
            return matrix[np.ix_(rows, cols)]

        return cls(matrix.shape[0], block_fn, np.diag(matrix), lam, "dense")

    def diagonal(self):
        """Regularized diagonal H_kk + lam"""
        return self._diagonal

    def block(self, rows, cols):
        """H[rows, cols] + lam on coinciding indices"""
        rows = np.asarray(rows, dtype=int).reshape(-1)
        cols = np.asarray(cols, dtype=int).reshape(-1)
        with self._lock:
            self.evaluations += len(rows) * len(cols)
        out = np.array(self._block_fn(rows, cols), dtype=float)
        if self.lam:
            out += self.lam * (rows[:, None] == cols[None, :])
        return out

    def entry(self, i, j):
        return float(self.block([i], [j])[0, 0])


def distances_from(oracle: EntryOracle, i, indices, metric="angle"):
    """
    Distances between index i and every index in `indices`.

    angle: 1 - H_ij^2 / (H_ii H_jj), clipped to [0, 1]
    euclidean: sqrt(H_ii - 2 H_ij + H_jj), the Gram distance of columns
    """
    if metric not in METRICS:
        raise ConfigError(f"Unknown distance '{metric}'. Choose from {', '.join(METRICS)}")
    indices = np.asarray(indices, dtype=int)
    h_ij = oracle.block([i], indices)[0]
    diag = oracle.diagonal()
    h_ii, h_jj = diag[i], diag[indices]
    if metric == "angle":
        denom = h_ii * h_jj
        with np.errstate(divide="ignore", invalid="ignore"):
            cos_sq = np.where(denom > 0, h_ij ** 2 / denom, 0.0)
        dist = np.clip(1.0 - cos_sq, 0.0, 1.0)
    else:
        dist = np.sqrt(np.clip(h_ii - 2.0 * h_ij + h_jj, 0.0, None))
    # self-distance is zero for both metrics, also under sampling noise
    dist[indices == i] = 0.0
    return dist


def distance(oracle: EntryOracle, i, j, metric="angle"):
    return float(distances_from(oracle, i, [j], metric)[0])
