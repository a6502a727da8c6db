"""
Precomputation for exact entry-wise access to the GNH.

For data point i and layer l the tensor

    C_i^L = R_i M_i^L,    C_i^{l-1} = C_i^l W_l M_i^{l-1}

(d_L x d_l, bias columns excluded from the propagation) turns every column
of R_i J_i into a scaled column of C:

    v_k(i) = R_i J_i e_k = C_i^tau[:, mu] * x_{i,nu}^{tau-1}

for weight k at (layer tau, row mu, col nu). An entry of the GNH is then
H_km = sum_i v_k(i)^T v_m(i), which costs O(n d_L) with Theta(nN) storage.
"""
import logging
import threading

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .network import Batch, ForwardTrace, LossCurvature, MlpNetwork, WeightLayout
from .util import DEFAULT_MEMORY_BUDGET, check_memory


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightIndex(object):
    """Flat 0-based weight index with its (layer, row, col) position"""

    flat: int
    layer: int
    row: int
    col: int

    @classmethod
    def from_flat(cls, layout: WeightLayout, k):
        layer, row, col = layout.position(int(k))
        return cls(int(k), layer, row, col)

    @classmethod
    def from_position(cls, layout: WeightLayout, layer, row, col):
        return cls(layout.flat(layer, row, col), layer, row, col)


class WorkCounter(object):
    """
    Thread-safe tally of arithmetic work, keyed by phase.

    Counted units are multiply-adds (entry evaluation, sampled terms) and
    visited data points (distribution builds).
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.counts = {}

    def add(self, phase, amount):
        with self._lock:
            self.counts[phase] = self.counts.get(phase, 0) + int(amount)

    def __getitem__(self, phase):
        return self.counts.get(phase, 0)

    def reset(self):
        with self._lock:
            self.counts = {}


def _record(counter, phase, amount):
    if counter is not None:
        counter.add(phase, amount)


class GnhPrecomp(object):
    """
    C tensors plus the retained layer inputs; the compressed form of R_i J_i.

    Attributes
    ----------
    c_tensors: List[np.ndarray]
        C^l for every layer, shape (n, d_L, d_l)
    activations: List[np.ndarray]
        Layer inputs x^{l-1} (homogeneous coordinate included), shape (n, cols_l)
    layout: WeightLayout
    """

    def __init__(self, c_tensors, activations, layout):
        self.c_tensors = list(c_tensors)
        self.activations = list(activations)
        self.layout = layout
        for array in self.c_tensors + self.activations:
            array.setflags(write=False)
        self._norms = [None] * len(self.c_tensors)
        self._lock = threading.Lock()

    @property
    def n(self):
        return self.c_tensors[0].shape[0]

    @property
    def output_dim(self):
        return self.c_tensors[0].shape[1]

    @property
    def size(self):
        return self.layout.size

    @property
    def dtype(self):
        return self.c_tensors[0].dtype

    @property
    def storage_count(self):
        """Stored numbers in the C tensors: sum_l n d_L d_l"""
        return int(sum(c.size for c in self.c_tensors))

    @property
    def nbytes(self):
        return int(sum(c.nbytes for c in self.c_tensors))

    def index(self, k):
        if isinstance(k, WeightIndex):
            return k
        return WeightIndex.from_flat(self.layout, k)

    def layer_norms(self, layer):
        """Column norms ||C_i^l[:, mu]||, shape (n, d_l), computed once"""
        if self._norms[layer] is None:
            with self._lock:
                if self._norms[layer] is None:
                    c = self.c_tensors[layer].astype(np.float64)
                    norms = np.sqrt(np.einsum("nij,nij->nj", c, c))
                    norms.setflags(write=False)
                    self._norms[layer] = norms
        return self._norms[layer]

    def v_columns(self, k):
        """All v_k(i) for one weight, shape (n, d_L)"""
        k = self.index(k)
        c = self.c_tensors[k.layer][:, :, k.row].astype(np.float64)
        return c * self.activations[k.layer][:, k.col][:, None]

    def v_block(self, indices):
        """v vectors for many weights, shape (len(indices), n, d_L)"""
        indices = np.asarray(indices, dtype=int)
        layers, rows, cols = self.layout.positions(indices)
        out = np.empty((len(indices), self.n, self.output_dim))
        for layer in np.unique(layers):
            sel = layers == layer
            c = self.c_tensors[layer][:, :, rows[sel]].astype(np.float64)
            x = self.activations[layer][:, cols[sel]]
            out[sel] = np.transpose(c * x[:, None, :], (2, 0, 1))
        return out


def precompute(
    net: MlpNetwork,
    batch: Batch,
    curv: LossCurvature,
    trace: ForwardTrace,
    dtype=np.float64,
    memory_budget=DEFAULT_MEMORY_BUDGET,
) -> GnhPrecomp:
    """
    Builds C_i^l for all i and l in O(d n N) multiply-adds.

    Parameters
    ----------
    dtype: numpy dtype
        Storage type of the C tensors. float32 halves the footprint;
        evaluation always accumulates in float64.
    memory_budget: Optional[int]
        Byte budget for the C tensors, checked before allocation

    Raises
    ------
    ResourceError
        If the C tensors would exceed `memory_budget`
    """
    batch.check(net)
    if trace.n != batch.n or curv.n != batch.n:
        raise ShapeError("Trace, curvature and batch disagree on the data size")
    n, d_out = batch.n, net.output_dim
    itemsize = np.dtype(dtype).itemsize
    needed = sum(n * d_out * d for d in net.layer_sizes[1:]) * itemsize
    check_memory(needed, memory_budget, "GNH precomputation")

    last = net.n_layers - 1
    tensors = [None] * net.n_layers
    # C^L = R M^L, M diagonal: scale the columns of R
    current = curv.apply_r(np.einsum("ni,ij->nij", trace.act_derivs[last], np.eye(d_out)))
    tensors[last] = current.astype(dtype)
    for l in range(last, 0, -1):
        current = (current @ net.propagating(l)) * trace.act_derivs[l - 1][:, None, :]
        tensors[l - 1] = current.astype(dtype)
    logger.info(
        "Precomputed C tensors for n=%d, N=%d (%d bytes)", n, net.size, needed
    )
    activations = [np.array(trace.activations[l]) for l in range(net.n_layers)]
    return GnhPrecomp(tensors, activations, net.layout)


def v_vector(pre: GnhPrecomp, k, i):
    """v_k(i) = R_i J_i e_k in O(d_L) work"""
    k = pre.index(k)
    if not 0 <= i < pre.n:
        raise ShapeError(f"Data index {i} out of range [0, {pre.n})")
    column = pre.c_tensors[k.layer][i, :, k.row].astype(np.float64)
    return column * pre.activations[k.layer][i, k.col]


def entry_exact(pre: GnhPrecomp, k, m, counter=None):
    """
    H_km = sum_i v_k(i)^T v_m(i) in O(d_L n) work.
    """
    vk = pre.v_columns(k)
    vm = vk if pre.index(k) == pre.index(m) else pre.v_columns(m)
    _record(counter, "entry", 3 * vk.size)
    return float(np.sum(vk * vm))


class NormTable(object):
    """
    ||v_k(i)|| = ||C_i^tau[:, mu]|| * |x_{i,nu}^{tau-1}|, formed on demand from
    per-layer column norms of C.
    """

    def __init__(self, pre: GnhPrecomp):
        self.pre = pre

    def norms(self, k):
        """||v_k(i)|| for all i, shape (n,)"""
        k = self.pre.index(k)
        return self.pre.layer_norms(k.layer)[:, k.row] * np.abs(
            self.pre.activations[k.layer][:, k.col]
        )

    def total_norm(self, k):
        """||v_k|| = (sum_i ||v_k(i)||^2)^{1/2}, which equals sqrt(H_kk)"""
        return float(np.sqrt(np.sum(self.norms(k) ** 2)))

    def squared_sums(self):
        """sum_i ||v_k(i)||^2 for every k, i.e. the GNH diagonal"""
        parts = []
        for layer in range(len(self.pre.c_tensors)):
            norms_sq = self.pre.layer_norms(layer) ** 2
            x_sq = self.pre.activations[layer] ** 2
            parts.append((norms_sq.T @ x_sq).reshape(-1, order="F"))
        return np.concatenate(parts)

    def dense(self):
        """The full (N, n) table; for small problems and tests"""
        return np.stack([self.norms(k) for k in range(self.pre.size)])


def column_norms(pre: GnhPrecomp) -> NormTable:
    return NormTable(pre)


def gnh_diagonal(pre: GnhPrecomp):
    """All N diagonal entries H_kk in O(nN) work"""
    return column_norms(pre).squared_sums()
