"""
Forward pass, loss curvature, back-propagated gradient and the matrix-free
Gauss-Newton Hessian (GNH) matvec.

All passes are vectorized over the n data points of a batch. The gradient
and the matvec share the same backward recurrence

    z^{l-1} = W_l^T M^l z^l,    g^l = sum_i (M^l_i z^l_i)(x^{l-1}_i)^T

and differ only in the adjoint seeded at the output layer.
"""
import logging

import numpy as np

from scipy.special import logsumexp, softmax

from .exceptions import NumericError, ShapeError, SizeError
from .network import (
    Batch,
    ForwardTrace,
    GradientVector,
    LossCurvature,
    MatvecWorkspace,
    MlpNetwork,
    activation_deriv,
    activation_value,
)


logger = logging.getLogger(__name__)

DENSE_ORACLE_LIMIT = 20000
MATVEC_CHUNK = 64


def _freeze(array):
    array.setflags(write=False)
    return array


def forward(net: MlpNetwork, batch: Batch) -> ForwardTrace:
    """
    Runs x^l = s(W_l x^{l-1}) for every layer and records M^l = s'(W_l x^{l-1}).

    Raises
    ------
    ShapeError
        If the batch does not match the network dimensions
    """
    batch.check(net)
    x = net.augment(batch.inputs)
    activations = [_freeze(np.array(x))]
    derivs = []
    last = net.n_layers - 1
    for l, (w, kind) in enumerate(zip(net.weights, net.activations)):
        pre = x @ w.T
        out = activation_value(kind, pre)
        derivs.append(_freeze(activation_deriv(kind, pre)))
        x = out if l == last else net.augment(out)
        activations.append(_freeze(x))
    return ForwardTrace(activations, derivs)


def _check_finite(trace):
    if not np.all(np.isfinite(trace.outputs)):
        raise NumericError("The network output contains non-finite values")


def loss_value(net: MlpNetwork, batch: Batch, trace: ForwardTrace = None) -> float:
    """F(w) = (1/n) sum_i f(x^L_i, y_i)"""
    trace = trace or forward(net, batch)
    _check_finite(trace)
    out, labels = trace.outputs, batch.labels
    if net.loss == "mean-squared":
        per_point = 0.5 * np.sum((out - labels) ** 2, axis=1)
    else:
        per_point = labels.sum(axis=1) * logsumexp(out, axis=1) - np.sum(
            labels * out, axis=1
        )
    return float(np.mean(per_point))


def output_adjoint(net: MlpNetwork, batch: Batch, trace: ForwardTrace):
    """z^L_i = df/dx at x^L_i, shape (n, d_L)"""
    out, labels = trace.outputs, batch.labels
    if net.loss == "mean-squared":
        return out - labels
    return labels.sum(axis=1, keepdims=True) * softmax(out, axis=1) - labels


def loss_curvature(net: MlpNetwork, trace: ForwardTrace, batch: Batch) -> LossCurvature:
    """
    Q_i = (1/n) d^2 f / dx^2 at the network output and symmetric factors R_i.

    Mean-squared loss gives Q_i = I / n. Cross-entropy (softmax at the
    output) gives Q_i = (1/n)(diag(p_i) - p_i p_i^T); its factor is the
    symmetric square root taken from an eigendecomposition with negative
    eigenvalues clamped to zero.
    """
    _check_finite(trace)
    n, dim = trace.outputs.shape
    if net.loss == "mean-squared":
        return LossCurvature(n, dim, scale=1.0 / n)

    p = softmax(trace.outputs, axis=1)
    mass = batch.labels.sum(axis=1)[:, None, None]
    q = mass * (np.einsum("ni,ij->nij", p, np.eye(dim)) - np.einsum("ni,nj->nij", p, p))
    q /= n
    eigvals, eigvecs = np.linalg.eigh(q)
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    r = np.einsum("nik,nk,njk->nij", eigvecs, roots, eigvecs)
    return LossCurvature(n, dim, r_factors=_freeze(r), q_blocks=_freeze(q))


def gradient(net: MlpNetwork, batch: Batch, trace: ForwardTrace = None) -> GradientVector:
    """
    Gradient of F(w) = (1/n) sum_i f by back-propagation.
    """
    trace = trace or forward(net, batch)
    _check_finite(trace)
    z = output_adjoint(net, batch, trace) / trace.n
    blocks = [None] * net.n_layers
    for l in reversed(range(net.n_layers)):
        delta = trace.act_derivs[l] * z
        blocks[l] = delta.T @ trace.activations[l]
        if l > 0:
            z = delta @ net.propagating(l)
    return GradientVector(blocks, net.layout)


def _matvec_block(net, trace, curv, blocks):
    """Matvec for per-layer direction blocks of shape (rows, cols, p)"""
    linearized = []
    xh = None
    for l in range(net.n_layers):
        lin = np.einsum("rcp,nc->pnr", blocks[l], trace.activations[l])
        if xh is not None:
            lin += xh @ net.propagating(l).T
        xh = trace.act_derivs[l] * lin
        linearized.append(xh)

    zh = curv.apply_q(xh)
    adjoints = [None] * net.n_layers
    out = [None] * net.n_layers
    for l in reversed(range(net.n_layers)):
        adjoints[l] = zh
        delta = trace.act_derivs[l] * zh
        out[l] = np.einsum("pnr,nc->rcp", delta, trace.activations[l])
        if l > 0:
            zh = delta @ net.propagating(l)
    return MatvecWorkspace(linearized, adjoints, out)


def gnh_matvec(
    net: MlpNetwork,
    trace: ForwardTrace,
    curv: LossCurvature,
    w_hat,
    return_workspace=False,
):
    """
    H w_hat = J^T Q J w_hat without forming H.

    Parameters
    ----------
    net: MlpNetwork
    trace: ForwardTrace
        Forward pass on the batch `curv` was computed on
    curv: LossCurvature
    w_hat: np.ndarray
        A weight vector (N,) or a block of weight vectors (N, p)
    return_workspace: bool
        Also return the MatvecWorkspace (single vectors only)

    Returns
    -------
    np.ndarray
        Same shape as `w_hat`

    Raises
    ------
    ShapeError
        If a workspace is requested for a block of vectors
    """
    w_hat = np.asarray(w_hat, dtype=float)
    single = w_hat.ndim == 1
    if return_workspace and not single:
        raise ShapeError(f"A workspace is only kept for a single vector, got shape {w_hat.shape}")
    columns = w_hat[:, None] if single else w_hat
    split = net.layout.split(columns)

    results = []
    workspace = None
    for start in range(0, columns.shape[1], MATVEC_CHUNK):
        chunk = [b[..., start : start + MATVEC_CHUNK] for b in split]
        workspace = _matvec_block(net, trace, curv, chunk)
        results.append(net.layout.join(workspace.blocks))
    result = np.concatenate(results, axis=1) if results else np.zeros_like(columns)
    if single:
        result = result[:, 0]
    if return_workspace:
        return result, MatvecWorkspace(
            [x[0] for x in workspace.linearized],
            [z[0] for z in workspace.adjoints],
            [b[..., 0] for b in workspace.blocks],
            result,
        )
    return result


def dense_gnh_oracle(net: MlpNetwork, batch: Batch, max_params=DENSE_ORACLE_LIMIT):
    """
    Materializes H column by column through `gnh_matvec` on canonical basis
    vectors. Intended as a test oracle.

    Raises
    ------
    SizeError
        If N exceeds `max_params`
    """
    if max_params is not None and net.size > max_params:
        raise SizeError(
            f"Refusing to materialize a {net.size} x {net.size} GNH (limit "
            f"{max_params} parameters)"
        )
    trace = forward(net, batch)
    curv = loss_curvature(net, trace, batch)
    logger.debug("Assembling dense GNH with N=%d, n=%d", net.size, batch.n)
    size = net.size
    dense = np.empty((size, size))
    for start in range(0, size, 4 * MATVEC_CHUNK):
        stop = min(size, start + 4 * MATVEC_CHUNK)
        basis = np.zeros((size, stop - start))
        basis[np.arange(start, stop), np.arange(stop - start)] = 1.0
        dense[:, start:stop] = gnh_matvec(net, trace, curv, basis)
    return dense
