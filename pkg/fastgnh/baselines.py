"""
Reference approximations of the GNH: randomized SVD through matvecs and the
block-diagonal Kronecker-factored (K-FAC) Fisher approximation.
"""
import logging

from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.linalg

from scipy.special import softmax

from .backprop import forward
from .exceptions import CapabilityError, ConfigError, DefinitenessError
from .network import Batch, MlpNetwork, WeightLayout
from .operators import ApproximateOperator
from .util import rng_stream


logger = logging.getLogger(__name__)

KFAC_CHUNK = 256


class RsvdApprox(ApproximateOperator):
    """
    H + lam I ~= Z diag(eigenvalues) Z^T + lam I with orthonormal Z (N x r).
    """

    name = "rsvd"

    def __init__(self, basis, eigenvalues, lam=0.0):
        self.basis = np.asarray(basis, dtype=float)
        self.eigenvalues = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
        self.lam = float(lam)

    @property
    def size(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    @property
    def stored_entries(self):
        return int(self.basis.size + self.eigenvalues.size)

    def to_dense(self):
        return (self.basis * self.eigenvalues) @ self.basis.T + self.lam * np.eye(self.size)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        projected = self.basis.T @ x
        scaled = projected * (self.eigenvalues[:, None] if x.ndim == 2 else self.eigenvalues)
        return self.basis @ scaled + self.lam * x

    def solve(self, b):
        """Woodbury: (lam I + Z L Z^T)^-1 = (I - Z diag(L / (lam + L)) Z^T) / lam"""
        if self.lam <= 0.0:
            raise DefinitenessError("A low-rank approximation needs lam > 0 to be solved")
        b = np.asarray(b, dtype=float)
        weights = self.eigenvalues / (self.lam + self.eigenvalues)
        projected = self.basis.T @ b
        projected = projected * (weights[:, None] if b.ndim == 2 else weights)
        return (b - self.basis @ projected) / self.lam


def rsvd(matvec, size, rank, oversample=10, power_iterations=1, seed=0, lam=0.0) -> RsvdApprox:
    """
    Randomized range finder on a symmetric PSD operator.

    Gaussian probes are pushed through `matvec`, refined by
    `power_iterations` subspace iterations and orthogonalized; the projected
    matrix Q^T H Q is eigendecomposed and its top `rank` pairs kept.

    Parameters
    ----------
    matvec: Callable[[np.ndarray], np.ndarray]
        Applies H (without lam) to an (N, p) block
    oversample: int
        Extra probes, clipped so that rank + oversample <= N
    """
    if not 1 <= rank <= size:
        raise ConfigError(f"RSVD rank must lie in [1, {size}], got {rank}")
    probes = rank + max(0, min(oversample, size - rank))
    omega = rng_stream(seed).standard_normal((size, probes))
    sketch = np.asarray(matvec(omega))
    for _ in range(power_iterations):
        basis, _ = np.linalg.qr(sketch)
        sketch = np.asarray(matvec(basis))
    basis, _ = np.linalg.qr(sketch)
    projected = basis.T @ np.asarray(matvec(basis))
    projected = 0.5 * (projected + projected.T)
    eigenvalues, eigenvectors = np.linalg.eigh(projected)
    order = np.argsort(eigenvalues)[::-1][:rank]
    logger.debug("RSVD with rank %d from %d probes", rank, probes)
    return RsvdApprox(basis @ eigenvectors[:, order], eigenvalues[order], lam)


class KfacApprox(ApproximateOperator):
    """
    Block-diagonal Fisher approximation with layer blocks A_l (x) G_l.

    This is the G_l (x) A_l block of row-major vec written for the
    column-major weight layout, where block l acts on a layer matrix X as
    X -> G_l X A_l.

    Attributes
    ----------
    a_factors: List[np.ndarray]
        E[x^{l-1} x^{l-1}^T], homogeneous coordinate included
    g_factors: List[np.ndarray]
        E[(M^l z^l)(M^l z^l)^T]
    samples: int
        Labels drawn per data point (0 for the exact expectation)
    """

    name = "kfac"

    def __init__(self, a_factors, g_factors, layout: WeightLayout, samples, lam=0.0):
        self.a_factors = list(a_factors)
        self.g_factors = list(g_factors)
        self.layout = layout
        self.samples = int(samples)
        self.lam = float(lam)

    @property
    def size(self):
        return self.layout.size

    @property
    def stored_entries(self):
        return int(sum(a.size + g.size for a, g in zip(self.a_factors, self.g_factors)))

    def block(self, l):
        """Dense Fisher block of layer l under the column-major layout"""
        return np.kron(self.a_factors[l], self.g_factors[l])

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        blocks = []
        for a, g, w in zip(self.a_factors, self.g_factors, self.layout.split(x)):
            blocks.append(np.einsum("rs,sc...,ct->rt...", g, w, a))
        return self.layout.join(blocks) + self.lam * x

    def solve(self, b):
        return kfac_solve(self, b, self.lam)


def _predictive_adjoints(net, out, rng, samples):
    """z^L for sampled labels, shape (n, samples, d_L)"""
    if net.loss == "mean-squared":
        # y ~ N(x^L, I) so x^L - y is standard normal
        return -rng.standard_normal((out.shape[0], samples, out.shape[1]))
    if net.loss == "cross-entropy":
        p = softmax(out, axis=1)
        cumulative = np.cumsum(p, axis=1)
        cumulative /= cumulative[:, -1:]
        u = rng.random((out.shape[0], samples))
        classes = np.minimum((u[:, :, None] > cumulative[:, None, :]).sum(axis=2), out.shape[1] - 1)
        return p[:, None, :] - np.eye(out.shape[1])[classes]
    raise CapabilityError(f"K-FAC has no predictive distribution for loss '{net.loss}'")


def _expected_adjoints(net, out):
    """Columns of the symmetric square root of Cov[z^L], shape (n, d_L, d_L)"""
    n, dim = out.shape
    if net.loss == "mean-squared":
        return np.broadcast_to(np.eye(dim), (n, dim, dim))
    if net.loss == "cross-entropy":
        p = softmax(out, axis=1)
        cov = np.einsum("ni,ij->nij", p, np.eye(dim)) - np.einsum("ni,nj->nij", p, p)
        eigvals, eigvecs = np.linalg.eigh(cov)
        roots = np.sqrt(np.clip(eigvals, 0.0, None))
        # rows index the samples
        return np.einsum("nik,nk,njk->nji", eigvecs, roots, eigvecs)
    raise CapabilityError(f"K-FAC has no predictive distribution for loss '{net.loss}'")


def kfac_build(net: MlpNetwork, batch: Batch, samples, seed, exact=False) -> KfacApprox:
    """
    Accumulates the K-FAC factors over the batch.

    For every data point, `samples` labels are drawn from the model's
    predictive distribution (unit Gaussian at the output for mean-squared
    loss, categorical over the softmax for cross-entropy) and the adjoints
    are back-propagated. With `exact=True` the label expectation is taken in
    closed form instead.

    Raises
    ------
    CapabilityError
        If the loss has no predictive distribution
    """
    if not exact and samples < 1:
        raise ConfigError(f"K-FAC needs at least one sample per data point, got {samples}")
    trace = forward(net, batch)
    rng = rng_stream(seed)
    a_factors = [x.T @ x / batch.n for x in trace.activations[:-1]]
    g_factors = [np.zeros((d, d)) for d in net.layer_sizes[1:]]
    weight = 0
    for start in range(0, batch.n, KFAC_CHUNK):
        rows = slice(start, start + KFAC_CHUNK)
        out = trace.outputs[rows]
        if exact:
            z = _expected_adjoints(net, out)
        else:
            z = _predictive_adjoints(net, out, rng, samples)
        for l in reversed(range(net.n_layers)):
            delta = trace.act_derivs[l][rows][:, None, :] * z
            g_factors[l] += np.einsum("nkr,nks->rs", delta, delta)
            if l > 0:
                z = delta @ net.propagating(l)
        weight += out.shape[0] * (1 if exact else samples)
    # the exact expectation sums over covariance columns instead of averaging draws
    scale = batch.n if exact else weight
    g_factors = [g / scale for g in g_factors]
    logger.info("Built K-FAC factors for %d layers (%s)", net.n_layers, "exact" if exact else f"k={samples}")
    return KfacApprox(a_factors, g_factors, net.layout, 0 if exact else samples)


def _damped_cholesky(factor, damping, what):
    damped = factor + damping * np.eye(factor.shape[0])
    try:
        return scipy.linalg.cho_factor(damped, lower=True)
    except np.linalg.LinAlgError:
        raise DefinitenessError(
            f"K-FAC factor {what} is singular; use a positive regularization"
        )


def kfac_solve(approx: KfacApprox, g, lam):
    """
    Per layer X_l = (G_l + sqrt(lam) I)^-1 Gbar_l (A_l + sqrt(lam) I)^-1 where
    Gbar_l is layer l of `g` in matrix form.
    """
    if lam < 0:
        raise ConfigError(f"Regularization must be non-negative, got {lam}")
    damping = float(np.sqrt(lam))
    blocks = []
    for l, (a, gf, gbar) in enumerate(
        zip(approx.a_factors, approx.g_factors, approx.layout.split(g))
    ):
        left = _damped_cholesky(gf, damping, f"G_{l}")
        right = _damped_cholesky(a, damping, f"A_{l}")
        x = scipy.linalg.cho_solve(left, gbar.reshape(gbar.shape[0], -1))
        x = x.reshape(gbar.shape)
        # right multiplication by the symmetric inverse of A
        moved = np.moveaxis(x, 1, 0)
        solved = scipy.linalg.cho_solve(right, moved.reshape(moved.shape[0], -1))
        blocks.append(np.moveaxis(solved.reshape(moved.shape), 0, 1))
    return approx.layout.join(blocks)


@dataclass(frozen=True)
class MatchedBudget(object):
    """RSVD rank and K-FAC sample count matched to an H-matrix %K"""

    rank: int
    samples: int
    target_rate: float


def matched_budget(compression_rate, size):
    """
    Smallest rank r with r / N slightly above the target compression rate;
    K-FAC uses k = r samples (the same number of back-propagations).
    """
    rank = int(min(size, np.floor(compression_rate * size) + 1))
    return MatchedBudget(rank, rank, float(compression_rate))
