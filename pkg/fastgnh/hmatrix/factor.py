"""
Recursive Woodbury factorization of an HMatrix.

At an internal node with children l and r

    A = blockdiag(A_l, A_r) + Z S Z^T,   Z = blockdiag(U, V),   S = [[0, I], [I, 0]]

so with D = blockdiag(A_l, A_r)

    A^-1 = D^-1 - (D^-1 Z) K^-1 (D^-1 Z)^T,   K = S + Z^T D^-1 Z.

Leaves are Cholesky factorized; every node stores D^-1 Z (N x 2k) and the
LU factors of the 2k x 2k core K. A solve visits each node once.
"""
import logging

from dataclasses import dataclass
from typing import Dict

import numpy as np
import scipy.linalg

from ..exceptions import DefinitenessError, ShapeError
from .compress import HMatrix


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NodeFactor(object):
    """D^-1 Z for the node range and the LU factors of its core"""

    correction: np.ndarray
    core: tuple
    rank: int


class HFactorization(object):
    """
    Attributes
    ----------
    hm: HMatrix
    leaf_factors: Dict[int, tuple]
        scipy.linalg.cho_factor output per leaf
    node_factors: Dict[int, NodeFactor]
    """

    def __init__(self, hm: HMatrix, leaf_factors: Dict, node_factors: Dict):
        self.hm = hm
        self.leaf_factors = leaf_factors
        self.node_factors = node_factors

    @property
    def size(self):
        return self.hm.size

    def _solve_node(self, node, rhs):
        """Applies the inverse of the node's diagonal block to permuted rows"""
        tree = self.hm.tree
        if node.is_leaf:
            return scipy.linalg.cho_solve(self.leaf_factors[node.node_id], rhs)
        left, right = tree.children_of(node)
        split = left.size
        out = np.concatenate(
            [self._solve_node(left, rhs[:split]), self._solve_node(right, rhs[split:])]
        )
        factor = self.node_factors[node.node_id]
        if factor.rank == 0:
            return out
        block = self.hm.offdiag[node.node_id]
        # Z^T y with Z = blockdiag(U, V)
        projected = np.concatenate([block.u.T @ out[:split], block.vt @ out[split:]])
        out -= factor.correction @ scipy.linalg.lu_solve(factor.core, projected)
        return out

    def solve(self, b):
        """x with hm x = b, for a vector (N,) or a block (N, p)"""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.size or b.ndim > 2:
            raise ShapeError(f"Expected {self.size} rows, got shape {b.shape}")
        perm = self.hm.tree.permutation
        xp = self._solve_node(self.hm.tree.root, b[perm])
        x = np.empty_like(xp)
        x[perm] = xp
        return x

    def as_preconditioner(self):
        return self.solve


def factorize(hm: HMatrix) -> HFactorization:
    """
    Bottom-up factorization.

    Raises
    ------
    DefinitenessError
        If a leaf block is not positive definite or a core system is singular
    """
    tree = hm.tree
    leaf_factors = {}
    node_factors = {}
    partial = HFactorization(hm, leaf_factors, node_factors)

    # children always follow their parent in preorder
    for node in reversed(tree.nodes):
        if node.is_leaf:
            try:
                leaf_factors[node.node_id] = scipy.linalg.cho_factor(
                    hm.leaf_blocks[node.node_id], lower=True
                )
            except np.linalg.LinAlgError:
                raise DefinitenessError(
                    f"Leaf {node.node_id} (indices {node.start}..{node.stop - 1} in tree "
                    f"order) is not positive definite; increase the regularization lam"
                )
            continue
        block = hm.offdiag[node.node_id]
        k = block.rank
        if k == 0:
            node_factors[node.node_id] = NodeFactor(np.zeros((node.size, 0)), None, 0)
            continue
        left, right = tree.children_of(node)
        correction = np.concatenate(
            [
                np.hstack([partial._solve_node(left, block.u), np.zeros((left.size, k))]),
                np.hstack([np.zeros((right.size, k)), partial._solve_node(right, block.vt.T)]),
            ]
        )
        zt_correction = np.concatenate(
            [block.u.T @ correction[: left.size], block.vt @ correction[left.size :]]
        )
        swap = np.block([[np.zeros((k, k)), np.eye(k)], [np.eye(k), np.zeros((k, k))]])
        core = swap + zt_correction
        lu, piv = scipy.linalg.lu_factor(core, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if not np.all(np.isfinite(pivots)) or pivots.min() <= np.finfo(float).eps * max(1.0, pivots.max()):
            raise DefinitenessError(
                f"Coupling system at node {node.node_id} is singular; increase the "
                f"regularization lam"
            )
        node_factors[node.node_id] = NodeFactor(correction, (lu, piv), k)
        logger.debug("Factorized node %d with core size %d", node.node_id, 2 * k)
    logger.info("Factorized H-matrix with N=%d", hm.size)
    return partial


def solve(factorization: HFactorization, b):
    return factorization.solve(b)
