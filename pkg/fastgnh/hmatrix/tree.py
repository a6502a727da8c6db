"""
Geometry-oblivious balanced index tree.

Each node is split around two far-apart anchors found by a farthest-point
sweep from a random start. Indices are ordered by how much closer they are
to the first anchor than to the second and cut into equal halves, so the
tree stays balanced whatever the distances look like.
"""
import logging
import math

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..exceptions import ConfigError
from ..util import rng_stream
from .oracle import EntryOracle, distances_from


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TreeNode(object):
    """A contiguous range [start, stop) of the permuted index order"""

    node_id: int
    level: int
    start: int
    stop: int
    parent: Optional[int] = None
    children: Tuple[int, ...] = ()

    @property
    def size(self):
        return self.stop - self.start

    @property
    def is_leaf(self):
        return not self.children


class IndexTree(object):
    """
    Attributes
    ----------
    permutation: np.ndarray
        Original indices in tree order; node ranges refer to positions in it
    nodes: List[TreeNode]
        Preorder, the root first
    leaf_size: int
    """

    def __init__(self, permutation, nodes: List[TreeNode], leaf_size):
        self.permutation = np.asarray(permutation, dtype=int)
        self.permutation.setflags(write=False)
        self.nodes = list(nodes)
        self.leaf_size = int(leaf_size)

    def __len__(self):
        return len(self.nodes)

    @property
    def size(self):
        return len(self.permutation)

    @property
    def root(self):
        return self.nodes[0]

    @property
    def leaves(self):
        return [node for node in self.nodes if node.is_leaf]

    @property
    def internal(self):
        return [node for node in self.nodes if not node.is_leaf]

    @property
    def depth(self):
        return max(node.level for node in self.nodes)

    def indices(self, node):
        """Original indices held by a node"""
        node = self.nodes[node] if isinstance(node, int) else node
        return self.permutation[node.start : node.stop]

    def children_of(self, node):
        return tuple(self.nodes[c] for c in node.children)

    def inverse_permutation(self):
        inverse = np.empty_like(self.permutation)
        inverse[self.permutation] = np.arange(self.size)
        return inverse


def expected_depth(size, leaf_size):
    """ceil(log2(N / m)) for N > m, else 0"""
    if size <= leaf_size:
        return 0
    return int(math.ceil(math.log2(size / leaf_size)))


def _split(oracle, idx, rng, metric):
    start = idx[rng.integers(len(idx))]
    first = idx[int(np.argmax(distances_from(oracle, start, idx, metric)))]
    to_first = distances_from(oracle, first, idx, metric)
    second = idx[int(np.argmax(to_first))]
    to_second = distances_from(oracle, second, idx, metric)
    # ties keep the original index order
    order = np.lexsort((idx, to_first - to_second))
    half = (len(idx) + 1) // 2
    return np.sort(idx[order[:half]]), np.sort(idx[order[half:]])


def build_tree(oracle: EntryOracle, leaf_size, seed, metric="angle") -> IndexTree:
    """
    Recursive balanced bisection of 0..N-1 into leaves of at most
    `leaf_size` indices.

    Deterministic given `seed`: node j draws its random start from the
    stream keyed by (seed, j).
    """
    if leaf_size < 2:
        raise ConfigError(f"Leaf size must be at least 2, got {leaf_size}")
    size = oracle.size
    permutation = np.empty(size, dtype=int)
    nodes = []

    def build(idx, start, level, parent):
        node_id = len(nodes)
        nodes.append(None)
        children = ()
        if len(idx) > leaf_size:
            left, right = _split(oracle, idx, rng_stream(seed, node_id), metric)
            children = (
                build(left, start, level + 1, node_id),
                build(right, start + len(left), level + 1, node_id),
            )
        else:
            permutation[start : start + len(idx)] = idx
        nodes[node_id] = TreeNode(node_id, level, start, start + len(idx), parent, children)
        return node_id

    build(np.arange(size), 0, 0, None)
    tree = IndexTree(permutation, nodes, leaf_size)
    logger.debug(
        "Built index tree with %d nodes, depth %d, leaf size %d",
        len(tree),
        tree.depth,
        leaf_size,
    )
    return tree
