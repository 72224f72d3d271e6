"""Graph view of a cross-section set for the neural pipeline.

Every piece becomes a node carrying its 18 flattened coefficients
(row-major over the (6, 3) array). Within a section the k nodes form a
ring with self-loops; across sections every pair of sections is
connected (all-ones section adjacency including the diagonal).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CurvyError

__all__ = [
    "CSGraph",
    "ring_adjacency",
    "build_graph",
    "node_permutation",
    "permute_graph",
]


@dataclass
class CSGraph:
    """Node features plus intra-section and inter-section structure."""

    node_features: np.ndarray      # (m*k, 18)
    piece_adj: np.ndarray          # (m*k, m*k) block-diagonal rings + self-loops
    section_membership: np.ndarray  # (m*k,) section index of each node
    section_adj: np.ndarray        # (m, m) all-ones

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        self.piece_adj = np.asarray(self.piece_adj, dtype=np.float64)
        self.section_membership = np.asarray(self.section_membership, dtype=np.int64)
        self.section_adj = np.asarray(self.section_adj, dtype=np.float64)
        n = self.node_features.shape[0]
        if self.node_features.ndim != 2 or self.node_features.shape[1] != 18:
            raise CurvyError("node features must be (nodes, 18)")
        if self.piece_adj.shape != (n, n):
            raise CurvyError("piece adjacency shape does not match the node count")
        if self.section_membership.shape != (n,):
            raise CurvyError("section membership shape does not match the node count")
        m = self.section_adj.shape[0]
        if self.section_adj.shape != (m, m):
            raise CurvyError("section adjacency must be square")

    @property
    def num_nodes(self):
        return self.node_features.shape[0]

    @property
    def num_sections(self):
        return self.section_adj.shape[0]


def ring_adjacency(k):
    """Ring over k nodes with self-loops; k == 2 gives the dense 2x2 block."""
    if k < 2:
        raise ValueError("a ring needs at least 2 nodes")
    adj = np.eye(k)
    idx = np.arange(k)
    adj[idx, (idx + 1) % k] = 1.0
    adj[idx, (idx - 1) % k] = 1.0
    return adj


def build_graph(css):
    """Build the CSGraph of a CrossSectionSet.

    Node order is section-major: section s contributes nodes
    s*k .. s*k + k - 1, one per piece in order.
    """
    m = css.num_sections
    k = css.pieces_per_section
    feats = css.tensor().reshape(m, k, 6, 3).reshape(m * k, 18)
    ring = ring_adjacency(k)
    piece_adj = np.zeros((m * k, m * k))
    for s in range(m):
        piece_adj[s * k:(s + 1) * k, s * k:(s + 1) * k] = ring
    membership = np.repeat(np.arange(m), k)
    return CSGraph(feats, piece_adj, membership, np.ones((m, m)))


def node_permutation(m, k, section_perm=None, shifts=None):
    """Node relabeling from a section permutation and per-section ring shifts.

    Returns ``perm`` with ``perm[new] = old``: new node (s, j) takes the
    features of old node (section_perm[s], (j + shifts[s]) mod k).
    """
    section_perm = np.arange(m) if section_perm is None else np.asarray(section_perm, dtype=np.int64)
    shifts = np.zeros(m, dtype=np.int64) if shifts is None else np.asarray(shifts, dtype=np.int64)
    if sorted(section_perm.tolist()) != list(range(m)):
        raise ValueError("section_perm must be a permutation of range(m)")
    if shifts.shape != (m,):
        raise ValueError("need one ring shift per section")
    perm = np.empty(m * k, dtype=np.int64)
    for s in range(m):
        j = np.arange(k)
        perm[s * k + j] = section_perm[s] * k + (j + shifts[s]) % k
    return perm


def permute_graph(graph, perm):
    """Apply a node relabeling (perm[new] = old) to a CSGraph."""
    perm = np.asarray(perm, dtype=np.int64)
    n = graph.num_nodes
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm must be a permutation of range(num_nodes)")
    feats = graph.node_features[perm]
    adj = graph.piece_adj[np.ix_(perm, perm)]
    membership = graph.section_membership[perm]
    sections = np.unique(membership)
    remap = {old: new for new, old in enumerate(dict.fromkeys(membership.tolist()))}
    membership = np.array([remap[s] for s in membership.tolist()], dtype=np.int64)
    m = len(sections)
    return CSGraph(feats, adj, membership, np.ones((m, m)))
