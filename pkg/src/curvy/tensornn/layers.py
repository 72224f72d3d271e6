"""Neural layers built on the autodiff tensors.

Adjacency matrices are plain float arrays (they carry no gradient); the
helpers :func:`normalized_adjacency` and :func:`neighbor_mean_matrix`
precompute the propagation operators once per graph.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, ensure_tensor, parameter

__all__ = [
    "gaussian_init",
    "DenseLayer",
    "GCNLayer",
    "SageLayer",
    "GATLayer",
    "DiffNormLayer",
    "normalized_adjacency",
    "neighbor_mean_matrix",
]


def gaussian_init(rng, shape, scale=None):
    """Gaussian weights; scale defaults to 1/sqrt(fan_in) = 1/sqrt(shape[0])."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if scale is None:
        scale = 1.0 / np.sqrt(shape[0])
    return scale * rng.standard_normal(shape)


class DenseLayer:
    """Affine map x @ w + b; pass bias=False at creation for a pure linear map."""

    def __init__(self, w, b=None):
        self.w = w if isinstance(w, Tensor) else parameter(w)
        self.b = None if b is None else (b if isinstance(b, Tensor) else parameter(b))

    @classmethod
    def create(cls, rng, n_in, n_out, bias=True):
        w = parameter(gaussian_init(rng, (n_in, n_out)))
        b = parameter(np.zeros(n_out)) if bias else None
        return cls(w, b)

    def __call__(self, x):
        out = ensure_tensor(x) @ self.w
        if self.b is not None:
            out = out + self.b
        return out

    def parameters(self):
        return [self.w] if self.b is None else [self.w, self.b]


def normalized_adjacency(adj):
    """Symmetric normalization D^-1/2 A D^-1/2 with self-loops added if absent."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    a = adj if np.any(np.diag(adj) != 0.0) else adj + np.eye(len(adj))
    deg = a.sum(axis=1)
    if np.any(deg <= 0.0):
        raise ValueError("graph has a node with zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def neighbor_mean_matrix(adj):
    """Row-normalized adjacency with the diagonal removed (mean over neighbors).

    A node without neighbors keeps an all-zero row, so its aggregated
    neighborhood feature is zero.
    """
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    a = adj.copy()
    np.fill_diagonal(a, 0.0)
    deg = a.sum(axis=1)
    nz = deg > 0.0
    a[nz] = a[nz] / deg[nz, None]
    a[~nz] = 0.0
    return a


class GCNLayer:
    """Graph convolution: adj_hat @ x @ w (+ b), with adj_hat precomputed."""

    def __init__(self, w, b=None):
        self.w = w if isinstance(w, Tensor) else parameter(w)
        self.b = None if b is None else (b if isinstance(b, Tensor) else parameter(b))

    @classmethod
    def create(cls, rng, n_in, n_out, bias=True):
        w = parameter(gaussian_init(rng, (n_in, n_out)))
        b = parameter(np.zeros(n_out)) if bias else None
        return cls(w, b)

    def __call__(self, x, adj_hat):
        out = (ensure_tensor(adj_hat) @ ensure_tensor(x)) @ self.w
        if self.b is not None:
            out = out + self.b
        return out

    def parameters(self):
        return [self.w] if self.b is None else [self.w, self.b]


class SageLayer:
    """x @ w_self + mean-of-neighbors(x) @ w_neigh (+ b)."""

    def __init__(self, w_self, w_neigh, b=None):
        self.w_self = w_self if isinstance(w_self, Tensor) else parameter(w_self)
        self.w_neigh = w_neigh if isinstance(w_neigh, Tensor) else parameter(w_neigh)
        self.b = None if b is None else (b if isinstance(b, Tensor) else parameter(b))

    @classmethod
    def create(cls, rng, n_in, n_out, bias=True):
        w_self = parameter(gaussian_init(rng, (n_in, n_out)))
        w_neigh = parameter(gaussian_init(rng, (n_in, n_out)))
        b = parameter(np.zeros(n_out)) if bias else None
        return cls(w_self, w_neigh, b)

    def __call__(self, x, neigh_mat):
        x = ensure_tensor(x)
        out = x @ self.w_self + (ensure_tensor(neigh_mat) @ x) @ self.w_neigh
        if self.b is not None:
            out = out + self.b
        return out

    def parameters(self):
        params = [self.w_self, self.w_neigh]
        if self.b is not None:
            params.append(self.b)
        return params


class GATLayer:
    """Single-head graph attention.

    Scores e_ij = leaky_relu(a1 . h_i + a2 . h_j) are softmax-normalized
    over each node's neighborhood (adj > 0); the output is the
    attention-weighted sum of transformed neighbor features. A node whose
    neighborhood is empty raises.
    """

    def __init__(self, w, attn, slope=0.2):
        self.w = w if isinstance(w, Tensor) else parameter(w)
        self.attn = attn if isinstance(attn, Tensor) else parameter(attn)
        self.slope = float(slope)
        g = self.w.data.shape[1]
        if self.attn.data.shape != (2 * g, 1):
            raise ValueError("attention vector must have shape (2*out_features, 1)")

    @classmethod
    def create(cls, rng, n_in, n_out, slope=0.2):
        w = parameter(gaussian_init(rng, (n_in, n_out)))
        attn = parameter(gaussian_init(rng, (2 * n_out, 1)))
        return cls(w, attn, slope)

    def __call__(self, x, adj):
        h = ensure_tensor(x) @ self.w
        g = self.w.data.shape[1]
        s1 = h @ self.attn.slice_rows(0, g)       # (n, 1)
        s2 = h @ self.attn.slice_rows(g, 2 * g)   # (n, 1)
        scores = (s1 + s2.T).leaky_relu(self.slope)
        mask = np.asarray(adj, dtype=np.float64) > 0.0
        if not mask.any(axis=1).all():
            raise ValueError("attention over an empty neighborhood")
        alpha = scores.masked_softmax(mask)
        return alpha @ h

    def parameters(self):
        return [self.w, self.attn]


class DiffNormLayer:
    """Soft-cluster feature normalization with a residual connection.

    Rows are softly assigned to groups by softmax(x @ w_assign); within
    each group the weighted mean and standard deviation standardize the
    weighted features (over rows with assignment mass > 1e-8), and the
    standardized deviations are added back to the input scaled by the
    learnable scalar ``lam`` (default 0.01). Groups whose total weight is
    negligible are skipped.
    """

    def __init__(self, w_assign, lam=0.01):
        self.w_assign = w_assign if isinstance(w_assign, Tensor) else parameter(w_assign)
        self.lam = lam if isinstance(lam, Tensor) else parameter(np.float64(lam))

    @classmethod
    def create(cls, rng, n_features, n_groups=4, lam=0.01):
        return cls(parameter(gaussian_init(rng, (n_features, n_groups))), lam)

    def __call__(self, x):
        x = ensure_tensor(x)
        assign = (x @ self.w_assign).softmax()    # (n, G)
        n_groups = assign.data.shape[1]
        total = None
        for g in range(n_groups):
            w = assign.T.slice_rows(g, g + 1).T   # (n, 1)
            m = (w.data > 1e-8).astype(np.float64)
            if not m.any():
                continue
            wm = w * m
            tot = wm.sum()
            xg = w * x
            mu = (xg * wm).sum(axis=0, keepdims=True) / tot
            dev = (xg - mu) * m
            var = (dev * dev * wm).sum(axis=0, keepdims=True) / tot
            std = (var + 1e-24).sqrt()
            term = dev / (std + 1e-5)
            total = term if total is None else total + term
        if total is None:
            return x
        return x + self.lam * total

    def parameters(self):
        return [self.w_assign, self.lam]
