"""Central-difference verification of every differentiable building block.

``grad_check`` compares analytic gradients against central differences
for one loss; ``run_gradient_suite`` runs a fixed battery of miniature
instances covering each op, each layer, and the full autoencoder /
generator / discriminator losses, returning the worst relative error of
each case.

Each case is drawn from a seeded builder and redrawn (bounded, still
deterministic) until every checked tensor receives a nonzero gradient:
random miniature networks can land dead -- a relu stage that zeroes
everything parks downstream biases exactly on the kink, where the
analytic gradient is legitimately zero but central differences see the
half-slope.
"""
from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, chamfer_loss, concat, mse, parameter
from .layers import (DenseLayer, DiffNormLayer, GATLayer, GCNLayer, SageLayer,
                     neighbor_mean_matrix, normalized_adjacency)

__all__ = ["grad_check", "run_gradient_suite"]


def grad_check(build_loss, tensors, h=1e-6):
    """Worst relative error between analytic and numerical gradients.

    ``build_loss`` is a zero-argument callable that rebuilds the scalar
    loss from the given tensors; their ``data`` is perturbed in place for
    the central differences. Relative error is |a - n| / max(1, |n|).
    """
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    if loss.data.size != 1:
        raise ValueError("grad_check needs a scalar loss")
    loss.backward()
    analytic = [np.array(t.grad) if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat_grad = grad.reshape(-1)
        for i in range(t.data.size):
            orig = t.data.flat[i]
            t.data.flat[i] = orig + h
            up = float(build_loss().data)
            t.data.flat[i] = orig - h
            down = float(build_loss().data)
            t.data.flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            if not (math.isfinite(numeric) and math.isfinite(flat_grad[i])):
                raise ValueError("non-finite value during gradient check")
            err = abs(flat_grad[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def _signed_uniform(rng, shape, low=0.1, high=1.5):
    """Values bounded away from zero, so kinks at 0 stay clear of the h-step."""
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return sign * rng.uniform(low, high, shape)


def _alive(build_loss, tensors):
    """True when the loss routes gradient into every checked tensor."""
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    return all(t.grad is not None and float(np.abs(t.grad).max()) > 1e-8
               for t in tensors)


def run_gradient_suite(seed=0):
    """Run every gradient check; returns {case name: worst relative error}."""
    results = {}

    def check(name, builder, tries=64):
        for attempt in range(tries):
            rng = np.random.default_rng([seed, attempt, len(name)])
            build_loss, tensors = builder(rng)
            if _alive(build_loss, tensors):
                results[name] = grad_check(build_loss, tensors)
                return
        raise ValueError(f"no live instance found for gradient case {name!r}")

    def case_arithmetic(rng):
        a = parameter(_signed_uniform(rng, (3, 4)))
        b = parameter(rng.uniform(1.5, 2.5, (3, 4)))
        c = parameter(_signed_uniform(rng, (1, 4)))
        w = rng.standard_normal((3, 4))
        return (lambda: ((a * b + a / b - c + 2.0 * a - b * 0.5 + (-a)) * w).sum(),
                [a, b, c])

    def case_matmul(rng):
        m1 = parameter(rng.standard_normal((3, 4)))
        m2 = parameter(rng.standard_normal((4, 2)))
        w1 = rng.standard_normal((3, 2))
        w2 = rng.standard_normal((4, 3))
        w3 = rng.standard_normal((2, 6))
        w4 = rng.standard_normal((2, 4))
        w5 = rng.standard_normal((6, 4))
        return (lambda: ((m1 @ m2) * w1).sum() + (m1.T * w2).sum()
                + (m1.reshape(2, 6) * w3).sum() + (m1.slice_rows(1, 3) * w4).sum()
                + (concat([m1, m1], axis=0) * w5).sum(),
                [m1, m2])

    def case_reductions(rng):
        x = parameter(_signed_uniform(rng, (4, 5)))
        r0 = rng.standard_normal(5)
        r1 = rng.standard_normal((4, 1))
        rm = rng.standard_normal(4)
        rM = rng.standard_normal(5)
        return (lambda: x.sum() * 0.7 + (x.sum(axis=0) * r0).sum()
                + (x.sum(axis=1, keepdims=True) * r1).sum() + x.mean() * 1.3
                + (x.mean(axis=0) * r0).sum() + (x.min(axis=1) * rm).sum()
                + (x.max(axis=0) * rM).sum() + x.min() * 0.4 + x.max() * 0.6
                + (x.max(axis=0, keepdims=True) * rM).sum(),
                [x])

    def case_activations(rng):
        y = parameter(_signed_uniform(rng, (3, 4)))
        pos = parameter(rng.uniform(0.5, 2.0, (3, 4)))
        wy = rng.standard_normal((3, 4))
        wp = rng.standard_normal((3, 4))
        return (lambda: (y.relu() * wy).sum() + (y.leaky_relu(0.2) * wy).sum()
                + (y.sigmoid() * wy).sum() + (y.softplus() * wy).sum()
                + (pos.log() * wp).sum() + (pos.sqrt() * wp).sum(),
                [y, pos])

    def case_softmax(rng):
        s = parameter(rng.standard_normal((3, 4)))
        ws = rng.standard_normal((3, 4))
        return lambda: (s.softmax() * ws).sum(), [s]

    def case_masked_softmax(rng):
        s = parameter(rng.standard_normal((3, 4)))
        mask = rng.uniform(size=(3, 4)) > 0.3
        mask[:, 0] = True
        ws = rng.standard_normal((3, 4))
        return lambda: (s.masked_softmax(mask) * ws).sum(), [s]

    def case_segment_mean(rng):
        seg = parameter(rng.standard_normal((5, 3)))
        ids = np.array([0, 1, 0, 2, 1])
        wseg = rng.standard_normal((3, 3))
        return lambda: (seg.segment_mean(ids, 3) * wseg).sum(), [seg]

    def case_mse(rng):
        u = parameter(rng.standard_normal((4, 3)))
        v = parameter(rng.standard_normal((4, 3)))
        return lambda: mse(u, v), [u, v]

    def case_chamfer(rng):
        p = parameter(rng.uniform(-1.0, 1.0, (5, 3)))
        q = parameter(rng.uniform(-1.0, 1.0, (4, 3)))
        return lambda: chamfer_loss(p, q), [p, q]

    def _ring(n=5):
        ring = np.eye(n)
        idx = np.arange(n)
        ring[idx, (idx + 1) % n] = 1.0
        ring[idx, (idx - 1) % n] = 1.0
        return ring

    def case_dense(rng):
        feats = parameter(rng.standard_normal((5, 4)))
        wout = rng.standard_normal((5, 3))
        dense = DenseLayer.create(rng, 4, 3)
        return (lambda: (dense(feats) * wout).sum(),
                [feats] + dense.parameters())

    def case_gcn(rng):
        feats = parameter(rng.standard_normal((5, 4)))
        wout = rng.standard_normal((5, 3))
        gcn = GCNLayer.create(rng, 4, 3)
        adj_hat = normalized_adjacency(_ring())
        return (lambda: (gcn(feats, adj_hat) * wout).sum(),
                [feats] + gcn.parameters())

    def case_sage(rng):
        feats = parameter(rng.standard_normal((5, 4)))
        wout = rng.standard_normal((5, 3))
        sage = SageLayer.create(rng, 4, 3)
        neigh = neighbor_mean_matrix(_ring())
        return (lambda: (sage(feats, neigh) * wout).sum(),
                [feats] + sage.parameters())

    def case_gat(rng):
        feats = parameter(rng.standard_normal((5, 4)))
        wout = rng.standard_normal((5, 3))
        gat = GATLayer.create(rng, 4, 3)
        ring = _ring()
        return (lambda: (gat(feats, ring) * wout).sum(),
                [feats] + gat.parameters())

    def case_diffnorm(rng):
        feats = parameter(rng.standard_normal((5, 4)))
        dnorm = DiffNormLayer.create(rng, 4, 2)
        wdn = rng.standard_normal((5, 4))
        return (lambda: (dnorm(feats) * wdn).sum(),
                [feats] + dnorm.parameters())

    from ..pointae import AEConfig, AEParams, decode_t, encode_t
    from ..curvygan import (DiscriminatorParams, GanConfig, GeneratorParams,
                            discriminator_loss, generator_loss)
    from ..graphrep import CSGraph, ring_adjacency

    def _micro_graph(rng):
        piece_adj = np.zeros((6, 6))
        piece_adj[:3, :3] = ring_adjacency(3)
        piece_adj[3:, 3:] = ring_adjacency(3)
        return CSGraph(rng.standard_normal((6, 18)), piece_adj,
                       np.repeat(np.arange(2), 3), np.ones((2, 2)))

    _gan_cfg = GanConfig(embedding_dim=3, noise_dim=2, conv_dim=4,
                         dense_dim=5, groups=2)

    def case_autoencoder(rng):
        cfg = AEConfig(num_points=4, embedding_dim=3,
                       encoder_widths=(5, 6), decoder_widths=(6,))
        ae = AEParams.create(rng, cfg)
        cloud = rng.uniform(-1.0, 1.0, (4, 3))
        tensors = [t for _, t in ae.named_parameters()]
        return (lambda: chamfer_loss(decode_t(ae, encode_t(ae, cloud)), cloud),
                tensors)

    def case_generator(rng):
        cfg = AEConfig(num_points=4, embedding_dim=3,
                       encoder_widths=(5, 6), decoder_widths=(6,))
        ae = AEParams.create(rng, cfg)
        cloud = rng.uniform(-1.0, 1.0, (4, 3))
        gen = GeneratorParams.create(rng, _gan_cfg)
        disc = DiscriminatorParams.create(rng, _gan_cfg)
        graph = _micro_graph(rng)
        noise = rng.standard_normal((6, 2))
        tensors = [t for _, t in gen.named_parameters()]
        return (lambda: generator_loss(gen, disc, ae, graph, cloud, noise,
                                       _gan_cfg)[0],
                tensors)

    def case_discriminator(rng):
        disc = DiscriminatorParams.create(rng, _gan_cfg)
        graph = _micro_graph(rng)
        real_emb = rng.standard_normal(3)
        fake_emb = rng.standard_normal(3)
        tensors = [t for _, t in disc.named_parameters()]
        return (lambda: discriminator_loss(disc, graph, real_emb, fake_emb)[0],
                tensors)

    check("arithmetic", case_arithmetic)
    check("matmul_reshape_concat", case_matmul)
    check("reductions", case_reductions)
    check("activations", case_activations)
    check("softmax", case_softmax)
    check("masked_softmax", case_masked_softmax)
    check("segment_mean", case_segment_mean)
    check("mse", case_mse)
    check("chamfer", case_chamfer)
    check("dense_layer", case_dense)
    check("gcn_layer", case_gcn)
    check("sage_layer", case_sage)
    check("gat_layer", case_gat)
    check("diffnorm_layer", case_diffnorm)
    check("autoencoder", case_autoencoder)
    check("generator_loss", case_generator)
    check("discriminator_loss", case_discriminator)

    return results
