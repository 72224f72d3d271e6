"""Graph-conditioned GAN that maps cross-section graphs to AE embeddings.

The generator reads a cross-section graph (node features + noise),
aggregates within sections and then across sections, and emits a vector
in the autoencoder's embedding space. The discriminator scores a
(graph, embedding) pair. Training alternates one discriminator and one
generator step per shape; the generator loss combines the adversarial
term with direct regression onto the frozen autoencoder: an MSE to the
target embedding and a Chamfer term on the decoded cloud.

All adversarial terms are computed from logits via softplus:
-log(sigmoid(z)) = softplus(-z) and -log(1 - sigmoid(z)) = softplus(z),
so losses stay finite even for extreme scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .graphrep import CSGraph, build_graph
from .pointae import decode, decode_t, encode
from .tensornn import (Adam, DenseLayer, DiffNormLayer, GATLayer, GCNLayer,
                       SageLayer, Tensor, chamfer_loss, concat, mse,
                       neighbor_mean_matrix, normalized_adjacency)

__all__ = [
    "GanConfig",
    "GanLosses",
    "GeneratorParams",
    "DiscriminatorParams",
    "generate",
    "discriminate",
    "generator_loss",
    "discriminator_loss",
    "train_gan",
    "reconstruct",
]


@dataclass
class GanConfig:
    """Architecture widths and loss weights for the GAN.

    Loss weights default to 1.0 (an unweighted sum); all fields are
    overridable through training configs.
    """

    embedding_dim: int = 128
    noise_dim: int = 8
    conv_dim: int = 64
    dense_dim: int = 128
    groups: int = 4
    attention_slope: float = 0.2
    w_adv: float = 1.0
    w_chamfer: float = 1.0
    w_mse: float = 1.0
    saturating: bool = False


@dataclass
class GanLosses:
    """Per-epoch (or per-batch) loss components, all finite by contract."""

    l_g: float
    l_d: float
    l_ch: float
    l_mse: float
    l_adv: float


class GeneratorParams:
    """Generator layers: two SAGE+norm blocks, local and global attention,
    and a two-layer head producing the embedding."""

    def __init__(self, cfg, sage1, dn1, sage2, dn2, gat_local, gat_global, fc1, fc2):
        self.cfg = cfg
        self.sage1 = sage1
        self.dn1 = dn1
        self.sage2 = sage2
        self.dn2 = dn2
        self.gat_local = gat_local
        self.gat_global = gat_global
        self.fc1 = fc1
        self.fc2 = fc2

    @classmethod
    def create(cls, rng, cfg):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        n_in = 18 + cfg.noise_dim
        sage1 = SageLayer.create(rng, n_in, cfg.conv_dim)
        dn1 = DiffNormLayer.create(rng, cfg.conv_dim, cfg.groups)
        sage2 = SageLayer.create(rng, cfg.conv_dim, cfg.conv_dim)
        dn2 = DiffNormLayer.create(rng, cfg.conv_dim, cfg.groups)
        gat_local = GATLayer.create(rng, cfg.conv_dim, cfg.conv_dim, cfg.attention_slope)
        gat_global = GATLayer.create(rng, cfg.conv_dim, cfg.conv_dim, cfg.attention_slope)
        fc1 = DenseLayer.create(rng, cfg.conv_dim, cfg.dense_dim)
        fc2 = DenseLayer.create(rng, cfg.dense_dim, cfg.embedding_dim)
        return cls(cfg, sage1, dn1, sage2, dn2, gat_local, gat_global, fc1, fc2)

    def _blocks(self):
        return [("sage1", self.sage1), ("dn1", self.dn1), ("sage2", self.sage2),
                ("dn2", self.dn2), ("gat_local", self.gat_local),
                ("gat_global", self.gat_global), ("fc1", self.fc1), ("fc2", self.fc2)]

    def named_parameters(self):
        out = []
        for prefix, block in self._blocks():
            if isinstance(block, SageLayer):
                fields = [("w_self", block.w_self), ("w_neigh", block.w_neigh), ("b", block.b)]
            elif isinstance(block, DiffNormLayer):
                fields = [("w_assign", block.w_assign), ("lam", block.lam)]
            elif isinstance(block, GATLayer):
                fields = [("w", block.w), ("attn", block.attn)]
            else:
                fields = [("w", block.w), ("b", block.b)]
            for suffix, tensor in fields:
                if tensor is not None:
                    out.append((f"{prefix}.{suffix}", tensor))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def state(self):
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state(self, state):
        _load_named(self, state)


class DiscriminatorParams:
    """Discriminator layers: two graph convolutions (no bias), then a
    dense head over the pooled graph vector concatenated with the
    embedding under judgment."""

    def __init__(self, cfg, gcn1, gcn2, d1, d2, d3):
        self.cfg = cfg
        self.gcn1 = gcn1
        self.gcn2 = gcn2
        self.d1 = d1
        self.d2 = d2
        self.d3 = d3

    @classmethod
    def create(cls, rng, cfg):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        gcn1 = GCNLayer.create(rng, 18, cfg.conv_dim, bias=False)
        gcn2 = GCNLayer.create(rng, cfg.conv_dim, cfg.conv_dim, bias=False)
        half = max(cfg.dense_dim // 2, 1)
        d1 = DenseLayer.create(rng, cfg.conv_dim + cfg.embedding_dim, cfg.dense_dim)
        d2 = DenseLayer.create(rng, cfg.dense_dim, half)
        d3 = DenseLayer.create(rng, half, 1)
        return cls(cfg, gcn1, gcn2, d1, d2, d3)

    def named_parameters(self):
        out = []
        for prefix, block in [("gcn1", self.gcn1), ("gcn2", self.gcn2),
                              ("d1", self.d1), ("d2", self.d2), ("d3", self.d3)]:
            out.append((f"{prefix}.w", block.w))
            if block.b is not None:
                out.append((f"{prefix}.b", block.b))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def state(self):
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state(self, state):
        _load_named(self, state)


def _load_named(model, state):
    for name, t in model.named_parameters():
        if name not in state:
            raise KeyError(f"missing parameter {name!r} in state")
        arr = np.asarray(state[name], dtype=np.float64)
        if arr.shape != t.data.shape:
            raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {t.data.shape}")
        t.data = arr.copy()


def _generate_t(gen, graph, noise):
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (graph.num_nodes, gen.cfg.noise_dim):
        raise ValueError("noise must have shape (num_nodes, noise_dim)")
    neigh = neighbor_mean_matrix(graph.piece_adj)
    h = concat([Tensor(graph.node_features), Tensor(noise)], axis=1)
    h = gen.dn1(gen.sage1(h, neigh)).relu()
    h = gen.dn2(gen.sage2(h, neigh)).relu()
    h = gen.gat_local(h, graph.piece_adj).relu()
    h = h.segment_mean(graph.section_membership, graph.num_sections)
    h = gen.gat_global(h, graph.section_adj).relu()
    h = h.mean(axis=0, keepdims=True)
    h = gen.fc1(h).relu()
    return gen.fc2(h)                     # (1, embedding_dim)


def generate(gen, graph, noise=None, seed=0):
    """Generated embedding as a plain (embedding_dim,) array."""
    if noise is None:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((graph.num_nodes, gen.cfg.noise_dim))
    return _generate_t(gen, graph, noise).data[0].copy()


def _disc_logit_t(disc, graph, embedding):
    adj_hat = normalized_adjacency(graph.piece_adj)
    h = disc.gcn1(Tensor(graph.node_features), adj_hat).relu()
    h = disc.gcn2(h, adj_hat).relu()
    pooled = h.mean(axis=0, keepdims=True)     # (1, conv_dim)
    if isinstance(embedding, Tensor):
        emb = embedding if embedding.ndim == 2 else embedding.reshape(1, -1)
    else:
        emb = Tensor(np.asarray(embedding, dtype=np.float64).reshape(1, -1))
    z = concat([pooled, emb], axis=1)
    z = disc.d1(z).relu()
    z = disc.d2(z).relu()
    return disc.d3(z)                          # (1, 1) logit


def discriminate(disc, graph, embedding):
    """Probability the discriminator assigns to (graph, embedding) being real."""
    from scipy.special import expit
    return float(expit(_disc_logit_t(disc, graph, embedding).data[0, 0]))


def generator_loss(gen, disc, ae, graph, cloud, noise, cfg):
    """Generator objective; returns (scalar loss tensor, float parts).

    Adversarial term: softplus(-z) = -log D(fake) (non-saturating, the
    default) or -softplus(z) = log(1 - D(fake)) (the saturating form).
    Regression terms pull the fake embedding onto the frozen autoencoder:
    MSE against the encoded cloud, and Chamfer between the decoded fake
    embedding and the decoded real embedding.
    """
    fake = _generate_t(gen, graph, noise)
    z = _disc_logit_t(disc, graph, fake).sum()
    if cfg.saturating:
        adv = -(z.softplus())
    else:
        adv = (-z).softplus()
    target = encode(ae, cloud)
    target_cloud = decode(ae, target)
    reg_mse = mse(fake, target.reshape(1, -1))
    reg_ch = chamfer_loss(decode_t(ae, fake), target_cloud)
    total = cfg.w_adv * adv + cfg.w_chamfer * reg_ch + cfg.w_mse * reg_mse
    parts = {"adv": float(adv.data), "chamfer": float(reg_ch.data),
             "mse": float(reg_mse.data)}
    return total, parts


def discriminator_loss(disc, graph, real_embedding, fake_embedding, legacy=False):
    """Discriminator objective; returns (scalar loss tensor, float parts).

    The default is the standard form -log D(real) - log(1 - D(fake)),
    computed stably as softplus(-z_real) + softplus(z_fake); embeddings
    are constants. With ``legacy=True`` the value is instead the
    historical expression (1 - log D(fake)) + log D(real) =
    1 + softplus(-z_fake) - softplus(-z_real) — reported for inspection,
    never a minimizable objective.
    """
    z_real = _disc_logit_t(disc, graph, np.asarray(real_embedding)).sum()
    z_fake = _disc_logit_t(disc, graph, np.asarray(fake_embedding)).sum()
    if legacy:
        loss = (-z_fake).softplus() - (-z_real).softplus() + 1.0
        parts = {"real": float((-z_real).softplus().data),
                 "fake": float((-z_fake).softplus().data)}
        return loss, parts
    loss = (-z_real).softplus() + z_fake.softplus()
    parts = {"real": float((-z_real).softplus().data),
             "fake": float(z_fake.softplus().data)}
    return loss, parts


def train_gan(samples, ae, cfg, epochs=200, lr_g=1e-3, lr_d=1e-3, seed=0,
              callback=None):
    """Adversarial training over (graph, cloud) samples.

    Per shape and epoch: one discriminator step on (real embedding,
    detached fake embedding), then one generator step with fresh noise.
    The autoencoder is frozen throughout. Returns (generator,
    discriminator, history), where history is a list of per-epoch
    :class:`GanLosses` means. Non-finite losses raise
    :class:`DivergenceError` carrying the last end-of-epoch
    generator/discriminator snapshots.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one training sample")
    for graph, cloud in samples:
        if not isinstance(graph, CSGraph):
            raise TypeError("each sample must be (CSGraph, cloud)")
    rng = np.random.default_rng(seed)
    gen = GeneratorParams.create(rng, cfg)
    disc = DiscriminatorParams.create(rng, cfg)
    opt_g = Adam(gen.parameters(), lr=lr_g)
    opt_d = Adam(disc.parameters(), lr=lr_d)

    was_trainable = any(t.requires_grad for t in ae.parameters())
    ae.set_trainable(False)
    try:
        real_embs = [encode(ae, np.asarray(cloud, dtype=np.float64))
                     for _, cloud in samples]
        history = []
        last_good = {"generator": gen.state(), "discriminator": disc.state()}
        for epoch in range(epochs):
            sums = {"l_g": 0.0, "l_d": 0.0, "l_ch": 0.0, "l_mse": 0.0,
                    "l_adv": 0.0}
            for (graph, cloud), real_emb in zip(samples, real_embs):
                cloud = np.asarray(cloud, dtype=np.float64)

                noise = rng.standard_normal((graph.num_nodes, cfg.noise_dim))
                fake_emb = generate(gen, graph, noise)
                opt_d.zero_grad()
                d_loss, _ = discriminator_loss(disc, graph, real_emb, fake_emb)
                d_value = float(d_loss.data)
                if not math.isfinite(d_value):
                    raise DivergenceError("discriminator loss became non-finite",
                                          checkpoint=last_good, epoch=epoch)
                d_loss.backward()
                opt_d.step()

                noise = rng.standard_normal((graph.num_nodes, cfg.noise_dim))
                opt_g.zero_grad()
                g_loss, parts = generator_loss(gen, disc, ae, graph, cloud,
                                               noise, cfg)
                g_value = float(g_loss.data)
                if not math.isfinite(g_value):
                    raise DivergenceError("generator loss became non-finite",
                                          checkpoint=last_good, epoch=epoch)
                g_loss.backward()
                opt_g.step()

                sums["l_d"] += d_value
                sums["l_g"] += g_value
                sums["l_adv"] += parts["adv"]
                sums["l_ch"] += parts["chamfer"]
                sums["l_mse"] += parts["mse"]
            n = len(samples)
            history.append(GanLosses(l_g=sums["l_g"] / n, l_d=sums["l_d"] / n,
                                     l_ch=sums["l_ch"] / n,
                                     l_mse=sums["l_mse"] / n,
                                     l_adv=sums["l_adv"] / n))
            last_good = {"generator": gen.state(), "discriminator": disc.state()}
            if callback is not None:
                callback(epoch, history[-1])
    finally:
        ae.set_trainable(was_trainable)
    return gen, disc, history


def reconstruct(gen, ae, shape, seed=0):
    """Reconstructed cloud (num_points, 3) from cross-sections.

    ``shape`` is a CSGraph or a CrossSectionSet; noise is drawn from
    ``default_rng(seed)``.
    """
    graph = shape if isinstance(shape, CSGraph) else build_graph(shape)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((graph.num_nodes, gen.cfg.noise_dim))
    embedding = generate(gen, graph, noise)
    return decode_t(ae, embedding).data.copy()
