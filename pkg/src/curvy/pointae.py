"""Point-cloud autoencoder: per-point MLP + max-pool encoder, MLP decoder.

The encoder applies the same small MLP to every point and max-pools over
the point axis, so the embedding is exactly invariant to point order.
The decoder maps an embedding to a fixed-size cloud. Training minimizes
the symmetric squared Chamfer loss per cloud.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .tensornn import Adam, DenseLayer, Tensor, chamfer_loss, ensure_tensor

__all__ = [
    "AEConfig",
    "AEParams",
    "encode",
    "encode_t",
    "decode",
    "decode_t",
    "train_ae",
]


@dataclass
class AEConfig:
    """Autoencoder architecture: layer widths and decoded cloud size."""

    num_points: int = 2048
    embedding_dim: int = 128
    encoder_widths: tuple = (64, 128)
    decoder_widths: tuple = (256, 512)

    def __post_init__(self):
        self.encoder_widths = tuple(int(w) for w in self.encoder_widths)
        self.decoder_widths = tuple(int(w) for w in self.decoder_widths)
        if self.num_points < 1 or self.embedding_dim < 1:
            raise ValueError("num_points and embedding_dim must be positive")
        if not self.encoder_widths or not self.decoder_widths:
            raise ValueError("encoder and decoder need at least one hidden layer")


class AEParams:
    """Encoder/decoder layers plus helpers to snapshot and restore them."""

    def __init__(self, cfg, encoder, decoder):
        self.cfg = cfg
        self.encoder = list(encoder)
        self.decoder = list(decoder)

    @classmethod
    def create(cls, rng, cfg):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        enc_dims = (3,) + cfg.encoder_widths + (cfg.embedding_dim,)
        encoder = [DenseLayer.create(rng, enc_dims[i], enc_dims[i + 1])
                   for i in range(len(enc_dims) - 1)]
        dec_dims = (cfg.embedding_dim,) + cfg.decoder_widths + (3 * cfg.num_points,)
        decoder = [DenseLayer.create(rng, dec_dims[i], dec_dims[i + 1])
                   for i in range(len(dec_dims) - 1)]
        return cls(cfg, encoder, decoder)

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.encoder):
            out.append((f"encoder.{i}.w", layer.w))
            out.append((f"encoder.{i}.b", layer.b))
        for i, layer in enumerate(self.decoder):
            out.append((f"decoder.{i}.w", layer.w))
            out.append((f"decoder.{i}.b", layer.b))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def set_trainable(self, flag):
        for t in self.parameters():
            t.requires_grad = bool(flag)
            if not flag:
                t.grad = None

    def state(self):
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state(self, state):
        for name, t in self.named_parameters():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{arr.shape} vs {t.data.shape}")
            t.data = arr.copy()


def encode_t(ae, cloud):
    """Embedding of a cloud as a (1, embedding_dim) tensor (differentiable)."""
    pts = cloud if isinstance(cloud, Tensor) else ensure_tensor(np.asarray(cloud, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("cloud must have shape (n, 3)")
    h = pts
    for layer in ae.encoder[:-1]:
        h = layer(h).relu()
    h = ae.encoder[-1](h)
    return h.max(axis=0, keepdims=True)


def encode(ae, cloud):
    """Embedding of a cloud as a plain (embedding_dim,) array."""
    return encode_t(ae, cloud).data[0].copy()


def decode_t(ae, embedding):
    """Decoded cloud as an (num_points, 3) tensor (differentiable)."""
    if isinstance(embedding, Tensor):
        h = embedding if embedding.ndim == 2 else embedding.reshape(1, -1)
    else:
        h = ensure_tensor(np.asarray(embedding, dtype=np.float64).reshape(1, -1))
    for layer in ae.decoder[:-1]:
        h = layer(h).relu()
    h = ae.decoder[-1](h)
    return h.reshape(ae.cfg.num_points, 3)


def decode(ae, embedding):
    """Decoded cloud as a plain (num_points, 3) array."""
    return decode_t(ae, embedding).data.copy()


def train_ae(clouds, cfg, epochs=500, lr=1e-3, seed=0, callback=None):
    """Train an autoencoder on a list of (n, 3) clouds.

    One Adam step per cloud per epoch, in fixed order. Returns the
    trained parameters and the per-epoch mean Chamfer loss curve. A
    non-finite loss raises :class:`DivergenceError` carrying the last
    end-of-epoch parameter snapshot.
    """
    clouds = [np.asarray(c, dtype=np.float64) for c in clouds]
    if not clouds:
        raise ValueError("need at least one training cloud")
    for c in clouds:
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError("every cloud must have shape (n, 3)")
    ae = AEParams.create(np.random.default_rng(seed), cfg)
    opt = Adam(ae.parameters(), lr=lr)
    curve = []
    last_good = ae.state()
    for epoch in range(epochs):
        total = 0.0
        for cloud in clouds:
            opt.zero_grad()
            loss = chamfer_loss(decode_t(ae, encode_t(ae, cloud)), cloud)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError("autoencoder loss became non-finite",
                                      checkpoint=last_good, epoch=epoch)
            loss.backward()
            opt.step()
            total += value
        curve.append(total / len(clouds))
        last_good = ae.state()
        if callback is not None:
            callback(epoch, curve[-1])
    return ae, curve
