"""Per-frame hand autoencoders.

Two are used: a single-hand autoencoder (45 -> C -> 45) whose frozen encoder
and decoder constrain the projected hand features during stage-one training,
and a two-hand autoencoder (90 -> C -> 90) whose frozen encoder is the
perceptual feature extractor for the perceptual loss and the feature-space
evaluation metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, mean_abs
from .nn import Adam, MlpSpec, ParameterStore, mlp_forward, mlp_init


class NotTrainedError(RuntimeError):
    """Raised when a frozen/pre-trained extractor is required but missing."""


@dataclass
class HandAutoencoder:
    """MLP encoder/decoder pair over per-frame axis-angle hand vectors."""

    store: ParameterStore
    prefix: str
    enc_spec: MlpSpec
    dec_spec: MlpSpec
    trained: bool = False

    @property
    def pose_dim(self) -> int:
        return self.enc_spec.in_width

    @property
    def channels(self) -> int:
        return self.enc_spec.out_width

    def encode(self, frames) -> Tensor:
        """(..., pose_dim) -> (..., C); each row depends only on its own frame."""
        return mlp_forward(self.store, f"{self.prefix}.enc", self.enc_spec, frames)

    def decode(self, features) -> Tensor:
        return mlp_forward(self.store, f"{self.prefix}.dec", self.dec_spec, features)

    def encode_np(self, frames: np.ndarray) -> np.ndarray:
        return self.encode(np.asarray(frames, dtype=np.float64)).data

    def param_names(self) -> list[str]:
        return self.store.names(self.prefix)


def make_autoencoder(
    store: ParameterStore,
    prefix: str,
    pose_dim: int,
    channels: int,
    hidden: int,
    rng: np.random.Generator,
) -> HandAutoencoder:
    enc_spec = MlpSpec((pose_dim, hidden, channels))
    dec_spec = MlpSpec((channels, hidden, pose_dim))
    mlp_init(store, f"{prefix}.enc", enc_spec, rng)
    mlp_init(store, f"{prefix}.dec", dec_spec, rng)
    return HandAutoencoder(store, prefix, enc_spec, dec_spec)


def encode_hand(ae: HandAutoencoder, frames) -> Tensor:
    frames = as_tensor(frames)
    if frames.shape[-1] != ae.pose_dim:
        raise ValueError(f"expected frame width {ae.pose_dim}, got {frames.shape[-1]}")
    return ae.encode(frames)


def decode_hand(ae: HandAutoencoder, features) -> Tensor:
    features = as_tensor(features)
    if features.shape[-1] != ae.channels:
        raise ValueError(f"expected feature width {ae.channels}, got {features.shape[-1]}")
    return ae.decode(features)


def disentangle_loss(feat_recon, feat, ae: HandAutoencoder) -> Tensor:
    """Mean-absolute feature difference plus mean-absolute difference of the
    decoded poses; the decoder is used frozen (its parameters are simply not
    given to any optimizer here)."""
    feat_recon, feat = as_tensor(feat_recon), as_tensor(feat)
    if feat_recon.shape != feat.shape:
        raise ValueError(f"feature shapes differ: {feat_recon.shape} vs {feat.shape}")
    feature_term = mean_abs(feat_recon, feat)
    pose_term = mean_abs(ae.decode(feat_recon), ae.decode(feat))
    return feature_term + pose_term


def perceptual_features(ae: HandAutoencoder, hand_frames) -> Tensor:
    """Per-frame features from the frozen two-hand extractor, (T, 90) -> (T, C)."""
    if not ae.trained:
        raise NotTrainedError("perceptual extractor has not been trained")
    return encode_hand(ae, hand_frames)


def train_autoencoder(
    ae: HandAutoencoder,
    frames: np.ndarray,
    epochs: int,
    lr: float = 0.003,
    batch_size: int = 64,
    seed: int = 0,
    grad_clip: float = 1.0,
) -> list[float]:
    """L1 reconstruction training; returns the per-epoch mean loss curve."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != ae.pose_dim:
        raise ValueError(f"training frames must be (N, {ae.pose_dim})")
    rng = np.random.default_rng(seed)
    opt = Adam(ae.store, names=ae.param_names(), lr=lr)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(frames.shape[0])
        losses = []
        for start in range(0, len(order), batch_size):
            batch = frames[order[start : start + batch_size]]
            ae.store.zero_grad(ae.prefix)
            loss = mean_abs(ae.decode(ae.encode(batch)), Tensor(batch))
            loss.backward()
            ae.store.clip_grad_norm(grad_clip, ae.param_names())
            opt.step()
            losses.append(float(loss.data))
        curve.append(float(np.mean(losses)))
    ae.trained = True
    return curve
