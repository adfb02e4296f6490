"""Cosine-similarity memory banks with soft reading and EMA slot writes, plus
the spatial-dependency and temporal-enhancement operations built on them.

Slots are buffers, not optimizer parameters: reads are differentiable with
respect to the query, but slot contents change only through the exponential
moving-average update (gamma * slot + (1 - gamma) * query), which is an
in-place bookkeeping step outside the gradient tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, clip, matmul, softmax, sqrt, tsum
from .nn import MlpSpec, ParameterStore, mlp_forward, mlp_init

NORM_EPS = 1e-12


class FrozenBankError(RuntimeError):
    """Raised when an EMA write is attempted on a frozen bank."""


@dataclass
class MemoryBank:
    """S x D slot matrix with an EMA coefficient."""

    slots: np.ndarray
    gamma: float = 0.8
    frozen: bool = False

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=np.float64)
        if self.slots.ndim != 2 or self.slots.shape[0] < 1:
            raise ValueError(f"slots must be (S, D) with S >= 1, got {self.slots.shape}")
        if not np.all(np.isfinite(self.slots)):
            raise ValueError("slot values must be finite")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def n_slots(self) -> int:
        return self.slots.shape[0]

    @property
    def dim(self) -> int:
        return self.slots.shape[1]


def init_bank(n_slots: int, dim: int, rng: np.random.Generator, gamma: float = 0.8) -> MemoryBank:
    """Random unit-variance slots, row-normalized."""
    slots = rng.normal(size=(n_slots, dim))
    slots /= np.linalg.norm(slots, axis=1, keepdims=True)
    return MemoryBank(slots, gamma)


def _cosine_scores(slots: Tensor, query: Tensor) -> Tensor:
    """Cosine similarity of query rows (..., D) against slots (S, D) -> (..., S).

    Pairs where either vector has norm below 1e-12 score exactly 0.
    """
    q_norm = sqrt(tsum(query * query, axis=-1, keepdims=True))  # (..., 1)
    s_norm = sqrt(tsum(slots * slots, axis=-1, keepdims=True))  # (S, 1)
    # mask is data-dependent but locally constant, so it is kept off the tape
    mask = (q_norm.data >= NORM_EPS) & (s_norm.data.reshape(-1) >= NORM_EPS)  # (..., S)
    dots = matmul(query.reshape((-1, query.shape[-1])), slots.swapaxes(0, 1))
    dots = dots.reshape(query.shape[:-1] + (slots.shape[0],))
    denom = clip(q_norm, lo=NORM_EPS) * clip(s_norm, lo=NORM_EPS).reshape((-1,))
    return dots / denom * mask.astype(np.float64)


def soft_read(slots, query) -> tuple[Tensor, Tensor]:
    """Differentiable soft read: softmax over cosine scores.

    Returns (aggregate (..., D), affinity (..., S)); affinity rows sum to 1.
    """
    slots_t, query_t = as_tensor(slots), as_tensor(query)
    if query_t.shape[-1] != slots_t.shape[-1]:
        raise ValueError(f"query width {query_t.shape[-1]} != slot width {slots_t.shape[-1]}")
    affinity = softmax(_cosine_scores(slots_t, query_t), axis=-1)
    flat = affinity.reshape((-1, slots_t.shape[0]))
    aggregate = matmul(flat, slots_t).reshape(query_t.shape)
    return aggregate, affinity


def read_soft(bank: MemoryBank, query) -> tuple[Tensor, Tensor]:
    return soft_read(Tensor(bank.slots), query)


def read_hard(bank: MemoryBank, query: np.ndarray) -> tuple[np.ndarray, int]:
    """Most cosine-similar slot (copy) and its index; ties break to the lowest index."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (bank.dim,):
        raise ValueError(f"query must be a {bank.dim}-vector")
    scores = _hard_scores(bank.slots, query)
    idx = int(np.argmax(scores))
    return bank.slots[idx].copy(), idx


def _hard_scores(slots: np.ndarray, query: np.ndarray) -> np.ndarray:
    q_norm = np.linalg.norm(query)
    s_norm = np.linalg.norm(slots, axis=1)
    valid = (q_norm >= NORM_EPS) & (s_norm >= NORM_EPS)
    dots = slots @ query
    return np.where(valid, dots / (np.maximum(s_norm, NORM_EPS) * max(q_norm, NORM_EPS)), 0.0)


def update_slot_ema(bank: MemoryBank, query: np.ndarray) -> int:
    """Write gamma * slot + (1 - gamma) * query into the hard-read slot.

    Only valid in training mode; returns the updated slot index.
    """
    if bank.frozen:
        raise FrozenBankError("EMA update attempted on a frozen bank")
    query = np.asarray(query, dtype=np.float64)
    if not np.all(np.isfinite(query)):
        raise ValueError("EMA update query must be finite")
    _, idx = read_hard(bank, query)
    bank.slots[idx] = bank.gamma * bank.slots[idx] + (1.0 - bank.gamma) * query
    return idx


# ----- spatial dependency ----------------------------------------------------


def spatial_dependency(f_delta, f_t) -> Tensor:
    """Row-softmaxed outer product of the retrieved residual against the
    current hand feature: (..., C) x (..., C) -> (..., C, C), rows sum to 1."""
    f_delta, f_t = as_tensor(f_delta), as_tensor(f_t)
    if f_delta.shape != f_t.shape:
        raise ValueError(f"feature shapes differ: {f_delta.shape} vs {f_t.shape}")
    c = f_delta.shape[-1]
    outer = matmul(f_delta.reshape(f_delta.shape + (1,)), f_t.reshape(f_t.shape[:-1] + (1, c)))
    return softmax(outer, axis=-1)


def apply_spatial_dependency(f_t, dependency) -> Tensor:
    """Next-step hand feature: f + f @ S for row-vector f and (C, C) matrix S."""
    f_t, dependency = as_tensor(f_t), as_tensor(dependency)
    c = f_t.shape[-1]
    if dependency.shape[-2:] != (c, c):
        raise ValueError(f"dependency must end in ({c}, {c}), got {dependency.shape}")
    mixed = matmul(f_t.reshape(f_t.shape[:-1] + (1, c)), dependency)
    return f_t + mixed.reshape(f_t.shape)


# ----- temporal enhancement ---------------------------------------------------


def motion_encoder_spec(seq_len: int, hidden: int | None = None) -> MlpSpec:
    return MlpSpec((seq_len, hidden or seq_len, seq_len))


def motion_encoder_init(store: ParameterStore, prefix: str, seq_len: int, rng: np.random.Generator,
                        hidden: int | None = None) -> MlpSpec:
    spec = motion_encoder_spec(seq_len, hidden)
    mlp_init(store, prefix, spec, rng)
    return spec


def motion_encode(store: ParameterStore, prefix: str, spec: MlpSpec, features) -> Tensor:
    """Sequence-level motion embedding: per-frame channel mean followed by a
    temporal MLP over the length-T vector. (..., T, C) -> (..., T)."""
    features = as_tensor(features)
    pooled = features.mean(axis=-1)  # (..., T)
    if pooled.shape[-1] != spec.in_width:
        raise ValueError(f"sequence length {pooled.shape[-1]} != motion encoder width {spec.in_width}")
    return mlp_forward(store, prefix, spec, pooled)


def motion_enhance(features, motion_embedding) -> Tensor:
    """Scale frame t by (1 + a_t) with a = softmax over the T embedding entries."""
    features, emb = as_tensor(features), as_tensor(motion_embedding)
    if emb.shape[-1] != features.shape[-2]:
        raise ValueError(
            f"embedding length {emb.shape[-1]} != sequence length {features.shape[-2]}"
        )
    weights = softmax(emb, axis=-1)
    scale = (weights + 1.0).reshape(emb.shape + (1,))
    return features * scale


# ----- prototype bank ----------------------------------------------------------


def build_prototype_memory(
    hand_sequences,
    encoder,
    n_slots: int,
    rng: np.random.Generator,
    gamma: float = 0.8,
) -> MemoryBank:
    """Bank of per-sequence features of real hands: each slot is the frame-mean
    of the frozen extractor's output on one sampled training sequence."""
    feats = []
    for seq in hand_sequences:
        flat = seq.flat if hasattr(seq, "frames") else np.asarray(seq, dtype=np.float64)
        feats.append(encoder.encode_np(flat).mean(axis=0))
    feats = np.stack(feats)
    if feats.shape[0] < n_slots:
        raise ValueError(
            f"prototype memory needs at least {n_slots} sequences, got {feats.shape[0]}"
        )
    chosen = rng.choice(feats.shape[0], size=n_slots, replace=False)
    return MemoryBank(feats[np.sort(chosen)], gamma)
