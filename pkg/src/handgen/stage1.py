"""Stage one: the full body-to-hands prediction network.

Pipeline per forward pass: body encoder (per-frame MLP + position codes) ->
per-side projection into hand features -> per-side spatial memory enhancement
(soft-read residual, row-softmax dependency, next-step mixing) -> per-side
temporal enhancement (motion embedding, soft-read, frame rescaling) -> body
transformer produces the query stream -> three cross-attention blocks per
hand branch -> concatenation + merge MLP -> decoder (self- then
cross-attention to body features, three blocks) -> two fully-connected output
layers -> T x 90 hand poses.

A temporal-convolution discriminator scores sequence realism for the
adversarial loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, clip, concatenate, leaky_relu, matmul, sigmoid
from .config import MemoryConfig, ModelConfig
from .data import BODY_DIM, HAND_DIM, BodyPoseSequence, HandPoseSequence, wrap_axis_angle
from .memory import (
    MemoryBank,
    apply_spatial_dependency,
    init_bank,
    motion_encode,
    motion_encoder_init,
    motion_enhance,
    read_soft,
    spatial_dependency,
    update_slot_ema,
)
from .nn import (
    MlpSpec,
    ParameterStore,
    layer_norm,
    layer_norm_init,
    mha_init,
    mlp_forward,
    mlp_init,
    multi_head_attention,
    positional_encoding,
)

SIDES = ("left", "right")
BANK_NAMES = ("srm.left", "srm.right", "tmm.left", "tmm.right")


class StageOneModel:
    """Owns the stage-one parameters (prefix ``stage1.``) and memory banks."""

    def __init__(self, cfg: ModelConfig, mem_cfg: MemoryConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.mem_cfg = mem_cfg
        self.store = ParameterStore()
        store, c = self.store, cfg.channels

        self.body_spec = MlpSpec((BODY_DIM, c, c))
        mlp_init(store, "stage1.body_enc", self.body_spec, rng)
        self.proj_spec = MlpSpec((c, c, c))
        for side in SIDES:
            mlp_init(store, f"stage1.proj.{side}", self.proj_spec, rng)
        self.motion_spec = motion_encoder_init(store, "stage1.motion_enc", cfg.seq_len, rng)

        self.ff_spec = MlpSpec((c, c, c))
        self._init_attn_block("stage1.body_tf", rng)
        for side in SIDES:
            for b in range(cfg.hand_blocks):
                self._init_attn_block(f"stage1.hand_tf.{side}.b{b}", rng)

        self.merge_spec = MlpSpec((2 * c, c, c))
        mlp_init(store, "stage1.merge", self.merge_spec, rng)
        for b in range(cfg.decoder_blocks):
            prefix = f"stage1.dec.b{b}"
            mha_init(store, f"{prefix}.self_mha", c, rng)
            layer_norm_init(store, f"{prefix}.ln1", c)
            mha_init(store, f"{prefix}.cross_mha", c, rng)
            layer_norm_init(store, f"{prefix}.ln2", c)
            mlp_init(store, f"{prefix}.ff", self.ff_spec, rng)
            layer_norm_init(store, f"{prefix}.ln3", c)

        self.head_spec = MlpSpec((c, c, HAND_DIM))
        mlp_init(store, "stage1.head", self.head_spec, rng)

        self.banks: dict[str, MemoryBank] = {
            "srm.left": init_bank(mem_cfg.slots, c, rng, mem_cfg.gamma),
            "srm.right": init_bank(mem_cfg.slots, c, rng, mem_cfg.gamma),
            "tmm.left": init_bank(mem_cfg.slots, cfg.seq_len, rng, mem_cfg.gamma),
            "tmm.right": init_bank(mem_cfg.slots, cfg.seq_len, rng, mem_cfg.gamma),
        }
        self.pos_codes = positional_encoding(cfg.seq_len, c)

    # ----- submodule init ----------------------------------------------

    def _init_attn_block(self, prefix: str, rng: np.random.Generator) -> None:
        c = self.cfg.channels
        mha_init(self.store, f"{prefix}.mha", c, rng)
        layer_norm_init(self.store, f"{prefix}.ln1", c)
        mlp_init(self.store, f"{prefix}.ff", self.ff_spec, rng)
        layer_norm_init(self.store, f"{prefix}.ln2", c)

    # ----- modes ----------------------------------------------------------

    def set_train(self, training: bool) -> None:
        for bank in self.banks.values():
            bank.frozen = not training

    @property
    def param_names(self) -> list[str]:
        return self.store.names("stage1.")

    # ----- forward pieces ----------------------------------------------------

    def encode_body(self, body_flat) -> Tensor:
        """(N, T, 24) -> (N, T, C): per-frame MLP plus position codes."""
        feats = mlp_forward(self.store, "stage1.body_enc", self.body_spec, body_flat)
        return feats + self.pos_codes[: feats.shape[-2]]

    def project_to_hand(self, body_feats, side: str) -> Tensor:
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {side!r}")
        return mlp_forward(self.store, f"stage1.proj.{side}", self.proj_spec, body_feats)

    def _attn_block(self, prefix: str, x_q, kv) -> Tensor:
        att = multi_head_attention(self.store, f"{prefix}.mha", x_q, kv, kv, self.cfg.heads)
        x = layer_norm(self.store, f"{prefix}.ln1", x_q + att)
        ff = mlp_forward(self.store, f"{prefix}.ff", self.ff_spec, x)
        return layer_norm(self.store, f"{prefix}.ln2", x + ff)

    def _decoder_block(self, prefix: str, x, body_feats) -> Tensor:
        att = multi_head_attention(self.store, f"{prefix}.self_mha", x, x, x, self.cfg.heads)
        x = layer_norm(self.store, f"{prefix}.ln1", x + att)
        cross = multi_head_attention(self.store, f"{prefix}.cross_mha", x, body_feats, body_feats, self.cfg.heads)
        x = layer_norm(self.store, f"{prefix}.ln2", x + cross)
        ff = mlp_forward(self.store, f"{prefix}.ff", self.ff_spec, x)
        return layer_norm(self.store, f"{prefix}.ln3", x + ff)

    def _enhance_side(self, side: str, body_feats: Tensor, motion_embed: Tensor) -> tuple[Tensor, Tensor]:
        """Project one hand branch and run its spatial/temporal memory path."""
        raw = self.project_to_hand(body_feats, side)
        residual, _ = read_soft(self.banks[f"srm.{side}"], body_feats)
        dependency = spatial_dependency(residual, raw)
        spatial = apply_spatial_dependency(raw, dependency)
        hand_motion, _ = read_soft(self.banks[f"tmm.{side}"], motion_embed)
        enhanced = motion_enhance(spatial, hand_motion)
        return enhanced, raw

    def forward(self, body_flat, collect_updates: bool = False) -> dict:
        """Run the full pipeline on (N, T, 24) (or (T, 24)) body input.

        Returns raw tensors for the losses; `output` is the uncanonicalized
        (N, T, 90) prediction. With `collect_updates`, detached per-bank EMA
        write vectors are included under `mem_updates`.
        """
        body_flat = as_tensor(body_flat)
        squeeze = body_flat.ndim == 2
        if squeeze:
            body_flat = body_flat.reshape((1,) + body_flat.shape)
        if body_flat.shape[-1] != BODY_DIM:
            raise ValueError(f"body input must end in {BODY_DIM} channels")
        if body_flat.shape[-2] != self.cfg.seq_len:
            raise ValueError(
                f"model was built for {self.cfg.seq_len} frames, got {body_flat.shape[-2]}"
            )

        body_feats = self.encode_body(body_flat)
        motion_embed = motion_encode(self.store, "stage1.motion_enc", self.motion_spec, body_feats)

        enhanced, raw = {}, {}
        for side in SIDES:
            enhanced[side], raw[side] = self._enhance_side(side, body_feats, motion_embed)

        query = self._attn_block("stage1.body_tf", body_feats, body_feats)
        streams = {}
        for side in SIDES:
            stream = query
            for b in range(self.cfg.hand_blocks):
                stream = self._attn_block(f"stage1.hand_tf.{side}.b{b}", stream, enhanced[side])
            streams[side] = stream

        merged = mlp_forward(
            self.store, "stage1.merge", self.merge_spec,
            concatenate([streams["left"], streams["right"]], axis=-1),
        )
        x = merged
        for b in range(self.cfg.decoder_blocks):
            x = self._decoder_block(f"stage1.dec.b{b}", x, body_feats)
        output = mlp_forward(self.store, "stage1.head", self.head_spec, x)

        if squeeze:
            output = output.reshape(output.shape[1:])
        result = {
            "output": output,
            "body_feats": body_feats,
            "motion_embed": motion_embed,
            "proj": raw,
            "streams": streams,
        }
        if collect_updates:
            result["mem_updates"] = {
                "srm.left": raw["left"].data.reshape(-1, self.cfg.channels).mean(axis=0),
                "srm.right": raw["right"].data.reshape(-1, self.cfg.channels).mean(axis=0),
                "tmm.left": motion_embed.data.reshape(-1, self.cfg.seq_len).mean(axis=0),
                "tmm.right": motion_embed.data.reshape(-1, self.cfg.seq_len).mean(axis=0),
            }
        return result

    def apply_bank_updates(self, mem_updates: dict[str, np.ndarray]) -> None:
        """One EMA write per bank per training step (detached vectors)."""
        for name, vector in mem_updates.items():
            update_slot_ema(self.banks[name], vector)

    def predict(self, body: BodyPoseSequence) -> HandPoseSequence:
        """Canonicalized pose-space prediction for one sequence."""
        out = self.forward(body.flat)["output"].data
        frames = wrap_axis_angle(out.reshape(out.shape[0], HAND_DIM // 3, 3))
        return HandPoseSequence(frames, body.fps)

    # ----- serialization -----------------------------------------------------

    def tensors(self) -> dict[str, np.ndarray]:
        doc = self.store.state()
        for name, bank in self.banks.items():
            doc[f"{name}.slots"] = bank.slots.copy()
            doc[f"{name}.gamma"] = np.asarray(bank.gamma)
        return doc

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.store.load_state({n: v for n, v in tensors.items() if n.startswith("stage1.")})
        for name in BANK_NAMES:
            self.banks[name].slots = np.asarray(tensors[f"{name}.slots"], dtype=np.float64).copy()
            self.banks[name].gamma = float(tensors[f"{name}.gamma"])


def stage_one_forward(model: StageOneModel, body_flat, collect_updates: bool = False) -> dict:
    return model.forward(body_flat, collect_updates=collect_updates)


# ----- discriminator -------------------------------------------------------


OUTPUT_CLAMP = 1e-7


class MotionDiscriminator:
    """Temporal-convolution realism classifier over (N, T, 90) sequences."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, kernel: int = 5, layers: int = 3):
        self.store = ParameterStore()
        self.kernel = kernel
        widths = [HAND_DIM] + [cfg.disc_channels] * (layers - 1) + [1]
        self.widths = widths
        for i, (c_in, c_out) in enumerate(zip(widths[:-1], widths[1:])):
            fan_in = kernel * c_in
            bound = 1.0 / np.sqrt(fan_in)
            self.store.add(f"disc.conv{i}.w", rng.uniform(-bound, bound, size=(kernel, c_in, c_out)))
            self.store.add(f"disc.conv{i}.b", np.zeros(c_out))

    @property
    def param_names(self) -> list[str]:
        return self.store.names("disc.")

    def _conv(self, i: int, x: Tensor) -> Tensor:
        """Same-padded temporal convolution via shifted slices."""
        w = self.store[f"disc.conv{i}.w"]
        b = self.store[f"disc.conv{i}.b"]
        n, t, c_in = x.shape
        pad = self.kernel // 2
        zeros = Tensor(np.zeros((n, pad, c_in)))
        xp = concatenate([zeros, x, zeros], axis=1)
        out = None
        for k in range(self.kernel):
            term = matmul(xp[:, k : k + t, :], w[k])
            out = term if out is None else out + term
        return out + b

    def forward(self, hands) -> Tensor:
        hands = as_tensor(hands)
        squeeze = hands.ndim == 2
        if squeeze:
            hands = hands.reshape((1,) + hands.shape)
        if hands.shape[-1] != HAND_DIM:
            raise ValueError(f"discriminator input must end in {HAND_DIM} channels")
        x = hands
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            x = self._conv(i, x)
            if i < n_layers - 1:
                x = leaky_relu(x)
        logits = x.mean(axis=-2).reshape((-1,))  # global average over time
        score = clip(sigmoid(logits), OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)
        return score

    def tensors(self) -> dict[str, np.ndarray]:
        return self.store.state()

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.store.load_state({n: v for n, v in tensors.items() if n.startswith("disc.")})


def discriminate(disc: MotionDiscriminator, hands) -> Tensor:
    """Sequence realism score in the open interval (0, 1)."""
    return disc.forward(hands)
