"""Configuration dataclasses and their JSON round trip.

Config files are plain JSON with the same nesting as the dataclasses:
top-level training keys plus `model`, `memory`, and `mcmc` sections.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class ModelConfig:
    channels: int = 128        # feature width of body/hand features
    heads: int = 4             # attention heads
    hand_blocks: int = 3       # cross-attention applications per hand branch
    decoder_blocks: int = 3    # attention applications in the decoder
    seq_len: int = 64          # frames per sequence
    ae_hidden: int = 128       # hidden width of the hand autoencoders
    disc_channels: int = 32    # discriminator conv channels
    r_hidden: int = 192        # hidden width of the stage-two generation MLP
    header_hidden: int = 64    # hidden width of the sampling header MLP

    def __post_init__(self):
        if self.channels % self.heads != 0:
            raise ValueError("channels must be divisible by heads")
        for name in ("channels", "heads", "hand_blocks", "decoder_blocks", "seq_len",
                     "ae_hidden", "disc_channels", "r_hidden", "header_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class MemoryConfig:
    slots: int = 512           # slots per spatial/temporal bank
    gamma: float = 0.8         # EMA coefficient
    proto_slots: int = 512     # prototype bank slots
    proto_updates: bool = True  # EMA-update the prototype bank in stage two

    def __post_init__(self):
        if self.slots < 1 or self.proto_slots < 1:
            raise ValueError("slot counts must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


@dataclass
class McmcConfig:
    steps: int = 6
    delta_prior: float = 0.4
    delta_posterior: float = 0.1
    sigma_w: float = 1.0
    sigma_eps: float = 1.0
    dw: int = 32               # perturbation dimensionality

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.delta_prior <= 0 or self.delta_posterior <= 0:
            raise ValueError("Langevin step sizes must be positive")
        if self.sigma_w <= 0 or self.sigma_eps <= 0:
            raise ValueError("sigma_w and sigma_eps must be positive")
        if self.dw < 1:
            raise ValueError("dw must be positive")


@dataclass
class TrainConfig:
    lr: float = 0.003
    disc_lr: float | None = None  # discriminator rate; None mirrors lr
    betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    grad_clip: float = 1.0     # global gradient-norm clip; 0 disables
    max_steps: int | None = None
    target_rec: float | None = None  # optional early stop on epoch-mean rec loss
    model: ModelConfig = field(default_factory=ModelConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if self.lr <= 0 or (self.disc_lr is not None and self.disc_lr <= 0):
            raise ValueError("learning rates must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        self.betas = tuple(self.betas)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _from_dict(cls, doc: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict) -> TrainConfig:
    doc = dict(doc)
    sub = {}
    for key, cls in (("model", ModelConfig), ("memory", MemoryConfig), ("mcmc", McmcConfig)):
        if key in doc:
            sub[key] = _from_dict(cls, doc.pop(key))
    cfg = _from_dict(TrainConfig, {**doc, **sub})
    return cfg


def load_config(path: str | Path | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return config_from_dict(doc)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.as_dict(), indent=1, sort_keys=True), encoding="utf-8")
