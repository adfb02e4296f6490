"""handgen: two-stage prediction of natural and diverse 3D hand gesture
sequences from upper-body skeleton dynamics.

Stage one predicts hands from body pose through disentangled per-hand
branches with spatial/temporal memory banks and a cross-attention backbone;
stage two diversifies the prediction with prototype retrieval and
Langevin-sampled perturbations of a learned latent prior.
"""

from .autodiff import Tensor
from .config import McmcConfig, MemoryConfig, ModelConfig, TrainConfig, load_config
from .data import (
    BodyPoseSequence,
    DatasetManifest,
    HandPoseSequence,
    SequenceRecord,
    SingleHandPoseSequence,
    generate_synthetic,
    load_manifest,
    load_sequence,
    merge_hands,
    save_manifest,
    save_sequence,
    split_dataset,
    split_hands,
    wrap_axis_angle,
)
from .memory import MemoryBank, read_hard, read_soft, update_slot_ema
from .metrics import MetricReport, metric_diversity, metric_fhd, metric_l2, metric_mpjre
from .stage1 import MotionDiscriminator, StageOneModel
from .stage2 import GenerationModel, LangevinConfig, SamplingHeader, generate_diverse, temporal_smooth
from .train import evaluate, pretrain, sample_diverse, train_stage_one, train_stage_two

__version__ = "0.1.0"

__all__ = [
    "BodyPoseSequence",
    "DatasetManifest",
    "GenerationModel",
    "HandPoseSequence",
    "LangevinConfig",
    "McmcConfig",
    "MemoryBank",
    "MemoryConfig",
    "MetricReport",
    "ModelConfig",
    "MotionDiscriminator",
    "SamplingHeader",
    "SequenceRecord",
    "SingleHandPoseSequence",
    "StageOneModel",
    "Tensor",
    "TrainConfig",
    "evaluate",
    "generate_diverse",
    "generate_synthetic",
    "load_config",
    "load_manifest",
    "load_sequence",
    "merge_hands",
    "metric_diversity",
    "metric_fhd",
    "metric_l2",
    "metric_mpjre",
    "pretrain",
    "read_hard",
    "read_soft",
    "sample_diverse",
    "save_manifest",
    "save_sequence",
    "split_dataset",
    "split_hands",
    "temporal_smooth",
    "train_stage_one",
    "train_stage_two",
    "update_slot_ema",
    "wrap_axis_angle",
]
