"""Pose sequence containers, axis-angle canonicalization, synthetic data,
dataset splitting, and the on-disk JSON formats.

A body frame is 8 upper-body joints (collars, shoulders, elbows, wrists), a
hand frame is 30 joints across both hands; every joint is a 3D axis-angle
vector in radians. Sequence files are one JSON document each; a manifest
lists sequence files and their train/val/test assignment.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BODY_JOINTS = 8
HAND_JOINTS = 30
SINGLE_HAND_JOINTS = 15
BODY_DIM = BODY_JOINTS * 3  # 24
HAND_DIM = HAND_JOINTS * 3  # 90
SINGLE_HAND_DIM = SINGLE_HAND_JOINTS * 3  # 45

SPLIT_LABELS = ("train", "val", "test")


class ValidationError(ValueError):
    """Raised when a sequence or file violates the data contracts."""


def wrap_axis_angle(v: np.ndarray) -> np.ndarray:
    """Canonicalize axis-angle vectors of shape (..., 3).

    The returned vectors represent the same rotations with angle (vector
    norm) in [0, pi]; angles above pi map to 2*pi - angle about the negated
    axis, and full turns collapse to zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 3:
        raise ValidationError("axis-angle vectors must have a trailing dimension of 3")
    if not np.all(np.isfinite(v)):
        raise ValidationError("axis-angle input contains non-finite values")
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(angle > 0, angle, 1.0)
    axis = v / safe
    wrapped = np.mod(angle, 2.0 * np.pi)
    flip = wrapped > np.pi
    new_angle = np.where(flip, 2.0 * np.pi - wrapped, wrapped)
    new_axis = np.where(flip, -axis, axis)
    out = new_axis * new_angle
    return np.where(angle > 0, out, 0.0)


def _check_frames(frames: np.ndarray, joints: int, name: str) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[1] != joints or frames.shape[2] != 3:
        raise ValidationError(f"{name}: expected shape (T, {joints}, 3), got {frames.shape}")
    if frames.shape[0] < 1:
        raise ValidationError(f"{name}: needs at least one frame")
    if not np.all(np.isfinite(frames)):
        raise ValidationError(f"{name}: contains non-finite values")
    return frames


@dataclass
class BodyPoseSequence:
    """(T, 8, 3) axis-angle body frames."""

    frames: np.ndarray
    fps: int = 15

    def __post_init__(self):
        self.frames = _check_frames(self.frames, BODY_JOINTS, "body")
        if int(self.fps) <= 0:
            raise ValidationError("fps must be a positive integer")
        self.fps = int(self.fps)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.frames.reshape(self.T, BODY_DIM)


@dataclass
class HandPoseSequence:
    """(T, 30, 3) axis-angle two-hand frames."""

    frames: np.ndarray
    fps: int = 15

    def __post_init__(self):
        self.frames = _check_frames(self.frames, HAND_JOINTS, "hands")
        if int(self.fps) <= 0:
            raise ValidationError("fps must be a positive integer")
        self.fps = int(self.fps)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.frames.reshape(self.T, HAND_DIM)


@dataclass
class SingleHandPoseSequence:
    """(T, 15, 3) axis-angle frames for one hand."""

    frames: np.ndarray
    side: str
    fps: int = 15

    def __post_init__(self):
        self.frames = _check_frames(self.frames, SINGLE_HAND_JOINTS, f"{self.side} hand")
        if self.side not in ("left", "right"):
            raise ValidationError(f"side must be 'left' or 'right', got {self.side!r}")
        self.fps = int(self.fps)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.frames.reshape(self.T, SINGLE_HAND_DIM)


@dataclass
class SequenceRecord:
    id: str
    speaker_id: str
    body: BodyPoseSequence
    hands: HandPoseSequence

    def __post_init__(self):
        if self.body.T != self.hands.T:
            raise ValidationError(
                f"hands: frame count {self.hands.T} does not match body frame count {self.body.T}"
            )
        if self.body.fps != self.hands.fps:
            raise ValidationError("hands: fps does not match body fps")


@dataclass
class DatasetManifest:
    """Sequence records plus (optional) train/val/test assignment by path."""

    records: list[SequenceRecord]
    paths: list[str]
    splits: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.records) != len(self.paths):
            raise ValidationError("records and paths must be parallel lists")
        if self.splits:
            known = set(self.paths)
            for p, label in self.splits.items():
                if p not in known:
                    raise ValidationError(f"split entry for unknown path {p!r}")
                if label not in SPLIT_LABELS:
                    raise ValidationError(f"unknown split label {label!r}")
            if set(self.splits) != known:
                raise ValidationError("splits must cover every record or be empty")

    def __len__(self) -> int:
        return len(self.records)

    def split_records(self, label: str) -> list[SequenceRecord]:
        if label not in SPLIT_LABELS:
            raise ValidationError(f"unknown split label {label!r}")
        return [r for r, p in zip(self.records, self.paths) if self.splits.get(p) == label]

    def split_hash(self) -> str:
        payload = json.dumps(sorted(self.splits.items()), separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ----- hand split / merge ------------------------------------------------


def split_hands(hands: HandPoseSequence) -> tuple[SingleHandPoseSequence, SingleHandPoseSequence]:
    """Joints 0..14 are the left hand, 15..29 the right hand."""
    left = SingleHandPoseSequence(hands.frames[:, :SINGLE_HAND_JOINTS].copy(), "left", hands.fps)
    right = SingleHandPoseSequence(hands.frames[:, SINGLE_HAND_JOINTS:].copy(), "right", hands.fps)
    return left, right


def merge_hands(left: SingleHandPoseSequence, right: SingleHandPoseSequence) -> HandPoseSequence:
    if left.T != right.T:
        raise ValidationError(f"hands: left T={left.T} does not match right T={right.T}")
    if left.fps != right.fps:
        raise ValidationError("hands: left/right fps mismatch")
    return HandPoseSequence(np.concatenate([left.frames, right.frames], axis=1), left.fps)


# ----- synthetic data ------------------------------------------------------

# Fixed body-to-hand coupling, shared across all seeds so that the mapping a
# model has to learn is the same function everywhere.
_COUPLING_RNG = np.random.default_rng(0xD1CE)
_MIX = _COUPLING_RNG.normal(0.0, 0.35, size=(HAND_DIM, BODY_DIM))
_OFFSET = _COUPLING_RNG.uniform(0.0, 2.0 * np.pi, size=HAND_DIM)
_HAND_AMPLITUDE = 0.7
_N_WAVES = 3


def generate_synthetic(seed: int, n: int, T: int, fps: int = 15) -> DatasetManifest:
    """Deterministic synthetic dataset: body channels are seeded sums of
    sinusoids; hands are a fixed smooth function of the body channels with a
    small per-record phase. All output is canonical axis-angle."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if T < 2:
        raise ValidationError("T must be >= 2")
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)[:, None] / T  # (T, 1)

    records, paths = [], []
    for i in range(n):
        amps = rng.uniform(0.05, 0.28, size=(1, BODY_DIM, _N_WAVES))
        freqs = rng.uniform(0.5, 3.0, size=(1, BODY_DIM, _N_WAVES))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(1, BODY_DIM, _N_WAVES))
        waves = amps * np.sin(2.0 * np.pi * freqs * t[:, :, None] + phases)
        body_flat = waves.sum(axis=-1)  # (T, 24), |channel| <= 0.84 < pi/sqrt(3)

        record_phase = rng.uniform(0.0, 0.6)
        hand_flat = _HAND_AMPLITUDE * np.sin(body_flat @ _MIX.T + _OFFSET + record_phase)

        body = BodyPoseSequence(wrap_axis_angle(body_flat.reshape(T, BODY_JOINTS, 3)), fps)
        hands = HandPoseSequence(wrap_axis_angle(hand_flat.reshape(T, HAND_JOINTS, 3)), fps)
        records.append(SequenceRecord(f"seq{i:05d}", f"spk{i:04d}", body, hands))
        paths.append(f"seq{i:05d}.json")
    return DatasetManifest(records, paths)


def split_dataset(
    manifest: DatasetManifest, ratios: tuple[float, float, float], seed: int
) -> DatasetManifest:
    """Assign train/val/test labels. Val and test sizes are round(ratio * n);
    the remainder goes to train. Deterministic in `seed`."""
    r_train, r_val, r_test = ratios
    if min(r_train, r_val, r_test) <= 0:
        raise ValidationError("split ratios must be positive")
    if abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must sum to 1, got {r_train + r_val + r_test}")
    n = len(manifest)
    n_val = int(round(r_val * n))
    n_test = int(round(r_test * n))
    n_train = n - n_val - n_test
    if n_train < 0:
        raise ValidationError("rounding left no records for the training split")

    order = np.random.default_rng(seed).permutation(n)
    splits: dict[str, str] = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            label = "train"
        elif rank < n_train + n_val:
            label = "val"
        else:
            label = "test"
        splits[manifest.paths[idx]] = label
    return DatasetManifest(manifest.records, manifest.paths, splits)


# ----- on-disk formats ------------------------------------------------------


def save_sequence(record: SequenceRecord, path: str | Path) -> None:
    doc = {
        "id": record.id,
        "speaker_id": record.speaker_id,
        "fps": record.body.fps,
        "body": record.body.flat.tolist(),
        "hands": record.hands.flat.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_sequence(path: str | Path) -> SequenceRecord:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON ({e})") from e
    for key in ("id", "speaker_id", "fps", "body", "hands"):
        if key not in doc:
            raise ValidationError(f"{path}: missing field {key!r}")
    body_flat = np.asarray(doc["body"], dtype=np.float64)
    hands_flat = np.asarray(doc["hands"], dtype=np.float64)
    if body_flat.ndim != 2 or body_flat.shape[1] != BODY_DIM:
        raise ValidationError(f"{path}: body must be T x {BODY_DIM}, got {body_flat.shape}")
    if hands_flat.ndim != 2 or hands_flat.shape[1] != HAND_DIM:
        raise ValidationError(f"{path}: hands must be T x {HAND_DIM}, got {hands_flat.shape}")
    T = body_flat.shape[0]
    body = BodyPoseSequence(body_flat.reshape(T, BODY_JOINTS, 3), doc["fps"])
    hands = HandPoseSequence(hands_flat.reshape(hands_flat.shape[0], HAND_JOINTS, 3), doc["fps"])
    return SequenceRecord(str(doc["id"]), str(doc["speaker_id"]), body, hands)


def save_manifest(manifest: DatasetManifest, out_dir: str | Path) -> Path:
    """Write every sequence file plus manifest.json into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for record, rel in zip(manifest.records, manifest.paths):
        save_sequence(record, out_dir / rel)
    doc = {"records": list(manifest.paths), "splits": dict(manifest.splits)}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    return path


def load_manifest(manifest_path: str | Path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    for key in ("records", "splits"):
        if key not in doc:
            raise ValidationError(f"{manifest_path}: missing field {key!r}")
    base = manifest_path.parent
    paths = [str(p) for p in doc["records"]]
    records = [load_sequence(base / p) for p in paths]
    return DatasetManifest(records, paths, dict(doc["splits"]))
